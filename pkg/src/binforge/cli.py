"""Operator command line: every subcommand is a thin adapter over a module
operation. Option resolution precedence: flags > BINFORGE_* environment
variables > the INI config file given with --config.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import threading
from pathlib import Path
from typing import Optional

from binforge import crawl as crawl_mod
from binforge import extract as extract_mod
from binforge import recipe as recipe_mod
from binforge import worker as worker_mod
from binforge.coordinator import Coordinator
from binforge.model import (
    Arch,
    BuildMode,
    MatrixRequest,
    OptLevel,
    Platform,
    Toolchain,
    config_matrix,
)
from binforge.store import BinaryFilter, Dataset, StoreError

ENV_PREFIX = "BINFORGE_"


class CliError(Exception):
    """Operational failure; rendered to stderr with exit code 1."""


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    return {k: v for section in parser.sections() for k, v in parser[section].items()}


def resolve_option(name: str, flag_value, config: dict, default=None):
    """flags > env (BINFORGE_<NAME>) > config file > default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        return env
    if name in config:
        return config[name]
    return default


def _open_dataset(args, config, writable=False, positional_db=None) -> Dataset:
    db = positional_db or resolve_option("db", getattr(args, "db", None), config)
    if not db:
        raise CliError("no dataset path: pass --db, set BINFORGE_DB, or configure it")
    archive = resolve_option("archive", getattr(args, "archive", None), config)
    return Dataset.open(db, archive, writable=writable)


def _parse_toolchain_list(raw: str) -> list[tuple[Toolchain, str]]:
    pairs = []
    for item in raw.split(","):
        name, _, version = item.partition("=")
        try:
            pairs.append((Toolchain(name.strip()), version.strip() or "unknown"))
        except ValueError as exc:
            raise CliError(f"unknown toolchain {name!r}") from exc
    return pairs


def _parse_driver_map(raw: str) -> dict[str, str]:
    drivers = {}
    for item in raw.split(","):
        name, _, path = item.partition("=")
        drivers[name.strip()] = path.strip() or name.strip()
    return drivers


# -- subcommand implementations --------------------------------------------------------


def cmd_crawl(args, config) -> int:
    profile = (
        crawl_mod.FilterProfile.windows()
        if args.profile == "windows"
        else crawl_mod.FilterProfile.linux()
    )
    limits = crawl_mod.DiscoveryLimits(
        max_repos=args.max_repos, rate_per_minute=args.rate_per_minute
    )
    if args.seed:
        source = crawl_mod.SeedFile(args.seed)
    elif args.query:
        source = crawl_mod.ApiQuery(query=args.query, endpoint=args.endpoint)
    else:
        raise CliError("crawl needs --seed FILE or --query STRING")
    ds = _open_dataset(args, config, writable=True)
    accepted = rejected = 0
    reasons: dict[str, int] = {}
    try:
        for descriptor in crawl_mod.discover(source, limits):
            decision = crawl_mod.filter_repo(descriptor, profile)
            if not decision.accepted:
                rejected += 1
                reasons[decision.reason] = reasons.get(decision.reason, 0) + 1
                continue
            record = decision.record
            if record.license_id is None and descriptor.local_path:
                record.license_id = crawl_mod.detect_license(
                    descriptor.local_path, descriptor.api_license
                )
            ds.insert_repo(record)
            accepted += 1
    finally:
        ds.close()
    print(f"accepted {accepted}, rejected {rejected}")
    for reason, count in sorted(reasons.items()):
        print(f"  rejected[{reason}] = {count}")
    return 0


def cmd_enqueue(args, config) -> int:
    ds = _open_dataset(args, config, writable=True)
    try:
        toolchains = _parse_toolchain_list(
            resolve_option("toolchains", args.toolchains, config, "gcc=11.4.0,clang=14.0.0")
        )
        request = MatrixRequest(
            toolchains=toolchains,
            opt_levels=[OptLevel(o) for o in args.opts.split(",")],
            modes=[BuildMode(m) for m in args.modes.split(",")],
            arches=[Arch(a) for a in args.arches.split(",")],
        )
        configs = config_matrix(request)
        coordinator = Coordinator(ds)
        if args.repos == "all":
            repo_ids = [r.repo_id for r in ds.list_repos()]
        else:
            repo_ids = [int(x) for x in args.repos.split(",") if x]
        count = coordinator.enqueue(repo_ids, configs)
        print(f"enqueued {count} tasks ({len(repo_ids)} repos x {len(configs)} configs)")
        return 0
    finally:
        ds.close()


def cmd_coordinator_serve(args, config) -> int:
    ds = _open_dataset(args, config, writable=True)
    coordinator = Coordinator(
        ds, lease_ttl=float(args.lease_ttl), max_attempts=args.max_attempts
    )
    server = coordinator.serve(args.host, args.port)
    sweep_interval = max(1.0, float(args.lease_ttl) / 10.0)
    stop = threading.Event()

    def sweeper():
        while not stop.wait(sweep_interval):
            coordinator.sweep_expired()

    thread = threading.Thread(target=sweeper, daemon=True)
    thread.start()
    print(f"coordinator listening on {server.url} (db {ds.db_path})")
    try:
        server.serve_blocking()
    finally:
        stop.set()
        ds.close()
    return 0


def cmd_worker_serve(args, config) -> int:
    if args.worker_config:
        wc = worker_mod.WorkerConfig.from_ini(args.worker_config)
    else:
        wc = worker_mod.WorkerConfig()
    url = resolve_option("coordinator", args.coordinator, config)
    if url:
        wc.coordinator_url = url
    timeout = resolve_option("timeout", args.timeout, config)
    if timeout is not None:
        wc.timeout_seconds = float(timeout)
    if args.workspace:
        wc.workspace_root = args.workspace
    if args.toolchains:
        wc.toolchains = _parse_driver_map(args.toolchains)
    processed = worker_mod.serve(wc, drain=args.drain)
    print(f"worker processed {processed} tasks")
    return 0


def cmd_extract(args, config) -> int:
    result = extract_mod.extract(args.binary, args.debug_source, args.source_root)
    if args.json:
        doc = {
            "binary_format": result.binary_format,
            "image_base": result.image_base,
            "degraded": result.degraded,
            "functions": [
                {
                    "name": fn.name,
                    "ranges": [[s, e] for s, e in fn.ranges],
                    "byte_hash": fn.byte_hash,
                    "normalized_hash": fn.normalized_hash,
                    "lines": [
                        {
                            "file": ln.source_path,
                            "line": ln.line_number,
                            "address": ln.byte_address,
                            "length": ln.length,
                            "text": ln.line_text,
                        }
                        for ln in fn.lines
                    ],
                }
                for fn in result.functions
            ],
        }
        print(json.dumps(doc, indent=2))
    else:
        flag = " (degraded)" if result.degraded else ""
        print(f"{args.binary}: {len(result.functions)} functions{flag}")
        for fn in result.functions:
            spans = ", ".join(f"[{s:#x},{e:#x})" for s, e in fn.ranges)
            print(f"  {fn.name}  {spans}  lines={len(fn.lines)}")
    return 0


def cmd_stats(args, config) -> int:
    ds = _open_dataset(args, config, positional_db=args.database)
    try:
        stats = ds.corpus_stats()
        if args.json:
            print(json.dumps(stats.to_dict(), indent=2))
        else:
            print(f"binaries:        {stats.binary_count}")
            print(f"functions:       {stats.function_count}")
            print(f"unique names:    {stats.unique_name_count}")
            print(f"unique hashes:   {stats.unique_hash_count}")
            pearson = "undefined" if stats.pearson_r is None else f"{stats.pearson_r:.4f}"
            print(f"pearson r (functions vs size): {pearson}")
        return 0
    finally:
        ds.close()


def cmd_validate(args, config) -> int:
    ds = _open_dataset(args, config, positional_db=args.database)
    try:
        problems = ds.validate(check_archive=not args.no_archive_check)
        if args.json:
            print(json.dumps({"violations": problems, "count": len(problems)}, indent=2))
        else:
            for problem in problems:
                print(problem)
            print(f"{len(problems)} violations")
        return 0 if not problems else 1
    finally:
        ds.close()


def cmd_export_recipe(args, config) -> int:
    ds = _open_dataset(args, config, positional_db=args.database)
    try:
        flt = BinaryFilter(
            license=args.license,
            toolchain=Toolchain(args.toolchain) if args.toolchain else None,
            platform=Platform(args.platform) if args.platform else None,
        )
        export = recipe_mod.export_recipe(ds, flt)
        recipe_mod.write_recipe(export.recipe, args.out)
        print(
            f"wrote {args.out}: {len(export.recipe.entries)} entries,"
            f" {export.excluded_unlicensed} excluded: unlicensed"
        )
        return 0
    finally:
        ds.close()


def cmd_reproduce(args, config) -> int:
    recipe = recipe_mod.read_recipe(args.recipe)
    reference = None
    if args.reference:
        reference = Dataset.open(args.reference)
    wc = worker_mod.WorkerConfig(workspace_root=str(Path(args.workspace) / "build"))
    if args.timeout:
        wc.timeout_seconds = float(args.timeout)
    try:
        report, fresh = recipe_mod.reproduce(recipe, args.workspace, reference, wc)
        fresh.close()
    finally:
        if reference is not None:
            reference.close()
    if args.json:
        print(report.to_json())
    else:
        print(report.render_table())
    rebuilt = report.summary().get("rebuilt", 0)
    return 0 if rebuilt == len(report.entries) else 1


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binforge",
        description="Build crawled repositories under a compiler matrix and"
        " publish function-level ground truth datasets.",
    )
    parser.add_argument("--config", help="INI config file (lowest precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    crawl_p = sub.add_parser("crawl", help="discover and filter repositories")
    crawl_p.add_argument("--seed", help="seed file: one url[@commit] per line")
    crawl_p.add_argument("--query", help="hosting API search query")
    crawl_p.add_argument("--endpoint", default="https://api.github.com")
    crawl_p.add_argument("--profile", choices=["windows", "linux"], default="linux")
    crawl_p.add_argument("--max-repos", type=int, default=100)
    crawl_p.add_argument("--rate-per-minute", type=float, default=30.0)
    crawl_p.add_argument("--db")
    crawl_p.add_argument("--archive")
    crawl_p.set_defaults(func=cmd_crawl)

    enqueue_p = sub.add_parser("enqueue", help="expand the config matrix into tasks")
    enqueue_p.add_argument("--db")
    enqueue_p.add_argument("--archive")
    enqueue_p.add_argument("--repos", default="all", help="'all' or comma-separated repo ids")
    enqueue_p.add_argument("--toolchains", help="e.g. gcc=11.4.0,clang=14.0.0")
    enqueue_p.add_argument("--opts", default="O0,O1,O2,O3")
    enqueue_p.add_argument("--modes", default="release")
    enqueue_p.add_argument("--arches", default="x64")
    enqueue_p.set_defaults(func=cmd_enqueue)

    coordinator_p = sub.add_parser("coordinator", help="coordinator service")
    coordinator_sub = coordinator_p.add_subparsers(dest="subcommand", required=True)
    serve_p = coordinator_sub.add_parser("serve", help="run the coordinator HTTP service")
    serve_p.add_argument("--db")
    serve_p.add_argument("--archive")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8650)
    serve_p.add_argument("--lease-ttl", type=float, default=1800.0)
    serve_p.add_argument("--max-attempts", type=int, default=2)
    serve_p.set_defaults(func=cmd_coordinator_serve)

    worker_p = sub.add_parser("worker", help="build worker")
    worker_sub = worker_p.add_subparsers(dest="subcommand", required=True)
    wserve_p = worker_sub.add_parser("serve", help="lease and build tasks")
    wserve_p.add_argument("--worker-config", help="worker INI file")
    wserve_p.add_argument("--coordinator", help="coordinator base URL")
    wserve_p.add_argument("--workspace")
    wserve_p.add_argument("--timeout", type=float, help="per-build wall seconds")
    wserve_p.add_argument("--toolchains", help="e.g. gcc=/usr/bin/gcc,clang=/usr/bin/clang")
    wserve_p.add_argument("--drain", action="store_true", help="exit when the queue is empty")
    wserve_p.set_defaults(func=cmd_worker_serve)

    extract_p = sub.add_parser("extract", help="extract ground truth from one binary")
    extract_p.add_argument("binary")
    extract_p.add_argument("--debug-source", help="split debug file or PDB record JSON")
    extract_p.add_argument("--source-root")
    extract_p.add_argument("--json", action="store_true")
    extract_p.set_defaults(func=cmd_extract)

    stats_p = sub.add_parser("stats", help="corpus statistics")
    stats_p.add_argument("database", nargs="?")
    stats_p.add_argument("--db")
    stats_p.add_argument("--archive")
    stats_p.add_argument("--json", action="store_true")
    stats_p.set_defaults(func=cmd_stats)

    validate_p = sub.add_parser("validate", help="full invariant scan of a dataset")
    validate_p.add_argument("database", nargs="?")
    validate_p.add_argument("--db")
    validate_p.add_argument("--archive")
    validate_p.add_argument("--no-archive-check", action="store_true")
    validate_p.add_argument("--json", action="store_true")
    validate_p.set_defaults(func=cmd_validate)

    export_p = sub.add_parser("export-recipe", help="write a license-gated recipe")
    export_p.add_argument("database", nargs="?")
    export_p.add_argument("--db")
    export_p.add_argument("--archive")
    export_p.add_argument("--out", required=True)
    export_p.add_argument("--license")
    export_p.add_argument("--toolchain")
    export_p.add_argument("--platform")
    export_p.set_defaults(func=cmd_export_recipe)

    reproduce_p = sub.add_parser("reproduce", help="rebuild a recipe and compare")
    reproduce_p.add_argument("recipe")
    reproduce_p.add_argument("--workspace", required=True)
    reproduce_p.add_argument("--reference", help="reference dataset for comparison")
    reproduce_p.add_argument("--timeout", type=float)
    reproduce_p.add_argument("--json", action="store_true")
    reproduce_p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(
            args.config or os.environ.get(ENV_PREFIX + "CONFIG")
        )
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        crawl_mod.CrawlError,
        extract_mod.ExtractionError,
        recipe_mod.RecipeError,
        StoreError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
