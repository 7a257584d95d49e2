"""Recipes: rebuildable, license-gated corpus descriptions.

A recipe pins (repository url, commit, full build config) entries plus the
exact toolchain versions used. Publication is gated: entries without a
license never serialize. Reproduction rebuilds each entry through the
standard pipeline into a fresh dataset and, given a reference, compares
function names, RVA ranges, line tables, and normalized hashes set-wise;
compilers embed paths/dates in raw bytes, so whole-file hashes are
deliberately not compared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from binforge import worker as worker_mod
from binforge.model import (
    Arch,
    BuildConfig,
    BuildMode,
    BuildSystem,
    BuildStatus,
    OptLevel,
    Platform,
    RepoRecord,
    Toolchain,
    utc_now,
)
from binforge.store import BinaryFilter, Dataset

RECIPE_VERSION = 1
RECIPE_EXTENSION = ".recipe.json"


class RecipeError(Exception):
    pass


class RecipeVersionError(RecipeError):
    pass


class RecipeSchemaError(RecipeError):
    """Message carries a JSON-pointer-style path to the offending field."""


@dataclass(frozen=True)
class RecipeEntry:
    url: str
    commit: str
    config: BuildConfig
    license_id: str


@dataclass
class Recipe:
    entries: list[RecipeEntry]
    toolchain_manifest: dict[str, str]  # toolchain name -> exact version
    recipe_version: int = RECIPE_VERSION
    created_at: str = field(default_factory=lambda: utc_now().isoformat())
    notes: str = ""


@dataclass
class RecipeExport:
    recipe: Recipe
    excluded_unlicensed: int


def export_recipe(dataset: Dataset, flt: Optional[BinaryFilter] = None) -> RecipeExport:
    """Recipe of every (repo, config) pair matching the filter and carrying a
    license; unlicensed pairs are counted in the report, never emitted."""
    pairs: dict[tuple[str, str], RecipeEntry] = {}
    excluded: set[tuple[str, str]] = set()
    for binary in dataset.query(flt):
        repo = dataset.get_repo(binary.repo_id)
        config = dataset.get_config(binary.config_id)
        key = (repo.url, config.config_id)
        if repo.license_id is None or repo.commit is None:
            excluded.add(key)
            continue
        if key not in pairs:
            pairs[key] = RecipeEntry(repo.url, repo.commit, config, repo.license_id)
    entries = sorted(pairs.values(), key=lambda e: (e.url, e.config.config_id))
    manifest: dict[str, str] = {}
    for entry in entries:
        manifest[entry.config.toolchain.value] = entry.config.toolchain_version
    recipe = Recipe(entries=entries, toolchain_manifest=manifest)
    return RecipeExport(recipe, excluded_unlicensed=len(excluded))


# -- canonical serialization --------------------------------------------------------


def _entry_doc(entry: RecipeEntry) -> dict:
    return {
        "url": entry.url,
        "commit": entry.commit,
        "license_id": entry.license_id,
        "config": {
            "toolchain": entry.config.toolchain.value,
            "toolchain_version": entry.config.toolchain_version,
            "opt_level": entry.config.opt_level.value,
            "mode": entry.config.mode.value,
            "arch": entry.config.arch.value,
        },
    }


def canonical_serialize(recipe: Recipe) -> bytes:
    """Byte-stable form: sorted keys, entries sorted by (url, config_id),
    UTF-8, LF line endings."""
    for i, entry in enumerate(recipe.entries):
        if entry.license_id is None:
            raise RecipeError(f"/entries/{i}/license_id: publication gate violated")
    entries = sorted(recipe.entries, key=lambda e: (e.url, e.config.config_id))
    doc = {
        "recipe_version": recipe.recipe_version,
        "created_at": recipe.created_at,
        "notes": recipe.notes,
        "toolchain_manifest": dict(sorted(recipe.toolchain_manifest.items())),
        "entries": [_entry_doc(e) for e in entries],
    }
    return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _require(doc: dict, key: str, types, pointer: str):
    if key not in doc:
        raise RecipeSchemaError(f"{pointer}/{key}: missing")
    if not isinstance(doc[key], types):
        raise RecipeSchemaError(f"{pointer}/{key}: wrong type")
    return doc[key]


def parse_recipe(data: Union[bytes, str]) -> Recipe:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise RecipeSchemaError(f"/: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise RecipeSchemaError("/: expected object")
    version = _require(doc, "recipe_version", int, "")
    if version != RECIPE_VERSION:
        raise RecipeVersionError(f"unsupported recipe_version {version}")
    created = _require(doc, "created_at", str, "")
    notes = doc.get("notes", "")
    manifest = _require(doc, "toolchain_manifest", dict, "")
    entries_doc = _require(doc, "entries", list, "")
    entries = []
    for i, entry in enumerate(entries_doc):
        pointer = f"/entries/{i}"
        if not isinstance(entry, dict):
            raise RecipeSchemaError(f"{pointer}: expected object")
        url = _require(entry, "url", str, pointer)
        commit = _require(entry, "commit", str, pointer)
        license_id = _require(entry, "license_id", str, pointer)
        config_doc = _require(entry, "config", dict, pointer)
        try:
            config = BuildConfig(
                Toolchain(_require(config_doc, "toolchain", str, f"{pointer}/config")),
                _require(config_doc, "toolchain_version", str, f"{pointer}/config"),
                OptLevel(_require(config_doc, "opt_level", str, f"{pointer}/config")),
                BuildMode(_require(config_doc, "mode", str, f"{pointer}/config")),
                Arch(_require(config_doc, "arch", str, f"{pointer}/config")),
            )
        except ValueError as exc:
            raise RecipeSchemaError(f"{pointer}/config: {exc}") from exc
        entries.append(RecipeEntry(url, commit, config, license_id))
    return Recipe(
        entries=entries,
        toolchain_manifest={str(k): str(v) for k, v in manifest.items()},
        recipe_version=version,
        created_at=created,
        notes=notes,
    )


def write_recipe(recipe: Recipe, path: Union[str, Path]) -> None:
    Path(path).write_bytes(canonical_serialize(recipe))


def read_recipe(path: Union[str, Path]) -> Recipe:
    return parse_recipe(Path(path).read_bytes())


# -- reproduction -------------------------------------------------------------------


@dataclass
class EntryReport:
    url: str
    config_id: str
    status: str  # rebuilt | source_missing | toolchain_mismatch | build_failed
    matches: Optional[dict[str, float]] = None  # metric -> match percentage

    def to_doc(self) -> dict:
        return {
            "url": self.url,
            "config_id": self.config_id,
            "status": self.status,
            "matches": self.matches,
        }


@dataclass
class ReproductionReport:
    entries: list[EntryReport]
    dataset_path: Optional[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset": self.dataset_path,
                "entries": [e.to_doc() for e in self.entries],
                "summary": self.summary(),
            },
            indent=2,
            sort_keys=True,
        )

    def summary(self) -> dict:
        counts: dict[str, int] = {}
        for entry in self.entries:
            counts[entry.status] = counts.get(entry.status, 0) + 1
        return counts

    def render_table(self) -> str:
        header = f"{'status':<20} {'config':<18} url"
        rows = [header, "-" * len(header)]
        for entry in self.entries:
            rows.append(f"{entry.status:<20} {entry.config_id:<18} {entry.url}")
            if entry.matches:
                detail = "  ".join(f"{k}={v:.1f}%" for k, v in sorted(entry.matches.items()))
                rows.append(f"{'':<20} {detail}")
        return "\n".join(rows)


def _detect_build_system(checkout: Path) -> BuildSystem:
    from binforge.mutate import find_makefiles, find_solutions

    if find_makefiles(checkout):
        return BuildSystem.MAKEFILE
    if find_solutions(checkout):
        return BuildSystem.MSBUILD_SOLUTION
    return BuildSystem.NONE


def _dataset_entry_sets(dataset: Dataset, url: str, config_id: str) -> dict[str, set]:
    names, rvas, lines, nhashes = set(), set(), set(), set()
    repo_ids = [
        r[0]
        for r in dataset.conn.execute("SELECT repo_id FROM repos WHERE url=?", (url,))
    ]
    for repo_id in repo_ids:
        rows = dataset.conn.execute(
            "SELECT binary_id, file_name FROM binaries WHERE repo_id=? AND config_id=?",
            (repo_id, config_id),
        ).fetchall()
        for binary_id, file_name in rows:
            for fn in dataset.functions_of(binary_id):
                names.add((file_name, fn.name))
                nhashes.add((file_name, fn.name, fn.normalized_hash))
                for rva in dataset.rvas_of(fn.function_id):
                    rvas.add((file_name, fn.name, rva.start_rva, rva.end_rva))
                for line in dataset.lines_of(fn.function_id):
                    lines.add((file_name, line.source_path, line.line_number, line.byte_address))
    return {
        "function_names": names,
        "rva_ranges": rvas,
        "line_tables": lines,
        "normalized_hashes": nhashes,
    }


def _match_pct(a: set, b: set) -> float:
    if not a and not b:
        return 100.0
    return 100.0 * len(a & b) / max(len(a), len(b))


def reproduce(
    recipe: Recipe,
    workspace: Union[str, Path],
    reference: Optional[Dataset] = None,
    worker_config: Optional[worker_mod.WorkerConfig] = None,
) -> tuple[ReproductionReport, Optional[Dataset]]:
    """Rebuild every entry into a fresh dataset under workspace.

    Toolchain versions are checked against the manifest before building;
    a mismatched toolchain skips its entries rather than silently
    substituting. Returns the report and the fresh dataset (open, read-write).
    """
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    wc = worker_config or worker_mod.WorkerConfig(workspace_root=str(workspace / "build"))

    available: dict[str, Optional[str]] = {}
    for toolchain, wanted in recipe.toolchain_manifest.items():
        driver = wc.toolchains.get(toolchain, toolchain)
        available[toolchain] = worker_mod.probe_driver_version(driver)

    dataset = Dataset.create(workspace / "reproduction.db", workspace / "archive")
    reports: list[EntryReport] = []
    for i, entry in enumerate(recipe.entries):
        config = entry.config
        toolchain = config.toolchain.value
        if available.get(toolchain) != config.toolchain_version:
            reports.append(
                EntryReport(entry.url, config.config_id, "toolchain_mismatch")
            )
            continue
        repo = RepoRecord(
            url=entry.url,
            commit=entry.commit,
            platform_hint=Platform.LINUX,
            build_system=BuildSystem.MAKEFILE,  # refined after clone
            license_id=entry.license_id,
        )
        # probe the checkout's build system before the real run
        from binforge import crawl

        probe_dir = workspace / f"probe-{i}"
        try:
            checkout = crawl.clone_at(repo, probe_dir)
            repo.build_system = _detect_build_system(checkout)
        except crawl.CloneError:
            reports.append(EntryReport(entry.url, config.config_id, "source_missing"))
            continue
        finally:
            worker_mod._remove_tree(probe_dir)

        repo.repo_id = dataset.insert_repo(repo)
        dataset.ensure_config(config)
        result = worker_mod.run_task(1_000_000 + i, repo, config, wc)
        if result.outcome.status is not BuildStatus.SUCCESS:
            reports.append(EntryReport(entry.url, config.config_id, "build_failed"))
            continue
        for item in result.payload:
            record, bundles, debug_artifact = worker_mod.payload_to_records(item, repo, config)
            if not dataset.has_binary(repo.repo_id, config.config_id, item.file_name):
                dataset.insert_binary(record, item.data, bundles, debug_artifact)
        matches = None
        if reference is not None:
            ours = _dataset_entry_sets(dataset, entry.url, config.config_id)
            theirs = _dataset_entry_sets(reference, entry.url, config.config_id)
            matches = {key: _match_pct(ours[key], theirs[key]) for key in ours}
        reports.append(EntryReport(entry.url, config.config_id, "rebuilt", matches))
    return ReproductionReport(reports, str(dataset.db_path)), dataset
