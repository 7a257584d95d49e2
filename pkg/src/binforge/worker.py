"""Build worker: executes one leased task end to end.

Pipeline per task: clone the pinned commit, mutate the build files for the
config, invoke the build inside the sandbox with a wall-clock timeout, sniff
produced executables/shared libraries by magic number, extract ground truth
from each, and package the payload for the coordinator. The workspace is
deleted afterwards no matter what happened; project misbehavior becomes a
classified BuildOutcome, never a worker crash.
"""

from __future__ import annotations

import configparser
import os
import re
import shutil
import signal
import socket
import stat
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from binforge import crawl, extract, mutate
from binforge.elf import ET_REL, ElfFile
from binforge.model import (
    BuildConfig,
    BuildOutcome,
    BuildStatus,
    BuildSystem,
    DebugArtifactRecord,
    DebugKind,
    ErrorCategory,
    LOG_EXCERPT_LIMIT,
    RepoRecord,
    Toolchain,
    sha256_hex,
    utc_now,
)

TRUNCATION_MARKER = b"\n[output truncated]\n"


# -- sandboxed execution -----------------------------------------------------------


@dataclass
class ExecLimits:
    wall_seconds: float = 600.0
    cpu_seconds: Optional[int] = None
    max_output_bytes: int = 1024 * 1024
    no_network: bool = True


@dataclass
class ExecResult:
    exit_code: Optional[int]  # None when killed at the wall limit
    timed_out: bool
    output: bytes
    truncated: bool
    warnings: list[str] = field(default_factory=list)
    duration: float = 0.0


_unshare_probe: Optional[bool] = None


def _network_isolation_available() -> bool:
    global _unshare_probe
    if _unshare_probe is None:
        try:
            probe = subprocess.run(
                ["unshare", "-n", "true"], capture_output=True, timeout=10
            )
            _unshare_probe = probe.returncode == 0
        except (OSError, subprocess.TimeoutExpired):
            _unshare_probe = False
    return _unshare_probe


def sandbox_exec(
    command: Sequence[str],
    limits: ExecLimits,
    cwd: Union[str, Path, None] = None,
    env: Optional[dict] = None,
) -> ExecResult:
    """Run a command in its own process group with wall/cpu/output bounds.

    The whole tree is killed at the wall limit; output beyond
    max_output_bytes is discarded and a truncation marker appended. Network
    is cut via a namespace when the platform allows, else a warning records
    that isolation was unavailable.
    """
    if not command:
        raise ValueError("empty command")
    warnings: list[str] = []
    argv = list(command)
    if limits.no_network:
        if _network_isolation_available():
            argv = ["unshare", "-n", "--"] + argv
        else:
            warnings.append("network isolation unavailable on this platform")

    def set_limits():
        if limits.cpu_seconds is not None:
            import resource

            resource.setrlimit(resource.RLIMIT_CPU, (limits.cpu_seconds, limits.cpu_seconds + 5))

    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=str(cwd) if cwd else None,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            start_new_session=True,
            preexec_fn=set_limits if limits.cpu_seconds is not None else None,
        )
    except OSError as exc:
        raise RuntimeError(f"failed to spawn {argv[0]}: {exc}") from exc

    captured = bytearray()
    truncated = False

    def reader():
        nonlocal truncated
        while True:
            chunk = proc.stdout.read(65536)
            if not chunk:
                return
            room = limits.max_output_bytes - len(captured)
            if room > 0:
                captured.extend(chunk[:room])
            if len(chunk) > room:
                truncated = True

    thread = threading.Thread(target=reader, daemon=True)
    thread.start()
    timed_out = False
    try:
        proc.wait(timeout=limits.wall_seconds)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        proc.wait()
    thread.join(timeout=10)
    duration = time.monotonic() - started
    output = bytes(captured)
    if truncated:
        output += TRUNCATION_MARKER
    return ExecResult(
        exit_code=None if timed_out else proc.returncode,
        timed_out=timed_out,
        output=output,
        truncated=truncated,
        warnings=warnings,
        duration=duration,
    )


# -- error classification -----------------------------------------------------------

_MSVC = frozenset({Toolchain.MSVC})
_GNU = frozenset({Toolchain.GCC, Toolchain.CLANG})
_ANY = frozenset(Toolchain)

# ordered: first matching rule wins
_RULES: list[tuple[frozenset, re.Pattern, ErrorCategory, Optional[str]]] = [
    (_MSVC, re.compile(r"MSB4126"), ErrorCategory.INVALID_CONFIG, "MSB4126"),
    (_MSVC, re.compile(r"C1083"), ErrorCategory.MISSING_SOURCE, "C1083"),
    (_MSVC, re.compile(r"MSB8036"), ErrorCategory.TOOLCHAIN_NOT_FOUND, "MSB8036"),
    (_MSVC, re.compile(r"MSB3202"), ErrorCategory.MISSING_PROJECT_FILE, "MSB3202"),
    (_MSVC, re.compile(r"MSB4025"), ErrorCategory.PROJECT_PARSE_ERROR, "MSB4025"),
    (_GNU, re.compile(r"missing separator"), ErrorCategory.PROJECT_PARSE_ERROR, None),
    (
        _GNU,
        re.compile(r"fatal error: .*: No such file or directory"),
        ErrorCategory.MISSING_SOURCE,
        None,
    ),
    (_GNU, re.compile(r"fatal error: '[^']+' file not found"), ErrorCategory.MISSING_SOURCE, None),
    (_GNU, re.compile(r"No rule to make target"), ErrorCategory.MISSING_SOURCE, None),
    (
        _GNU,
        re.compile(
            r"(?:/bin/sh: [^\n]*not found|make: [^:\n]+: No such file or directory"
            r"|command not found)"
        ),
        ErrorCategory.TOOLCHAIN_NOT_FOUND,
        None,
    ),
    # a project-side $(error ...) directive: the config is not supported
    (_GNU, re.compile(r":\d+: \*\*\*"), ErrorCategory.INVALID_CONFIG, None),
]

_MSVC_CODE_RE = re.compile(r"\b(MSB\d{4}|C\d{4})\b")


def classify_error(
    toolchain: Toolchain, exit_code: Optional[int], log_text: str
) -> tuple[ErrorCategory, Optional[str]]:
    """Total mapping from a failed build's evidence to an error category."""
    for toolchains, pattern, category, raw_code in _RULES:
        if toolchain in toolchains and pattern.search(log_text):
            if raw_code is None and toolchain is Toolchain.MSVC:
                match = _MSVC_CODE_RE.search(log_text)
                raw_code = match.group(1) if match else None
            return category, raw_code
    if toolchain is Toolchain.MSVC:
        match = _MSVC_CODE_RE.search(log_text)
        if match:
            return ErrorCategory.OTHER, match.group(1)
    if exit_code == 127:
        return ErrorCategory.TOOLCHAIN_NOT_FOUND, None
    return ErrorCategory.OTHER, None


# -- artifact collection --------------------------------------------------------------


def sniff_binary(path: Path) -> Optional[str]:
    """'elf' | 'pe' | None from leading bytes (magic only, never extension)."""
    return extract.sniff_format(path)


def collect_artifacts(root: Union[str, Path]) -> list[Path]:
    """Executables and shared libraries under root, found by magic number.

    ELF relocatable objects (.o intermediates) are excluded; everything else
    matching the ELF or PE signature is an output artifact.
    """
    root = Path(root)
    found = []
    for path in sorted(root.rglob("*")):
        if not path.is_file() or ".git" in path.parts or path.is_symlink():
            continue
        kind = sniff_binary(path)
        if kind == "elf":
            try:
                if ElfFile.from_path(path).e_type == ET_REL:
                    continue
            except Exception:
                continue
            found.append(path)
        elif kind == "pe":
            found.append(path)
    return found


# -- worker configuration ----------------------------------------------------------------


def _default_worker_id() -> str:
    return f"{socket.gethostname()}-{os.getpid()}"


@dataclass
class WorkerConfig:
    coordinator_url: str = "http://127.0.0.1:8650"
    toolchains: dict[str, str] = field(
        default_factory=lambda: {"gcc": "gcc", "clang": "clang"}
    )
    timeout_seconds: float = 600.0
    workspace_root: str = field(default_factory=lambda: tempfile.gettempdir())
    poll_interval: float = 2.0
    max_output_bytes: int = 1024 * 1024
    no_network: bool = True
    worker_id: str = field(default_factory=_default_worker_id)

    @classmethod
    def from_ini(cls, path: Union[str, Path]) -> "WorkerConfig":
        """INI keys under [worker]; toolchains as name=path pairs under
        [toolchains]."""
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        config = cls()
        section = parser["worker"] if parser.has_section("worker") else {}
        if "coordinator_url" in section:
            config.coordinator_url = section["coordinator_url"]
        if "timeout_seconds" in section:
            config.timeout_seconds = float(section["timeout_seconds"])
        if "workspace_root" in section:
            config.workspace_root = section["workspace_root"]
        if "poll_interval" in section:
            config.poll_interval = float(section["poll_interval"])
        if "max_output_bytes" in section:
            config.max_output_bytes = int(section["max_output_bytes"])
        if "no_network" in section:
            config.no_network = section.getboolean("no_network")
        if "worker_id" in section:
            config.worker_id = section["worker_id"]
        if parser.has_section("toolchains"):
            config.toolchains = dict(parser["toolchains"])
        return config


def _cxx_for(toolchain: Toolchain, cc_path: str) -> str:
    base = os.path.basename(cc_path)
    mapped = base.replace("clang", "clang++") if "clang" in base else base.replace("gcc", "g++")
    if mapped == base:
        mapped = "clang++" if toolchain is Toolchain.CLANG else "g++"
    return os.path.join(os.path.dirname(cc_path), mapped) if os.path.dirname(cc_path) else mapped


def probe_toolchains(toolchains: dict[str, str]) -> dict[str, str]:
    """name -> version for every configured driver that actually runs."""
    available = {}
    for name, driver in toolchains.items():
        version = probe_driver_version(driver)
        if version is not None:
            available[name] = version
    return available


def probe_driver_version(driver: str) -> Optional[str]:
    resolved = shutil.which(driver)
    if resolved is None:
        return None
    try:
        dump = subprocess.run(
            [resolved, "-dumpfullversion", "-dumpversion"],
            capture_output=True,
            text=True,
            timeout=20,
        )
        if dump.returncode == 0 and re.fullmatch(r"[\d.]+", dump.stdout.strip()):
            return dump.stdout.strip()
        banner = subprocess.run(
            [resolved, "--version"], capture_output=True, text=True, timeout=20
        )
        match = re.search(r"version (\d+(?:\.\d+)+)", banner.stdout)
        return match.group(1) if match else None
    except (OSError, subprocess.TimeoutExpired):
        return None


# -- task execution -------------------------------------------------------------------


@dataclass
class BinaryPayload:
    """One built artifact ready to ship to the coordinator."""

    file_name: str
    data: bytes
    sha256: str
    bundles: list  # (FunctionRecord, [RvaRecord], [LineRecord]) tuples
    debug_kind: Optional[DebugKind] = None
    debug_sha256: Optional[str] = None
    debug_data: Optional[bytes] = None  # None when debug info is embedded


@dataclass
class TaskResult:
    outcome: BuildOutcome
    payload: list[BinaryPayload] = field(default_factory=list)
    mutation_report_json: Optional[str] = None


def _excerpt(output: bytes) -> str:
    return output[-LOG_EXCERPT_LIMIT:].decode("utf-8", "replace")


def run_task(
    task_id: int,
    repo: RepoRecord,
    config: BuildConfig,
    worker_config: Optional[WorkerConfig] = None,
) -> TaskResult:
    """Execute one build task; every failure mode maps to a BuildOutcome."""
    wc = worker_config or WorkerConfig()
    workspace = Path(wc.workspace_root) / f"binforge-task-{task_id}-{os.getpid()}"
    try:
        workspace.mkdir(parents=True, exist_ok=True)
        return _run_task_inner(task_id, repo, config, wc, workspace)
    finally:
        _remove_tree(workspace)


def _remove_tree(root: Path) -> None:
    def grant_and_retry(func, path, _exc):
        try:
            os.chmod(path, stat.S_IRWXU)
            func(path)
        except OSError:
            pass

    shutil.rmtree(root, onerror=grant_and_retry)


def _failure(task_id: int, category: ErrorCategory, log: str, raw_code=None) -> TaskResult:
    return TaskResult(
        BuildOutcome(
            task_id=task_id,
            status=BuildStatus.FAILURE,
            error_category=category,
            raw_code=raw_code,
            log_excerpt=log[-LOG_EXCERPT_LIMIT:],
        )
    )


def _run_task_inner(
    task_id: int, repo: RepoRecord, config: BuildConfig, wc: WorkerConfig, workspace: Path
) -> TaskResult:
    try:
        checkout = crawl.clone_at(repo, workspace)
    except crawl.CommitNotFoundError as exc:
        return _failure(task_id, ErrorCategory.MISSING_SOURCE, str(exc), "commit_not_found")
    except crawl.CloneError as exc:
        return _failure(task_id, ErrorCategory.MISSING_SOURCE, str(exc))

    driver = wc.toolchains.get(config.toolchain.value, config.toolchain.value)
    if shutil.which(driver) is None:
        return _failure(
            task_id,
            ErrorCategory.TOOLCHAIN_NOT_FOUND,
            f"configured driver {driver!r} for {config.toolchain.value} is not executable",
        )

    try:
        if repo.build_system is BuildSystem.MAKEFILE:
            report = mutate.mutate_makefile(
                checkout, config, drivers=(driver, _cxx_for(config.toolchain, driver))
            )
            build_cmd = ["make", "-C", str(checkout)]
        elif repo.build_system is BuildSystem.MSBUILD_SOLUTION:
            report = mutate.mutate_msvc_project(checkout, config)
            return _failure(
                task_id,
                ErrorCategory.TOOLCHAIN_NOT_FOUND,
                "msbuild is not available on this worker",
                "MSB8036",
            )
        else:
            return _failure(
                task_id,
                ErrorCategory.INVALID_CONFIG,
                f"repo has no buildable system ({repo.build_system.value})",
            )
    except mutate.MissingProjectFileError as exc:
        return _failure(task_id, ErrorCategory.MISSING_PROJECT_FILE, str(exc), exc.raw_code)
    except mutate.ProjectParseError as exc:
        return _failure(task_id, ErrorCategory.PROJECT_PARSE_ERROR, str(exc), exc.raw_code)
    except mutate.NoBuildFilesError as exc:
        return _failure(task_id, ErrorCategory.MISSING_PROJECT_FILE, str(exc))

    env = dict(os.environ)
    env["LC_ALL"] = "C"  # classification regexes match untranslated messages
    limits = ExecLimits(
        wall_seconds=wc.timeout_seconds,
        max_output_bytes=wc.max_output_bytes,
        no_network=wc.no_network,
    )
    result = sandbox_exec(build_cmd, limits, cwd=checkout, env=env)
    log = _excerpt(result.output)

    if result.timed_out:
        return TaskResult(
            BuildOutcome(
                task_id=task_id,
                status=BuildStatus.TIMEOUT,
                error_category=ErrorCategory.TIMEOUT,
                log_excerpt=log,
            ),
            mutation_report_json=report.to_json(),
        )
    if result.exit_code != 0:
        category, raw_code = classify_error(config.toolchain, result.exit_code, log)
        task_result = _failure(task_id, category, log, raw_code)
        task_result.mutation_report_json = report.to_json()
        return task_result

    payload = []
    for artifact in collect_artifacts(checkout):
        data = artifact.read_bytes()
        try:
            extraction = extract.extract(artifact, source_root=checkout)
        except extract.ExtractionError:
            continue  # unusable artifact; the build itself still succeeded
        digest = sha256_hex(data)
        payload.append(
            BinaryPayload(
                file_name=artifact.relative_to(checkout).as_posix(),
                data=data,
                sha256=digest,
                bundles=extraction.record_bundles(),
                debug_kind=extraction.debug_kind,
                debug_sha256=digest if extraction.debug_kind else None,
            )
        )
    return TaskResult(
        BuildOutcome(task_id=task_id, status=BuildStatus.SUCCESS, log_excerpt=log),
        payload=payload,
        mutation_report_json=report.to_json(),
    )


def payload_to_records(
    payload: BinaryPayload, repo: RepoRecord, config: BuildConfig
):
    """(BinaryRecord, bundles, debug_artifact) ready for store.insert_binary."""
    from binforge.model import BinaryRecord

    record = BinaryRecord(
        file_name=payload.file_name,
        repo_id=repo.repo_id,
        config_id=config.config_id,
        size_bytes=len(payload.data),
        sha256=payload.sha256,
        license_id=repo.license_id,
        built_at=utc_now(),
    )
    debug_artifact = None
    if payload.debug_kind is not None:
        sha = payload.debug_sha256 or payload.sha256
        artifact_bytes = payload.debug_data if payload.debug_data is not None else payload.data
        debug_artifact = (
            DebugArtifactRecord(
                kind=payload.debug_kind,
                artifact_path=f"{sha[:2]}/{sha}",
                sha256=sha,
            ),
            artifact_bytes,
        )
    return record, payload.bundles, debug_artifact


# -- coordinator client and serve loop ---------------------------------------------


class SubmitRejectedError(Exception):
    """Coordinator refused the submission (stale lease or bad payload)."""

    def __init__(self, status_code: int, message: str):
        super().__init__(f"HTTP {status_code}: {message}")
        self.status_code = status_code


class CoordinatorClient:
    """Thin requests-based client for the coordinator's HTTP surface."""

    def __init__(self, base_url: str, timeout: float = 60.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def _post_json(self, path: str, doc: dict) -> dict:
        response = self._session.post(
            f"{self.base_url}{path}", json=doc, timeout=self.timeout
        )
        body = response.json()
        if response.status_code != 200:
            raise SubmitRejectedError(response.status_code, body.get("error", ""))
        return body

    def register(self, worker_id: str, capabilities: dict[str, str]) -> None:
        self._post_json(
            "/register", {"v": 1, "worker_id": worker_id, "capabilities": capabilities}
        )

    def lease(self, worker_id: str, capabilities: list[str]) -> Optional[dict]:
        body = self._post_json(
            "/lease", {"v": 1, "worker_id": worker_id, "capabilities": capabilities}
        )
        return body.get("task")

    def submit(
        self,
        worker_id: str,
        task_id: int,
        outcome: BuildOutcome,
        payload: Sequence[BinaryPayload] = (),
        mutation_report_json: Optional[str] = None,
    ) -> dict:
        from binforge.coordinator import bundles_to_wire, outcome_to_wire

        binaries = []
        files = {"meta": (None, "", "application/json")}
        for i, item in enumerate(payload):
            entry = {
                "file_name": item.file_name,
                "sha256": item.sha256,
                "size_bytes": len(item.data),
                "functions": bundles_to_wire(item.bundles),
                "debug": (
                    {"kind": item.debug_kind.value, "sha256": item.debug_sha256}
                    if item.debug_kind
                    else None
                ),
            }
            binaries.append(entry)
            files[f"bin{i}"] = (item.file_name, item.data, "application/octet-stream")
            if item.debug_data is not None:
                files[f"dbg{i}"] = ("debug", item.debug_data, "application/octet-stream")
        meta = {
            "v": 1,
            "worker_id": worker_id,
            "task_id": task_id,
            "outcome": outcome_to_wire(outcome),
            "mutation_report": mutation_report_json,
            "binaries": binaries,
        }
        import json as _json

        files["meta"] = (None, _json.dumps(meta), "application/json")
        response = self._session.post(
            f"{self.base_url}/submit", files=files, timeout=self.timeout
        )
        body = response.json()
        if response.status_code != 200:
            raise SubmitRejectedError(response.status_code, body.get("error", ""))
        return body

    def status(self) -> dict:
        response = self._session.get(f"{self.base_url}/status", timeout=self.timeout)
        return response.json()


def _task_from_wire(task_doc: dict) -> tuple[int, RepoRecord, BuildConfig]:
    from binforge.coordinator import config_from_wire
    from binforge.model import Platform

    repo_doc = task_doc["repo"]
    config = config_from_wire(task_doc["config"])
    repo = RepoRecord(
        url=repo_doc["url"],
        commit=repo_doc["commit"],
        platform_hint=Platform.LINUX,
        build_system=BuildSystem(repo_doc["build_system"]),
        repo_id=repo_doc["repo_id"],
        license_id=repo_doc.get("license_id"),
    )
    return task_doc["task_id"], repo, config


def serve(
    config: WorkerConfig,
    stop_event: Optional[threading.Event] = None,
    drain: bool = False,
    max_tasks: Optional[int] = None,
) -> int:
    """Worker loop: register, lease, build, submit; returns tasks processed.

    Toolchain availability is re-probed every lease cycle so capabilities
    track reality. With drain=True the loop exits once no compatible work is
    pending; otherwise it polls until stop_event is set.
    """
    client = CoordinatorClient(config.coordinator_url)
    processed = 0
    while not (stop_event and stop_event.is_set()):
        if max_tasks is not None and processed >= max_tasks:
            break
        capabilities = probe_toolchains(config.toolchains)
        client.register(config.worker_id, capabilities)
        task_doc = client.lease(config.worker_id, list(capabilities))
        if task_doc is None:
            if drain:
                break
            time.sleep(config.poll_interval)
            continue
        task_id, repo, build_config = _task_from_wire(task_doc)
        result = run_task(task_id, repo, build_config, config)
        try:
            client.submit(
                config.worker_id,
                task_id,
                result.outcome,
                result.payload,
                result.mutation_report_json,
            )
        except SubmitRejectedError as exc:
            if exc.status_code != 409:  # stale lease: discard quietly
                raise
        processed += 1
    return processed
