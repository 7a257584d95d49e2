"""Domain types for the dataset: repositories, build configurations, binaries,
functions, address ranges, source lines, and build outcomes.

Everything here is a plain value type. Validation never raises; it returns a
report listing violated invariants so callers can decide what to do with bad
records (reject, log, count).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Optional, Sequence, Union


class Platform(str, Enum):
    WINDOWS = "windows"
    LINUX = "linux"
    UNKNOWN = "unknown"


class BuildSystem(str, Enum):
    MSBUILD_SOLUTION = "msbuild_solution"
    MAKEFILE = "makefile"
    VCPKG_PORT = "vcpkg_port"
    NONE = "none"


class Toolchain(str, Enum):
    MSVC = "msvc"
    GCC = "gcc"
    CLANG = "clang"


class OptLevel(str, Enum):
    O0 = "O0"
    O1 = "O1"
    O2 = "O2"
    O3 = "O3"
    OD = "Od"
    OX = "Ox"
    OS = "Os"
    OZ = "Oz"


class BuildMode(str, Enum):
    DEBUG = "debug"
    RELEASE = "release"


class Arch(str, Enum):
    X86 = "x86"
    X64 = "x64"


class DebugKind(str, Enum):
    PDB = "pdb"
    DWARF_EMBEDDED = "dwarf_embedded"
    DWARF_SPLIT = "dwarf_split"


class TaskState(str, Enum):
    PENDING = "pending"
    LEASED = "leased"
    DONE = "done"
    FAILED = "failed"
    TIMEOUT = "timeout"


class BuildStatus(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


class ErrorCategory(str, Enum):
    INVALID_CONFIG = "invalid_config"
    MISSING_SOURCE = "missing_source"
    TOOLCHAIN_NOT_FOUND = "toolchain_not_found"
    MISSING_PROJECT_FILE = "missing_project_file"
    PROJECT_PARSE_ERROR = "project_parse_error"
    TIMEOUT = "timeout"
    OTHER = "other"


# Optimization levels each toolchain family actually accepts.
MSVC_OPT_LEVELS = frozenset({OptLevel.OD, OptLevel.O1, OptLevel.O2, OptLevel.OX})
GNU_OPT_LEVELS = frozenset(
    {OptLevel.O0, OptLevel.O1, OptLevel.O2, OptLevel.O3, OptLevel.OS, OptLevel.OZ}
)

LOG_EXCERPT_LIMIT = 64 * 1024

_HEX40_RE = re.compile(r"^[0-9a-f]{40}$")
_HEX64_RE = re.compile(r"^[0-9a-f]{64}$")


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass
class RepoRecord:
    """A discovered source repository with the metadata the filters looked at."""

    url: str
    commit: Optional[str]
    platform_hint: Platform = Platform.UNKNOWN
    build_system: BuildSystem = BuildSystem.NONE
    file_count: int = 0
    size_kb: int = 0
    readme_markers: frozenset[str] = frozenset()
    license_id: Optional[str] = None
    crawled_at: datetime = field(default_factory=utc_now)
    repo_id: Optional[int] = None  # assigned by the store


@dataclass(frozen=True)
class BuildConfig:
    """One cell of the compiler matrix."""

    toolchain: Toolchain
    toolchain_version: str
    opt_level: OptLevel
    mode: BuildMode
    arch: Arch

    @property
    def config_id(self) -> str:
        """Deterministic id derived from the config fields only."""
        key = "|".join(
            (
                self.toolchain.value,
                self.toolchain_version,
                self.opt_level.value,
                self.mode.value,
                self.arch.value,
            )
        )
        return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]

    @property
    def label(self) -> str:
        return (
            f"{self.toolchain.value}-{self.toolchain_version}"
            f" {self.opt_level.value}-{self.mode.value}-{self.arch.value}"
        )

    def allowed_opt_levels(self) -> frozenset[OptLevel]:
        return MSVC_OPT_LEVELS if self.toolchain is Toolchain.MSVC else GNU_OPT_LEVELS


@dataclass
class BinaryRecord:
    """One built binary: identity, provenance, and content digest."""

    file_name: str
    repo_id: int
    config_id: str
    size_bytes: int
    sha256: str
    license_id: Optional[str] = None
    built_at: datetime = field(default_factory=utc_now)
    binary_id: Optional[int] = None


@dataclass
class FunctionRecord:
    name: str
    byte_hash: str
    normalized_hash: str
    binary_id: Optional[int] = None
    function_id: Optional[int] = None


@dataclass
class RvaRecord:
    """One load-relative address range owned by a function; end is exclusive.

    Discontiguous functions own several disjoint ranges, one record each.
    """

    start_rva: int
    end_rva: int
    function_id: Optional[int] = None


@dataclass
class LineRecord:
    """Maps one source line to the byte address it compiled to."""

    source_path: str
    line_number: int
    byte_address: int
    length: int
    line_text: Optional[str] = None
    function_id: Optional[int] = None


@dataclass
class DebugArtifactRecord:
    kind: DebugKind
    artifact_path: str
    sha256: str
    binary_id: Optional[int] = None


@dataclass
class BuildOutcome:
    """Classified result of one build task."""

    task_id: int
    status: BuildStatus
    error_category: Optional[ErrorCategory] = None
    raw_code: Optional[str] = None
    log_excerpt: str = ""


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return f"{self.field}: {self.message}"


DomainRecord = Union[
    RepoRecord,
    BuildConfig,
    BinaryRecord,
    FunctionRecord,
    RvaRecord,
    LineRecord,
    DebugArtifactRecord,
    BuildOutcome,
]


def _check_hex64(report: list[Violation], name: str, value: object) -> None:
    if not isinstance(value, str) or not _HEX64_RE.match(value):
        report.append(Violation(name, "must be 64 lowercase hex characters"))


def validate_record(record: DomainRecord) -> list[Violation]:
    """Check every invariant of one record; empty list means valid.

    Never raises: malformed input yields violations instead.
    """
    report: list[Violation] = []
    if isinstance(record, RepoRecord):
        if not record.url:
            report.append(Violation("url", "must be non-empty"))
        if record.commit is not None and not _HEX40_RE.match(record.commit):
            report.append(Violation("commit", "must be 40 lowercase hex characters"))
        if record.file_count < 0:
            report.append(Violation("file_count", "must be non-negative"))
        if record.size_kb < 0:
            report.append(Violation("size_kb", "must be non-negative"))
    elif isinstance(record, BuildConfig):
        if record.opt_level not in record.allowed_opt_levels():
            report.append(
                Violation(
                    "opt_level",
                    f"{record.opt_level.value} not in {record.toolchain.value} set",
                )
            )
        if not record.toolchain_version:
            report.append(Violation("toolchain_version", "must be non-empty"))
    elif isinstance(record, BinaryRecord):
        if not record.file_name:
            report.append(Violation("file_name", "must be non-empty"))
        if record.size_bytes < 0:
            report.append(Violation("size_bytes", "must be non-negative"))
        _check_hex64(report, "sha256", record.sha256)
    elif isinstance(record, FunctionRecord):
        if not record.name:
            report.append(Violation("name", "must be non-empty"))
        _check_hex64(report, "byte_hash", record.byte_hash)
        _check_hex64(report, "normalized_hash", record.normalized_hash)
    elif isinstance(record, RvaRecord):
        if record.start_rva < 0:
            report.append(Violation("start_rva", "must be non-negative"))
        if not record.start_rva < record.end_rva:
            report.append(Violation("start_rva", "start_rva < end_rva"))
    elif isinstance(record, LineRecord):
        if not record.source_path:
            report.append(Violation("source_path", "must be non-empty"))
        if record.line_number < 1:
            report.append(Violation("line_number", "must be positive"))
        if record.byte_address < 0:
            report.append(Violation("byte_address", "must be non-negative"))
        if record.length < 1:
            report.append(Violation("length", "must be positive"))
    elif isinstance(record, DebugArtifactRecord):
        if not record.artifact_path:
            report.append(Violation("artifact_path", "must be non-empty"))
        _check_hex64(report, "sha256", record.sha256)
    elif isinstance(record, BuildOutcome):
        if record.status is BuildStatus.SUCCESS and record.error_category is not None:
            report.append(Violation("error_category", "must be absent on success"))
        if (
            record.status is BuildStatus.TIMEOUT
            and record.error_category is not ErrorCategory.TIMEOUT
        ):
            report.append(Violation("error_category", "must be timeout on timeout"))
        if len(record.log_excerpt.encode("utf-8", "replace")) > LOG_EXCERPT_LIMIT:
            report.append(Violation("log_excerpt", "exceeds 64 KiB bound"))
    else:
        report.append(Violation("record", f"unknown record type {type(record).__name__}"))
    return report


def ranges_overlap(ranges: Sequence[RvaRecord]) -> bool:
    """True when any two ranges of the same function intersect."""
    spans = sorted((r.start_rva, r.end_rva) for r in ranges)
    return any(spans[i][1] > spans[i + 1][0] for i in range(len(spans) - 1))


class EmptyMatrixError(ValueError):
    """Every requested matrix cell was invalid."""


@dataclass
class MatrixRequest:
    """Cross-product request: toolchains (with versions) x opts x modes x arches."""

    toolchains: Sequence[tuple[Toolchain, str]]
    opt_levels: Sequence[OptLevel]
    modes: Sequence[BuildMode] = (BuildMode.RELEASE,)
    arches: Sequence[Arch] = (Arch.X64,)


def config_matrix(request: MatrixRequest) -> list[BuildConfig]:
    """Expand a matrix request into valid BuildConfigs, deterministically ordered.

    Invalid cells (e.g. gcc with Ox) are skipped; raises EmptyMatrixError when
    nothing survives.
    """
    if not (request.toolchains and request.opt_levels and request.modes and request.arches):
        raise EmptyMatrixError("matrix request has an empty axis")
    configs = []
    for toolchain, version in request.toolchains:
        for opt in request.opt_levels:
            for mode in request.modes:
                for arch in request.arches:
                    cfg = BuildConfig(toolchain, version, opt, mode, arch)
                    if not validate_record(cfg):
                        configs.append(cfg)
    if not configs:
        raise EmptyMatrixError("every requested matrix cell was invalid")
    configs.sort(
        key=lambda c: (
            c.toolchain.value,
            c.toolchain_version,
            c.opt_level.value,
            c.mode.value,
            c.arch.value,
        )
    )
    return configs


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def iter_violations(records: Iterable[DomainRecord]) -> Iterable[Violation]:
    for record in records:
        yield from validate_record(record)
