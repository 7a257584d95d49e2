"""Dataset persistence: a single SQLite file of metadata plus a
content-addressed archive directory of binaries and debug artifacts.

Public tables: binaries, functions, rvas, lines, pdbs. Internal tables carry
repos, configs, the task queue, and outcomes. One exclusive writer (enforced
with an advisory lock file) and any number of readers. Every insert_binary is
one transaction: either the binary row and all of its extracted children land,
or none do.
"""

from __future__ import annotations

import csv
import fcntl
import json
import os
import sqlite3
import statistics
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

from binforge.model import (
    BinaryRecord,
    BuildConfig,
    DebugArtifactRecord,
    FunctionRecord,
    LineRecord,
    RepoRecord,
    RvaRecord,
    Platform,
    BuildSystem,
    BuildMode,
    Arch,
    DebugKind,
    OptLevel,
    Toolchain,
    Violation,
    ranges_overlap,
    sha256_hex,
    validate_record,
)

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE id_sequence (
    next_id INTEGER NOT NULL
);
CREATE TABLE repos (
    repo_id        INTEGER PRIMARY KEY,
    url            TEXT NOT NULL,
    commit_hash    TEXT,
    platform_hint  TEXT NOT NULL,
    build_system   TEXT NOT NULL,
    file_count     INTEGER NOT NULL,
    size_kb        INTEGER NOT NULL,
    readme_markers TEXT NOT NULL,
    license_id     TEXT,
    crawled_at     TEXT NOT NULL,
    UNIQUE (url, commit_hash)
);
CREATE TABLE configs (
    config_id         TEXT PRIMARY KEY,
    toolchain         TEXT NOT NULL,
    toolchain_version TEXT NOT NULL,
    opt_level         TEXT NOT NULL,
    mode              TEXT NOT NULL,
    arch              TEXT NOT NULL
);
CREATE TABLE binaries (
    binary_id  INTEGER PRIMARY KEY,
    file_name  TEXT NOT NULL,
    repo_id    INTEGER NOT NULL REFERENCES repos(repo_id),
    config_id  TEXT NOT NULL REFERENCES configs(config_id),
    size_bytes INTEGER NOT NULL,
    sha256     TEXT NOT NULL,
    license_id TEXT,
    built_at   TEXT NOT NULL,
    UNIQUE (repo_id, config_id, file_name)
);
CREATE TABLE functions (
    function_id     INTEGER PRIMARY KEY,
    binary_id       INTEGER NOT NULL REFERENCES binaries(binary_id),
    name            TEXT NOT NULL,
    byte_hash       TEXT NOT NULL,
    normalized_hash TEXT NOT NULL
);
CREATE INDEX idx_functions_binary ON functions(binary_id);
CREATE TABLE rvas (
    function_id INTEGER NOT NULL REFERENCES functions(function_id),
    start_rva   INTEGER NOT NULL,
    end_rva     INTEGER NOT NULL
);
CREATE INDEX idx_rvas_function ON rvas(function_id);
CREATE TABLE lines (
    function_id  INTEGER NOT NULL REFERENCES functions(function_id),
    source_path  TEXT NOT NULL,
    line_number  INTEGER NOT NULL,
    line_text    TEXT,
    byte_address INTEGER NOT NULL,
    length       INTEGER NOT NULL
);
CREATE INDEX idx_lines_function ON lines(function_id);
CREATE TABLE pdbs (
    binary_id     INTEGER NOT NULL REFERENCES binaries(binary_id),
    kind          TEXT NOT NULL,
    artifact_path TEXT NOT NULL,
    sha256        TEXT NOT NULL,
    UNIQUE (binary_id, kind)
);
CREATE TABLE tasks (
    task_id      INTEGER PRIMARY KEY,
    repo_id      INTEGER NOT NULL REFERENCES repos(repo_id),
    config_id    TEXT NOT NULL REFERENCES configs(config_id),
    state        TEXT NOT NULL,
    lease_expiry REAL,
    attempt      INTEGER NOT NULL DEFAULT 0,
    worker_id    TEXT,
    UNIQUE (repo_id, config_id)
);
CREATE TABLE outcomes (
    task_id        INTEGER NOT NULL REFERENCES tasks(task_id),
    status         TEXT NOT NULL,
    error_category TEXT,
    raw_code       TEXT,
    log_excerpt    TEXT NOT NULL DEFAULT '',
    mutation_report TEXT,
    recorded_at    TEXT NOT NULL
);
CREATE TABLE workers (
    worker_id     TEXT PRIMARY KEY,
    capabilities  TEXT NOT NULL,
    registered_at TEXT NOT NULL
);
"""

CSV_COLUMNS = [
    "binary_id",
    "file_name",
    "repo_id",
    "config_id",
    "size_bytes",
    "sha256",
    "license_id",
    "built_at",
]


class StoreError(Exception):
    pass


class DatasetExistsError(StoreError):
    pass


class SchemaVersionError(StoreError):
    pass


class WriterLockError(StoreError):
    pass


class DuplicateBinaryError(StoreError):
    pass


class RecordInvalidError(StoreError):
    def __init__(self, record, violations):
        super().__init__(
            f"{type(record).__name__} failed validation: "
            + "; ".join(str(v) for v in violations)
        )
        self.violations = violations


@dataclass
class BinaryFilter:
    """Conjunction of optional predicates over the binaries table."""

    platform: Optional[Platform] = None
    toolchain: Optional[Toolchain] = None
    opt: Optional[OptLevel] = None
    license: Optional[str] = None
    min_size: Optional[int] = None
    max_size: Optional[int] = None


@dataclass
class CorpusStats:
    binary_count: int
    function_count: int
    unique_name_count: int
    unique_hash_count: int
    size_histogram: dict[int, int]
    functions_per_binary_histogram: dict[int, int]
    pearson_r: Optional[float]

    def to_dict(self) -> dict:
        return {
            "binary_count": self.binary_count,
            "function_count": self.function_count,
            "unique_name_count": self.unique_name_count,
            "unique_hash_count": self.unique_hash_count,
            "size_histogram": {str(k): v for k, v in sorted(self.size_histogram.items())},
            "functions_per_binary_histogram": {
                str(k): v for k, v in sorted(self.functions_per_binary_histogram.items())
            },
            "pearson_r": self.pearson_r,
        }


def _log2_bucket(value: int) -> int:
    """Lower bound of the power-of-two bucket containing value."""
    return 0 if value <= 0 else 1 << (value.bit_length() - 1)


def _iso(dt: datetime) -> str:
    return dt.isoformat()


class Dataset:
    """Handle to one dataset: the SQLite file plus its archive directory."""

    def __init__(self, db_path: Path, archive_root: Path, conn: sqlite3.Connection,
                 writable: bool, lock_fh=None):
        self.db_path = db_path
        self.archive_root = archive_root
        self.conn = conn
        self.writable = writable
        self._lock_fh = lock_fh
        self.schema_version = int(
            conn.execute("SELECT value FROM meta WHERE key='schema_version'").fetchone()[0]
        )
        # test seam: called between the functions insert and the rva/line
        # inserts of insert_binary, inside the transaction
        self._fault_after_functions = None

    # -- lifecycle -------------------------------------------------------------

    @classmethod
    def create(cls, db_path: Union[str, Path], archive_root: Union[str, Path]) -> "Dataset":
        """Initialize a fresh dataset; fails when db_path already has content."""
        db_path = Path(db_path)
        archive_root = Path(archive_root)
        if db_path.exists() and db_path.stat().st_size > 0:
            raise DatasetExistsError(f"{db_path} already exists")
        db_path.parent.mkdir(parents=True, exist_ok=True)
        archive_root.mkdir(parents=True, exist_ok=True)
        lock_fh = cls._acquire_writer_lock(db_path)
        conn = cls._connect(db_path)
        with conn:
            conn.executescript(_SCHEMA)
            conn.execute(
                "INSERT INTO meta VALUES ('schema_version', ?)", (str(SCHEMA_VERSION),)
            )
            conn.execute(
                "INSERT INTO meta VALUES ('archive_root', ?)", (str(archive_root),)
            )
            conn.execute("INSERT INTO id_sequence VALUES (1)")
        return cls(db_path, archive_root, conn, writable=True, lock_fh=lock_fh)

    @classmethod
    def open(
        cls,
        db_path: Union[str, Path],
        archive_root: Union[str, Path, None] = None,
        writable: bool = False,
    ) -> "Dataset":
        db_path = Path(db_path)
        if not db_path.exists():
            raise StoreError(f"{db_path} does not exist")
        lock_fh = cls._acquire_writer_lock(db_path) if writable else None
        conn = cls._connect(db_path)
        row = conn.execute("SELECT value FROM meta WHERE key='schema_version'").fetchone()
        if row is None or int(row[0]) != SCHEMA_VERSION:
            conn.close()
            found = row[0] if row else "none"
            raise SchemaVersionError(
                f"unsupported schema version {found}, expected {SCHEMA_VERSION}"
            )
        if archive_root is None:
            stored = conn.execute(
                "SELECT value FROM meta WHERE key='archive_root'"
            ).fetchone()
            archive_root = Path(stored[0]) if stored else db_path.parent / "archive"
        return cls(db_path, Path(archive_root), conn, writable, lock_fh)

    @staticmethod
    def _connect(db_path: Path) -> sqlite3.Connection:
        conn = sqlite3.connect(db_path, check_same_thread=False)
        conn.execute("PRAGMA foreign_keys = ON")
        return conn

    @staticmethod
    def _acquire_writer_lock(db_path: Path):
        lock_path = db_path.with_suffix(db_path.suffix + ".lock")
        fh = open(lock_path, "w")
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            fh.close()
            raise WriterLockError(f"another writer holds {lock_path}") from exc
        return fh

    def close(self) -> None:
        self.conn.close()
        if self._lock_fh is not None:
            fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    def __enter__(self) -> "Dataset":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- id allocation ----------------------------------------------------------

    def _allocate_ids(self, count: int) -> int:
        """Reserve `count` ids from the dataset-wide monotonic sequence;
        returns the first. Must run inside the caller's transaction."""
        row = self.conn.execute("SELECT next_id FROM id_sequence").fetchone()
        first = row[0]
        self.conn.execute("UPDATE id_sequence SET next_id = ?", (first + count,))
        return first

    def _require_writer(self) -> None:
        if not self.writable:
            raise WriterLockError("dataset opened read-only")

    # -- repos and configs -------------------------------------------------------

    def insert_repo(self, record: RepoRecord) -> int:
        self._require_writer()
        violations = validate_record(record)
        if violations:
            raise RecordInvalidError(record, violations)
        with self.conn:
            existing = self.conn.execute(
                "SELECT repo_id FROM repos WHERE url=? AND commit_hash IS ?",
                (record.url, record.commit),
            ).fetchone()
            if existing:
                record.repo_id = existing[0]
                return existing[0]
            repo_id = self._allocate_ids(1)
            self.conn.execute(
                "INSERT INTO repos VALUES (?,?,?,?,?,?,?,?,?,?)",
                (
                    repo_id,
                    record.url,
                    record.commit,
                    record.platform_hint.value,
                    record.build_system.value,
                    record.file_count,
                    record.size_kb,
                    json.dumps(sorted(record.readme_markers)),
                    record.license_id,
                    _iso(record.crawled_at),
                ),
            )
        record.repo_id = repo_id
        return repo_id

    def ensure_config(self, config: BuildConfig) -> str:
        self._require_writer()
        violations = validate_record(config)
        if violations:
            raise RecordInvalidError(config, violations)
        with self.conn:
            self.conn.execute(
                "INSERT OR IGNORE INTO configs VALUES (?,?,?,?,?,?)",
                (
                    config.config_id,
                    config.toolchain.value,
                    config.toolchain_version,
                    config.opt_level.value,
                    config.mode.value,
                    config.arch.value,
                ),
            )
        return config.config_id

    def get_repo(self, repo_id: int) -> Optional[RepoRecord]:
        row = self.conn.execute(
            "SELECT repo_id, url, commit_hash, platform_hint, build_system, file_count,"
            " size_kb, readme_markers, license_id, crawled_at FROM repos WHERE repo_id=?",
            (repo_id,),
        ).fetchone()
        if row is None:
            return None
        return RepoRecord(
            repo_id=row[0],
            url=row[1],
            commit=row[2],
            platform_hint=Platform(row[3]),
            build_system=BuildSystem(row[4]),
            file_count=row[5],
            size_kb=row[6],
            readme_markers=frozenset(json.loads(row[7])),
            license_id=row[8],
            crawled_at=datetime.fromisoformat(row[9]),
        )

    def list_repos(self) -> list[RepoRecord]:
        ids = [r[0] for r in self.conn.execute("SELECT repo_id FROM repos ORDER BY repo_id")]
        return [self.get_repo(i) for i in ids]

    def get_config(self, config_id: str) -> Optional[BuildConfig]:
        row = self.conn.execute(
            "SELECT toolchain, toolchain_version, opt_level, mode, arch"
            " FROM configs WHERE config_id=?",
            (config_id,),
        ).fetchone()
        if row is None:
            return None
        return BuildConfig(
            Toolchain(row[0]), row[1], OptLevel(row[2]), BuildMode(row[3]), Arch(row[4])
        )

    # -- binaries ------------------------------------------------------------------

    def archive_path_for(self, sha256: str) -> Path:
        return self.archive_root / sha256[:2] / sha256

    def _archive_file(self, sha256: str, data: bytes) -> str:
        target = self.archive_path_for(sha256)
        rel = f"{sha256[:2]}/{sha256}"
        if target.exists():
            return rel
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, target)
        return rel

    def _record_archive_name(self, sha256: str, binary_id: int, record: BinaryRecord) -> None:
        entry = {
            "sha256": sha256,
            "binary_id": binary_id,
            "file_name": record.file_name,
            "repo_id": record.repo_id,
            "config_id": record.config_id,
        }
        with open(self.archive_root / "names.jsonl", "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def insert_binary(
        self,
        record: BinaryRecord,
        file_bytes: bytes,
        functions: Sequence[tuple[FunctionRecord, Sequence[RvaRecord], Sequence[LineRecord]]] = (),
        debug_artifact: Optional[tuple[DebugArtifactRecord, bytes]] = None,
    ) -> int:
        """Store one binary with its extraction in a single transaction.

        The file lands in the archive under its sha256 before the rows commit;
        a failed transaction leaves no rows (the content-addressed file is
        harmless and reused on retry).
        """
        self._require_writer()
        violations = validate_record(record)
        for fn, rvas, lines in functions:
            violations += validate_record(fn)
            for r in rvas:
                violations += validate_record(r)
            for ln in lines:
                violations += validate_record(ln)
            if ranges_overlap(list(rvas)):
                raise RecordInvalidError(fn, [Violation("ranges", "overlapping rva ranges")])
        if violations:
            raise RecordInvalidError(record, violations)
        if sha256_hex(file_bytes) != record.sha256:
            raise StoreError("file bytes do not match record.sha256")
        if record.size_bytes != len(file_bytes):
            raise StoreError("file length does not match record.size_bytes")

        self._archive_file(record.sha256, file_bytes)
        artifact_rel = None
        if debug_artifact is not None:
            art, art_bytes = debug_artifact
            if sha256_hex(art_bytes) != art.sha256:
                raise StoreError("debug artifact bytes do not match sha256")
            artifact_rel = self._archive_file(art.sha256, art_bytes)

        try:
            with self.conn:
                dup = self.conn.execute(
                    "SELECT binary_id FROM binaries WHERE repo_id=? AND config_id=? AND file_name=?",
                    (record.repo_id, record.config_id, record.file_name),
                ).fetchone()
                if dup:
                    raise DuplicateBinaryError(
                        f"({record.repo_id},{record.config_id},{record.file_name})"
                        f" already stored as binary {dup[0]}"
                    )
                n_functions = len(functions)
                first = self._allocate_ids(1 + n_functions)
                binary_id = first
                self.conn.execute(
                    "INSERT INTO binaries VALUES (?,?,?,?,?,?,?,?)",
                    (
                        binary_id,
                        record.file_name,
                        record.repo_id,
                        record.config_id,
                        record.size_bytes,
                        record.sha256,
                        record.license_id,
                        _iso(record.built_at),
                    ),
                )
                function_ids = []
                for i, (fn, _, _) in enumerate(functions):
                    function_id = first + 1 + i
                    function_ids.append(function_id)
                    self.conn.execute(
                        "INSERT INTO functions VALUES (?,?,?,?,?)",
                        (function_id, binary_id, fn.name, fn.byte_hash, fn.normalized_hash),
                    )
                if self._fault_after_functions is not None:
                    self._fault_after_functions()
                for function_id, (_, rvas, lines) in zip(function_ids, functions):
                    self.conn.executemany(
                        "INSERT INTO rvas VALUES (?,?,?)",
                        [(function_id, r.start_rva, r.end_rva) for r in rvas],
                    )
                    self.conn.executemany(
                        "INSERT INTO lines VALUES (?,?,?,?,?,?)",
                        [
                            (
                                function_id,
                                ln.source_path,
                                ln.line_number,
                                ln.line_text,
                                ln.byte_address,
                                ln.length,
                            )
                            for ln in lines
                        ],
                    )
                if debug_artifact is not None:
                    art, _ = debug_artifact
                    self.conn.execute(
                        "INSERT INTO pdbs VALUES (?,?,?,?)",
                        (binary_id, art.kind.value, artifact_rel, art.sha256),
                    )
        except sqlite3.IntegrityError as exc:
            raise StoreError(f"integrity violation: {exc}") from exc

        record.binary_id = binary_id
        for function_id, (fn, rvas, lines) in zip(function_ids, functions):
            fn.function_id = function_id
            fn.binary_id = binary_id
            for r in rvas:
                r.function_id = function_id
            for ln in lines:
                ln.function_id = function_id
        self._record_archive_name(record.sha256, binary_id, record)
        return binary_id

    def has_binary(self, repo_id: int, config_id: str, file_name: str) -> bool:
        row = self.conn.execute(
            "SELECT 1 FROM binaries WHERE repo_id=? AND config_id=? AND file_name=?",
            (repo_id, config_id, file_name),
        ).fetchone()
        return row is not None

    def query(self, flt: Optional[BinaryFilter] = None) -> Iterator[BinaryRecord]:
        """Binaries matching the conjunction of set filters, by binary_id."""
        flt = flt or BinaryFilter()
        sql = (
            "SELECT b.binary_id, b.file_name, b.repo_id, b.config_id, b.size_bytes,"
            " b.sha256, b.license_id, b.built_at FROM binaries b"
            " JOIN repos r ON r.repo_id = b.repo_id"
            " JOIN configs c ON c.config_id = b.config_id"
        )
        clauses, params = [], []
        if flt.platform is not None:
            clauses.append("r.platform_hint = ?")
            params.append(flt.platform.value)
        if flt.toolchain is not None:
            clauses.append("c.toolchain = ?")
            params.append(flt.toolchain.value)
        if flt.opt is not None:
            clauses.append("c.opt_level = ?")
            params.append(flt.opt.value)
        if flt.license is not None:
            clauses.append("b.license_id = ?")
            params.append(flt.license)
        if flt.min_size is not None:
            clauses.append("b.size_bytes >= ?")
            params.append(flt.min_size)
        if flt.max_size is not None:
            clauses.append("b.size_bytes <= ?")
            params.append(flt.max_size)
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY b.binary_id"
        for row in self.conn.execute(sql, params):
            yield BinaryRecord(
                binary_id=row[0],
                file_name=row[1],
                repo_id=row[2],
                config_id=row[3],
                size_bytes=row[4],
                sha256=row[5],
                license_id=row[6],
                built_at=datetime.fromisoformat(row[7]),
            )

    def functions_of(self, binary_id: int) -> list[FunctionRecord]:
        rows = self.conn.execute(
            "SELECT function_id, binary_id, name, byte_hash, normalized_hash"
            " FROM functions WHERE binary_id=? ORDER BY function_id",
            (binary_id,),
        ).fetchall()
        return [
            FunctionRecord(
                name=r[2], byte_hash=r[3], normalized_hash=r[4], binary_id=r[1], function_id=r[0]
            )
            for r in rows
        ]

    def rvas_of(self, function_id: int) -> list[RvaRecord]:
        rows = self.conn.execute(
            "SELECT start_rva, end_rva FROM rvas WHERE function_id=? ORDER BY start_rva",
            (function_id,),
        ).fetchall()
        return [RvaRecord(r[0], r[1], function_id=function_id) for r in rows]

    def lines_of(self, function_id: int) -> list[LineRecord]:
        rows = self.conn.execute(
            "SELECT source_path, line_number, line_text, byte_address, length"
            " FROM lines WHERE function_id=? ORDER BY byte_address, line_number",
            (function_id,),
        ).fetchall()
        return [
            LineRecord(r[0], r[1], r[3], r[4], line_text=r[2], function_id=function_id)
            for r in rows
        ]

    # -- statistics -------------------------------------------------------------

    def corpus_stats(self) -> CorpusStats:
        """Exact (unsampled) corpus statistics."""
        binary_count = self.conn.execute("SELECT COUNT(*) FROM binaries").fetchone()[0]
        function_count = self.conn.execute("SELECT COUNT(*) FROM functions").fetchone()[0]
        unique_names = self.conn.execute(
            "SELECT COUNT(DISTINCT name) FROM functions"
        ).fetchone()[0]
        unique_hashes = self.conn.execute(
            "SELECT COUNT(DISTINCT byte_hash) FROM functions"
        ).fetchone()[0]
        size_histogram: dict[int, int] = {}
        per_binary: list[tuple[int, int]] = []  # (size, function count)
        rows = self.conn.execute(
            "SELECT b.size_bytes, COUNT(f.function_id) FROM binaries b"
            " LEFT JOIN functions f ON f.binary_id = b.binary_id"
            " GROUP BY b.binary_id"
        ).fetchall()
        fn_histogram: dict[int, int] = {}
        for size, n_funcs in rows:
            size_histogram[_log2_bucket(size)] = size_histogram.get(_log2_bucket(size), 0) + 1
            fn_histogram[_log2_bucket(n_funcs)] = fn_histogram.get(_log2_bucket(n_funcs), 0) + 1
            per_binary.append((size, n_funcs))
        pearson = None
        if len(per_binary) >= 2:
            sizes = [float(s) for s, _ in per_binary]
            counts = [float(n) for _, n in per_binary]
            try:
                pearson = statistics.correlation(counts, sizes)
            except statistics.StatisticsError:
                pearson = None  # zero variance on an axis
        return CorpusStats(
            binary_count=binary_count,
            function_count=function_count,
            unique_name_count=unique_names,
            unique_hash_count=unique_hashes,
            size_histogram=size_histogram,
            functions_per_binary_histogram=fn_histogram,
            pearson_r=pearson,
        )

    # -- validation --------------------------------------------------------------

    def validate(self, check_archive: bool = True) -> list[str]:
        """Full-scan invariant check; returns one message per violation."""
        problems: list[str] = []
        conn = self.conn

        orphan_queries = [
            ("functions", "SELECT f.function_id FROM functions f LEFT JOIN binaries b"
             " ON b.binary_id = f.binary_id WHERE b.binary_id IS NULL"),
            ("rvas", "SELECT r.function_id FROM rvas r LEFT JOIN functions f"
             " ON f.function_id = r.function_id WHERE f.function_id IS NULL"),
            ("lines", "SELECT l.function_id FROM lines l LEFT JOIN functions f"
             " ON f.function_id = l.function_id WHERE f.function_id IS NULL"),
            ("pdbs", "SELECT p.binary_id FROM pdbs p LEFT JOIN binaries b"
             " ON b.binary_id = p.binary_id WHERE b.binary_id IS NULL"),
            ("binaries.repo", "SELECT b.binary_id FROM binaries b LEFT JOIN repos r"
             " ON r.repo_id = b.repo_id WHERE r.repo_id IS NULL"),
            ("binaries.config", "SELECT b.binary_id FROM binaries b LEFT JOIN configs c"
             " ON c.config_id = b.config_id WHERE c.config_id IS NULL"),
        ]
        for table, sql in orphan_queries:
            for row in conn.execute(sql):
                problems.append(f"referential closure: {table} row references missing parent ({row[0]})")

        for function_id, start, end in conn.execute("SELECT function_id, start_rva, end_rva FROM rvas"):
            if not 0 <= start < end:
                problems.append(f"rva: function {function_id} has invalid range [{start},{end})")
        for (function_id,) in conn.execute("SELECT DISTINCT function_id FROM rvas"):
            spans = self.rvas_of(function_id)
            if ranges_overlap(spans):
                problems.append(f"rva: function {function_id} has overlapping ranges")

        containment_sql = (
            "SELECT l.function_id, l.byte_address FROM lines l"
            " WHERE NOT EXISTS (SELECT 1 FROM rvas r WHERE r.function_id = l.function_id"
            " AND l.byte_address >= r.start_rva AND l.byte_address < r.end_rva)"
        )
        for function_id, address in conn.execute(containment_sql):
            problems.append(
                f"containment: line at {address:#x} outside rva ranges of function {function_id}"
            )

        for config_id, toolchain, version, opt, mode, arch in conn.execute(
            "SELECT config_id, toolchain, toolchain_version, opt_level, mode, arch FROM configs"
        ):
            rebuilt = BuildConfig(
                Toolchain(toolchain), version, OptLevel(opt), BuildMode(mode), Arch(arch)
            )
            if rebuilt.config_id != config_id:
                problems.append(f"config: stored id {config_id} != derived {rebuilt.config_id}")

        if check_archive:
            for binary_id, sha in conn.execute("SELECT binary_id, sha256 FROM binaries"):
                path = self.archive_path_for(sha)
                if not path.exists():
                    problems.append(f"archive: binary {binary_id} missing file {sha}")
                elif sha256_hex(path.read_bytes()) != sha:
                    problems.append(f"archive: binary {binary_id} content mismatch for {sha}")
        return problems

    # -- export ---------------------------------------------------------------------

    def export_binaries_csv(self, out_path: Union[str, Path]) -> int:
        """Dump the binaries table as CSV in the fixed interchange column order."""
        rows = self.conn.execute(
            "SELECT binary_id, file_name, repo_id, config_id, size_bytes, sha256,"
            " license_id, built_at FROM binaries ORDER BY binary_id"
        ).fetchall()
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            writer.writerows(rows)
        return len(rows)


def init_dataset(db_path: Union[str, Path], archive_root: Union[str, Path]) -> Dataset:
    return Dataset.create(db_path, archive_root)


def open_dataset(
    db_path: Union[str, Path],
    archive_root: Union[str, Path, None] = None,
    writable: bool = False,
) -> Dataset:
    return Dataset.open(db_path, archive_root, writable)
