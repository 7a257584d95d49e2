"""Read-only access to a published dataset file.

The dataset is a SQLite database with public tables binaries, functions,
rvas, lines, pdbs (plus repos/configs carrying provenance). The connection
is opened in SQLite read-only mode; nothing here can mutate the file.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

SUPPORTED_SCHEMA_VERSION = 1


class ClientError(Exception):
    pass


class MissingDatasetError(ClientError):
    pass


class SchemaVersionError(ClientError):
    pass


@dataclass(frozen=True)
class FunctionRow:
    function_id: int
    binary_id: int
    name: str
    byte_hash: str
    normalized_hash: str


@dataclass(frozen=True)
class LineRow:
    function_id: int
    source_path: str
    line_number: int
    byte_address: int
    length: int
    line_text: Optional[str]


@dataclass(frozen=True)
class BinaryRow:
    binary_id: int
    file_name: str
    repo_id: int
    config_id: str
    size_bytes: int
    sha256: str
    license_id: Optional[str]


@dataclass(frozen=True)
class FunctionProfile:
    """Everything pair generation needs to know about one function.

    source identity = (repo_id, source_path, name); source_path is the file
    of the function's lowest-address line row (its defining file), or ""
    when the function has no line rows.
    """

    function_id: int
    binary_id: int
    repo_id: int
    name: str
    source_path: str
    compiler: str
    version: str
    opt: str
    arch: str

    @property
    def identity(self) -> tuple[int, str, str]:
        return (self.repo_id, self.source_path, self.name)


class DatasetReader:
    """Handle over one published dataset; strictly read-only."""

    def __init__(self, db_path: Union[str, Path]):
        db_path = Path(db_path)
        if not db_path.exists():
            raise MissingDatasetError(f"{db_path} does not exist")
        self.db_path = db_path
        self.conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
        try:
            row = self.conn.execute(
                "SELECT value FROM meta WHERE key='schema_version'"
            ).fetchone()
        except sqlite3.DatabaseError as exc:
            self.conn.close()
            raise ClientError(f"{db_path} is not a dataset file: {exc}") from exc
        if row is None or int(row[0]) != SUPPORTED_SCHEMA_VERSION:
            found = row[0] if row else "none"
            self.conn.close()
            raise SchemaVersionError(
                f"schema version {found} unsupported (expected {SUPPORTED_SCHEMA_VERSION})"
            )

    @classmethod
    def open(cls, db_path: Union[str, Path]) -> "DatasetReader":
        return cls(db_path)

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "DatasetReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- queries -----------------------------------------------------------------

    def binaries(self) -> Iterator[BinaryRow]:
        rows = self.conn.execute(
            "SELECT binary_id, file_name, repo_id, config_id, size_bytes, sha256,"
            " license_id FROM binaries ORDER BY binary_id"
        )
        for row in rows:
            yield BinaryRow(*row)

    def functions_of(self, binary_id: int) -> list[FunctionRow]:
        rows = self.conn.execute(
            "SELECT function_id, binary_id, name, byte_hash, normalized_hash"
            " FROM functions WHERE binary_id=? ORDER BY function_id",
            (binary_id,),
        ).fetchall()
        return [FunctionRow(*row) for row in rows]

    def source_of(self, function_id: int) -> list[LineRow]:
        rows = self.conn.execute(
            "SELECT function_id, source_path, line_number, byte_address, length,"
            " line_text FROM lines WHERE function_id=?"
            " ORDER BY byte_address, line_number",
            (function_id,),
        ).fetchall()
        return [LineRow(*row) for row in rows]

    def rvas_of(self, function_id: int) -> list[tuple[int, int]]:
        return [
            (row[0], row[1])
            for row in self.conn.execute(
                "SELECT start_rva, end_rva FROM rvas WHERE function_id=? ORDER BY start_rva",
                (function_id,),
            )
        ]

    def function_count(self) -> int:
        return self.conn.execute("SELECT COUNT(*) FROM functions").fetchone()[0]

    def function_profiles(self) -> list[FunctionProfile]:
        """One profile per function, with config axes and source identity."""
        sql = """
        SELECT f.function_id, f.binary_id, b.repo_id, f.name,
               COALESCE(
                   (SELECT l.source_path FROM lines l
                    WHERE l.function_id = f.function_id
                    ORDER BY l.byte_address, l.source_path LIMIT 1),
                   ''),
               c.toolchain, c.toolchain_version, c.opt_level, c.arch
        FROM functions f
        JOIN binaries b ON b.binary_id = f.binary_id
        JOIN configs c ON c.config_id = b.config_id
        ORDER BY f.function_id
        """
        return [FunctionProfile(*row) for row in self.conn.execute(sql)]
