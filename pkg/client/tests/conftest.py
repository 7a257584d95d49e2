import random
import sqlite3
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# the published dataset file format, as documented by the producer
SCHEMA = """
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE repos (
    repo_id INTEGER PRIMARY KEY, url TEXT NOT NULL, commit_hash TEXT,
    platform_hint TEXT NOT NULL, build_system TEXT NOT NULL,
    file_count INTEGER NOT NULL, size_kb INTEGER NOT NULL,
    readme_markers TEXT NOT NULL, license_id TEXT, crawled_at TEXT NOT NULL
);
CREATE TABLE configs (
    config_id TEXT PRIMARY KEY, toolchain TEXT NOT NULL,
    toolchain_version TEXT NOT NULL, opt_level TEXT NOT NULL,
    mode TEXT NOT NULL, arch TEXT NOT NULL
);
CREATE TABLE binaries (
    binary_id INTEGER PRIMARY KEY, file_name TEXT NOT NULL,
    repo_id INTEGER NOT NULL, config_id TEXT NOT NULL,
    size_bytes INTEGER NOT NULL, sha256 TEXT NOT NULL,
    license_id TEXT, built_at TEXT NOT NULL,
    UNIQUE (repo_id, config_id, file_name)
);
CREATE TABLE functions (
    function_id INTEGER PRIMARY KEY, binary_id INTEGER NOT NULL,
    name TEXT NOT NULL, byte_hash TEXT NOT NULL, normalized_hash TEXT NOT NULL
);
CREATE TABLE rvas (
    function_id INTEGER NOT NULL, start_rva INTEGER NOT NULL, end_rva INTEGER NOT NULL
);
CREATE TABLE lines (
    function_id INTEGER NOT NULL, source_path TEXT NOT NULL,
    line_number INTEGER NOT NULL, line_text TEXT,
    byte_address INTEGER NOT NULL, length INTEGER NOT NULL
);
CREATE TABLE pdbs (
    binary_id INTEGER NOT NULL, kind TEXT NOT NULL,
    artifact_path TEXT NOT NULL, sha256 TEXT NOT NULL
);
"""

CONFIGS = [
    ("cfg-gcc-O0", "gcc", "11.4.0", "O0", "release", "x64"),
    ("cfg-gcc-O2", "gcc", "11.4.0", "O2", "release", "x64"),
    ("cfg-clang-O0", "clang", "14.0.0", "O0", "release", "x64"),
    ("cfg-clang-O2", "clang", "14.0.0", "O2", "release", "x64"),
]


def build_synthetic_dataset(
    path: Path,
    rng: random.Random,
    n_sources_per_repo: int = 250,
    n_repos: int = 2,
    presence: float = 0.85,
) -> dict:
    """Write a dataset file with a known sibling structure; returns facts the
    tests use as ground truth (function counts per identity, etc.)."""
    conn = sqlite3.connect(path)
    conn.executescript(SCHEMA)
    conn.execute("INSERT INTO meta VALUES ('schema_version', '1')")
    for config in CONFIGS:
        conn.execute("INSERT INTO configs VALUES (?,?,?,?,?,?)", config)

    next_id = 1

    def take_id():
        nonlocal next_id
        next_id += 1
        return next_id - 1

    facts = {"functions": 0, "identities": {}, "singletons": 0}
    for repo_no in range(n_repos):
        repo_id = take_id()
        conn.execute(
            "INSERT INTO repos VALUES (?,?,?,?,?,?,?,?,?,?)",
            (repo_id, f"https://example.com/repo{repo_no}.git", "c" * 40, "linux",
             "makefile", 20, 200, "[]", "MIT", "2024-01-01T00:00:00+00:00"),
        )
        binary_ids = {}
        for config_id, *_ in CONFIGS:
            binary_id = take_id()
            binary_ids[config_id] = binary_id
            conn.execute(
                "INSERT INTO binaries VALUES (?,?,?,?,?,?,?,?)",
                (binary_id, "app", repo_id, config_id, 1000 + binary_id,
                 f"{binary_id:064x}", "MIT", "2024-01-01T00:00:00+00:00"),
            )
        for source_no in range(n_sources_per_repo):
            # a few common names collide across repos; identity still differs
            name = "main" if source_no == 0 else f"fn_{repo_no}_{source_no}"
            source_path = f"src/file{source_no % 17}.c"
            has_lines = rng.random() > 0.05
            members = 0
            for config_id, *_ in CONFIGS:
                if rng.random() > presence:
                    continue
                function_id = take_id()
                conn.execute(
                    "INSERT INTO functions VALUES (?,?,?,?,?)",
                    (function_id, binary_ids[config_id], name,
                     f"{function_id:064x}", f"{function_id + 7:064x}"),
                )
                start = 0x1000 + function_id * 0x40
                conn.execute(
                    "INSERT INTO rvas VALUES (?,?,?)", (function_id, start, start + 0x30)
                )
                if has_lines:
                    conn.execute(
                        "INSERT INTO lines VALUES (?,?,?,?,?,?)",
                        (function_id, source_path, source_no + 1,
                         f"line of {name}", start + 4, 8),
                    )
                members += 1
                facts["functions"] += 1
            identity_path = source_path if has_lines else ""
            key = (repo_id, identity_path, name)
            facts["identities"][key] = facts["identities"].get(key, 0) + members
    facts["singletons"] = sum(1 for n in facts["identities"].values() if n == 1)
    conn.commit()
    conn.close()
    return facts


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("clientds")
    path = tmp / "published.db"
    facts = build_synthetic_dataset(path, random.Random(424242))
    return path, facts
