"""Shared fixture helpers: tiny dataset construction and canned records."""

from __future__ import annotations

import hashlib
from pathlib import Path

from binforge.model import (
    Arch,
    BinaryRecord,
    BuildConfig,
    BuildMode,
    BuildSystem,
    FunctionRecord,
    LineRecord,
    OptLevel,
    Platform,
    RepoRecord,
    RvaRecord,
    Toolchain,
)
from binforge.store import Dataset

GCC_O2 = BuildConfig(Toolchain.GCC, "11.4.0", OptLevel.O2, BuildMode.RELEASE, Arch.X64)
CLANG_O0 = BuildConfig(Toolchain.CLANG, "14.0.0", OptLevel.O0, BuildMode.RELEASE, Arch.X64)
MSVC_O2 = BuildConfig(Toolchain.MSVC, "v141", OptLevel.O2, BuildMode.RELEASE, Arch.X64)


def make_dataset(tmp_path: Path, name: str = "ds") -> Dataset:
    return Dataset.create(tmp_path / f"{name}.db", tmp_path / f"{name}_archive")


def add_repo(ds: Dataset, url: str = "https://example.com/proj.git", license_id=None,
             platform=Platform.LINUX) -> int:
    record = RepoRecord(
        url=url,
        commit="c" * 40,
        platform_hint=platform,
        build_system=BuildSystem.MAKEFILE,
        file_count=12,
        size_kb=120,
        license_id=license_id,
    )
    return ds.insert_repo(record)


def synthetic_binary(
    ds: Dataset,
    repo_id: int,
    config: BuildConfig = GCC_O2,
    file_name: str = "prog",
    content: bytes = b"\x7fELF-fake",
    n_functions: int = 2,
    license_id=None,
) -> int:
    """Insert a binary with n synthetic functions, each one range + one line."""
    ds.ensure_config(config)
    digest = hashlib.sha256(content).hexdigest()
    record = BinaryRecord(
        file_name=file_name,
        repo_id=repo_id,
        config_id=config.config_id,
        size_bytes=len(content),
        sha256=digest,
        license_id=license_id,
    )
    functions = []
    for i in range(n_functions):
        start = 0x1000 + i * 0x40
        fn = FunctionRecord(
            name=f"fn_{file_name}_{i}",
            byte_hash=hashlib.sha256(f"{file_name}-{i}".encode()).hexdigest(),
            normalized_hash=hashlib.sha256(f"{file_name}-{i}-n".encode()).hexdigest(),
        )
        rvas = [RvaRecord(start, start + 0x30)]
        lines = [LineRecord(f"src/{file_name}.c", i + 1, start + 4, 8, line_text=f"line {i}")]
        functions.append((fn, rvas, lines))
    return ds.insert_binary(record, content, functions)
