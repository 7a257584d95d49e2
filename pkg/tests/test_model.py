import pytest

from binforge.model import (
    Arch,
    BinaryRecord,
    BuildConfig,
    BuildMode,
    BuildOutcome,
    BuildStatus,
    EmptyMatrixError,
    ErrorCategory,
    FunctionRecord,
    LineRecord,
    MatrixRequest,
    OptLevel,
    RepoRecord,
    RvaRecord,
    Toolchain,
    config_matrix,
    ranges_overlap,
    validate_record,
)


def test_valid_rva_range():
    # the documented walk-through range 0x6460..0x64AA
    assert validate_record(RvaRecord(0x6460, 0x64AA)) == []


def test_empty_rva_range_rejected():
    report = validate_record(RvaRecord(5, 5))
    assert any("start_rva < end_rva" in v.message for v in report)


def test_gcc_rejects_msvc_opt_level():
    cfg = BuildConfig(Toolchain.GCC, "11.4.0", OptLevel.OX, BuildMode.RELEASE, Arch.X64)
    report = validate_record(cfg)
    assert any("not in gcc set" in v.message for v in report)


def test_msvc_accepts_its_opt_levels():
    for opt in (OptLevel.OD, OptLevel.O1, OptLevel.O2, OptLevel.OX):
        cfg = BuildConfig(Toolchain.MSVC, "v142", opt, BuildMode.DEBUG, Arch.X86)
        assert validate_record(cfg) == []


def test_commit_must_be_40_lowercase_hex():
    good = RepoRecord(url="https://example.com/r.git", commit="a" * 40)
    assert validate_record(good) == []
    bad = RepoRecord(url="https://example.com/r.git", commit="A" * 40)
    assert any(v.field == "commit" for v in validate_record(bad))
    absent = RepoRecord(url="https://example.com/r.git", commit=None)
    assert validate_record(absent) == []


def test_config_id_is_deterministic_and_field_pure():
    a = BuildConfig(Toolchain.GCC, "11.4.0", OptLevel.O2, BuildMode.RELEASE, Arch.X64)
    b = BuildConfig(Toolchain.GCC, "11.4.0", OptLevel.O2, BuildMode.RELEASE, Arch.X64)
    c = BuildConfig(Toolchain.GCC, "11.4.0", OptLevel.O3, BuildMode.RELEASE, Arch.X64)
    assert a.config_id == b.config_id
    assert a.config_id != c.config_id


def test_outcome_invariants():
    ok = BuildOutcome(1, BuildStatus.SUCCESS)
    assert validate_record(ok) == []
    bad = BuildOutcome(1, BuildStatus.SUCCESS, error_category=ErrorCategory.OTHER)
    assert any(v.field == "error_category" for v in validate_record(bad))
    timeout_bad = BuildOutcome(1, BuildStatus.TIMEOUT, error_category=ErrorCategory.OTHER)
    assert any(v.field == "error_category" for v in validate_record(timeout_bad))
    timeout_ok = BuildOutcome(1, BuildStatus.TIMEOUT, error_category=ErrorCategory.TIMEOUT)
    assert validate_record(timeout_ok) == []


def test_validation_never_raises_on_malformed_records():
    report = validate_record(FunctionRecord(name="", byte_hash="zz", normalized_hash=""))
    fields = {v.field for v in report}
    assert fields == {"name", "byte_hash", "normalized_hash"}
    report = validate_record(LineRecord("", 0, -1, 0))
    assert {v.field for v in report} == {"source_path", "line_number", "byte_address", "length"}


def test_matrix_of_eight_linux_configs():
    request = MatrixRequest(
        toolchains=[(Toolchain.GCC, "11.4.0"), (Toolchain.CLANG, "14.0.0")],
        opt_levels=[OptLevel.O0, OptLevel.O1, OptLevel.O2, OptLevel.O3],
        modes=[BuildMode.RELEASE],
        arches=[Arch.X64],
    )
    configs = config_matrix(request)
    assert len(configs) == 8
    # deterministic order: clang sorts before gcc
    assert configs[0].toolchain is Toolchain.CLANG
    assert [c.opt_level for c in configs[:4]] == [OptLevel.O0, OptLevel.O1, OptLevel.O2, OptLevel.O3]


def test_matrix_singleton():
    request = MatrixRequest(
        toolchains=[(Toolchain.MSVC, "v142")],
        opt_levels=[OptLevel.OD],
        modes=[BuildMode.DEBUG],
        arches=[Arch.X64],
    )
    assert len(config_matrix(request)) == 1


def test_matrix_all_invalid_cells():
    request = MatrixRequest(
        toolchains=[(Toolchain.GCC, "11.4.0")],
        opt_levels=[OptLevel.OX],
    )
    with pytest.raises(EmptyMatrixError):
        config_matrix(request)


def test_matrix_skips_invalid_cells_only():
    request = MatrixRequest(
        toolchains=[(Toolchain.GCC, "11.4.0")],
        opt_levels=[OptLevel.O0, OptLevel.OX],
    )
    configs = config_matrix(request)
    assert [c.opt_level for c in configs] == [OptLevel.O0]


def test_ranges_overlap_detection():
    assert not ranges_overlap([RvaRecord(0, 4), RvaRecord(4, 8)])
    assert ranges_overlap([RvaRecord(0, 5), RvaRecord(4, 8)])


def test_binary_record_sha_check():
    rec = BinaryRecord("a.out", repo_id=1, config_id="x", size_bytes=10, sha256="ab" * 32)
    assert validate_record(rec) == []
    rec_bad = BinaryRecord("a.out", repo_id=1, config_id="x", size_bytes=10, sha256="nothex")
    assert any(v.field == "sha256" for v in validate_record(rec_bad))
