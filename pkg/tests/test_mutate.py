import random
import shutil

import pytest

from binforge.model import Arch, BuildConfig, BuildMode, OptLevel, Toolchain
from binforge.mutate import (
    MissingProjectFileError,
    MutationReport,
    NoBuildFilesError,
    ProjectParseError,
    mutate_makefile,
    mutate_msvc_project,
    revert,
)

from gen_buildfiles import random_makefile, random_vcxproj, tree_digest, write_msvc_tree

GCC_O0 = BuildConfig(Toolchain.GCC, "11.4.0", OptLevel.O0, BuildMode.RELEASE, Arch.X64)
CLANG_O3 = BuildConfig(Toolchain.CLANG, "14.0.0", OptLevel.O3, BuildMode.RELEASE, Arch.X64)
MSVC_OD = BuildConfig(Toolchain.MSVC, "v142", OptLevel.OD, BuildMode.RELEASE, Arch.X64)


def read(path):
    return path.read_text()


def test_opt_token_substitution(tmp_path):
    (tmp_path / "Makefile").write_text("CFLAGS = -O2 -Wall\nall:\n\t$(CC) $(CFLAGS) main.c\n")
    report = mutate_makefile(tmp_path, GCC_O0)
    content = read(tmp_path / "Makefile")
    assert "CFLAGS = -O0 -Wall -g" in content
    assert any(e.before == "CFLAGS = -O2 -Wall" for e in report.edits)


def test_opt_lookalike_in_path_untouched(tmp_path):
    (tmp_path / "Makefile").write_text("CFLAGS = -I/x/-Os/include -O2\n")
    mutate_makefile(tmp_path, GCC_O0)
    content = read(tmp_path / "Makefile")
    assert "-I/x/-Os/include" in content
    assert "-O0" in content and " -O2" not in content


def test_missing_cflags_prepends_overrides(tmp_path):
    (tmp_path / "Makefile").write_text("all: main.c\n\t$(CC) -o app main.c\n")
    report = mutate_makefile(tmp_path, CLANG_O3)
    lines = read(tmp_path / "Makefile").splitlines()
    assert lines[0] == "CC := clang"
    assert lines[1] == "CXX := clang++"
    assert "CFLAGS := -O3 -g" in lines[2]
    inserted = [e for e in report.edits if e.before is None]
    assert len(inserted) == 4


def test_cc_assignment_overridden(tmp_path):
    (tmp_path / "Makefile").write_text("CC = cc\nCFLAGS = -O1\n")
    mutate_makefile(tmp_path, CLANG_O3)
    content = read(tmp_path / "Makefile")
    assert "CC = clang" in content
    assert "CFLAGS = -O3 -g" in content


def test_two_makefiles_both_mutated(tmp_path):
    (tmp_path / "Makefile").write_text("CFLAGS = -O2\nall:\n\t$(MAKE) -C sub\n")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "Makefile").write_text("CFLAGS = -O1\n")
    report = mutate_makefile(tmp_path, GCC_O0)
    assert set(report.files_changed) == {"Makefile", "sub/Makefile"}
    assert "-O0" in read(tmp_path / "sub" / "Makefile")


def test_recipe_lines_never_rewritten(tmp_path):
    (tmp_path / "Makefile").write_text("CFLAGS = -O2\nconf:\n\tCFLAGS=-O3 ./configure\n")
    mutate_makefile(tmp_path, GCC_O0)
    assert "\tCFLAGS=-O3 ./configure" in read(tmp_path / "Makefile")


def test_depth_limit(tmp_path):
    deep = tmp_path / "a" / "b" / "c"
    deep.mkdir(parents=True)
    (deep / "Makefile").write_text("CFLAGS = -O2\n")
    with pytest.raises(NoBuildFilesError):
        mutate_makefile(tmp_path, GCC_O0, search_depth=2)
    (tmp_path / "Makefile").write_text("CFLAGS = -O2\n")
    report = mutate_makefile(tmp_path, GCC_O0, search_depth=2)
    assert report.files_changed == ["Makefile"]


def test_no_makefile_error(tmp_path):
    (tmp_path / "main.c").write_text("int main(){}\n")
    with pytest.raises(NoBuildFilesError):
        mutate_makefile(tmp_path, GCC_O0)


def test_report_json_round_trip(tmp_path):
    (tmp_path / "Makefile").write_text("CFLAGS = -O2\n")
    report = mutate_makefile(tmp_path, GCC_O0)
    parsed = MutationReport.from_json(report.to_json())
    assert parsed.edits == report.edits


# -- msvc ---------------------------------------------------------------------


def test_msvc_optimization_element_mapped(tmp_path):
    write_msvc_tree(tmp_path, random.Random(0), n_projects=1)
    proj = tmp_path / "proj0.vcxproj"
    proj.write_text(
        '<?xml version="1.0"?>\n<Project>\n  <ItemDefinitionGroup>\n    <ClCompile>\n'
        "      <Optimization>MaxSpeed</Optimization>\n    </ClCompile>\n"
        "  </ItemDefinitionGroup>\n</Project>\n"
    )
    mutate_msvc_project(tmp_path, MSVC_OD)
    content = read(proj)
    assert "<Optimization>Disabled</Optimization>" in content
    assert "<PlatformToolset>v142</PlatformToolset>" in content
    assert "<DebugInformationFormat>ProgramDatabase</DebugInformationFormat>" in content


def test_msvc_missing_project_file(tmp_path):
    (tmp_path / "app.sln").write_text(
        'Project("{8BC9CEB8-8B4A-11D0-8D11-00A0C91BC942}") = "x", "gone.vcxproj", "{1}"\nEndProject\n'
    )
    with pytest.raises(MissingProjectFileError) as exc:
        mutate_msvc_project(tmp_path, MSVC_OD)
    assert exc.value.raw_code == "MSB3202"


def test_msvc_malformed_xml(tmp_path):
    (tmp_path / "app.sln").write_text(
        'Project("{8BC9CEB8-8B4A-11D0-8D11-00A0C91BC942}") = "x", "bad.vcxproj", "{1}"\nEndProject\n'
    )
    (tmp_path / "bad.vcxproj").write_text("<Project><ClCompile></Project>\n")
    with pytest.raises(ProjectParseError) as exc:
        mutate_msvc_project(tmp_path, MSVC_OD)
    assert exc.value.raw_code == "MSB4025"


def test_msvc_crlf_preserved(tmp_path):
    write_msvc_tree(tmp_path, random.Random(3), n_projects=1)
    proj = tmp_path / "proj0.vcxproj"
    proj.write_bytes(
        b'<?xml version="1.0"?>\r\n<Project>\r\n  <ItemDefinitionGroup>\r\n    <ClCompile>\r\n'
        b"      <Optimization>Full</Optimization>\r\n    </ClCompile>\r\n"
        b"  </ItemDefinitionGroup>\r\n</Project>\r\n"
    )
    mutate_msvc_project(tmp_path, MSVC_OD)
    raw = proj.read_bytes()
    assert b"\r\n" in raw
    assert b"<Optimization>Disabled</Optimization>\r\n" in raw


# -- properties over generated corpora ------------------------------------------


def _assert_mutation_properties(tmp_path, mutate, n_trees, make_tree, seed):
    rng = random.Random(seed)
    for i in range(n_trees):
        tree = tmp_path / f"tree{i}"
        tree.mkdir()
        make_tree(tree, rng)
        original = tree_digest(tree)

        report = mutate(tree)
        mutated = tree_digest(tree)
        # every reported edit is a real change
        assert all(e.before is None or e.before != e.after for e in report.edits)

        # idempotence: a second pass changes nothing
        report2 = mutate(tree)
        assert report2.edits == [], f"tree{i} not idempotent: {report2.edits[:3]}"
        assert tree_digest(tree) == mutated

        # reversibility (and therefore diff-minimality): applying the before
        # values restores the original tree hash exactly
        revert(tree, report)
        assert tree_digest(tree) == original, f"tree{i} revert mismatch"

        shutil.rmtree(tree)


def test_makefile_properties_over_generated_corpus(tmp_path):
    def make_tree(tree, rng):
        (tree / "Makefile").write_text(random_makefile(rng))
        if rng.random() < 0.5:
            sub = tree / "src"
            sub.mkdir()
            (sub / "Makefile").write_text(random_makefile(rng))
        if rng.random() < 0.3:
            (tree / "rules.mk").write_text(random_makefile(rng))

    _assert_mutation_properties(
        tmp_path, lambda t: mutate_makefile(t, CLANG_O3), 50, make_tree, seed=1234
    )


def test_vcxproj_properties_over_generated_corpus(tmp_path):
    def make_tree(tree, rng):
        write_msvc_tree(tree, rng, n_projects=rng.randint(1, 3))

    _assert_mutation_properties(
        tmp_path, lambda t: mutate_msvc_project(t, MSVC_OD), 20, make_tree, seed=99
    )


def test_generated_vcxproj_is_valid_xml():
    import xml.etree.ElementTree as ET

    rng = random.Random(5)
    for _ in range(20):
        ET.fromstring(random_vcxproj(rng))
