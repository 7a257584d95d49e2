"""Build-file rewriting: pin one compiler-matrix cell into a checked-out tree.

Makefiles get their optimization tokens substituted, -g forced on (extraction
needs debug info), and CC/CXX pinned to the configured drivers. MSVC project
files get their Optimization/PlatformToolset/debug-info elements set, leaving
every other byte untouched.

Every change is recorded as an edit {file, line, before, after}; line numbers
refer to the mutated file, inserted lines carry before=None, and applying the
before values bottom-up restores the original tree exactly (see revert).
"""

from __future__ import annotations

import json
import os
import re
import stat
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from binforge.model import BuildConfig, OptLevel, Toolchain

MAKEFILE_NAMES = ("Makefile", "makefile", "GNUmakefile")

# "-O" followed by one of {0,1,2,3,s,z,fast,g}, as a whitespace-delimited token
# (never inside a path like dir/-Os)
_OPT_TOKEN_RE = re.compile(r"(?:(?<=\s)|^)-O(?:[0123szg]|fast)(?=\s|$)")
_DEBUG_TOKEN_RE = re.compile(r"(?:(?<=\s)|^)-g(?:gdb\d*|[0-3])?(?=\s|$)")
_FLAGS_ASSIGN_RE = re.compile(r"^([ ]*)(CFLAGS|CXXFLAGS)(\s*)([:+?]?=)(.*)$")
_DRIVER_ASSIGN_RE = re.compile(r"^([ ]*)(CC|CXX)(\s*)([:+?]?=)(.*)$")

MSVC_OPTIMIZATION = {
    OptLevel.OD: "Disabled",
    OptLevel.O1: "MinSpace",
    OptLevel.O2: "MaxSpeed",
    OptLevel.OX: "Full",
}

GNU_DRIVERS = {
    Toolchain.GCC: ("gcc", "g++"),
    Toolchain.CLANG: ("clang", "clang++"),
}


class MutationError(Exception):
    pass


class NoBuildFilesError(MutationError):
    """The tree contains no build file of the expected kind."""


class MissingProjectFileError(MutationError):
    raw_code = "MSB3202"


class ProjectParseError(MutationError):
    raw_code = "MSB4025"


@dataclass
class Edit:
    file: str  # checkout-relative posix path
    line: int  # 1-based, in the mutated file
    before: Optional[str]  # None for inserted lines
    after: str


@dataclass
class MutationReport:
    edits: list[Edit] = field(default_factory=list)

    @property
    def files_changed(self) -> list[str]:
        return sorted({e.file for e in self.edits})

    def to_json(self) -> str:
        return json.dumps(
            {
                "edits": [
                    {"file": e.file, "line": e.line, "before": e.before, "after": e.after}
                    for e in self.edits
                ]
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MutationReport":
        doc = json.loads(text)
        return cls([Edit(**entry) for entry in doc["edits"]])


class _FileEditor:
    """Line-level edit planner that tracks post-mutation line numbers."""

    def __init__(self, lines: list[str]):
        self.lines = lines
        self._replacements: dict[int, str] = {}
        self._before: dict[int, list[str]] = {}
        self._after: dict[int, list[str]] = {}

    def replace(self, index: int, new: str) -> None:
        if new != self.lines[index]:
            self._replacements[index] = new

    def insert_before(self, index: int, new_lines: Sequence[str]) -> None:
        self._before.setdefault(index, []).extend(new_lines)

    def insert_after(self, index: int, new_lines: Sequence[str]) -> None:
        self._after.setdefault(index, []).extend(new_lines)

    @property
    def dirty(self) -> bool:
        return bool(self._replacements or self._before or self._after)

    def apply(self, rel_file: str) -> tuple[list[str], list[Edit]]:
        out: list[str] = []
        edits: list[Edit] = []
        for index, original in enumerate(self.lines):
            for text in self._before.get(index, ()):
                out.append(text)
                edits.append(Edit(rel_file, len(out), None, text))
            if index in self._replacements:
                new = self._replacements[index]
                out.append(new)
                edits.append(Edit(rel_file, len(out), original, new))
            else:
                out.append(original)
            for text in self._after.get(index, ()):
                out.append(text)
                edits.append(Edit(rel_file, len(out), None, text))
        if not self.lines:
            for text in self._before.get(0, []) + self._after.get(0, []):
                out.append(text)
                edits.append(Edit(rel_file, len(out), None, text))
        return out, edits


def _read_file(path: Path) -> tuple[list[str], str, bool]:
    """(lines, line ending, had trailing newline); CRLF files stay CRLF."""
    try:
        text = path.read_bytes().decode("utf-8", "replace")
    except OSError as exc:
        raise MutationError(f"unreadable file {path}: {exc}") from exc
    eol = "\r\n" if "\r\n" in text else "\n"
    return text.splitlines(), eol, text.endswith("\n")


def _write_file(path: Path, lines: list[str], eol: str, trailing: bool) -> None:
    if path.exists() and not os.access(path, os.W_OK):
        path.chmod(path.stat().st_mode | stat.S_IWUSR)
    text = eol.join(lines) + (eol if trailing and lines else "")
    path.write_bytes(text.encode("utf-8"))


def find_makefiles(checkout: Path, search_depth: int = 2) -> list[Path]:
    found = []
    for path in sorted(checkout.rglob("*")):
        if not path.is_file() or ".git" in path.parts:
            continue
        depth = len(path.relative_to(checkout).parts) - 1
        if depth > search_depth:
            continue
        if path.name in MAKEFILE_NAMES or path.suffix == ".mk":
            found.append(path)
    return found


def _substitute_opt_tokens(value: str, target: str) -> str:
    """First opt token becomes the target; later ones are dropped."""
    matches = list(_OPT_TOKEN_RE.finditer(value))
    if not matches:
        return value
    out = []
    cursor = 0
    for i, m in enumerate(matches):
        out.append(value[cursor : m.start()])
        if i == 0:
            out.append(target)
            cursor = m.end()
        else:
            cursor = m.end()
            if out and out[-1].endswith(" "):  # collapse the doubled separator
                out[-1] = out[-1][:-1]
    out.append(value[cursor:])
    return "".join(out)


def mutate_makefile(
    checkout: Union[str, Path],
    config: BuildConfig,
    search_depth: int = 2,
    drivers: Optional[tuple[str, str]] = None,
) -> MutationReport:
    """Rewrite every Makefile under search_depth to honor the config.

    Per file: opt tokens in CFLAGS/CXXFLAGS are substituted by the target
    level, -g is ensured, CC/CXX assignments are overridden to the configured
    drivers, and missing variables are pinned by prepended override lines.
    drivers overrides the default (cc, cxx) command pair, e.g. custom paths.
    """
    if config.toolchain not in GNU_DRIVERS:
        raise MutationError(f"makefile mutation needs gcc or clang, not {config.toolchain.value}")
    checkout = Path(checkout)
    makefiles = find_makefiles(checkout, search_depth)
    if not makefiles:
        raise NoBuildFilesError(f"no Makefile within depth {search_depth} of {checkout}")
    cc, cxx = drivers if drivers is not None else GNU_DRIVERS[config.toolchain]
    opt_flag = f"-{config.opt_level.value}"
    report = MutationReport()

    for makefile in makefiles:
        lines, eol, trailing = _read_file(makefile)
        editor = _FileEditor(lines)
        flag_lines = {"CFLAGS": [], "CXXFLAGS": []}
        driver_lines = {"CC": [], "CXX": []}
        staged: dict[int, str] = {}

        for index, line in enumerate(lines):
            flags_match = _FLAGS_ASSIGN_RE.match(line)
            if flags_match:
                name = flags_match.group(2)
                value = flags_match.group(5)
                new_value = _substitute_opt_tokens(value, opt_flag)
                staged[index] = line[: flags_match.start(5)] + new_value
                flag_lines[name].append(index)
                continue
            driver_match = _DRIVER_ASSIGN_RE.match(line)
            if driver_match:
                name = driver_match.group(2)
                driver = cc if name == "CC" else cxx
                prefix = line[: driver_match.start(5)]
                staged[index] = f"{prefix} {driver}"
                driver_lines[name].append(index)

        for name in ("CFLAGS", "CXXFLAGS"):
            indices = flag_lines[name]
            if not indices:
                continue
            family_values = [staged[i] for i in indices]
            if not any(_OPT_TOKEN_RE.search(v.split("=", 1)[1]) for v in family_values):
                staged[indices[0]] = staged[indices[0]].rstrip() + f" {opt_flag}"
            family_values = [staged[i] for i in indices]
            if not any(_DEBUG_TOKEN_RE.search(v.split("=", 1)[1]) for v in family_values):
                staged[indices[0]] = staged[indices[0]].rstrip() + " -g"

        for index, new in staged.items():
            editor.replace(index, new)

        prepend = []
        if not driver_lines["CC"]:
            prepend.append(f"CC := {cc}")
        if not driver_lines["CXX"]:
            prepend.append(f"CXX := {cxx}")
        if not flag_lines["CFLAGS"]:
            prepend.append(f"CFLAGS := {opt_flag} -g")
        if not flag_lines["CXXFLAGS"]:
            prepend.append(f"CXXFLAGS := {opt_flag} -g")
        if prepend:
            editor.insert_before(0, prepend)

        if editor.dirty:
            rel = makefile.relative_to(checkout).as_posix()
            new_lines, edits = editor.apply(rel)
            _write_file(makefile, new_lines, eol, trailing)
            report.edits.extend(edits)
    return report


# -- MSVC project files ----------------------------------------------------------

_SLN_PROJECT_RE = re.compile(r'Project\("\{[^}]*\}"\)\s*=\s*"[^"]*",\s*"([^"]+)"')


def find_solutions(checkout: Path, search_depth: int = 2) -> list[Path]:
    found = []
    for path in sorted(checkout.rglob("*.sln")):
        if ".git" in path.parts:
            continue
        if len(path.relative_to(checkout).parts) - 1 <= search_depth:
            found.append(path)
    return found


def solution_projects(sln_path: Path) -> list[Path]:
    """Project files referenced from a solution, resolved and checked."""
    projects = []
    for match in _SLN_PROJECT_RE.finditer(sln_path.read_text(errors="replace")):
        rel = match.group(1).replace("\\", "/")
        if not rel.lower().endswith(".vcxproj"):
            continue
        resolved = (sln_path.parent / rel).resolve()
        if not resolved.exists():
            raise MissingProjectFileError(f"{sln_path.name} references missing project {rel}")
        projects.append(resolved)
    return projects


def _element_re(tag: str) -> re.Pattern:
    return re.compile(rf"(<{tag}(?:\s[^>]*)?>)(.*?)(</{tag}>)")


_OPT_ELEMENT_RE = _element_re("Optimization")
_TOOLSET_ELEMENT_RE = _element_re("PlatformToolset")
_DEBUGFMT_ELEMENT_RE = _element_re("DebugInformationFormat")
_GENDEBUG_ELEMENT_RE = _element_re("GenerateDebugInformation")
_CLCOMPILE_OPEN_RE = re.compile(r"^(\s*)<ClCompile>\s*$")
_LINK_OPEN_RE = re.compile(r"^(\s*)<Link>\s*$")
_CONFIG_GROUP_RE = re.compile(r'^(\s*)<PropertyGroup[^>]*Label="Configuration"[^>]*>\s*$')
_GROUP_CLOSE_RE = re.compile(r"^(\s*)</ItemDefinitionGroup>\s*$")
_PROJECT_CLOSE_RE = re.compile(r"^(\s*)</Project>\s*$")


def mutate_msvc_project(
    checkout: Union[str, Path], config: BuildConfig, search_depth: int = 2
) -> MutationReport:
    """Set optimization, platform toolset, and debug-info generation in every
    project referenced by the tree's solution files; all other content is
    preserved byte for byte."""
    if config.toolchain is not Toolchain.MSVC:
        raise MutationError("msvc project mutation requires the msvc toolchain")
    checkout = Path(checkout)
    solutions = find_solutions(checkout, search_depth)
    if not solutions:
        raise NoBuildFilesError(f"no solution file within depth {search_depth} of {checkout}")
    opt_value = MSVC_OPTIMIZATION[config.opt_level]
    report = MutationReport()
    seen: set[Path] = set()
    for sln in solutions:
        for project in solution_projects(sln):
            if project in seen:
                continue
            seen.add(project)
            report.edits.extend(_mutate_vcxproj(checkout, project, config, opt_value))
    return report


def _mutate_vcxproj(
    checkout: Path, project: Path, config: BuildConfig, opt_value: str
) -> list[Edit]:
    lines, eol, trailing = _read_file(project)
    try:
        ET.fromstring(eol.join(lines))
    except ET.ParseError as exc:
        raise ProjectParseError(f"{project.name}: {exc}") from exc
    editor = _FileEditor(lines)

    def rewrite_all(pattern: re.Pattern, value: str) -> int:
        hits = 0
        for index, line in enumerate(lines):
            if pattern.search(line):
                new = pattern.sub(lambda m: f"{m.group(1)}{value}{m.group(3)}", line)
                editor.replace(index, new)
                hits += 1
        return hits

    def first_index(pattern: re.Pattern) -> Optional[int]:
        for index, line in enumerate(lines):
            if pattern.match(line):
                return index
        return None

    def all_indices(pattern: re.Pattern) -> list[int]:
        return [i for i, line in enumerate(lines) if pattern.match(line)]

    def indent_of(index: int) -> str:
        return re.match(r"\s*", lines[index]).group(0)

    fresh_block = False
    if rewrite_all(_OPT_ELEMENT_RE, opt_value) == 0:
        clcompiles = all_indices(_CLCOMPILE_OPEN_RE)
        if clcompiles:
            for index in clcompiles:
                pad = indent_of(index) + "  "
                editor.insert_after(index, [f"{pad}<Optimization>{opt_value}</Optimization>"])
        else:
            close = first_index(_PROJECT_CLOSE_RE)
            if close is None:
                raise ProjectParseError(f"{project.name}: no </Project> element")
            pad = "  "
            # a complete group so later passes find every element in place
            editor.insert_before(
                close,
                [
                    f"{pad}<ItemDefinitionGroup>",
                    f"{pad}  <ClCompile>",
                    f"{pad}    <Optimization>{opt_value}</Optimization>",
                    f"{pad}    <DebugInformationFormat>ProgramDatabase</DebugInformationFormat>",
                    f"{pad}  </ClCompile>",
                    f"{pad}  <Link>",
                    f"{pad}    <GenerateDebugInformation>true</GenerateDebugInformation>",
                    f"{pad}  </Link>",
                    f"{pad}</ItemDefinitionGroup>",
                ],
            )
            fresh_block = True

    if rewrite_all(_TOOLSET_ELEMENT_RE, config.toolchain_version) == 0:
        group = first_index(_CONFIG_GROUP_RE)
        if group is not None:
            pad = indent_of(group) + "  "
            editor.insert_after(
                group, [f"{pad}<PlatformToolset>{config.toolchain_version}</PlatformToolset>"]
            )
        else:
            close = first_index(_PROJECT_CLOSE_RE)
            if close is not None:
                editor.insert_before(
                    close,
                    [
                        '  <PropertyGroup Label="Configuration">',
                        f"    <PlatformToolset>{config.toolchain_version}</PlatformToolset>",
                        "  </PropertyGroup>",
                    ],
                )

    if not fresh_block and rewrite_all(_DEBUGFMT_ELEMENT_RE, "ProgramDatabase") == 0:
        for index in all_indices(_CLCOMPILE_OPEN_RE):
            pad = indent_of(index) + "  "
            editor.insert_after(
                index, [f"{pad}<DebugInformationFormat>ProgramDatabase</DebugInformationFormat>"]
            )

    if not fresh_block and rewrite_all(_GENDEBUG_ELEMENT_RE, "true") == 0:
        links = all_indices(_LINK_OPEN_RE)
        if links:
            for index in links:
                pad = indent_of(index) + "  "
                editor.insert_after(
                    index, [f"{pad}<GenerateDebugInformation>true</GenerateDebugInformation>"]
                )
        else:
            for index in all_indices(_GROUP_CLOSE_RE):
                pad = indent_of(index) + "  "
                editor.insert_before(
                    index,
                    [
                        f"{pad}<Link>",
                        f"{pad}  <GenerateDebugInformation>true</GenerateDebugInformation>",
                        f"{pad}</Link>",
                    ],
                )

    if not editor.dirty:
        return []
    rel = project.relative_to(checkout).as_posix()
    new_lines, edits = editor.apply(rel)
    _write_file(project, new_lines, eol, trailing)
    return edits


def revert(checkout: Union[str, Path], report: MutationReport) -> None:
    """Undo a mutation using the report's before values."""
    checkout = Path(checkout)
    by_file: dict[str, list[Edit]] = {}
    for edit in report.edits:
        by_file.setdefault(edit.file, []).append(edit)
    for rel, edits in by_file.items():
        path = checkout / rel
        lines, eol, trailing = _read_file(path)
        for edit in sorted(edits, key=lambda e: e.line, reverse=True):
            if edit.before is None:
                del lines[edit.line - 1]
            else:
                lines[edit.line - 1] = edit.before
        _write_file(path, lines, eol, trailing)
