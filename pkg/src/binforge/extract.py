"""Ground-truth extraction: functions, address ranges, and line mappings from
a built binary plus its debug information.

ELF binaries are read directly (embedded or split DWARF). PE binaries consume
a pre-extracted record file produced by an external PDB dumper on a Windows
host; its JSON schema is documented in load_pdb_records. Output addresses are
RVAs (load-relative); hashes follow the datamodel rules: byte_hash over the
raw range bytes in range order, normalized_hash after zeroing relocation
target spans.
"""

from __future__ import annotations

import hashlib
import json
import posixpath
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from binforge import dwarf as dw
from binforge import elf as elf_mod
from binforge import pe as pe_mod
from binforge.model import (
    DebugKind,
    FunctionRecord,
    LineRecord,
    RvaRecord,
)


class ExtractionError(ValueError):
    pass


class UnsupportedFormatError(ExtractionError):
    """Input is neither ELF nor PE."""


class PdbRecordError(ExtractionError):
    """Pre-extracted PDB record file violates its schema."""


@dataclass
class ExtractedLine:
    source_path: str
    line_number: int
    byte_address: int
    length: int
    line_text: Optional[str] = None


@dataclass
class ExtractedFunction:
    name: str
    ranges: list[tuple[int, int]]  # [start_rva, end_rva), sorted, disjoint
    byte_hash: str
    normalized_hash: str
    lines: list[ExtractedLine] = field(default_factory=list)

    @property
    def start_rva(self) -> int:
        return self.ranges[0][0]

    @property
    def decl_path(self) -> Optional[str]:
        """Source file of the lowest-address line row; the defining file."""
        if not self.lines:
            return None
        return min(self.lines, key=lambda ln: ln.byte_address).source_path


@dataclass
class ExtractionResult:
    functions: list[ExtractedFunction]
    image_base: int
    binary_format: str  # "elf" | "pe"
    degraded: bool = False
    debug_kind: Optional[DebugKind] = None

    def record_bundles(self) -> list[tuple[FunctionRecord, list[RvaRecord], list[LineRecord]]]:
        """Convert to store-insertable (function, rvas, lines) bundles."""
        bundles = []
        for fn in self.functions:
            record = FunctionRecord(fn.name, fn.byte_hash, fn.normalized_hash)
            rvas = [RvaRecord(start, end) for start, end in fn.ranges]
            lines = [
                LineRecord(ln.source_path, ln.line_number, ln.byte_address, ln.length, ln.line_text)
                for ln in fn.lines
            ]
            bundles.append((record, rvas, lines))
        return bundles


def rva_of(vaddr: int, image) -> int:
    """Load-relative address of a virtual address (ELF: minus lowest PT_LOAD
    vaddr; PE: minus ImageBase). Raises when the address is unmapped."""
    return image.rva_of(vaddr)


def hash_function(
    image,
    rva_ranges: Sequence[tuple[int, int]],
    relocation_targets: Sequence[tuple[int, int]] = (),
) -> tuple[str, str]:
    """(byte_hash, normalized_hash) over the concatenated range bytes.

    relocation_targets are (rva, width) spans; portions intersecting the
    ranges are zeroed for the normalized digest only.
    """
    if not rva_ranges:
        raise ExtractionError("empty range set")
    ranges = sorted(rva_ranges)
    chunks = []
    for start, end in ranges:
        if end <= start:
            raise ExtractionError(f"empty or inverted range {start:#x}..{end:#x}")
        off_start = image.rva_to_offset(start)
        off_last = image.rva_to_offset(end - 1)
        if off_last - off_start != end - 1 - start:
            raise ExtractionError(f"range {start:#x}..{end:#x} spans unmapped bytes")
        chunks.append(bytearray(image.data[off_start : off_start + (end - start)]))
    byte_hash = hashlib.sha256(b"".join(bytes(c) for c in chunks)).hexdigest()
    for target_rva, width in relocation_targets:
        for chunk, (start, end) in zip(chunks, ranges):
            lo = max(target_rva, start)
            hi = min(target_rva + width, end)
            for pos in range(lo, hi):
                chunk[pos - start] = 0
    normalized_hash = hashlib.sha256(b"".join(bytes(c) for c in chunks)).hexdigest()
    return byte_hash, normalized_hash


def _relocation_spans(image) -> list[tuple[int, int]]:
    """Relocation-table sites as (rva, width), for normalization."""
    if isinstance(image, pe_mod.PeFile):
        return image.relocations()
    spans = []
    for reloc in image.relocations():
        # r_offset in linked objects is a virtual address
        try:
            spans.append((reloc.offset - image.image_base, reloc.size))
        except Exception:  # pragma: no cover - defensive
            continue
    return spans


# -- source text ---------------------------------------------------------------


class _SourceCache:
    def __init__(self, source_root: Optional[Path]):
        self.root = Path(source_root).resolve() if source_root else None
        self._files: dict[str, Optional[list[str]]] = {}

    def normalize(self, path: str) -> str:
        """Repo-relative posix path when under source_root, else as emitted."""
        clean = posixpath.normpath(path.replace("\\", "/"))
        if self.root is None:
            return clean
        try:
            resolved = Path(clean).resolve() if clean.startswith("/") else (self.root / clean).resolve()
            rel = resolved.relative_to(self.root)
            return rel.as_posix()
        except (ValueError, OSError):
            return clean

    def line_text(self, normalized: str, line_number: int) -> Optional[str]:
        if self.root is None or normalized.startswith("/"):
            return None
        if normalized not in self._files:
            target = self.root / normalized
            try:
                self._files[normalized] = target.read_text(errors="replace").splitlines()
            except OSError:
                self._files[normalized] = None
        lines = self._files[normalized]
        if lines is None or not 1 <= line_number <= len(lines):
            return None
        return lines[line_number - 1].strip()


# -- DWARF extraction ------------------------------------------------------------


def _scope_prefix(cu: dw.CompileUnit, die: dw.Die) -> list[str]:
    parts = []
    parent = die.parent
    while parent is not None:
        pdie = cu.index[parent]
        if pdie.tag in dw.SCOPE_TAGS:
            name = cu.attr(pdie, dw.DW_AT_name)
            if name:
                parts.append(name)
        parent = pdie.parent
    parts.reverse()
    return parts


def _resolve_die_ref(info: dw.DwarfInfo, offset: int) -> Optional[tuple[dw.CompileUnit, dw.Die]]:
    for cu in info.units:
        die = cu.index.get(offset)
        if die is not None:
            return cu, die
    return None


def _qualified_name(info: dw.DwarfInfo, cu: dw.CompileUnit, die: dw.Die) -> Optional[str]:
    """Name qualified by enclosing namespaces/classes, following
    specification/abstract_origin references when the definition is nameless."""
    current_cu, current = cu, die
    for _ in range(8):  # reference chains are short; bound against cycles
        name = current_cu.attr(current, dw.DW_AT_name)
        if name:
            return "::".join(_scope_prefix(current_cu, current) + [name])
        ref = current.attrs.get(dw.DW_AT_specification) or current.attrs.get(
            dw.DW_AT_abstract_origin
        )
        if ref is None:
            break
        hop = _resolve_die_ref(info, ref[1])
        if hop is None:
            break
        current_cu, current = hop
    for at in (dw.DW_AT_linkage_name, dw.DW_AT_MIPS_linkage_name):
        linkage = cu.attr(die, at)
        if linkage:
            return linkage
    return None


@dataclass
class _LineEntry:
    address: int  # vaddr
    path: str
    line: int
    length: int


def _collect_line_entries(info: dw.DwarfInfo) -> list[_LineEntry]:
    """Distinct (path, line, address) rows across all units, with the byte
    length to the next distinct address in the same sequence."""
    entries: dict[tuple[int, str, int], int] = {}
    for cu in info.units:
        rows = info.line_rows(cu)
        sequence: list[dw.LineRow] = []
        for row in rows:
            if row.end_sequence:
                _flush_sequence(sequence, row.address, entries)
                sequence = []
            else:
                sequence.append(row)
        _flush_sequence(sequence, None, entries)
    return [
        _LineEntry(address, path, line, length)
        for (address, path, line), length in sorted(entries.items())
    ]


def _flush_sequence(
    rows: list[dw.LineRow], end_address: Optional[int], entries: dict
) -> None:
    if not rows:
        return
    addresses = sorted({row.address for row in rows})
    if end_address is None:
        end_address = addresses[-1] + 1  # unterminated sequence: nominal length
    next_of = {}
    for i, addr in enumerate(addresses):
        next_of[addr] = addresses[i + 1] if i + 1 < len(addresses) else max(end_address, addr + 1)
    for row in rows:
        if row.line <= 0:
            continue  # compiler-generated code with no source line
        key = (row.address, row.path, row.line)
        length = max(1, next_of[row.address] - row.address)
        entries.setdefault(key, length)


def _extract_dwarf(
    image: elf_mod.ElfFile,
    sections: dict[str, bytes],
    source_root: Optional[Path],
) -> list[ExtractedFunction]:
    info = dw.DwarfInfo(sections)
    cache = _SourceCache(source_root)
    reloc_spans = _relocation_spans(image)
    line_entries = _collect_line_entries(info)
    line_addrs = [entry.address for entry in line_entries]

    functions = []
    for cu in info.units:
        for die in cu.dies:
            if die.tag != dw.DW_TAG_subprogram:
                continue
            vranges = cu.die_ranges(die)
            if not vranges:
                continue
            name = _qualified_name(info, cu, die)
            rva_ranges = sorted(
                (start - image.image_base, end - image.image_base) for start, end in vranges
            )
            if name is None:
                name = f"func_{rva_ranges[0][0]:x}"
            lines = []
            for vstart, vend in sorted(vranges):
                lo = bisect_left(line_addrs, vstart)
                hi = bisect_right(line_addrs, vend - 1)
                for entry in line_entries[lo:hi]:
                    normalized = cache.normalize(entry.path)
                    lines.append(
                        ExtractedLine(
                            source_path=normalized,
                            line_number=entry.line,
                            byte_address=entry.address - image.image_base,
                            length=min(entry.length, vend - entry.address),
                            line_text=cache.line_text(normalized, entry.line),
                        )
                    )
            byte_hash, normalized_hash = hash_function(image, rva_ranges, reloc_spans)
            functions.append(
                ExtractedFunction(name, rva_ranges, byte_hash, normalized_hash, lines)
            )
    functions.sort(key=lambda f: (f.start_rva, f.name))
    return functions


def _extract_symtab_fallback(image: elf_mod.ElfFile) -> list[ExtractedFunction]:
    reloc_spans = _relocation_spans(image)
    functions = []
    for sym in image.symbols():
        if sym.sym_type != elf_mod.STT_FUNC or sym.size == 0 or sym.shndx == 0 or not sym.name:
            continue
        start = sym.value - image.image_base
        ranges = [(start, start + sym.size)]
        try:
            byte_hash, normalized_hash = hash_function(image, ranges, reloc_spans)
        except (ExtractionError, elf_mod.ElfError):
            continue
        functions.append(ExtractedFunction(sym.name, ranges, byte_hash, normalized_hash))
    functions.sort(key=lambda f: (f.start_rva, f.name))
    return functions


# -- PE via pre-extracted PDB records ---------------------------------------------

PDB_RECORD_KIND = "pdb-records/v1"


def load_pdb_records(path: Union[str, Path]) -> dict:
    """Load and validate a pre-extracted PDB record file.

    Schema (all addresses are virtual addresses as dumped on the Windows
    host; extraction subtracts image_base):

        {
          "image_base": 4194304,
          "functions": [
            {
              "name": "ns::Klass::method",
              "ranges": [[start_va, end_va], ...],
              "line_entries": [
                {"file": "src/a.cpp", "line": 12, "address": va, "length": 5},
                ...
              ]
            }
          ]
        }

    Violations raise PdbRecordError naming the offending JSON path.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PdbRecordError(f"unreadable record file: {exc}") from exc

    def fail(pointer: str, message: str):
        raise PdbRecordError(f"{pointer}: {message}")

    if not isinstance(doc, dict):
        fail("/", "expected object")
    if not isinstance(doc.get("image_base"), int):
        fail("/image_base", "expected integer")
    funcs = doc.get("functions")
    if not isinstance(funcs, list):
        fail("/functions", "expected array")
    for i, fn in enumerate(funcs):
        base = f"/functions/{i}"
        if not isinstance(fn, dict):
            fail(base, "expected object")
        if not isinstance(fn.get("name"), str) or not fn["name"]:
            fail(f"{base}/name", "expected non-empty string")
        ranges = fn.get("ranges")
        if not isinstance(ranges, list) or not ranges:
            fail(f"{base}/ranges", "expected non-empty array")
        for j, pair in enumerate(ranges):
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not all(isinstance(v, int) for v in pair)
                or pair[0] >= pair[1]
            ):
                fail(f"{base}/ranges/{j}", "expected [start, end) with start < end")
        for j, entry in enumerate(fn.get("line_entries", [])):
            epath = f"{base}/line_entries/{j}"
            if not isinstance(entry, dict):
                fail(epath, "expected object")
            if not isinstance(entry.get("file"), str):
                fail(f"{epath}/file", "expected string")
            for key in ("line", "address", "length"):
                if not isinstance(entry.get(key), int) or entry[key] < 0:
                    fail(f"{epath}/{key}", "expected non-negative integer")
    return doc


def _extract_pe(
    image: pe_mod.PeFile, records_path: Union[str, Path], source_root: Optional[Path]
) -> list[ExtractedFunction]:
    doc = load_pdb_records(records_path)
    base = doc["image_base"]
    cache = _SourceCache(source_root)
    reloc_spans = image.relocations()
    functions = []
    for fn in doc["functions"]:
        rva_ranges = sorted((start - base, end - base) for start, end in fn["ranges"])
        byte_hash, normalized_hash = hash_function(image, rva_ranges, reloc_spans)
        lines = []
        for entry in fn.get("line_entries", []):
            normalized = cache.normalize(entry["file"])
            lines.append(
                ExtractedLine(
                    source_path=normalized,
                    line_number=entry["line"],
                    byte_address=entry["address"] - base,
                    length=max(1, entry["length"]),
                    line_text=cache.line_text(normalized, entry["line"]),
                )
            )
        functions.append(
            ExtractedFunction(fn["name"], rva_ranges, byte_hash, normalized_hash, lines)
        )
    functions.sort(key=lambda f: (f.start_rva, f.name))
    return functions


# -- entry point ------------------------------------------------------------------


def extract(
    binary_path: Union[str, Path],
    debug_source: Union[str, Path, None] = None,
    source_root: Union[str, Path, None] = None,
) -> ExtractionResult:
    """Extract function/rva/line ground truth from one binary.

    debug_source: None for embedded debug info; a split debug ELF for
    dwarf_split; a .json record file for PE. Absent or unusable debug info
    degrades to the symbol-table-only fallback (names and ranges, no lines).
    """
    data = Path(binary_path).read_bytes()
    root = Path(source_root) if source_root else None

    if elf_mod.is_elf(data):
        image = elf_mod.ElfFile(data)
        kind = DebugKind.DWARF_EMBEDDED
        sections = image.debug_sections()
        if debug_source is not None:
            split = elf_mod.ElfFile.from_path(debug_source)
            split_sections = split.debug_sections()
            if split_sections.get(".debug_info"):
                sections = split_sections
                kind = DebugKind.DWARF_SPLIT
        if sections.get(".debug_info"):
            try:
                functions = _extract_dwarf(image, sections, root)
                return ExtractionResult(functions, image.image_base, "elf", False, kind)
            except dw.DwarfError:
                pass
        return ExtractionResult(
            _extract_symtab_fallback(image), image.image_base, "elf", degraded=True
        )

    if pe_mod.is_pe(data):
        image = pe_mod.PeFile(data)
        if debug_source is not None:
            functions = _extract_pe(image, debug_source, root)
            return ExtractionResult(functions, image.image_base, "pe", False, DebugKind.PDB)
        return ExtractionResult([], image.image_base, "pe", degraded=True)

    raise UnsupportedFormatError(f"{binary_path}: not an ELF or PE binary")


def sniff_format(path: Union[str, Path]) -> Optional[str]:
    """'elf' | 'pe' | None by leading-bytes signature."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(4096)
    except OSError:
        return None
    if elf_mod.is_elf(head):
        return "elf"
    if len(head) >= 0x40:
        e_lfanew = int.from_bytes(head[0x3C:0x40], "little")
        with open(path, "rb") as fh:
            blob = fh.read(e_lfanew + 4)
        if pe_mod.is_pe(blob):
            return "pe"
    return None

