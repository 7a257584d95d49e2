"""Minimal ELF reader: headers, sections, segments, symbols, relocations.

Parses just enough of the format to slice function bytes, map virtual
addresses to file offsets, and hand the .debug_* sections to the DWARF
reader. Little-endian 32/64-bit objects only, which covers the x86/x64
matrix this pipeline builds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

ELF_MAGIC = b"\x7fELF"

ET_REL = 1
ET_EXEC = 2
ET_DYN = 3

SHT_NOBITS = 8
SHT_SYMTAB = 2
SHT_DYNSYM = 11
SHT_RELA = 4
SHT_REL = 9

SHF_ALLOC = 0x2

PT_LOAD = 1

STT_FUNC = 2

# x86-64 relocation type -> patched span width in bytes. Types that do not
# patch text/data in place (COPY, TLS module ids resolved by the loader into
# GOT slots, NONE) map to 0 and are ignored.
_X64_RELOC_SIZES = {
    1: 8,   # 64
    2: 4,   # PC32
    3: 4,   # GOT32
    4: 4,   # PLT32
    6: 8,   # GLOB_DAT
    7: 8,   # JUMP_SLOT
    8: 8,   # RELATIVE
    9: 4,   # GOTPCREL
    10: 4,  # 32
    11: 4,  # 32S
    12: 2,  # 16
    13: 2,  # PC16
    14: 1,  # 8
    15: 1,  # PC8
    24: 8,  # PC64
    25: 8,  # GOTOFF64
    26: 4,  # GOTPC32
    41: 4,  # GOTPCRELX
    42: 4,  # REX_GOTPCRELX
}

_I386_RELOC_SIZES = {1: 4, 2: 4, 3: 4, 4: 4, 6: 4, 7: 4, 8: 4, 9: 4, 10: 4}


class ElfError(ValueError):
    """The file is not an ELF object this reader understands."""


class UnmappedAddressError(ElfError):
    """Address does not fall inside any mapped section."""


@dataclass(frozen=True)
class Section:
    name: str
    sh_type: int
    flags: int
    addr: int
    offset: int
    size: int
    link: int
    entsize: int


@dataclass(frozen=True)
class Segment:
    p_type: int
    offset: int
    vaddr: int
    filesz: int
    memsz: int


@dataclass(frozen=True)
class Symbol:
    name: str
    value: int
    size: int
    info: int
    shndx: int

    @property
    def sym_type(self) -> int:
        return self.info & 0xF


@dataclass(frozen=True)
class Relocation:
    """A relocation site: vaddr (or section-relative offset for ET_REL) + width."""

    offset: int
    rtype: int
    size: int


class ElfFile:
    def __init__(self, data: bytes):
        if data[:4] != ELF_MAGIC:
            raise ElfError("not an ELF file")
        self.data = data
        ei_class, ei_data = data[4], data[5]
        if ei_data != 1:
            raise ElfError("big-endian ELF not supported")
        self.is_64 = ei_class == 2
        if self.is_64:
            (self.e_type, self.e_machine, _, _, _, shoff, _, _, phentsize, phnum,
             shentsize, shnum, shstrndx) = struct.unpack_from("<HHIQQQIHHHHHH", data, 16)
            phoff = struct.unpack_from("<Q", data, 32)[0]
        else:
            (self.e_type, self.e_machine, _, _, phoff, shoff, _, _, phentsize,
             phnum, shentsize, shnum, shstrndx) = struct.unpack_from("<HHIIIIIHHHHHH", data, 16)
        self.segments = self._parse_segments(phoff, phentsize, phnum)
        self.sections = self._parse_sections(shoff, shentsize, shnum, shstrndx)
        self._by_name = {s.name: s for s in self.sections}
        loads = [seg.vaddr for seg in self.segments if seg.p_type == PT_LOAD]
        self.image_base = min(loads) if loads else 0

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "ElfFile":
        return cls(Path(path).read_bytes())

    def _parse_segments(self, phoff: int, entsize: int, count: int) -> list[Segment]:
        segs = []
        for i in range(count):
            base = phoff + i * entsize
            if self.is_64:
                p_type, _, offset, vaddr, _, filesz, memsz = struct.unpack_from(
                    "<IIQQQQQ", self.data, base
                )
            else:
                p_type, offset, vaddr, _, filesz, memsz = struct.unpack_from(
                    "<IIIIII", self.data, base
                )
            segs.append(Segment(p_type, offset, vaddr, filesz, memsz))
        return segs

    def _parse_sections(
        self, shoff: int, entsize: int, count: int, shstrndx: int
    ) -> list[Section]:
        if count == 0:
            return []
        raw = []
        for i in range(count):
            base = shoff + i * entsize
            if self.is_64:
                name_off, sh_type, flags, addr, offset, size, link, _, _, ent = (
                    struct.unpack_from("<IIQQQQIIQQ", self.data, base)[:10]
                )
            else:
                name_off, sh_type, flags, addr, offset, size, link, _, _, ent = (
                    struct.unpack_from("<IIIIIIIIII", self.data, base)
                )
            raw.append((name_off, sh_type, flags, addr, offset, size, link, ent))
        strtab_off, strtab_size = raw[shstrndx][4], raw[shstrndx][5]
        strtab = self.data[strtab_off : strtab_off + strtab_size]
        sections = []
        for name_off, sh_type, flags, addr, offset, size, link, ent in raw:
            end = strtab.find(b"\x00", name_off)
            name = strtab[name_off:end].decode("utf-8", "replace")
            sections.append(Section(name, sh_type, flags, addr, offset, size, link, ent))
        return sections

    def section(self, name: str) -> Optional[Section]:
        return self._by_name.get(name)

    def section_data(self, section: Section) -> bytes:
        if section.sh_type == SHT_NOBITS:
            return b""
        return self.data[section.offset : section.offset + section.size]

    def debug_sections(self) -> dict[str, bytes]:
        """All .debug_* sections by name (empty dict when stripped)."""
        return {
            s.name: self.section_data(s)
            for s in self.sections
            if s.name.startswith(".debug_")
        }

    def vaddr_to_offset(self, vaddr: int) -> int:
        for s in self.sections:
            if (
                s.flags & SHF_ALLOC
                and s.sh_type != SHT_NOBITS
                and s.addr <= vaddr < s.addr + s.size
            ):
                return s.offset + (vaddr - s.addr)
        raise UnmappedAddressError(f"vaddr {vaddr:#x} not in any mapped section")

    def rva_to_offset(self, rva: int) -> int:
        return self.vaddr_to_offset(rva + self.image_base)

    def rva_of(self, vaddr: int) -> int:
        """Load-relative address of a mapped virtual address."""
        self.vaddr_to_offset(vaddr)  # raises when unmapped
        return vaddr - self.image_base

    def _string_at(self, strtab: Section, off: int) -> str:
        base = strtab.offset + off
        end = self.data.find(b"\x00", base)
        return self.data[base:end].decode("utf-8", "replace")

    def symbols(self) -> list[Symbol]:
        """Symbols from .symtab, falling back to .dynsym."""
        table = next(
            (s for s in self.sections if s.sh_type == SHT_SYMTAB),
            None,
        ) or next((s for s in self.sections if s.sh_type == SHT_DYNSYM), None)
        if table is None or table.entsize == 0:
            return []
        strtab = self.sections[table.link]
        out = []
        for i in range(table.size // table.entsize):
            base = table.offset + i * table.entsize
            if self.is_64:
                name_off, info, _, shndx, value, size = struct.unpack_from(
                    "<IBBHQQ", self.data, base
                )
            else:
                name_off, value, size, info, _, shndx = struct.unpack_from(
                    "<IIIBBH", self.data, base
                )
            out.append(Symbol(self._string_at(strtab, name_off), value, size, info, shndx))
        return out

    def relocations(self) -> list[Relocation]:
        """Every relocation site with a known patched width, across all tables."""
        sizes = _X64_RELOC_SIZES if self.e_machine == 62 else _I386_RELOC_SIZES
        out = []
        for s in self.sections:
            if s.sh_type not in (SHT_RELA, SHT_REL) or s.entsize == 0:
                continue
            for i in range(s.size // s.entsize):
                base = s.offset + i * s.entsize
                if self.is_64:
                    offset, info = struct.unpack_from("<QQ", self.data, base)
                    rtype = info & 0xFFFFFFFF
                else:
                    offset, info = struct.unpack_from("<II", self.data, base)
                    rtype = info & 0xFF
                width = sizes.get(rtype, 0)
                if width:
                    out.append(Relocation(offset, rtype, width))
        return out


def is_elf(data: bytes) -> bool:
    return data[:4] == ELF_MAGIC
