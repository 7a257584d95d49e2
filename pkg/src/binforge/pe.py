"""Minimal PE reader: enough header parsing to map RVAs to file offsets,
recover the image base, and walk the base relocation table.

Function and line ground truth for PE binaries arrives as pre-extracted
record files (see extract.load_pdb_records); this module only handles the
container.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

IMAGE_REL_BASED_HIGHLOW = 3
IMAGE_REL_BASED_DIR64 = 10


class PeError(ValueError):
    """The file is not a PE image this reader understands."""


class UnmappedAddressError(PeError):
    """RVA does not fall inside any section."""


@dataclass(frozen=True)
class PeSection:
    name: str
    virtual_address: int
    virtual_size: int
    raw_offset: int
    raw_size: int


def is_pe(data: bytes) -> bool:
    """MZ stub plus a PE\\0\\0 signature at e_lfanew."""
    if len(data) < 0x40 or data[:2] != b"MZ":
        return False
    e_lfanew = struct.unpack_from("<I", data, 0x3C)[0]
    return len(data) >= e_lfanew + 4 and data[e_lfanew : e_lfanew + 4] == b"PE\x00\x00"


class PeFile:
    def __init__(self, data: bytes):
        if not is_pe(data):
            raise PeError("not a PE file")
        self.data = data
        pe_off = struct.unpack_from("<I", data, 0x3C)[0]
        machine, nsections, _, _, _, opt_size, _ = struct.unpack_from(
            "<HHIIIHH", data, pe_off + 4
        )
        self.machine = machine
        opt_off = pe_off + 24
        magic = struct.unpack_from("<H", data, opt_off)[0]
        if magic == 0x10B:  # PE32
            self.is_64 = False
            self.image_base = struct.unpack_from("<I", data, opt_off + 28)[0]
        elif magic == 0x20B:  # PE32+
            self.is_64 = True
            self.image_base = struct.unpack_from("<Q", data, opt_off + 24)[0]
        else:
            raise PeError(f"unknown optional header magic {magic:#x}")
        self.sections = []
        sec_off = opt_off + opt_size
        for i in range(nsections):
            base = sec_off + i * 40
            name = data[base : base + 8].rstrip(b"\x00").decode("ascii", "replace")
            vsize, vaddr, rsize, roff = struct.unpack_from("<IIII", data, base + 8)
            self.sections.append(PeSection(name, vaddr, vsize, roff, rsize))

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "PeFile":
        return cls(Path(path).read_bytes())

    def rva_to_offset(self, rva: int) -> int:
        for s in self.sections:
            span = max(s.virtual_size, s.raw_size)
            if s.virtual_address <= rva < s.virtual_address + span:
                delta = rva - s.virtual_address
                if delta >= s.raw_size:
                    raise UnmappedAddressError(f"rva {rva:#x} has no file backing")
                return s.raw_offset + delta
        raise UnmappedAddressError(f"rva {rva:#x} not in any section")

    def rva_of(self, vaddr: int) -> int:
        rva = vaddr - self.image_base
        if rva < 0:
            raise UnmappedAddressError(f"vaddr {vaddr:#x} below image base")
        self.rva_to_offset(rva)  # raises when unmapped
        return rva

    def relocations(self) -> list[tuple[int, int]]:
        """(rva, width) pairs from the .reloc base relocation blocks."""
        reloc = next((s for s in self.sections if s.name == ".reloc"), None)
        if reloc is None:
            return []
        blob = self.data[reloc.raw_offset : reloc.raw_offset + reloc.raw_size]
        out = []
        pos = 0
        while pos + 8 <= len(blob):
            page_rva, block_size = struct.unpack_from("<II", blob, pos)
            if block_size < 8:
                break
            for entry_off in range(pos + 8, min(pos + block_size, len(blob)) - 1, 2):
                entry = struct.unpack_from("<H", blob, entry_off)[0]
                rtype, offset = entry >> 12, entry & 0xFFF
                if rtype == IMAGE_REL_BASED_DIR64:
                    out.append((page_rva + offset, 8))
                elif rtype == IMAGE_REL_BASED_HIGHLOW:
                    out.append((page_rva + offset, 4))
            pos += block_size
        return out
