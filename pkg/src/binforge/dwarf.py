"""DWARF reader for versions 2-5: DIE trees, address ranges, and the full
line-number program, for the sections gcc and clang embed in ELF objects.

Only the DWARF32 format is handled (the 64-bit *format* marker, not 64-bit
targets; neither compiler emits DWARF64 for the configurations this pipeline
builds). Values are decoded lazily enough that DW_FORM_strx / DW_FORM_addrx
indices resolve through the str_offsets/addr bases discovered on the unit
root, which may themselves appear after indexed attributes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

# Tags
DW_TAG_class_type = 0x02
DW_TAG_compile_unit = 0x11
DW_TAG_structure_type = 0x13
DW_TAG_subprogram = 0x2E
DW_TAG_union_type = 0x17
DW_TAG_namespace = 0x39

# Attributes
DW_AT_name = 0x03
DW_AT_stmt_list = 0x10
DW_AT_low_pc = 0x11
DW_AT_high_pc = 0x12
DW_AT_comp_dir = 0x1B
DW_AT_inline = 0x20
DW_AT_abstract_origin = 0x31
DW_AT_declaration = 0x3C
DW_AT_decl_file = 0x3A
DW_AT_decl_line = 0x3B
DW_AT_entry_pc = 0x52
DW_AT_ranges = 0x55
DW_AT_specification = 0x47
DW_AT_str_offsets_base = 0x72
DW_AT_addr_base = 0x73
DW_AT_rnglists_base = 0x74
DW_AT_linkage_name = 0x6E
DW_AT_MIPS_linkage_name = 0x2007

# Forms
DW_FORM_addr = 0x01
DW_FORM_block2 = 0x03
DW_FORM_block4 = 0x04
DW_FORM_data2 = 0x05
DW_FORM_data4 = 0x06
DW_FORM_data8 = 0x07
DW_FORM_string = 0x08
DW_FORM_block = 0x09
DW_FORM_block1 = 0x0A
DW_FORM_data1 = 0x0B
DW_FORM_flag = 0x0C
DW_FORM_sdata = 0x0D
DW_FORM_strp = 0x0E
DW_FORM_udata = 0x0F
DW_FORM_ref_addr = 0x10
DW_FORM_ref1 = 0x11
DW_FORM_ref2 = 0x12
DW_FORM_ref4 = 0x13
DW_FORM_ref8 = 0x14
DW_FORM_ref_udata = 0x15
DW_FORM_indirect = 0x16
DW_FORM_sec_offset = 0x17
DW_FORM_exprloc = 0x18
DW_FORM_flag_present = 0x19
DW_FORM_strx = 0x1A
DW_FORM_addrx = 0x1B
DW_FORM_ref_sup4 = 0x1C
DW_FORM_strp_sup = 0x1D
DW_FORM_data16 = 0x1E
DW_FORM_line_strp = 0x1F
DW_FORM_ref_sig8 = 0x20
DW_FORM_implicit_const = 0x21
DW_FORM_loclistx = 0x22
DW_FORM_rnglistx = 0x23
DW_FORM_ref_sup8 = 0x24
DW_FORM_strx1 = 0x25
DW_FORM_strx2 = 0x26
DW_FORM_strx3 = 0x27
DW_FORM_strx4 = 0x28
DW_FORM_addrx1 = 0x29
DW_FORM_addrx2 = 0x2A
DW_FORM_addrx3 = 0x2B
DW_FORM_addrx4 = 0x2C

_STRX_FORMS = {DW_FORM_strx, DW_FORM_strx1, DW_FORM_strx2, DW_FORM_strx3, DW_FORM_strx4}
_ADDRX_FORMS = {DW_FORM_addrx, DW_FORM_addrx1, DW_FORM_addrx2, DW_FORM_addrx3, DW_FORM_addrx4}
_ADDR_CLASS_FORMS = {DW_FORM_addr} | _ADDRX_FORMS

# Line-number program content types (v5)
DW_LNCT_path = 1
DW_LNCT_directory_index = 2

# Range list entry codes (v5 .debug_rnglists)
DW_RLE_end_of_list = 0
DW_RLE_base_addressx = 1
DW_RLE_startx_endx = 2
DW_RLE_startx_length = 3
DW_RLE_offset_pair = 4
DW_RLE_base_address = 5
DW_RLE_start_end = 6
DW_RLE_start_length = 7

SCOPE_TAGS = {DW_TAG_namespace, DW_TAG_class_type, DW_TAG_structure_type, DW_TAG_union_type}


class DwarfError(ValueError):
    """Debug information is absent, truncated, or in an unsupported format."""


class Reader:
    """Forward cursor over a byte buffer with the DWARF primitive decoders."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def eof(self) -> bool:
        return self.pos >= len(self.data)

    def bytes(self, n: int) -> bytes:
        out = self.data[self.pos : self.pos + n]
        if len(out) != n:
            raise DwarfError("truncated section")
        self.pos += n
        return out

    def u8(self) -> int:
        return self.bytes(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.bytes(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.bytes(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.bytes(8))[0]

    def uint(self, size: int) -> int:
        return int.from_bytes(self.bytes(size), "little")

    def uleb(self) -> int:
        result = shift = 0
        while True:
            byte = self.u8()
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result
            shift += 7

    def sleb(self) -> int:
        result = shift = 0
        while True:
            byte = self.u8()
            result |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                if byte & 0x40:
                    result -= 1 << shift
                return result

    def cstr(self) -> str:
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise DwarfError("unterminated string")
        out = self.data[self.pos : end].decode("utf-8", "replace")
        self.pos = end + 1
        return out


@dataclass
class Die:
    offset: int
    tag: int
    depth: int
    parent: Optional[int]
    has_children: bool
    attrs: dict[int, tuple[int, object]] = field(default_factory=dict)


@dataclass
class LineRow:
    address: int
    path: str
    line: int
    column: int
    is_stmt: bool
    end_sequence: bool


@dataclass
class _Abbrev:
    tag: int
    has_children: bool
    specs: list[tuple[int, int, Optional[int]]]  # (attr, form, implicit_const)


class CompileUnit:
    def __init__(self, dwarf: "DwarfInfo", offset: int, version: int, address_size: int):
        self.dwarf = dwarf
        self.offset = offset
        self.version = version
        self.address_size = address_size
        self.dies: list[Die] = []
        self.index: dict[int, Die] = {}

    @property
    def root(self) -> Die:
        return self.dies[0]

    def attr(self, die: Die, at: int, default=None):
        """Resolved attribute value (strings/addresses looked up via bases)."""
        pair = die.attrs.get(at)
        if pair is None:
            return default
        form, value = pair
        if form in _STRX_FORMS:
            return self.dwarf.str_by_index(self, value)
        if form in _ADDRX_FORMS:
            return self.dwarf.addr_by_index(self, value)
        return value

    def _base(self, at: int, default: int) -> int:
        pair = self.root.attrs.get(at)
        return pair[1] if pair is not None else default

    @property
    def str_offsets_base(self) -> int:
        return self._base(DW_AT_str_offsets_base, 8)

    @property
    def addr_base(self) -> int:
        return self._base(DW_AT_addr_base, 8)

    @property
    def rnglists_base(self) -> int:
        return self._base(DW_AT_rnglists_base, 12)

    @property
    def comp_dir(self) -> Optional[str]:
        return self.attr(self.root, DW_AT_comp_dir)

    @property
    def name(self) -> Optional[str]:
        return self.attr(self.root, DW_AT_name)

    def base_address(self) -> int:
        low = self.attr(self.root, DW_AT_low_pc)
        if low is not None:
            return low
        entry = self.attr(self.root, DW_AT_entry_pc)
        return entry if entry is not None else 0

    def die_ranges(self, die: Die) -> list[tuple[int, int]]:
        """Machine-code [start, end) virtual address ranges of a DIE."""
        low = self.attr(die, DW_AT_low_pc)
        high_pair = die.attrs.get(DW_AT_high_pc)
        ranges_pair = die.attrs.get(DW_AT_ranges)
        if ranges_pair is not None:
            form, value = ranges_pair
            return self.dwarf.range_list(self, value, indexed=form == DW_FORM_rnglistx)
        if low is None or high_pair is None:
            return []
        form, value = high_pair
        high = value if form in _ADDR_CLASS_FORMS else low + value
        if form in _ADDRX_FORMS:
            high = self.dwarf.addr_by_index(self, value)
        return [(low, high)] if high > low else []


class DwarfInfo:
    """Parsed view over the .debug_* sections of one object."""

    def __init__(self, sections: dict[str, bytes]):
        self.sections = sections
        info = sections.get(".debug_info")
        if not info:
            raise DwarfError("no .debug_info section")
        self.units: list[CompileUnit] = []
        self._parse_units(info)

    # -- unit and DIE parsing -------------------------------------------------

    def _parse_units(self, info: bytes) -> None:
        r = Reader(info)
        while not r.eof():
            unit_offset = r.pos
            unit_length = r.u32()
            if unit_length == 0xFFFFFFFF:
                raise DwarfError("DWARF64 format is not supported")
            end = r.pos + unit_length
            version = r.u16()
            if version < 2 or version > 5:
                raise DwarfError(f"unsupported DWARF version {version}")
            unit_type = 1
            if version >= 5:
                unit_type = r.u8()
                address_size = r.u8()
                abbrev_offset = r.u32()
                if unit_type in (2, 6):    # type units: signature + type offset
                    r.bytes(12)
                elif unit_type in (4, 5):  # skeleton/split: dwo_id
                    r.bytes(8)
            else:
                abbrev_offset = r.u32()
                address_size = r.u8()
            if unit_type == 1 or unit_type == 4:
                cu = CompileUnit(self, unit_offset, version, address_size)
                abbrevs = self._parse_abbrevs(abbrev_offset)
                self._parse_dies(cu, r, end, abbrevs)
                if cu.dies:
                    self.units.append(cu)
            r.pos = end

    def _parse_abbrevs(self, offset: int) -> dict[int, _Abbrev]:
        data = self.sections.get(".debug_abbrev", b"")
        r = Reader(data, offset)
        table: dict[int, _Abbrev] = {}
        while True:
            code = r.uleb()
            if code == 0:
                return table
            tag = r.uleb()
            has_children = r.u8() != 0
            specs = []
            while True:
                attr = r.uleb()
                form = r.uleb()
                implicit = r.sleb() if form == DW_FORM_implicit_const else None
                if attr == 0 and form == 0:
                    break
                specs.append((attr, form, implicit))
            table[code] = _Abbrev(tag, has_children, specs)

    def _parse_dies(
        self, cu: CompileUnit, r: Reader, end: int, abbrevs: dict[int, _Abbrev]
    ) -> None:
        stack: list[int] = []  # offsets of open parents
        while r.pos < end:
            die_offset = r.pos
            code = r.uleb()
            if code == 0:
                if stack:
                    stack.pop()
                if not stack:
                    break
                continue
            decl = abbrevs.get(code)
            if decl is None:
                raise DwarfError(f"undefined abbrev code {code} at {die_offset:#x}")
            die = Die(
                offset=die_offset,
                tag=decl.tag,
                depth=len(stack),
                parent=stack[-1] if stack else None,
                has_children=decl.has_children,
            )
            for attr, form, implicit in decl.specs:
                form, value = self._read_form(r, form, cu, implicit)
                die.attrs[attr] = (form, value)
            cu.dies.append(die)
            cu.index[die_offset] = die
            if decl.has_children:
                stack.append(die_offset)

    def _read_form(self, r: Reader, form: int, cu: CompileUnit, implicit):
        """Decode one attribute value; returns (final_form, value)."""
        if form == DW_FORM_indirect:
            return self._read_form(r, r.uleb(), cu, implicit)
        if form == DW_FORM_implicit_const:
            return form, implicit
        if form == DW_FORM_addr:
            return form, r.uint(cu.address_size)
        if form == DW_FORM_data1:
            return form, r.u8()
        if form == DW_FORM_data2:
            return form, r.u16()
        if form == DW_FORM_data4:
            return form, r.u32()
        if form == DW_FORM_data8:
            return form, r.u64()
        if form == DW_FORM_data16:
            return form, r.bytes(16)
        if form == DW_FORM_sdata:
            return form, r.sleb()
        if form in (DW_FORM_udata, DW_FORM_loclistx, DW_FORM_rnglistx):
            return form, r.uleb()
        if form == DW_FORM_string:
            return form, r.cstr()
        if form == DW_FORM_strp:
            return form, self.string_at(".debug_str", r.u32())
        if form == DW_FORM_line_strp:
            return form, self.string_at(".debug_line_str", r.u32())
        if form == DW_FORM_strp_sup:
            return form, r.u32()
        if form == DW_FORM_strx:
            return form, r.uleb()
        if form == DW_FORM_strx1:
            return form, r.u8()
        if form == DW_FORM_strx2:
            return form, r.u16()
        if form == DW_FORM_strx3:
            return form, r.uint(3)
        if form == DW_FORM_strx4:
            return form, r.u32()
        if form == DW_FORM_addrx:
            return form, r.uleb()
        if form == DW_FORM_addrx1:
            return form, r.u8()
        if form == DW_FORM_addrx2:
            return form, r.u16()
        if form == DW_FORM_addrx3:
            return form, r.uint(3)
        if form == DW_FORM_addrx4:
            return form, r.u32()
        if form == DW_FORM_ref1:
            return form, cu.offset + r.u8()
        if form == DW_FORM_ref2:
            return form, cu.offset + r.u16()
        if form == DW_FORM_ref4:
            return form, cu.offset + r.u32()
        if form == DW_FORM_ref8:
            return form, cu.offset + r.u64()
        if form == DW_FORM_ref_udata:
            return form, cu.offset + r.uleb()
        if form == DW_FORM_ref_addr:
            return form, r.u32()
        if form == DW_FORM_ref_sup4:
            return form, r.u32()
        if form == DW_FORM_ref_sup8:
            return form, r.u64()
        if form == DW_FORM_ref_sig8:
            return form, r.u64()
        if form == DW_FORM_sec_offset:
            return form, r.u32()
        if form == DW_FORM_exprloc or form == DW_FORM_block:
            return form, r.bytes(r.uleb())
        if form == DW_FORM_block1:
            return form, r.bytes(r.u8())
        if form == DW_FORM_block2:
            return form, r.bytes(r.u16())
        if form == DW_FORM_block4:
            return form, r.bytes(r.u32())
        if form == DW_FORM_flag:
            return form, r.u8() != 0
        if form == DW_FORM_flag_present:
            return form, True
        raise DwarfError(f"unsupported form {form:#x}")

    # -- indexed lookups ------------------------------------------------------

    def string_at(self, section: str, offset: int) -> str:
        data = self.sections.get(section, b"")
        end = data.find(b"\x00", offset)
        if end < 0:
            raise DwarfError(f"bad string offset {offset:#x} in {section}")
        return data[offset:end].decode("utf-8", "replace")

    def str_by_index(self, cu: CompileUnit, index: int) -> str:
        data = self.sections.get(".debug_str_offsets", b"")
        pos = cu.str_offsets_base + index * 4
        if pos + 4 > len(data):
            raise DwarfError(f"str index {index} out of range")
        return self.string_at(".debug_str", struct.unpack_from("<I", data, pos)[0])

    def addr_by_index(self, cu: CompileUnit, index: int) -> int:
        data = self.sections.get(".debug_addr", b"")
        pos = cu.addr_base + index * cu.address_size
        if pos + cu.address_size > len(data):
            raise DwarfError(f"addr index {index} out of range")
        return int.from_bytes(data[pos : pos + cu.address_size], "little")

    # -- range lists ----------------------------------------------------------

    def range_list(self, cu: CompileUnit, value: int, indexed: bool) -> list[tuple[int, int]]:
        if cu.version >= 5:
            offset = value
            if indexed:
                data = self.sections.get(".debug_rnglists", b"")
                slot = cu.rnglists_base + value * 4
                offset = cu.rnglists_base + struct.unpack_from("<I", data, slot)[0]
            return self._rnglists_at(cu, offset)
        return self._ranges_at(cu, value)

    def _rnglists_at(self, cu: CompileUnit, offset: int) -> list[tuple[int, int]]:
        r = Reader(self.sections.get(".debug_rnglists", b""), offset)
        base = cu.base_address()
        out: list[tuple[int, int]] = []
        while True:
            code = r.u8()
            if code == DW_RLE_end_of_list:
                return out
            if code == DW_RLE_base_addressx:
                base = self.addr_by_index(cu, r.uleb())
            elif code == DW_RLE_startx_endx:
                start = self.addr_by_index(cu, r.uleb())
                end = self.addr_by_index(cu, r.uleb())
                if end > start:
                    out.append((start, end))
            elif code == DW_RLE_startx_length:
                start = self.addr_by_index(cu, r.uleb())
                length = r.uleb()
                if length:
                    out.append((start, start + length))
            elif code == DW_RLE_offset_pair:
                start, end = r.uleb(), r.uleb()
                if end > start:
                    out.append((base + start, base + end))
            elif code == DW_RLE_base_address:
                base = r.uint(cu.address_size)
            elif code == DW_RLE_start_end:
                start = r.uint(cu.address_size)
                end = r.uint(cu.address_size)
                if end > start:
                    out.append((start, end))
            elif code == DW_RLE_start_length:
                start = r.uint(cu.address_size)
                length = r.uleb()
                if length:
                    out.append((start, start + length))
            else:
                raise DwarfError(f"unknown range list entry {code:#x}")

    def _ranges_at(self, cu: CompileUnit, offset: int) -> list[tuple[int, int]]:
        r = Reader(self.sections.get(".debug_ranges", b""), offset)
        base = cu.base_address()
        max_addr = (1 << (cu.address_size * 8)) - 1
        out: list[tuple[int, int]] = []
        while True:
            begin = r.uint(cu.address_size)
            end = r.uint(cu.address_size)
            if begin == 0 and end == 0:
                return out
            if begin == max_addr:
                base = end
            elif end > begin:
                out.append((base + begin, base + end))

    # -- line-number program --------------------------------------------------

    def line_rows(self, cu: CompileUnit) -> list[LineRow]:
        """Run the line program of one unit; rows keep duplicate addresses."""
        pair = cu.root.attrs.get(DW_AT_stmt_list)
        if pair is None:
            return []
        return self._run_line_program(cu, pair[1])

    def line_file_table(self, cu: CompileUnit) -> list[str]:
        """Resolved source paths of the unit's file table, in file-index order."""
        pair = cu.root.attrs.get(DW_AT_stmt_list)
        if pair is None:
            return []
        return self._parse_line_header(cu, pair[1])[1]

    def _parse_line_header(self, cu: CompileUnit, offset: int):
        """Returns (reader positioned at the program, file paths, header meta)."""
        data = self.sections.get(".debug_line", b"")
        r = Reader(data, offset)
        unit_length = r.u32()
        if unit_length == 0xFFFFFFFF:
            raise DwarfError("DWARF64 line table not supported")
        unit_end = r.pos + unit_length
        version = r.u16()
        if version < 2 or version > 5:
            raise DwarfError(f"unsupported line table version {version}")
        if version >= 5:
            address_size = r.u8()
            r.u8()  # segment selector size
        else:
            address_size = cu.address_size
        header_length = r.u32()
        program_start = r.pos + header_length
        min_inst = r.u8()
        max_ops = r.u8() if version >= 4 else 1
        default_is_stmt = r.u8() != 0
        line_base = struct.unpack("b", r.bytes(1))[0]
        line_range = r.u8()
        opcode_base = r.u8()
        std_lengths = [r.u8() for _ in range(opcode_base - 1)]

        comp_dir = cu.comp_dir or ""
        dirs: list[str] = []
        files: list[tuple[str, int]] = []  # (name, dir index)
        if version >= 5:
            dir_formats = [(r.uleb(), r.uleb()) for _ in range(r.u8())]
            for _ in range(r.uleb()):
                entry = self._read_entry(r, dir_formats, cu)
                dirs.append(str(entry.get(DW_LNCT_path, "")))
            file_formats = [(r.uleb(), r.uleb()) for _ in range(r.u8())]
            for _ in range(r.uleb()):
                entry = self._read_entry(r, file_formats, cu)
                files.append((str(entry.get(DW_LNCT_path, "")), int(entry.get(DW_LNCT_directory_index, 0))))
        else:
            while True:
                name = r.cstr()
                if not name:
                    break
                dirs.append(name)
            while True:
                name = r.cstr()
                if not name:
                    break
                dir_index = r.uleb()
                r.uleb()  # mtime
                r.uleb()  # size
                files.append((name, dir_index))

        def resolve(name: str, dir_index: int) -> str:
            if name.startswith("/"):
                return name
            if version >= 5:
                directory = dirs[dir_index] if dir_index < len(dirs) else ""
            else:
                directory = "" if dir_index == 0 else dirs[dir_index - 1] if dir_index - 1 < len(dirs) else ""
            path = f"{directory}/{name}" if directory else name
            if path.startswith("/"):
                return path
            return f"{comp_dir}/{path}" if comp_dir else path

        paths = [resolve(name, dir_index) for name, dir_index in files]
        meta = {
            "version": version,
            "address_size": address_size,
            "min_inst": min_inst,
            "max_ops": max_ops or 1,
            "default_is_stmt": default_is_stmt,
            "line_base": line_base,
            "line_range": line_range,
            "opcode_base": opcode_base,
            "std_lengths": std_lengths,
            "program_start": program_start,
            "unit_end": unit_end,
        }
        return r, paths, meta

    def _read_entry(self, r: Reader, formats, cu: CompileUnit) -> dict[int, object]:
        entry: dict[int, object] = {}
        for content, form in formats:
            _, value = self._read_form(r, form, cu, None)
            entry[content] = value
        return entry

    def _run_line_program(self, cu: CompileUnit, offset: int) -> list[LineRow]:
        r, paths, meta = self._parse_line_header(cu, offset)
        r.pos = meta["program_start"]
        version = meta["version"]
        default_file = 1  # initial file register value in every DWARF version

        def path_of(index: int) -> str:
            if version < 5:
                index -= 1  # v2-4 file numbering starts at 1
            if 0 <= index < len(paths):
                return paths[index]
            return f"<file#{index}>"

        rows: list[LineRow] = []
        address = op_index = 0
        file_idx, line, column = default_file, 1, 0
        is_stmt = meta["default_is_stmt"]

        def emit(end_sequence: bool = False) -> None:
            rows.append(LineRow(address, path_of(file_idx), line, column, is_stmt, end_sequence))

        def advance(op_advance: int) -> None:
            nonlocal address, op_index
            max_ops = meta["max_ops"]
            address += meta["min_inst"] * ((op_index + op_advance) // max_ops)
            op_index = (op_index + op_advance) % max_ops

        while r.pos < meta["unit_end"]:
            opcode = r.u8()
            if opcode >= meta["opcode_base"]:
                adjusted = opcode - meta["opcode_base"]
                advance(adjusted // meta["line_range"])
                line += meta["line_base"] + adjusted % meta["line_range"]
                emit()
            elif opcode == 0:  # extended
                length = r.uleb()
                sub_end = r.pos + length
                sub = r.u8()
                if sub == 1:  # end_sequence
                    emit(end_sequence=True)
                    address = op_index = 0
                    file_idx, line, column = default_file, 1, 0
                    is_stmt = meta["default_is_stmt"]
                elif sub == 2:  # set_address
                    address = r.uint(meta["address_size"])
                    op_index = 0
                elif sub == 3 and version < 5:  # define_file
                    name = r.cstr()
                    r.uleb(), r.uleb(), r.uleb()
                    paths.append(name)
                r.pos = sub_end
            elif opcode == 1:  # copy
                emit()
            elif opcode == 2:  # advance_pc
                advance(r.uleb())
            elif opcode == 3:  # advance_line
                line += r.sleb()
            elif opcode == 4:  # set_file
                file_idx = r.uleb()
            elif opcode == 5:  # set_column
                column = r.uleb()
            elif opcode == 6:  # negate_stmt
                is_stmt = not is_stmt
            elif opcode == 7:  # basic_block
                pass
            elif opcode == 8:  # const_add_pc
                advance((255 - meta["opcode_base"]) // meta["line_range"])
            elif opcode == 9:  # fixed_advance_pc
                address += r.u16()
                op_index = 0
            elif opcode in (10, 11):  # prologue_end / epilogue_begin
                pass
            elif opcode == 12:  # set_isa
                r.uleb()
            else:  # unknown standard opcode: skip declared operands
                for _ in range(meta["std_lengths"][opcode - 1]):
                    r.uleb()
        return rows
