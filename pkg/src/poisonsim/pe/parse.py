"""PE32/PE32+ reader producing a PEImage.

Reads the subset of the format the simulator manipulates: COFF + optional
header scalars, the section table with raw payloads, and the import
directory resolved down to (dll, function) names.  Everything else stays
inside section payloads untouched.
"""

from __future__ import annotations

import struct

from ..errors import MalformedMagic, TruncatedHeader, UnsupportedImage
from .model import ImportDescriptor, Machine, PEImage, Section, align_up

_DOS_HEADER_LEN = 64
_COFF_LEN = 20
_SECTION_HEADER_LEN = 40

_PE32_MAGIC = 0x10B
_PE32PLUS_MAGIC = 0x20B

_ORDINAL_FLAG32 = 0x80000000
_ORDINAL_FLAG64 = 0x8000000000000000


def _u16(buf: bytes, off: int) -> int:
    return struct.unpack_from("<H", buf, off)[0]


def _u32(buf: bytes, off: int) -> int:
    return struct.unpack_from("<I", buf, off)[0]


def _u64(buf: bytes, off: int) -> int:
    return struct.unpack_from("<Q", buf, off)[0]


def _c_string(buf: bytes, off: int) -> str:
    end = buf.find(b"\x00", off)
    if end < 0:
        raise TruncatedHeader(f"unterminated string at offset {off:#x}")
    return buf[off:end].decode("latin-1")


class _RvaMap:
    """Map RVAs to file offsets through the section table."""

    def __init__(self, sections: tuple[Section, ...]):
        self._sections = sections

    def offset(self, rva: int) -> int:
        for section in self._sections:
            if section.contains_rva(rva):
                delta = rva - section.virtual_address
                if delta >= section.raw_size:
                    raise TruncatedHeader(
                        f"RVA {rva:#x} falls in uninitialized space of "
                        f"section {section.name!r}"
                    )
                return section.raw_offset + delta
        raise TruncatedHeader(f"RVA {rva:#x} maps to no section")


def parse(data: bytes) -> PEImage:
    """Parse raw bytes into a PEImage, validating structural invariants."""
    if len(data) < 2 or data[:2] != b"MZ":
        raise MalformedMagic("missing MZ signature")
    if len(data) < _DOS_HEADER_LEN:
        raise TruncatedHeader(f"{len(data)} bytes is too short for a DOS header")

    e_lfanew = _u32(data, 0x3C)
    if e_lfanew < _DOS_HEADER_LEN:
        raise MalformedMagic(f"e_lfanew {e_lfanew:#x} overlaps the DOS header")
    if e_lfanew + 4 + _COFF_LEN > len(data):
        raise TruncatedHeader("file ends inside the COFF header")
    if data[e_lfanew : e_lfanew + 4] != b"PE\x00\x00":
        raise MalformedMagic("missing PE signature")
    dos_stub = data[_DOS_HEADER_LEN:e_lfanew]

    coff = e_lfanew + 4
    machine_code = _u16(data, coff)
    n_sections = _u16(data, coff + 2)
    timestamp = _u32(data, coff + 4)
    size_opt = _u16(data, coff + 16)

    try:
        machine = Machine(machine_code)
    except ValueError:
        raise UnsupportedImage(f"machine {machine_code:#x} is not x86/x64") from None

    opt = coff + _COFF_LEN
    if opt + size_opt > len(data):
        raise TruncatedHeader("file ends inside the optional header")
    if size_opt < 2:
        raise TruncatedHeader("optional header too small for its magic")
    magic = _u16(data, opt)
    if magic == _PE32PLUS_MAGIC:
        image_base = _u64(data, opt + 24)
        dirs_off = opt + 112
        n_dirs = _u32(data, opt + 108)
    elif magic == _PE32_MAGIC:
        image_base = _u32(data, opt + 28)
        dirs_off = opt + 96
        n_dirs = _u32(data, opt + 92)
    else:
        raise MalformedMagic(f"optional header magic {magic:#x}")

    entry_point_rva = _u32(data, opt + 16)
    section_alignment = _u32(data, opt + 32)
    file_alignment = _u32(data, opt + 36)
    checksum = _u32(data, opt + 64)
    subsystem = _u16(data, opt + 68)

    import_dir = (0, 0)
    iat_dir = (0, 0)
    if n_dirs > 1:
        import_dir = (_u32(data, dirs_off + 8), _u32(data, dirs_off + 12))
    if n_dirs > 12:
        iat_dir = (_u32(data, dirs_off + 96), _u32(data, dirs_off + 100))

    headers_end = opt + size_opt + n_sections * _SECTION_HEADER_LEN
    if headers_end > len(data):
        raise TruncatedHeader("file ends inside the section table")

    sections = []
    raw_end = align_up(headers_end, file_alignment) if file_alignment else headers_end
    for i in range(n_sections):
        row = opt + size_opt + i * _SECTION_HEADER_LEN
        name = data[row : row + 8].rstrip(b"\x00").decode("latin-1")
        virtual_size = _u32(data, row + 8)
        virtual_address = _u32(data, row + 12)
        raw_size = _u32(data, row + 16)
        raw_offset = _u32(data, row + 20)
        characteristics = _u32(data, row + 36)
        if raw_offset + raw_size > len(data):
            raise TruncatedHeader(
                f"section {name!r} raw extent ends past the file"
            )
        sections.append(
            Section(
                name=name,
                virtual_size=virtual_size,
                virtual_address=virtual_address,
                raw_size=raw_size,
                raw_offset=raw_offset,
                characteristics=characteristics,
                data=data[raw_offset : raw_offset + raw_size],
            )
        )
        raw_end = max(raw_end, raw_offset + raw_size)

    image = PEImage(
        machine=machine,
        timestamp=timestamp,
        checksum=checksum,
        entry_point_rva=entry_point_rva,
        image_base=image_base,
        section_alignment=section_alignment,
        file_alignment=file_alignment,
        subsystem=subsystem,
        sections=tuple(sections),
        imports=_parse_imports(data, tuple(sections), import_dir, magic),
        dos_stub=dos_stub,
        overlay=data[raw_end:] if raw_end < len(data) else b"",
        import_dir=import_dir,
        iat_dir=iat_dir,
    )
    image.validate()
    return image


def _parse_imports(
    data: bytes,
    sections: tuple[Section, ...],
    import_dir: tuple[int, int],
    magic: int,
) -> tuple[ImportDescriptor, ...]:
    dir_rva = import_dir[0]
    if dir_rva == 0:
        return ()
    rva_map = _RvaMap(sections)
    thunk_size = 8 if magic == _PE32PLUS_MAGIC else 4
    ordinal_flag = _ORDINAL_FLAG64 if magic == _PE32PLUS_MAGIC else _ORDINAL_FLAG32

    descriptors = []
    row = rva_map.offset(dir_rva)
    while True:
        if row + 20 > len(data):
            raise TruncatedHeader("import directory runs past the file")
        entry = data[row : row + 20]
        if entry == b"\x00" * 20:
            break
        ilt_rva = _u32(entry, 0)
        name_rva = _u32(entry, 12)
        iat_rva = _u32(entry, 16)
        dll_name = _c_string(data, rva_map.offset(name_rva))

        functions = []
        thunk = rva_map.offset(ilt_rva if ilt_rva else iat_rva)
        while True:
            if thunk + thunk_size > len(data):
                raise TruncatedHeader("import thunk array runs past the file")
            value = (
                _u64(data, thunk) if thunk_size == 8 else _u32(data, thunk)
            )
            if value == 0:
                break
            if value & ordinal_flag:
                functions.append(f"#{value & 0xFFFF}")
            else:
                # Skip the 2-byte hint in front of the name.
                functions.append(_c_string(data, rva_map.offset(value & 0x7FFFFFFF) + 2))
            thunk += thunk_size
        descriptors.append(ImportDescriptor(dll_name, tuple(functions)))
        row += 20
    return tuple(descriptors)
