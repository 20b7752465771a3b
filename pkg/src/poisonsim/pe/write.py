"""PE32+ writer and the canonical import-section builder.

The write path targets x64 images only; x86 images parse fine but are never
re-emitted.  Unmodeled header fields (linker versions, stack reserves, ...)
are regenerated as fixed boilerplate, so two images that are structurally
equal always serialize to the same canonical byte stream.
"""

from __future__ import annotations

import struct

from ..errors import InvariantViolation, UnsupportedImage
from .model import ImportDescriptor, Machine, PEImage, Section, align_up
from .model import SCN_CNT_CODE, SCN_CNT_INITIALIZED_DATA

_DOS_STUB_DEFAULT = (
    b"\x0e\x1f\xba\x0e\x00\xb4\x09\xcd\x21\xb8\x01\x4c\xcd\x21"
    b"This program cannot be run in DOS mode.\r\r\n$"
)

_COFF_CHARACTERISTICS = 0x0022  # EXECUTABLE_IMAGE | LARGE_ADDRESS_AWARE
_DLL_CHARACTERISTICS = 0x8160
_ORDINAL_FLAG64 = 0x8000000000000000


def default_dos_stub() -> bytes:
    return _DOS_STUB_DEFAULT


def make_section(
    name: str,
    data: bytes,
    virtual_address: int,
    characteristics: int,
    file_alignment: int,
    virtual_size: int | None = None,
) -> Section:
    """Section with raw layout left for the writer to place."""
    raw_size = align_up(len(data), file_alignment) if data else 0
    return Section(
        name=name,
        virtual_size=len(data) if virtual_size is None else virtual_size,
        virtual_address=virtual_address,
        raw_size=raw_size,
        raw_offset=0,
        characteristics=characteristics,
        data=data,
    )


def build_import_section(
    descriptors: tuple[ImportDescriptor, ...], base_rva: int
) -> tuple[bytes, tuple[int, int], tuple[int, int]]:
    """Lay out a complete x64 import table at `base_rva`.

    Returns (payload, import_dir, iat_dir) where the dirs are (rva, size)
    pairs for the optional header's data directories.
    """
    n = len(descriptors)
    dir_size = (n + 1) * 20
    thunk_sizes = [(len(d.functions) + 1) * 8 for d in descriptors]

    ilt_offsets = []
    cursor = dir_size
    for size in thunk_sizes:
        ilt_offsets.append(cursor)
        cursor += size
    iat_block_start = cursor
    iat_offsets = []
    for size in thunk_sizes:
        iat_offsets.append(cursor)
        cursor += size
    iat_block_size = cursor - iat_block_start

    hint_offsets: dict[tuple[int, str], int] = {}
    for i, desc in enumerate(descriptors):
        for fn in desc.functions:
            if fn.startswith("#"):
                continue
            hint_offsets[(i, fn)] = cursor
            entry_len = 2 + len(fn) + 1
            cursor += entry_len + (entry_len & 1)  # pad names to even length

    name_offsets = []
    for desc in descriptors:
        name_offsets.append(cursor)
        cursor += len(desc.dll_name) + 1

    payload = bytearray(cursor)
    for i, desc in enumerate(descriptors):
        struct.pack_into(
            "<IIIII",
            payload,
            i * 20,
            base_rva + ilt_offsets[i],
            0,
            0,
            base_rva + name_offsets[i],
            base_rva + iat_offsets[i],
        )
        for j, fn in enumerate(desc.functions):
            if fn.startswith("#"):
                try:
                    value = _ORDINAL_FLAG64 | (int(fn[1:]) & 0xFFFF)
                except ValueError:
                    raise InvariantViolation(f"bad ordinal import {fn!r}") from None
            else:
                value = base_rva + hint_offsets[(i, fn)]
            struct.pack_into("<Q", payload, ilt_offsets[i] + j * 8, value)
            struct.pack_into("<Q", payload, iat_offsets[i] + j * 8, value)
        struct.pack_into(
            f"<{len(desc.dll_name)}sB",
            payload,
            name_offsets[i],
            desc.dll_name.encode("latin-1"),
            0,
        )
    for (i, fn), off in hint_offsets.items():
        struct.pack_into("<H", payload, off, 0)
        payload[off + 2 : off + 2 + len(fn)] = fn.encode("latin-1")

    return (
        bytes(payload),
        (base_rva, dir_size),
        (base_rva + iat_block_start, iat_block_size),
    )


def serialize(image: PEImage) -> bytes:
    """Emit a valid PE32+ byte stream for `image`."""
    image.validate()
    if image.machine is not Machine.X64:
        raise UnsupportedImage("only x64 images are re-serialized")

    file_align = image.file_alignment
    e_lfanew = 64 + len(image.dos_stub)
    header_core = (
        e_lfanew + 4 + 20 + 240 + 40 * len(image.sections)
    )
    size_of_headers = align_up(header_core, file_align)

    # Raw layout: sections in VA order, each at the next aligned offset.
    placed = []
    cursor = size_of_headers
    for section in image.sections:
        if section.data:
            raw_size = align_up(len(section.data), file_align)
            placed.append((section, cursor, raw_size))
            cursor += raw_size
        else:
            placed.append((section, 0, 0))
    total_raw = cursor

    size_of_code = sum(
        raw for sec, _, raw in placed if sec.characteristics & SCN_CNT_CODE
    )
    size_of_init = sum(
        raw
        for sec, _, raw in placed
        if sec.characteristics & SCN_CNT_INITIALIZED_DATA
    )
    base_of_code = next(
        (
            sec.virtual_address
            for sec, _, _ in placed
            if sec.characteristics & SCN_CNT_CODE
        ),
        0,
    )
    size_of_image = (
        image.virtual_extent()
        or align_up(size_of_headers, image.section_alignment)
    )

    out = bytearray(total_raw)
    # DOS header: only e_magic and e_lfanew matter to anyone downstream.
    out[0:2] = b"MZ"
    struct.pack_into("<I", out, 0x3C, e_lfanew)
    out[64:e_lfanew] = image.dos_stub
    out[e_lfanew : e_lfanew + 4] = b"PE\x00\x00"

    coff = e_lfanew + 4
    struct.pack_into(
        "<HHIIIHH",
        out,
        coff,
        image.machine.value,
        len(image.sections),
        image.timestamp,
        0,
        0,
        240,
        _COFF_CHARACTERISTICS,
    )

    opt = coff + 20
    struct.pack_into(
        "<HBBIIIII",
        out,
        opt,
        0x20B,
        14,
        0,
        size_of_code,
        size_of_init,
        0,
        image.entry_point_rva,
        base_of_code,
    )
    struct.pack_into(
        "<QIIHHHHHHIIIIHHQQQQII",
        out,
        opt + 24,
        image.image_base,
        image.section_alignment,
        image.file_alignment,
        6, 0,            # OS version
        0, 0,            # image version
        6, 0,            # subsystem version
        0,               # win32 version
        size_of_image,
        size_of_headers,
        image.checksum,
        image.subsystem,
        _DLL_CHARACTERISTICS,
        0x100000, 0x1000,  # stack reserve/commit
        0x100000, 0x1000,  # heap reserve/commit
        0,
        16,
    )
    dirs = opt + 112
    struct.pack_into("<II", out, dirs + 8, *image.import_dir)
    struct.pack_into("<II", out, dirs + 96, *image.iat_dir)

    row = opt + 240
    for section, raw_offset, raw_size in placed:
        struct.pack_into(
            "<8sIIIIIIHHI",
            out,
            row,
            section.name.encode("latin-1"),
            section.virtual_size,
            section.virtual_address,
            raw_size,
            raw_offset,
            0,
            0,
            0,
            0,
            section.characteristics,
        )
        row += 40
        if raw_size:
            out[raw_offset : raw_offset + len(section.data)] = section.data

    return bytes(out) + image.overlay


def neutralize_artifacts(image: PEImage) -> PEImage:
    """Zero the timestamp and checksum header fields; idempotent."""
    return image.neutralized()
