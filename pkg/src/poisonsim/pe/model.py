"""Structured, re-serializable model of a PE32/PE32+ image.

The model keeps exactly the fields the rest of the system manipulates
(sections, imports, a handful of header scalars) and treats everything
else as canonical boilerplate regenerated on write.  Raw section payloads
are carried verbatim so rewrites never disturb existing content.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from ..errors import AlignmentViolation, InvariantViolation, OverlappingSections

# Section characteristic flags (subset we care about).
SCN_CNT_CODE = 0x00000020
SCN_CNT_INITIALIZED_DATA = 0x00000040
SCN_MEM_DISCARDABLE = 0x02000000
SCN_MEM_EXECUTE = 0x20000000
SCN_MEM_READ = 0x40000000
SCN_MEM_WRITE = 0x80000000

#: Flags given to injected payload sections: readable initialized data,
#: never executable.
DATA_SECTION_FLAGS = SCN_MEM_READ | SCN_CNT_INITIALIZED_DATA

MAX_RVA = 0xFFFFFFFF


class Machine(enum.Enum):
    X86 = 0x014C
    X64 = 0x8664


def align_up(value: int, alignment: int) -> int:
    return (value + alignment - 1) & ~(alignment - 1)


@dataclass(frozen=True)
class Section:
    """One section: header fields plus its raw payload."""

    name: str
    virtual_size: int
    virtual_address: int
    raw_size: int
    raw_offset: int
    characteristics: int
    data: bytes

    def __post_init__(self):
        if len(self.name.encode("latin-1")) > 8:
            raise InvariantViolation(f"section name {self.name!r} exceeds 8 bytes")
        if len(self.data) > self.raw_size and self.raw_size != 0:
            raise InvariantViolation(
                f"section {self.name!r}: data length {len(self.data)} "
                f"> raw_size {self.raw_size}"
            )

    @property
    def virtual_end(self) -> int:
        return self.virtual_address + self.virtual_size

    def contains_rva(self, rva: int) -> bool:
        return self.virtual_address <= rva < self.virtual_address + max(
            self.virtual_size, self.raw_size
        )


@dataclass(frozen=True)
class ImportDescriptor:
    """Imports from one DLL; ordinal imports are spelled '#<n>'."""

    dll_name: str
    functions: tuple[str, ...]

    def __post_init__(self):
        if not self.dll_name:
            raise InvariantViolation("import descriptor with empty dll name")
        if not self.functions:
            raise InvariantViolation(f"{self.dll_name}: no imported functions")
        if len(set(self.functions)) != len(self.functions):
            raise InvariantViolation(f"{self.dll_name}: duplicate function names")

    def pairs(self) -> set[tuple[str, str]]:
        key = self.dll_name.lower()
        return {(key, fn) for fn in self.functions}


@dataclass(frozen=True)
class PEImage:
    """Parsed image; safe to share between workers (fully immutable)."""

    machine: Machine
    timestamp: int
    checksum: int
    entry_point_rva: int
    image_base: int
    section_alignment: int
    file_alignment: int
    subsystem: int
    sections: tuple[Section, ...]
    imports: tuple[ImportDescriptor, ...]
    dos_stub: bytes = b""
    overlay: bytes = b""
    # Data-directory pointers into whichever section holds the import
    # machinery.  (0, 0) when there are no imports.
    import_dir: tuple[int, int] = (0, 0)
    iat_dir: tuple[int, int] = (0, 0)

    def section_named(self, name: str) -> Section | None:
        for section in self.sections:
            if section.name == name:
                return section
        return None

    def virtual_extent(self) -> int:
        """RVA one past the last mapped byte (header-only images: 0)."""
        if not self.sections:
            return 0
        last = self.sections[-1]
        return align_up(last.virtual_end, self.section_alignment)

    def import_pairs(self) -> set[tuple[str, str]]:
        pairs: set[tuple[str, str]] = set()
        for desc in self.imports:
            pairs |= desc.pairs()
        return pairs

    def validate(self) -> None:
        """Raise if any structural invariant is broken."""
        for alignment, label in (
            (self.section_alignment, "section_alignment"),
            (self.file_alignment, "file_alignment"),
        ):
            if alignment <= 0 or alignment & (alignment - 1):
                raise AlignmentViolation(f"{label} {alignment:#x} is not a power of two")
        if self.section_alignment < self.file_alignment:
            raise AlignmentViolation(
                f"section_alignment {self.section_alignment:#x} "
                f"< file_alignment {self.file_alignment:#x}"
            )
        prev_end = 0
        for section in self.sections:
            if section.virtual_address % self.section_alignment:
                raise AlignmentViolation(
                    f"section {section.name!r} VA {section.virtual_address:#x} "
                    f"not aligned to {self.section_alignment:#x}"
                )
            if section.virtual_address < prev_end:
                raise OverlappingSections(
                    f"section {section.name!r} begins at {section.virtual_address:#x} "
                    f"inside the previous section's range"
                )
            prev_end = section.virtual_address + max(section.virtual_size, 1)
        if self.entry_point_rva != 0 and not any(
            s.contains_rva(self.entry_point_rva) for s in self.sections
        ):
            raise InvariantViolation(
                f"entry point {self.entry_point_rva:#x} lies in no section"
            )

    def neutralized(self) -> "PEImage":
        """Copy with timestamp and checksum forced to zero."""
        if self.timestamp == 0 and self.checksum == 0:
            return self
        return replace(self, timestamp=0, checksum=0)


def _payload_equal(a: bytes, b: bytes) -> bool:
    # Alignment slack is zero-filled and semantically void.
    return a.rstrip(b"\x00") == b.rstrip(b"\x00")


def structurally_equal(a: PEImage, b: PEImage) -> bool:
    """Field-by-field equality, ignoring padding inside alignment slack."""
    if (
        a.machine != b.machine
        or a.timestamp != b.timestamp
        or a.checksum != b.checksum
        or a.entry_point_rva != b.entry_point_rva
        or a.image_base != b.image_base
        or a.section_alignment != b.section_alignment
        or a.file_alignment != b.file_alignment
        or a.subsystem != b.subsystem
        or a.dos_stub != b.dos_stub
        or a.overlay != b.overlay
        or a.imports != b.imports
        or len(a.sections) != len(b.sections)
    ):
        return False
    for sa, sb in zip(a.sections, b.sections):
        if (
            sa.name != sb.name
            or sa.virtual_size != sb.virtual_size
            or sa.virtual_address != sb.virtual_address
            or sa.characteristics != sb.characteristics
            or not _payload_equal(sa.data, sb.data)
        ):
            return False
    return True
