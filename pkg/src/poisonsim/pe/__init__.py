"""Minimal-but-real PE32/PE32+ parsing, rewriting, and re-serialization."""

from .model import (
    DATA_SECTION_FLAGS,
    SCN_CNT_CODE,
    SCN_CNT_INITIALIZED_DATA,
    SCN_MEM_EXECUTE,
    SCN_MEM_READ,
    SCN_MEM_WRITE,
    ImportDescriptor,
    Machine,
    PEImage,
    Section,
    align_up,
    structurally_equal,
)
from .parse import parse
from .write import (
    build_import_section,
    default_dos_stub,
    make_section,
    neutralize_artifacts,
    serialize,
)

__all__ = [
    "DATA_SECTION_FLAGS",
    "SCN_CNT_CODE",
    "SCN_CNT_INITIALIZED_DATA",
    "SCN_MEM_EXECUTE",
    "SCN_MEM_READ",
    "SCN_MEM_WRITE",
    "ImportDescriptor",
    "Machine",
    "PEImage",
    "Section",
    "align_up",
    "build_import_section",
    "default_dos_stub",
    "make_section",
    "neutralize_artifacts",
    "parse",
    "serialize",
    "structurally_equal",
]
