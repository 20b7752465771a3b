"""Functionality-preserving PE rewrites: import and section injection.

Both primitives only append content.  Existing section payloads, the
entry point, and every pre-existing import pair survive byte-for-byte;
import injection rebuilds the full table into a fresh section at the end
of the address space and repoints the data directory, leaving the old
table in place as inert data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import DonorPool
from .errors import AddressSpaceExhausted
from .hashing import rng_for
from .pe import (
    DATA_SECTION_FLAGS,
    ImportDescriptor,
    PEImage,
    Section,
    align_up,
    build_import_section,
    make_section,
    neutralize_artifacts,
    serialize,
)
from .pe.model import MAX_RVA


@dataclass(frozen=True)
class ManipulationPlan:
    """Donor-pool indices chosen for one sample's rewrite."""

    iat_indices: tuple[int, ...] = ()
    section_indices: tuple[int, ...] = ()

    def is_empty(self) -> bool:
        return not self.iat_indices and not self.section_indices

    def resolve(self, pool: DonorPool) -> tuple[list[ImportDescriptor], list[Section]]:
        try:
            imports = [pool.imports[i] for i in self.iat_indices]
            sections = [pool.sections[i] for i in self.section_indices]
        except IndexError:
            raise IndexError("plan references material outside the donor pool") from None
        return imports, sections


@dataclass(frozen=True)
class SizeDelta:
    bytes_added: int

    @property
    def kib(self) -> float:
        return self.bytes_added / 1024.0


def _fresh_name(base: str, used: set[str]) -> str:
    if base not in used:
        return base
    stem = base[:6] if len(base) > 6 else base
    for i in range(1000):
        candidate = f"{stem}{i}"
        if len(candidate) <= 8 and candidate not in used:
            return candidate
        stem = stem[: 8 - len(str(i + 1))]
    raise AddressSpaceExhausted("no free section name")


def _next_va(image: PEImage) -> int:
    va = image.virtual_extent() or image.section_alignment
    return max(va, image.section_alignment)


def inject_iat(image: PEImage, imports: list[ImportDescriptor]) -> PEImage:
    """Add (dll, function) pairs; already-present pairs are skipped.

    Any net addition rebuilds the import table into a fresh section at the
    end of the image and repoints the import/IAT data directories there.
    """
    existing_pairs = image.import_pairs()
    merged = {d.dll_name.lower(): (d.dll_name, list(d.functions)) for d in image.imports}
    added = False
    for desc in imports:
        key = desc.dll_name.lower()
        for fn in desc.functions:
            if (key, fn) in existing_pairs:
                continue
            existing_pairs.add((key, fn))
            if key in merged:
                merged[key][1].append(fn)
            else:
                merged[key] = (desc.dll_name, [fn])
            added = True
    if not added:
        return image

    descriptors = tuple(
        ImportDescriptor(name, tuple(fns)) for name, fns in merged.values()
    )
    base_rva = _next_va(image)
    payload, import_dir, iat_dir = build_import_section(descriptors, base_rva)
    if base_rva + len(payload) > MAX_RVA:
        raise AddressSpaceExhausted("rebuilt import table exceeds the RVA space")
    used = {s.name for s in image.sections}
    section = make_section(
        _fresh_name(".idata", used), payload, base_rva, DATA_SECTION_FLAGS,
        image.file_alignment,
    )
    return replace(
        image,
        sections=image.sections + (section,),
        imports=descriptors,
        import_dir=import_dir,
        iat_dir=iat_dir,
    )


def inject_section(image: PEImage, payloads: list[Section]) -> PEImage:
    """Append donor payloads as fresh read-only data sections."""
    if not payloads:
        return image
    sections = list(image.sections)
    used = {s.name for s in sections}
    va = _next_va(image)
    for payload in payloads:
        name = _fresh_name(payload.name or ".don", used)
        used.add(name)
        size = max(len(payload.data), 1)
        if va + size > MAX_RVA:
            raise AddressSpaceExhausted(
                f"section {name!r} would end at {va + size:#x}"
            )
        sections.append(
            make_section(name, payload.data, va, DATA_SECTION_FLAGS,
                         image.file_alignment)
        )
        va = align_up(va + size, image.section_alignment)
    return replace(image, sections=tuple(sections))


def apply_plan(
    image: PEImage,
    plan: ManipulationPlan,
    pool: DonorPool,
    original_size: int | None = None,
) -> tuple[PEImage, SizeDelta]:
    """Imports first, then sections; output is re-neutralized."""
    imports, sections = plan.resolve(pool)
    mutated = inject_section(inject_iat(image, imports), sections)
    mutated = neutralize_artifacts(mutated)
    if original_size is None:
        original_size = len(serialize(neutralize_artifacts(image)))
    delta = len(serialize(mutated)) - original_size
    return mutated, SizeDelta(bytes_added=delta)


def random_plan(
    rng: np.random.Generator, pool: DonorPool, iat_budget: int, sec_budget: int
) -> ManipulationPlan:
    """Uniform random plan using the full budgets; handy for stress tests."""
    iat = tuple(
        int(i) for i in rng.integers(0, len(pool.imports), iat_budget)
    ) if pool.imports and iat_budget else ()
    sec = tuple(
        int(i) for i in rng.integers(0, len(pool.sections), sec_budget)
    ) if pool.sections and sec_budget else ()
    return ManipulationPlan(iat_indices=iat, section_indices=sec)
