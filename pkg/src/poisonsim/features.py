"""Static feature views over PE byte streams.

Three single-view mappings (distributional, content, structural) plus
their fixed-order concatenation.  All views are deterministic functions
of the input bytes: the hashing trick uses 64-bit FNV-1a with seed 0, and
extraction happens after header-artifact neutralization so timestamps and
checksums leak nothing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .hashing import stable_hash64
from .pe import PEImage, neutralize_artifacts, serialize

DISTRIBUTIONAL_DIM = 512
CONTENT_DIM = 453
STRUCTURAL_DIM = 36
COMBINED_DIM = DISTRIBUTIONAL_DIM + CONTENT_DIM + STRUCTURAL_DIM

ENTROPY_WINDOW = 2048
_STRING_RUN = re.compile(rb"[\x20-\x7e]{5,}")

# Section characteristic bits counted by the structural view; the last
# histogram slot counts sections matching none of them.
_FLAG_BITS = (
    0x00000020,  # code
    0x00000040,  # initialized data
    0x00000080,  # uninitialized data
    0x00000200,  # link info
    0x00000800,  # link remove
    0x00001000,  # comdat
    0x00008000,  # gprel
    0x01000000,  # extended relocations
    0x02000000,  # discardable
    0x04000000,  # not cached
    0x08000000,  # not paged
    0x10000000,  # shared
    0x20000000,  # executable
    0x40000000,  # readable
    0x80000000,  # writable
)

_MIB = float(1 << 20)


def shannon_entropy(data: bytes) -> float:
    """Entropy of the byte distribution, in bits (0 for empty input)."""
    if not data:
        return 0.0
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(data)
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class DistributionalFeatures:
    byte_histogram: np.ndarray    # 256, sums to 1 for non-empty input
    entropy_histogram: np.ndarray  # 16 mean-byte buckets x 16 entropy buckets

    def vector(self) -> np.ndarray:
        return np.concatenate([self.byte_histogram, self.entropy_histogram.ravel()])


@dataclass(frozen=True)
class ContentFeatures:
    string_stats: np.ndarray       # count, mean length, max length
    string_hash_bins: np.ndarray   # 128
    dll_hash_bins: np.ndarray      # 64
    function_hash_bins: np.ndarray  # 256
    import_counts: np.ndarray      # n_dlls, n_functions

    def vector(self) -> np.ndarray:
        return np.concatenate([
            self.string_stats,
            self.string_hash_bins,
            self.dll_hash_bins,
            self.function_hash_bins,
            self.import_counts,
        ])


#: Index layout of the structural view.
STRUCTURAL_FIELDS = (
    "n_sections", "entry_point_rva_mib", "log2_section_alignment",
    "log2_file_alignment", "total_virtual_mib", "total_raw_mib",
    "entropy_min", "entropy_mean", "entropy_max",
    "raw_size_min_mib", "raw_size_mean_mib", "raw_size_max_mib",
    "virtual_size_min_mib", "virtual_size_mean_mib", "virtual_size_max_mib",
    *(f"flag_{i}" for i in range(16)),
    "has_overlay", "overlay_mib", "is_x64", "subsystem_scaled",
    "log2_image_base",
)


@dataclass(frozen=True)
class StructuralFeatures:
    values: np.ndarray  # len == STRUCTURAL_DIM, ordered per STRUCTURAL_FIELDS

    def vector(self) -> np.ndarray:
        return self.values

    def __getitem__(self, name: str) -> float:
        return float(self.values[STRUCTURAL_FIELDS.index(name)])


@dataclass(frozen=True)
class CombinedFeatures:
    distributional: DistributionalFeatures
    content: ContentFeatures
    structural: StructuralFeatures

    def vector(self) -> np.ndarray:
        return np.concatenate([
            self.distributional.vector(),
            self.content.vector(),
            self.structural.vector(),
        ])


def extract_distributional(data: bytes) -> DistributionalFeatures:
    """Byte histogram plus a (mean byte x entropy) window histogram."""
    if not data:
        return DistributionalFeatures(np.zeros(256), np.zeros((16, 16)))
    arr = np.frombuffer(data, dtype=np.uint8)
    byte_hist = np.bincount(arr, minlength=256).astype(np.float64)
    byte_hist /= byte_hist.sum()

    grid = np.zeros((16, 16))
    n_full = len(arr) // ENTROPY_WINDOW
    if n_full:
        windows = arr[: n_full * ENTROPY_WINDOW].reshape(n_full, ENTROPY_WINDOW)
        flat = (
            np.arange(n_full, dtype=np.int64)[:, None] * 256 + windows
        ).ravel()
        counts = np.bincount(flat, minlength=n_full * 256).reshape(n_full, 256)
        p = counts / ENTROPY_WINDOW
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(p > 0, p * np.log2(p), 0.0).sum(axis=1)
        mean_bucket = (windows.mean(axis=1).astype(np.int64) >> 4).clip(0, 15)
        ent_bucket = np.minimum((h * 2).astype(np.int64), 15)
        np.add.at(grid, (mean_bucket, ent_bucket), 1.0)
    tail = arr[n_full * ENTROPY_WINDOW :]
    if tail.size:
        h = shannon_entropy(tail.tobytes())
        grid[min(int(tail.mean()) >> 4, 15), min(int(h * 2), 15)] += 1.0
    grid /= grid.sum()
    return DistributionalFeatures(byte_hist, grid)


def _hashed_bins(tokens: list[bytes], n_bins: int) -> np.ndarray:
    bins = np.zeros(n_bins)
    for token in tokens:
        bins[stable_hash64(token) % n_bins] += 1.0
    total = bins.sum()
    if total:
        bins /= total
    return bins


def extract_content(image: PEImage, data: bytes) -> ContentFeatures:
    """Printable-string statistics plus hashed import features."""
    runs = _STRING_RUN.findall(data)
    if runs:
        lengths = np.array([len(r) for r in runs], dtype=np.float64)
        string_stats = np.array([len(runs), lengths.mean(), lengths.max()])
    else:
        string_stats = np.zeros(3)

    dll_tokens = [d.dll_name.lower().encode("latin-1") for d in image.imports]
    fn_tokens = [
        fn.encode("latin-1") for d in image.imports for fn in d.functions
    ]
    return ContentFeatures(
        string_stats=string_stats,
        string_hash_bins=_hashed_bins(runs, 128),
        dll_hash_bins=_hashed_bins(dll_tokens, 64),
        function_hash_bins=_hashed_bins(fn_tokens, 256),
        import_counts=np.array([len(image.imports), len(fn_tokens)], dtype=np.float64),
    )


def extract_structural(image: PEImage) -> StructuralFeatures:
    """Header- and section-shape summary of the image."""
    values = np.zeros(STRUCTURAL_DIM)
    sections = image.sections
    values[0] = len(sections)
    values[1] = image.entry_point_rva / _MIB
    values[2] = np.log2(image.section_alignment)
    values[3] = np.log2(image.file_alignment)
    if sections:
        entropies = np.array([shannon_entropy(s.data) for s in sections])
        raw_sizes = np.array([s.raw_size for s in sections]) / _MIB
        virt_sizes = np.array([s.virtual_size for s in sections]) / _MIB
        values[4] = virt_sizes.sum()
        values[5] = raw_sizes.sum()
        values[6:9] = entropies.min(), entropies.mean(), entropies.max()
        values[9:12] = raw_sizes.min(), raw_sizes.mean(), raw_sizes.max()
        values[12:15] = virt_sizes.min(), virt_sizes.mean(), virt_sizes.max()
        for section in sections:
            matched = False
            for i, bit in enumerate(_FLAG_BITS):
                if section.characteristics & bit:
                    values[15 + i] += 1.0
                    matched = True
            if not matched:
                values[15 + 15] += 1.0
    values[31] = 1.0 if image.overlay else 0.0
    values[32] = len(image.overlay) / _MIB
    values[33] = 1.0 if image.machine.name == "X64" else 0.0
    values[34] = image.subsystem / 16.0
    values[35] = np.log2(max(image.image_base, 1))
    return StructuralFeatures(values)


def extract_combined(image: PEImage, data: bytes) -> CombinedFeatures:
    """All three views over one serialized image, in fixed order."""
    return CombinedFeatures(
        distributional=extract_distributional(data),
        content=extract_content(image, data),
        structural=extract_structural(image),
    )


def feature_bytes(image: PEImage) -> bytes:
    """Canonical byte stream features are computed over (neutralized)."""
    return serialize(neutralize_artifacts(image))


def extract_for_image(image: PEImage) -> CombinedFeatures:
    """Neutralize, serialize, and extract all views in one call."""
    return extract_combined(neutralize_artifacts(image), feature_bytes(image))


VIEW_SLICES = {
    "distributional": slice(0, DISTRIBUTIONAL_DIM),
    "content": slice(DISTRIBUTIONAL_DIM, DISTRIBUTIONAL_DIM + CONTENT_DIM),
    "structural": slice(DISTRIBUTIONAL_DIM + CONTENT_DIM, COMBINED_DIM),
    "combined": slice(0, COMBINED_DIM),
}

VIEW_DIMS = {
    "distributional": DISTRIBUTIONAL_DIM,
    "content": CONTENT_DIM,
    "structural": STRUCTURAL_DIM,
    "combined": COMBINED_DIM,
}
