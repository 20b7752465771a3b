"""Locality-sensitive fuzzy digests and near-duplicate removal.

Implements the widely published 128-bucket / 1-byte-checksum digest
construction ("T1" form): a 5-byte window slides over the input, six
Pearson-hashed byte triplets per step increment 128 buckets, and the
bucket counts are quartile-coded into a 32-byte body.  Distances combine
header sub-distances (length, quartile ratios, checksum) with the body's
2-bit-cell difference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputTooSmall

logger = logging.getLogger(__name__)

MIN_INPUT_LENGTH = 50
DEFAULT_THRESHOLD = 30

# Pearson's permutation table, shared with the published construction.
_PERM = np.array([
    1, 87, 49, 12, 176, 178, 102, 166, 121, 193, 6, 84, 249, 230, 44, 163,
    14, 197, 213, 181, 161, 85, 218, 80, 64, 239, 24, 226, 236, 142, 38, 200,
    110, 177, 104, 103, 141, 253, 255, 50, 77, 101, 81, 18, 45, 96, 31, 222,
    25, 107, 190, 70, 86, 237, 240, 34, 72, 242, 20, 214, 244, 227, 149, 235,
    97, 234, 57, 22, 60, 250, 82, 175, 208, 5, 127, 199, 111, 62, 135, 248,
    174, 169, 211, 58, 66, 154, 106, 195, 245, 171, 17, 187, 182, 179, 0, 243,
    132, 56, 148, 75, 128, 133, 158, 100, 130, 126, 91, 13, 153, 246, 216, 219,
    119, 68, 223, 78, 83, 88, 201, 99, 122, 11, 92, 32, 136, 114, 52, 10,
    138, 30, 48, 183, 156, 35, 61, 26, 143, 74, 251, 94, 129, 162, 63, 152,
    170, 7, 115, 167, 241, 206, 3, 150, 55, 59, 151, 220, 90, 53, 23, 131,
    125, 173, 15, 238, 79, 95, 89, 16, 105, 137, 225, 224, 217, 160, 37, 123,
    118, 73, 2, 157, 46, 116, 9, 145, 134, 228, 207, 212, 202, 215, 69, 229,
    27, 188, 67, 124, 168, 252, 42, 4, 29, 108, 21, 247, 19, 205, 39, 203,
    233, 40, 186, 147, 198, 192, 155, 33, 164, 191, 98, 204, 165, 180, 117, 76,
    140, 36, 210, 172, 41, 54, 159, 8, 185, 232, 113, 196, 231, 47, 146, 120,
    51, 65, 28, 144, 254, 221, 93, 189, 194, 139, 112, 43, 71, 109, 184, 209,
], dtype=np.uint8)

# Checksum chain: c <- PERM[m ^ c] for a per-window mixing byte m.  One
# 256-entry translation table per possible m keeps the sequential loop to
# a single lookup per window.
_CHAIN = [bytes(_PERM[m ^ x] for x in range(256)) for m in range(256)]

# Per-pair body cost: sum over four 2-bit cells of |a - b|, with full-range
# disagreement (3) priced at 6.
_CELL_COST = np.array([0, 1, 2, 6], dtype=np.int64)


def _build_pair_cost() -> np.ndarray:
    values = np.arange(256, dtype=np.int64)
    total = np.zeros((256, 256), dtype=np.int64)
    for shift in (0, 2, 4, 6):
        a = (values >> shift) & 3
        b = (values >> shift) & 3
        total += _CELL_COST[np.abs(a[:, None] - b[None, :])]
    return total


_PAIR_COST = _build_pair_cost()


@dataclass(frozen=True)
class LshDigest:
    """T1-form digest: header bytes plus the 32-byte bucket-code body."""

    checksum: int
    log_length: int
    q1_ratio: int
    q2_ratio: int
    body: bytes  # 32 bucket-code bytes, low bucket first

    def hex(self) -> str:
        """Canonical 72-char rendering: 'T1' + 70 uppercase hex chars."""
        head = bytes([
            _swap_nibbles(self.checksum),
            _swap_nibbles(self.log_length),
            (self.q1_ratio << 4) | self.q2_ratio,
        ])
        return "T1" + (head + self.body[::-1]).hex().upper()

    @classmethod
    def from_hex(cls, text: str) -> "LshDigest":
        if not text.startswith("T1") or len(text) != 72:
            raise ValueError(f"not a T1 digest: {text!r}")
        raw = bytes.fromhex(text[2:])
        return cls(
            checksum=_swap_nibbles(raw[0]),
            log_length=_swap_nibbles(raw[1]),
            q1_ratio=raw[2] >> 4,
            q2_ratio=raw[2] & 0x0F,
            body=raw[3:][::-1],
        )


def _swap_nibbles(value: int) -> int:
    return ((value & 0x0F) << 4) | (value >> 4)


def _log_length(n: int) -> int:
    if n <= 656:
        value = math.floor(math.log(n) / math.log(1.5))
    elif n <= 3199:
        value = math.floor(math.log(n) / math.log(1.3) - 8.72777)
    else:
        value = math.floor(math.log(n) / math.log(1.1) - 62.5472)
    return value & 0xFF


def digest(data: bytes) -> LshDigest:
    """Digest a byte stream; requires at least 50 bytes for stable quartiles."""
    n = len(data)
    if n < MIN_INPUT_LENGTH:
        raise InputTooSmall(f"{n} bytes < minimum {MIN_INPUT_LENGTH}")

    arr = np.frombuffer(data, dtype=np.uint8)
    # Window columns relative to position i: b0 = newest byte, b4 = oldest.
    b0 = arr[4:]
    b1 = arr[3:-1]
    b2 = arr[2:-2]
    b3 = arr[1:-3]
    b4 = arr[:-4]

    def pearson(salt: int, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        h = _PERM[_PERM[_PERM[np.uint8(_PERM[salt]) ^ x] ^ y] ^ z]
        return h

    buckets = np.zeros(256, dtype=np.int64)
    for salt, x, y, z in (
        (2, b0, b1, b2),
        (3, b0, b1, b3),
        (5, b0, b2, b3),
        (7, b0, b2, b4),
        (11, b0, b1, b4),
        (13, b0, b3, b4),
    ):
        buckets += np.bincount(pearson(salt, x, y, z), minlength=256)

    # Checksum step is PERM[PERM[PERM[PERM[0] ^ b0] ^ b1] ^ c]; the first
    # three lookups are independent of the running value and vectorize.
    mix = _PERM[_PERM[np.uint8(_PERM[0]) ^ b0] ^ b1].tobytes()
    checksum = 0
    for m in mix:
        checksum = _CHAIN[m][checksum]

    active = buckets[:128]
    ranked = np.sort(active)
    q1, q2, q3 = int(ranked[31]), int(ranked[63]), int(ranked[95])
    q1_ratio = (q1 * 100 // q3) % 16 if q3 else 0
    q2_ratio = (q2 * 100 // q3) % 16 if q3 else 0

    cells = (
        (active > q1).astype(np.uint8)
        + (active > q2).astype(np.uint8)
        + (active > q3).astype(np.uint8)
    )
    shifts = np.array([0, 2, 4, 6], dtype=np.uint8)
    body = (cells.reshape(32, 4) << shifts).sum(axis=1).astype(np.uint8)

    return LshDigest(
        checksum=checksum,
        log_length=_log_length(n),
        q1_ratio=q1_ratio,
        q2_ratio=q2_ratio,
        body=body.tobytes(),
    )


def _mod_diff(a: int, b: int, span: int) -> int:
    d = abs(a - b)
    return min(d, span - d)


def _header_distance(a: LshDigest, b: LshDigest) -> int:
    total = 0
    ldiff = _mod_diff(a.log_length, b.log_length, 256)
    total += ldiff if ldiff <= 1 else ldiff * 12
    for qa, qb in ((a.q1_ratio, b.q1_ratio), (a.q2_ratio, b.q2_ratio)):
        qdiff = _mod_diff(qa, qb, 16)
        total += qdiff if qdiff <= 1 else (qdiff - 1) * 12
    if a.checksum != b.checksum:
        total += 1
    return total


def distance(a: LshDigest, b: LshDigest) -> int:
    """Symmetric non-negative score; 0 for identical digests."""
    body_a = np.frombuffer(a.body, dtype=np.uint8)
    body_b = np.frombuffer(b.body, dtype=np.uint8)
    return _header_distance(a, b) + int(_PAIR_COST[body_a, body_b].sum())


def _distances_to_many(probe: LshDigest, others: list[LshDigest]) -> np.ndarray:
    """Vectorized distance from one digest to a batch."""
    if not others:
        return np.zeros(0, dtype=np.int64)
    probe_body = np.frombuffer(probe.body, dtype=np.uint8)
    bodies = np.frombuffer(b"".join(o.body for o in others), dtype=np.uint8)
    body_cost = _PAIR_COST[probe_body[None, :], bodies.reshape(len(others), 32)].sum(axis=1)
    header = np.fromiter(
        (_header_distance(probe, o) for o in others), dtype=np.int64, count=len(others)
    )
    return header + body_cost


def deduplicate(samples, threshold: int = DEFAULT_THRESHOLD, *, digests=None):
    """Greedy first-seen-wins near-duplicate removal, same-class only.

    A sample is dropped iff its distance to an already-kept sample of the
    same class is <= threshold; input order is preserved.  Cross-class
    near-collisions are logged as warnings but never dropped.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    kept = []
    kept_digests: dict[int, list[LshDigest]] = {0: [], 1: []}
    cross_collisions = 0
    for i, sample in enumerate(samples):
        d = digests[i] if digests is not None else digest(sample.file_bytes())
        label = int(sample.label)
        same = kept_digests[label]
        if same and (_distances_to_many(d, same) <= threshold).any():
            continue
        other = kept_digests[1 - label]
        if other and (_distances_to_many(d, other) <= threshold).any():
            cross_collisions += 1
        kept.append(sample)
        same.append(d)
    if cross_collisions:
        logger.warning(
            "%d kept samples sit within distance %d of the opposite class",
            cross_collisions,
            threshold,
        )
    return kept
