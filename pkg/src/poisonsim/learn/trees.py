"""Histogram-based regression tree used by both ensemble learners.

Split search quantizes every feature into 64 bins over its training
min/max; candidate thresholds are the 63 interior bin edges.  Growth is
best-first up to a leaf budget, with Newton leaf values -G/(H+l2).
Tie-breaking is deterministic: among equal gains the lowest feature
index wins, then the lowest threshold.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

N_BINS = 64


@dataclass
class Tree:
    """Flat-array binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int32)
        active = self.feature[idx] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            nodes = idx[rows]
            go_left = X[rows, self.feature[nodes]] <= self.threshold[nodes]
            idx[rows] = np.where(go_left, self.left[nodes], self.right[nodes])
            active = self.feature[idx] >= 0
        return self.value[idx]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


def bin_features(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize X column-wise; returns (binned uint8 matrix, edge matrix).

    edges[f] holds the 63 interior bin boundaries of feature f; bin index
    counts edges strictly below the value, so "bin <= j" means
    "x <= edges[f, j]".
    """
    n, d = X.shape
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    grid = np.linspace(lo, hi, N_BINS + 1, axis=1)
    edges = grid[:, 1:-1]
    binned = np.empty((n, d), dtype=np.uint8)
    for f in range(d):
        binned[:, f] = np.searchsorted(edges[f], X[:, f], side="left")
    return binned, edges


def _node_histograms(
    binned: np.ndarray, idx: np.ndarray, g: np.ndarray, h: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = binned.shape
    rows = binned[idx].astype(np.int64)
    rows += np.arange(d, dtype=np.int64) * N_BINS
    flat = rows.ravel()
    size = d * N_BINS
    g_hist = np.bincount(flat, weights=np.repeat(g[idx], d), minlength=size)
    h_hist = np.bincount(flat, weights=np.repeat(h[idx], d), minlength=size)
    c_hist = np.bincount(flat, minlength=size)
    return (
        g_hist.reshape(d, N_BINS),
        h_hist.reshape(d, N_BINS),
        c_hist.reshape(d, N_BINS),
    )


def _best_split(
    g_hist: np.ndarray,
    h_hist: np.ndarray,
    c_hist: np.ndarray,
    edges: np.ndarray,
    l2: float,
    min_samples_leaf: int,
    feature_subset: np.ndarray | None,
):
    """Return (gain, feature, threshold, bin_boundary) or None."""
    d = g_hist.shape[0]
    g_total = g_hist[0].sum()
    h_total = h_hist[0].sum()
    parent_score = g_total * g_total / (h_total + l2)

    gl = np.cumsum(g_hist[:, :-1], axis=1)
    hl = np.cumsum(h_hist[:, :-1], axis=1)
    cl = np.cumsum(c_hist[:, :-1], axis=1)
    cr = c_hist.sum(axis=1, keepdims=True) - cl
    gr = g_total - gl
    hr = h_total - hl

    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent_score)
    valid = (cl >= min_samples_leaf) & (cr >= min_samples_leaf)
    if feature_subset is not None:
        mask = np.zeros(d, dtype=bool)
        mask[feature_subset] = True
        valid &= mask[:, None]
    gain = np.where(valid, gain, -np.inf)

    # Lowest feature index, then lowest threshold, wins ties: argmax on the
    # row-major flattened array scans exactly in that order.
    flat_best = int(np.argmax(gain))
    best_gain = gain.ravel()[flat_best]
    if not np.isfinite(best_gain) or best_gain <= 0.0:
        return None
    feature, boundary = divmod(flat_best, gain.shape[1])
    return float(best_gain), int(feature), float(edges[feature, boundary]), int(boundary)


class _NodeState:
    __slots__ = ("idx", "depth", "hists", "split", "slot")

    def __init__(self, idx, depth, hists, split, slot):
        self.idx = idx
        self.depth = depth
        self.hists = hists
        self.split = split
        self.slot = slot


def grow_tree(
    binned: np.ndarray,
    edges: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    *,
    l2: float,
    min_samples_leaf: int,
    max_leaves: int,
    max_depth: int | None = None,
    rng: np.random.Generator | None = None,
    n_subset_features: int | None = None,
    sample_idx: np.ndarray | None = None,
) -> tuple[Tree, np.ndarray]:
    """Grow one tree best-first; returns (tree, per-sample predictions).

    The predictions cover rows of `binned` (all rows, or `sample_idx` rows
    duplicated as given, in which case the returned array is aligned with
    `binned` rows reached by the tree: callers use tree.predict for
    anything else).
    """
    n, d = binned.shape
    idx_all = np.arange(n) if sample_idx is None else sample_idx

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def leaf_value(idx: np.ndarray) -> float:
        return float(-g[idx].sum() / (h[idx].sum() + l2))

    def pick_subset() -> np.ndarray | None:
        if n_subset_features is None or n_subset_features >= d:
            return None
        return np.sort(rng.choice(d, size=n_subset_features, replace=False))

    def evaluate(idx: np.ndarray, depth: int, slot: int):
        hists = _node_histograms(binned, idx, g, h)
        if max_depth is not None and depth >= max_depth:
            split = None
        else:
            split = _best_split(
                *hists, edges, l2, min_samples_leaf, pick_subset()
            )
        return _NodeState(idx, depth, hists, split, slot)

    root_slot = new_node()
    heap: list[tuple[float, int, _NodeState]] = []
    seq = 0

    def push(state: _NodeState):
        nonlocal seq
        gain = state.split[0] if state.split else -np.inf
        heapq.heappush(heap, (-gain, seq, state))
        seq += 1

    push(evaluate(idx_all, 0, root_slot))
    n_leaves = 1
    assignments = np.full(len(binned), root_slot, dtype=np.int32)

    while heap and n_leaves < max_leaves:
        neg_gain, _, state = heapq.heappop(heap)
        if state.split is None or -neg_gain <= 0.0:
            break  # heap is gain-ordered; nothing left worth splitting
        _, f, thr, boundary = state.split
        go_left = binned[state.idx, f] <= boundary
        idx_left = state.idx[go_left]
        idx_right = state.idx[~go_left]

        slot = state.slot
        feature[slot] = f
        threshold[slot] = thr
        left_slot = new_node()
        right_slot = new_node()
        left[slot] = left_slot
        right[slot] = right_slot
        assignments[idx_left] = left_slot
        assignments[idx_right] = right_slot
        n_leaves += 1

        push(evaluate(idx_left, state.depth + 1, left_slot))
        push(evaluate(idx_right, state.depth + 1, right_slot))

    # Finalize every remaining candidate as a leaf.
    while heap:
        _, _, state = heapq.heappop(heap)
        value[state.slot] = leaf_value(state.idx)

    tree = Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value),
    )
    return tree, tree.value[assignments]
