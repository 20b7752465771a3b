"""Row-aligned feature matrix with ids and binary labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TooFewSamples


@dataclass
class Dataset:
    ids: list[str]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int8)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if not (len(self.ids) == self.X.shape[0] == self.y.shape[0]):
            raise ValueError("ids, X, and y must be row-aligned")
        if not np.isfinite(self.X).all():
            raise ValueError("X contains NaN or Inf")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset([self.ids[i] for i in idx], self.X[idx], self.y[idx])


def stratified_split(
    data: Dataset, holdout_fraction: float, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """(fit, holdout) split preserving class balance; deterministic per rng."""
    fit_idx, hold_idx = [], []
    for label in (0, 1):
        rows = np.nonzero(data.y == label)[0]
        if len(rows) < 2:
            raise TooFewSamples(f"class {label} has {len(rows)} samples")
        perm = rng.permutation(rows)
        n_hold = max(1, int(round(holdout_fraction * len(rows))))
        hold_idx.append(perm[:n_hold])
        fit_idx.append(perm[n_hold:])
    fit = np.sort(np.concatenate(fit_idx))
    hold = np.sort(np.concatenate(hold_idx))
    return data.subset(fit), data.subset(hold)
