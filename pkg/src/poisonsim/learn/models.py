"""Tree-ensemble models: logistic-loss boosting and a bagged forest.

Both model kinds share the histogram tree grower.  Boosting fits each
tree to logistic gradients g = p - y with hessians h = p(1 - p); the
forest grows squared-loss trees on bootstrap replicates, so leaves hold
class frequencies and the forest score is their mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabels, DimensionMismatch
from ..hashing import rng_for
from .dataset import Dataset
from .trees import Tree, bin_features, grow_tree


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logloss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    n_leaves: int = 31
    max_depth: int | None = None
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    l2: float = 1.0


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 100
    max_depth: int = 14
    n_leaves: int = 255
    feature_subsample: float | str = "sqrt"
    bootstrap: bool = True
    bootstrap_seed: int = 0
    min_samples_leaf: int = 2


@dataclass
class TreeEnsembleModel:
    """Trained ensemble with a deployable decision threshold."""

    kind: str  # "gbdt" | "random_forest"
    trees: list[Tree]
    n_features: int
    learning_rate: float = 1.0
    base_score: float = 0.0
    threshold: float = 0.5
    params: dict = field(default_factory=dict)
    train_logloss: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Scores in [0, 1] for a batch of rows."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected ({'n'}, {self.n_features}), got {X.shape}"
            )
        if self.kind == "gbdt":
            margin = np.full(len(X), self.base_score)
            for tree in self.trees:
                margin += self.learning_rate * tree.predict(X)
            return sigmoid(margin)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / max(len(self.trees), 1)

    def labels(self, X: np.ndarray) -> np.ndarray:
        return (self.predict(X) >= self.threshold).astype(np.int8)


def predict_proba(model: TreeEnsembleModel, x: np.ndarray) -> float:
    """Score for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise DimensionMismatch(
            f"expected ({model.n_features},), got {x.shape}"
        )
    return float(model.predict(x[None, :])[0])


def _check_labels(y: np.ndarray) -> None:
    if len(y) < 2:
        raise DegenerateLabels("need at least two samples")
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("training labels contain a single class")


def train_gbdt(train: Dataset, params: GbdtParams = GbdtParams()) -> TreeEnsembleModel:
    """Logistic-loss boosting; training logloss is recorded per round."""
    _check_labels(train.y)
    y = train.y.astype(np.float64)
    binned, edges = bin_features(train.X)

    prior = float(y.mean())
    base_score = float(np.log(prior / (1.0 - prior)))
    margin = np.full(len(y), base_score)

    trees: list[Tree] = []
    losses: list[float] = []
    for _ in range(params.n_trees):
        p = sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        tree, pred = grow_tree(
            binned, edges, g, h,
            l2=params.l2,
            min_samples_leaf=params.min_samples_leaf,
            max_leaves=params.n_leaves,
            max_depth=params.max_depth,
        )
        trees.append(tree)
        margin += params.learning_rate * pred
        losses.append(logloss(y, sigmoid(margin)))

    return TreeEnsembleModel(
        kind="gbdt",
        trees=trees,
        n_features=train.n_features,
        learning_rate=params.learning_rate,
        base_score=base_score,
        params=params.__dict__.copy(),
        train_logloss=losses,
    )


def _subset_size(spec: float | str, d: int) -> int | None:
    if spec is None:
        return None
    if spec == "sqrt":
        return max(1, int(round(np.sqrt(d))))
    if isinstance(spec, str):
        raise ValueError(f"unknown feature_subsample {spec!r}")
    if not 0 < spec <= 1:
        raise ValueError("feature_subsample fraction must be in (0, 1]")
    size = max(1, int(round(spec * d)))
    return None if size >= d else size


def train_random_forest(
    train: Dataset, params: RandomForestParams = RandomForestParams()
) -> TreeEnsembleModel:
    """Bagged squared-loss trees with per-node feature subsampling."""
    _check_labels(train.y)
    y = train.y.astype(np.float64)
    binned, edges = bin_features(train.X)
    n = len(y)
    n_subset = _subset_size(params.feature_subsample, train.n_features)

    trees: list[Tree] = []
    for t in range(params.n_trees):
        rng = rng_for(params.bootstrap_seed, "tree", t)
        idx = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
        tree, _ = grow_tree(
            binned, edges, -y, np.ones(n),
            l2=0.0,
            min_samples_leaf=params.min_samples_leaf,
            max_leaves=params.n_leaves,
            max_depth=params.max_depth,
            rng=rng,
            n_subset_features=n_subset,
            sample_idx=np.sort(idx),
        )
        trees.append(tree)

    return TreeEnsembleModel(
        kind="random_forest",
        trees=trees,
        n_features=train.n_features,
        params={**params.__dict__},
    )
