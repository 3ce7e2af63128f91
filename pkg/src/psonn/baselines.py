"""Comparison classifiers: entropy decision tree, random forest, Gaussian NB.

All models predict the probability of the positive class (label 1). The
backpropagation network baseline lives in :mod:`psonn.neural_net`.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .dataset import Dataset
from .errors import ConfigError, DataError

VAR_FLOOR = 1e-9
_GAIN_TOL = 1e-12


def entropy(n_pos, n_total):
    """Binary entropy in bits of a node with ``n_pos`` positives; vectorized."""
    n_pos = np.asarray(n_pos, dtype=np.float64)
    n_total = np.asarray(n_total, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n_total > 0, n_pos / np.where(n_total > 0, n_total, 1), 0.0)
        q = 1.0 - p
        h = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
              + np.where(q > 0, q * np.log2(np.where(q > 0, q, 1)), 0.0))
    return h


# --------------------------------------------------------------------------
# decision tree
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass(frozen=True)
class Leaf:
    n_pos: int
    n_neg: int

    @property
    def proba(self) -> float:
        # Laplace add-one over the two classes
        return (self.n_pos + 1) / (self.n_pos + self.n_neg + 2)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: Node
    right: Node


Node = Union[Leaf, Split]


def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": [node.n_pos, node.n_neg]}
    return {"feature": node.feature, "threshold": float(node.threshold).hex(),
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> Node:
    if "leaf" in d:
        return Leaf(*d["leaf"])
    return Split(d["feature"], float.fromhex(d["threshold"]),
                 _node_from_dict(d["left"]), _node_from_dict(d["right"]))


@dataclass(frozen=True)
class DecisionTree:
    root: Node
    n_features: int

    def predict_proba(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise DataError(f"input has {x.shape[1]} features, tree expects {self.n_features}")
        return np.array([_route(self.root, row).proba for row in x])

    def predict(self, features) -> np.ndarray:
        return (self.predict_proba(features) >= 0.5).astype(np.int64)

    def depth(self) -> int:
        def d(node):
            return 0 if isinstance(node, Leaf) else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def n_leaves(self) -> int:
        def c(node):
            return 1 if isinstance(node, Leaf) else c(node.left) + c(node.right)
        return c(self.root)

    def to_dict(self) -> dict:
        return {"n_features": self.n_features, "root": _node_to_dict(self.root)}

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        return cls(_node_from_dict(d["root"]), d["n_features"])


def _route(node: Node, row: np.ndarray) -> Leaf:
    while isinstance(node, Split):
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node


def best_split_for_feature(values: np.ndarray, labels: np.ndarray,
                           min_leaf: int = 1) -> tuple[float, float] | None:
    """Best ``(gain, threshold)`` over midpoints of sorted distinct values.

    Returns ``None`` when no threshold leaves ``min_leaf`` rows on each side.
    Among equal gains the lowest threshold wins.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    y = labels[order]
    n = v.shape[0]
    # candidate cut after position i (left = v[:i+1]) where the value changes
    cut = np.flatnonzero(v[1:] > v[:-1])
    if cut.size == 0:
        return None
    n_left = cut + 1
    ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    cut, n_left = cut[ok], n_left[ok]
    if cut.size == 0:
        return None
    pos_cum = np.cumsum(y)
    left_pos = pos_cum[cut]
    total_pos = pos_cum[-1]
    parent = entropy(total_pos, n)
    children = (n_left * entropy(left_pos, n_left)
                + (n - n_left) * entropy(total_pos - left_pos, n - n_left)) / n
    gains = parent - children
    best = int(np.argmax(gains >= gains.max() - _GAIN_TOL))
    threshold = (v[cut[best]] + v[cut[best] + 1]) / 2.0
    return float(gains[best]), float(threshold)


def choose_split(x: np.ndarray, y: np.ndarray, features, min_leaf: int = 1):
    """Pick ``(feature, threshold, gain)`` maximizing information gain.

    ``features`` are tried in the order given; a later feature replaces the
    incumbent only with a strictly larger gain, so ascending order breaks
    ties by lowest feature index.
    """
    best = None
    for f in features:
        found = best_split_for_feature(x[:, f], y, min_leaf)
        if found is None:
            continue
        gain, threshold = found
        if best is None or gain > best[2] + _GAIN_TOL:
            best = (int(f), threshold, gain)
    return best


def _grow(x, y, depth, cfg: TreeConfig, rng, feature_subset):
    n_pos = int(y.sum())
    n = y.shape[0]
    leaf = Leaf(n_pos, n - n_pos)
    if n_pos == 0 or n_pos == n:
        return leaf
    if cfg.max_depth is not None and depth >= cfg.max_depth:
        return leaf
    n_feat = x.shape[1]
    if rng is None or feature_subset >= n_feat:
        found = choose_split(x, y, range(n_feat), cfg.min_samples_leaf)
    else:
        perm = rng.permutation(n_feat)
        found = choose_split(x, y, np.sort(perm[:feature_subset]), cfg.min_samples_leaf)
        if found is None:
            # the sampled features cannot split this node; fall back to the rest
            found = choose_split(x, y, np.sort(perm[feature_subset:]), cfg.min_samples_leaf)
    if found is None:
        return leaf
    f, threshold, _ = found
    mask = x[:, f] <= threshold
    left = _grow(x[mask], y[mask], depth + 1, cfg, rng, feature_subset)
    right = _grow(x[~mask], y[~mask], depth + 1, cfg, rng, feature_subset)
    return Split(f, threshold, left, right)


def train_tree(train: Dataset, cfg: TreeConfig = TreeConfig(), *,
               rng: np.random.Generator | None = None,
               feature_subset: int | None = None) -> DecisionTree:
    """Greedy top-down induction with information gain.

    Impure nodes are split even at zero gain as long as some threshold
    exists, so an unlimited tree fits any data without contradictory rows.
    """
    if len(train) == 0:
        raise DataError("cannot grow a tree on an empty dataset")
    k = train.n_features if feature_subset is None else feature_subset
    root = _grow(train.features, train.labels, 0, cfg, rng, k)
    return DecisionTree(root, train.n_features)


def predict_tree_proba(tree: DecisionTree, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise DataError(f"expected a vector of {tree.n_features} features, got shape {x.shape}")
    return _route(tree.root, x).proba


# --------------------------------------------------------------------------
# random forest
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    seeds: tuple[int, ...]
    feature_subset: int
    bootstrap: bool = True

    def predict_proba(self, features) -> np.ndarray:
        return np.mean([t.predict_proba(features) for t in self.trees], axis=0)

    def predict(self, features) -> np.ndarray:
        return (self.predict_proba(features) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"feature_subset": self.feature_subset, "bootstrap": self.bootstrap,
                "seeds": list(self.seeds), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> RandomForest:
        return cls(tuple(DecisionTree.from_dict(t) for t in d["trees"]),
                   tuple(d["seeds"]), d["feature_subset"], d["bootstrap"])


def tree_seed(master_seed: int, index: int) -> int:
    """Seed of tree ``index``; depends only on the master seed and the index."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def train_forest(train: Dataset, n_trees: int = 100, feature_subset: int | None = None,
                 seed: int = 0, cfg: TreeConfig = TreeConfig(), *,
                 bootstrap: bool = True, workers: int | None = None) -> RandomForest:
    if len(train) == 0:
        raise DataError("cannot grow a forest on an empty dataset")
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    if feature_subset is None:
        feature_subset = max(1, int(math.floor(math.sqrt(train.n_features))))
    if not 1 <= feature_subset <= train.n_features:
        raise ConfigError(
            f"feature_subset must be in [1, {train.n_features}], got {feature_subset}")
    seeds = tuple(tree_seed(seed, i) for i in range(n_trees))
    n = len(train)

    def grow(s: int) -> DecisionTree:
        rng = np.random.default_rng(s)
        data = train.subset(rng.integers(0, n, size=n)) if bootstrap else train
        return train_tree(data, cfg, rng=rng, feature_subset=feature_subset)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = tuple(pool.map(grow, seeds))
    else:
        trees = tuple(grow(s) for s in seeds)
    return RandomForest(trees, seeds, feature_subset, bootstrap)


def predict_forest_proba(forest: RandomForest, features) -> float:
    return float(np.mean([predict_tree_proba(t, features) for t in forest.trees]))


# --------------------------------------------------------------------------
# naive Bayes
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NaiveBayesModel:
    """Class priors plus per-class, per-feature likelihood tables.

    Row 0 of ``means``/``variances`` is the negative class, row 1 the positive
    class. Features listed in ``bernoulli_features`` use ``bernoulli_p``
    (probability the feature is 1) instead of a Gaussian.
    """

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    bernoulli_features: tuple[int, ...] = ()
    bernoulli_p: np.ndarray = field(default_factory=lambda: np.zeros((2, 0)))

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def joint_log_likelihood(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise DataError(f"input has {x.shape[1]} features, model expects {self.n_features}")
        gauss = [j for j in range(self.n_features) if j not in self.bernoulli_features]
        out = np.empty((x.shape[0], 2))
        for c in range(2):
            mu = self.means[c, gauss]
            var = self.variances[c, gauss]
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * var)
                               + (x[:, gauss] - mu) ** 2 / var, axis=1)
            if self.bernoulli_features:
                p = self.bernoulli_p[c]
                xb = x[:, list(self.bernoulli_features)]
                ll = ll + np.sum(np.where(xb >= 0.5, np.log(p), np.log1p(-p)), axis=1)
            out[:, c] = np.log(self.priors[c]) + ll
        return out

    def posteriors(self, features) -> np.ndarray:
        jll = self.joint_log_likelihood(features)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict_proba(self, features) -> np.ndarray:
        return self.posteriors(features)[:, 1]

    def predict(self, features) -> np.ndarray:
        return (self.predict_proba(features) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        hexes = lambda a: [[float(v).hex() for v in row] for row in np.atleast_2d(a)]
        return {"priors": [float(v).hex() for v in self.priors],
                "means": hexes(self.means), "variances": hexes(self.variances),
                "bernoulli_features": list(self.bernoulli_features),
                "bernoulli_p": hexes(self.bernoulli_p)}

    @classmethod
    def from_dict(cls, d: dict) -> NaiveBayesModel:
        arr = lambda rows: np.array([[float.fromhex(v) for v in r] for r in rows])
        bp = arr(d["bernoulli_p"]) if d["bernoulli_features"] else np.zeros((2, 0))
        return cls(np.array([float.fromhex(v) for v in d["priors"]]),
                   arr(d["means"]), arr(d["variances"]),
                   tuple(d["bernoulli_features"]), bp)


def train_nb(train: Dataset, binary: str = "gaussian") -> NaiveBayesModel:
    """Fit class priors and per-class feature likelihoods.

    ``binary="bernoulli"`` models every 0/1-valued feature with a Laplace
    smoothed Bernoulli instead of a Gaussian.
    """
    if binary not in ("gaussian", "bernoulli"):
        raise ConfigError(f"binary must be 'gaussian' or 'bernoulli', got {binary!r}")
    x, y = train.features, train.labels
    counts = np.array([np.count_nonzero(y == 0), np.count_nonzero(y == 1)])
    if np.any(counts == 0):
        missing = "negative" if counts[0] == 0 else "positive"
        raise DataError(f"naive Bayes needs both classes; no {missing} rows in training data")
    priors = counts / counts.sum()
    means = np.stack([x[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.maximum(np.stack([x[y == c].var(axis=0) for c in (0, 1)]), VAR_FLOOR)
    bern = ()
    bern_p = np.zeros((2, 0))
    if binary == "bernoulli":
        bern = tuple(j for j in range(x.shape[1]) if np.all((x[:, j] == 0) | (x[:, j] == 1)))
        if bern:
            ones = np.stack([x[y == c][:, bern].sum(axis=0) for c in (0, 1)])
            bern_p = (ones + 1.0) / (counts[:, None] + 2.0)
    return NaiveBayesModel(priors, means, variances, bern, bern_p)


def predict_nb_proba(model: NaiveBayesModel, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise DataError(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    return float(model.predict_proba(x[None, :])[0])


def model_to_json(model) -> str:
    return json.dumps(model.to_dict(), indent=2)
