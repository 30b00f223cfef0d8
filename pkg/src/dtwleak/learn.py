"""Attacker-side learning: stratified splitting, cross-validation, random
forest and k-NN classifiers, and the evaluation report.

Class order everywhere is (normal, abnormal, hybrid) pair classes; the
confusion matrix has actual classes on rows and predictions on columns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import forest
from .dataset import PairClass, PAIR_CLASS_NAMES
from .errors import ConfigError, InsufficientDataError, ShapeError
from .features import FeatureVector, stack_features

N_CLASSES = 3
_MASK64 = (1 << 64) - 1

MODEL_FORMAT = "dtwleak-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 42

    def validate(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 100
    max_depth: int | None = None
    features_per_split: int | None = None  # default floor(sqrt(d)) + 1
    min_leaf: int = 1
    seed: int = 42

    def validate(self) -> None:
        if self.num_trees < 1:
            raise ConfigError(f"num_trees must be positive, got {self.num_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError(f"max_depth must be positive, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be positive, got {self.min_leaf}")


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")


@dataclass(frozen=True)
class AttackReport:
    """Confusion matrix plus the derived per-class and overall rates.

    ``per_class_success[c]`` is row recall; ``per_class_fp_rate[c]`` is the
    fraction of samples not of class c predicted as c.  Rates whose
    denominator is zero are reported as None, never as 0.
    """

    confusion: np.ndarray  # (3, 3) int64, rows actual, cols predicted
    per_class_success: tuple
    per_class_fp_rate: tuple
    overall_success: float

    def to_dict(self) -> dict:
        return {
            "classes": list(PAIR_CLASS_NAMES),
            "confusion": self.confusion.astype(int).tolist(),
            "overall_success": self.overall_success,
            "per_class_success": {
                name: self.per_class_success[i] for i, name in enumerate(PAIR_CLASS_NAMES)
            },
            "per_class_fp_rate": {
                name: self.per_class_fp_rate[i] for i, name in enumerate(PAIR_CLASS_NAMES)
            },
        }


def metrics_from_confusion(confusion) -> AttackReport:
    """Derive all report metrics from a confusion matrix."""
    conf = np.asarray(confusion, dtype=np.int64)
    if conf.shape != (N_CLASSES, N_CLASSES):
        raise ShapeError(f"confusion matrix must be 3x3, got {conf.shape}")
    total = int(conf.sum())
    if total == 0:
        raise ShapeError("empty confusion matrix")
    row = conf.sum(axis=1)
    col = conf.sum(axis=0)
    success = tuple(
        (float(conf[c, c] / row[c]) if row[c] > 0 else None) for c in range(N_CLASSES)
    )
    fp = tuple(
        (float((col[c] - conf[c, c]) / (total - row[c])) if total - row[c] > 0 else None)
        for c in range(N_CLASSES)
    )
    return AttackReport(confusion=conf, per_class_success=success,
                        per_class_fp_rate=fp, overall_success=float(conf.trace() / total))


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed & _MASK64, tag))))


def split_dataset(vectors: list[FeatureVector], spec: SplitSpec):
    """Stratified seeded train/test partition, per class within one item of
    the exact fraction.  Output lists keep the input order."""
    spec.validate()
    if len(vectors) < 10:
        raise InsufficientDataError(f"need at least 10 vectors, got {len(vectors)}")
    rng = _rng(spec.seed, 1)
    train_idx: list[int] = []
    if spec.stratified:
        classes = sorted({v.pair_class for v in vectors})
        for pc in classes:
            ids = [i for i, v in enumerate(vectors) if v.pair_class == pc]
            if not ids:
                raise InsufficientDataError(f"empty class {pc} under stratification")
            order = rng.permutation(len(ids))
            n_train = int(len(ids) * spec.train_fraction + 0.5)
            train_idx.extend(ids[k] for k in order[:n_train])
    else:
        order = rng.permutation(len(vectors))
        n_train = int(len(vectors) * spec.train_fraction + 0.5)
        train_idx.extend(int(k) for k in order[:n_train])
    chosen = np.zeros(len(vectors), dtype=bool)
    chosen[train_idx] = True
    train = [v for i, v in enumerate(vectors) if chosen[i]]
    test = [v for i, v in enumerate(vectors) if not chosen[i]]
    return train, test


class RandomForestModel:
    """Fitted forest: flat per-tree node arrays plus training priors."""

    kind = "random_forest"

    def __init__(self, feature, threshold, left, right, leaf, node_counts,
                 priors, n_features, config: ForestConfig):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.leaf = leaf
        self.node_counts = node_counts
        self.priors = priors
        self.n_features = n_features
        self.config = config

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected (n, {self.n_features}) features, got {X.shape}")
        votes = np.zeros((X.shape[0], N_CLASSES), dtype=np.int64)
        forest._predict_votes(X, self.feature, self.threshold, self.left,
                              self.right, self.leaf, votes)
        return _vote_winners(votes, self.priors)

    def to_dict(self) -> dict:
        trees = []
        for t in range(self.feature.shape[0]):
            nc = int(self.node_counts[t])
            trees.append({
                "feature": self.feature[t, :nc].tolist(),
                "threshold": self.threshold[t, :nc].tolist(),
                "left": self.left[t, :nc].tolist(),
                "right": self.right[t, :nc].tolist(),
                "leaf": self.leaf[t, :nc].tolist(),
            })
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "n_features": int(self.n_features),
            "priors": [int(p) for p in self.priors],
            "config": {
                "num_trees": self.config.num_trees,
                "max_depth": self.config.max_depth,
                "features_per_split": self.config.features_per_split,
                "min_leaf": self.config.min_leaf,
                "seed": self.config.seed,
            },
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RandomForestModel":
        trees = data["trees"]
        n_trees = len(trees)
        max_nodes = max(len(t["feature"]) for t in trees)
        feature = np.full((n_trees, max_nodes), -1, dtype=np.int64)
        threshold = np.zeros((n_trees, max_nodes))
        left = np.zeros((n_trees, max_nodes), dtype=np.int64)
        right = np.zeros((n_trees, max_nodes), dtype=np.int64)
        leaf = np.zeros((n_trees, max_nodes), dtype=np.int8)
        node_counts = np.empty(n_trees, dtype=np.int64)
        for t, tree in enumerate(trees):
            nc = len(tree["feature"])
            node_counts[t] = nc
            feature[t, :nc] = tree["feature"]
            threshold[t, :nc] = tree["threshold"]
            left[t, :nc] = tree["left"]
            right[t, :nc] = tree["right"]
            leaf[t, :nc] = tree["leaf"]
        cfg = ForestConfig(**data["config"])
        return cls(feature, threshold, left, right, leaf, node_counts,
                   np.array(data["priors"], dtype=np.int64), data["n_features"], cfg)


def _vote_winners(votes: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Majority vote per row; ties go to the larger training prior, then to
    the fixed class order."""
    n = votes.shape[0]
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        best = 0
        for c in range(1, N_CLASSES):
            if votes[i, c] > votes[i, best] or (
                    votes[i, c] == votes[i, best] and priors[c] > priors[best]):
                best = c
        out[i] = best
    return out


def train_random_forest(train: list[FeatureVector], cfg: ForestConfig) -> RandomForestModel:
    cfg.validate()
    X, y = stack_features(train)
    n, d = X.shape
    mtry = cfg.features_per_split
    if mtry is None:
        mtry = int(math.isqrt(d)) + 1
    mtry = min(mtry, d)
    if mtry < 1:
        raise ConfigError(f"features_per_split must be >= 1, got {mtry}")
    codes, reps, n_bins = forest.bin_features(X)
    priors = np.bincount(y, minlength=N_CLASSES).astype(np.int64)
    seeds = forest.derive_seeds(cfg.seed, cfg.num_trees)
    max_nodes = 2 * n + 1
    feature = np.full((cfg.num_trees, max_nodes), -2, dtype=np.int64)
    threshold_bin = np.zeros((cfg.num_trees, max_nodes), dtype=np.int64)
    left = np.zeros((cfg.num_trees, max_nodes), dtype=np.int64)
    right = np.zeros((cfg.num_trees, max_nodes), dtype=np.int64)
    leaf = np.zeros((cfg.num_trees, max_nodes), dtype=np.int8)
    node_counts = np.empty(cfg.num_trees, dtype=np.int64)
    max_depth = -1 if cfg.max_depth is None else cfg.max_depth
    forest._fit_forest(codes, y, N_CLASSES, n_bins, priors, mtry, max_depth,
                       cfg.min_leaf, seeds, feature, threshold_bin, left, right,
                       leaf, node_counts)
    # convert bin codes to raw-value thresholds for binning-free prediction
    threshold = np.zeros_like(threshold_bin, dtype=np.float64)
    for t in range(cfg.num_trees):
        for node in range(node_counts[t]):
            f = feature[t, node]
            if f >= 0:
                threshold[t, node] = reps[f][threshold_bin[t, node]]
    return RandomForestModel(feature, threshold, left, right, leaf, node_counts,
                             priors, d, cfg)


class KnnModel:
    """k-nearest-neighbour with exact squared Euclidean distance.

    Feature counts are small integers, so distances computed in float64 are
    exact and predictions do not depend on BLAS threading or chunk size.
    Distance ties resolve to the lower stored index; vote ties follow the
    same convention as the forest.
    """

    kind = "knn"

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int):
        self.X = X
        self.y = y
        self.k = k
        self.priors = np.bincount(y, minlength=N_CLASSES).astype(np.int64)
        self.n_features = X.shape[1]

    def predict(self, X: np.ndarray, chunk: int = 256) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected (n, {self.n_features}) features, got {X.shape}")
        train_sq = (self.X * self.X).sum(axis=1)
        out = np.empty(X.shape[0], dtype=np.int8)
        for s in range(0, X.shape[0], chunk):
            block = X[s:s + chunk]
            d2 = train_sq[None, :] - 2.0 * (block @ self.X.T) + (block * block).sum(axis=1)[:, None]
            order = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
            for i in range(block.shape[0]):
                votes = np.bincount(self.y[order[i]], minlength=N_CLASSES)
                out[s + i] = _vote_winners(votes[None, :], self.priors)[0]
        return out

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "k": self.k,
            "n_features": int(self.n_features),
            "train_x": self.X.astype(int).tolist(),
            "train_y": self.y.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnnModel":
        return cls(np.array(data["train_x"], dtype=np.float64),
                   np.array(data["train_y"], dtype=np.int8), data["k"])


def train_knn(train: list[FeatureVector], k: int) -> KnnModel:
    KnnConfig(k).validate()
    if k > len(train):
        raise ConfigError(f"k={k} exceeds training size {len(train)}")
    X, y = stack_features(train)
    return KnnModel(X, y, k)


def train_classifier(train: list[FeatureVector], cfg):
    """Dispatch on classifier config type."""
    if isinstance(cfg, ForestConfig):
        return train_random_forest(train, cfg)
    if isinstance(cfg, KnnConfig):
        return train_knn(train, cfg.k)
    raise ConfigError(f"unknown classifier config: {type(cfg).__name__}")


def cross_validate(train: list[FeatureVector], folds: int, cfg, seed: int = 42):
    """Stratified k-fold accuracy; returns (mean, per-fold list)."""
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if folds > len(train):
        raise ConfigError(f"folds {folds} exceeds training size {len(train)}")
    rng = _rng(seed, 2)
    fold_of = np.empty(len(train), dtype=np.int64)
    for pc in sorted({v.pair_class for v in train}):
        ids = np.array([i for i, v in enumerate(train) if v.pair_class == pc])
        order = rng.permutation(len(ids))
        for pos, k in enumerate(order):
            fold_of[ids[k]] = pos % folds
    accuracies = []
    fold_seeds = forest.derive_seeds(seed, folds)
    for f in range(folds):
        fit_set = [v for i, v in enumerate(train) if fold_of[i] != f]
        held = [v for i, v in enumerate(train) if fold_of[i] == f]
        fold_cfg = cfg
        if isinstance(cfg, ForestConfig):
            fold_cfg = ForestConfig(num_trees=cfg.num_trees, max_depth=cfg.max_depth,
                                    features_per_split=cfg.features_per_split,
                                    min_leaf=cfg.min_leaf, seed=int(fold_seeds[f]))
        model = train_classifier(fit_set, fold_cfg)
        X, y = stack_features(held)
        accuracies.append(float((model.predict(X) == y).mean()))
    return float(np.mean(accuracies)), accuracies


def evaluate(model, test: list[FeatureVector]) -> AttackReport:
    """Predict the test set and derive the full metric report."""
    if not test:
        raise InsufficientDataError("empty test set")
    X, y = stack_features(test)
    pred = model.predict(X)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (y.astype(np.int64), pred.astype(np.int64)), 1)
    return metrics_from_confusion(confusion)


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")


def load_model(path: str | Path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != MODEL_FORMAT:
        raise ConfigError(f"{path}: not a {MODEL_FORMAT} file")
    if data.get("version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported model version {data.get('version')}")
    if data["kind"] == RandomForestModel.kind:
        return RandomForestModel.from_dict(data)
    if data["kind"] == KnnModel.kind:
        return KnnModel.from_dict(data)
    raise ConfigError(f"{path}: unknown model kind {data['kind']!r}")
