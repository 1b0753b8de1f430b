"""CART trees and the two ensembles built on them: bootstrap-aggregated
forests with per-split feature subsets, and multiclass gradient-boosted
regression trees on softmax pseudo-residuals.

Split search is greedy: midpoints between consecutive distinct sorted
values, scored by Gini reduction (classification) or sum-of-squares
reduction (regression).  Ties keep the lowest feature index and the
first qualifying threshold, which makes training deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import LabeledDataset
from .base import TrainedModel, prepare_training_data, training_meta

_MIN_GAIN = 1e-12


@dataclass
class TreeNode:
    """Internal split (feature, threshold, children) or a leaf payload."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: np.ndarray | None = None

    def to_dict(self) -> dict:
        if self.value is not None:
            return {"value": self.value.tolist()}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "value" in d:
            return cls(value=np.asarray(d["value"], dtype=np.float64))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def tree_apply(root: TreeNode, x: np.ndarray, value_dim: int) -> np.ndarray:
    """Route rows to leaves; returns the stacked leaf payloads."""
    out = np.empty((x.shape[0], value_dim))
    stack = [(root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.value is not None:
            out[idx] = node.value
        else:
            mask = x[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
    return out


def _candidate_cuts(xs: np.ndarray, n: int, min_leaf: int) -> np.ndarray:
    cuts = np.nonzero(xs[:-1] < xs[1:])[0]
    if min_leaf > 1:
        cuts = cuts[(cuts + 1 >= min_leaf) & (n - cuts - 1 >= min_leaf)]
    return cuts


def _best_split_gini(x: np.ndarray, labels: np.ndarray, n_classes: int,
                     min_leaf: int, feature_ids) -> tuple[float, int, float] | None:
    n = labels.size
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    total = onehot.sum(axis=0)
    gini_parent = 1.0 - ((total / n) ** 2).sum()
    best = None
    for f in feature_ids:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cuts = _candidate_cuts(xs, n, min_leaf)
        if cuts.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[cuts]
        nl = (cuts + 1).astype(np.float64)
        nr = n - nl
        right = total - left
        gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(weighted))
        gain = gini_parent - weighted[i]
        if gain > _MIN_GAIN and (best is None or gain > best[0]):
            best = (float(gain), int(f), 0.5 * (xs[cuts[i]] + xs[cuts[i] + 1]))
    return best


def _best_split_sse(x: np.ndarray, targets: np.ndarray,
                    min_leaf: int, feature_ids) -> tuple[float, int, float] | None:
    n = targets.size
    s_total = targets.sum()
    s2_total = (targets * targets).sum()
    sse_parent = s2_total - s_total * s_total / n
    best = None
    for f in feature_ids:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cuts = _candidate_cuts(xs, n, min_leaf)
        if cuts.size == 0:
            continue
        ts = targets[order]
        s = np.cumsum(ts)[cuts]
        s2 = np.cumsum(ts * ts)[cuts]
        nl = (cuts + 1).astype(np.float64)
        nr = n - nl
        sse = (s2 - s * s / nl) + (s2_total - s2) - (s_total - s) ** 2 / nr
        i = int(np.argmin(sse))
        gain = sse_parent - sse[i]
        if gain > _MIN_GAIN and (best is None or gain > best[0]):
            best = (float(gain), int(f), 0.5 * (xs[cuts[i]] + xs[cuts[i] + 1]))
    return best


def _pick_features(n_features: int, m: int | None, rng: np.random.Generator | None):
    if m is None or m >= n_features:
        return range(n_features)
    return np.sort(rng.choice(n_features, size=m, replace=False))


def grow_classification_tree(
    x: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    max_depth: int | None = None,
    min_leaf: int = 1,
    features_per_split: int | None = None,
    rng: np.random.Generator | None = None,
) -> TreeNode:
    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        sub = labels[idx]
        counts = np.bincount(sub, minlength=n_classes).astype(np.float64)
        pure = np.count_nonzero(counts) <= 1
        if (
            pure
            or idx.size < 2 * min_leaf
            or (max_depth is not None and depth >= max_depth)
        ):
            return TreeNode(value=counts / idx.size)
        ids = _pick_features(x.shape[1], features_per_split, rng)
        best = _best_split_gini(x[idx], sub, n_classes, min_leaf, ids)
        if best is None:
            return TreeNode(value=counts / idx.size)
        _, f, thr = best
        mask = x[idx, f] <= thr
        return TreeNode(
            feature=f, threshold=thr,
            left=grow(idx[mask], depth + 1),
            right=grow(idx[~mask], depth + 1),
        )

    return grow(np.arange(labels.size), 0)


def grow_regression_tree(
    x: np.ndarray,
    targets: np.ndarray,
    max_depth: int | None = None,
    min_leaf: int = 1,
) -> TreeNode:
    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        sub = targets[idx]
        if idx.size < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            return TreeNode(value=np.array([sub.mean()]))
        best = _best_split_sse(x[idx], sub, min_leaf, range(x.shape[1]))
        if best is None:
            return TreeNode(value=np.array([sub.mean()]))
        _, f, thr = best
        mask = x[idx, f] <= thr
        return TreeNode(
            feature=f, threshold=thr,
            left=grow(idx[mask], depth + 1),
            right=grow(idx[~mask], depth + 1),
        )

    return grow(np.arange(targets.size), 0)


class DecisionTreeModel(TrainedModel):
    kind = "tree"

    def __init__(self, root: TreeNode, **common):
        super().__init__(**common)
        self.root = root

    def decision_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        return tree_apply(self.root, x_scaled, self.n_classes)

    def params_to_dict(self) -> dict:
        return {"root": self.root.to_dict()}

    @classmethod
    def params_from_dict(cls, params, class_names, scaler, seed, hyperparams, dataset_sha):
        return cls(
            TreeNode.from_dict(params["root"]),
            class_names=class_names, scaler=scaler, seed=seed,
            hyperparams=hyperparams, dataset_sha=dataset_sha,
        )


class ForestModel(TrainedModel):
    kind = "forest"

    def __init__(self, trees, **common):
        super().__init__(**common)
        self.trees = list(trees)

    def decision_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        votes = np.zeros((x_scaled.shape[0], self.n_classes))
        rows = np.arange(x_scaled.shape[0])
        for root in self.trees:
            winner = np.argmax(tree_apply(root, x_scaled, self.n_classes), axis=1)
            votes[rows, winner] += 1.0
        return votes

    def params_to_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def params_from_dict(cls, params, class_names, scaler, seed, hyperparams, dataset_sha):
        return cls(
            [TreeNode.from_dict(t) for t in params["trees"]],
            class_names=class_names, scaler=scaler, seed=seed,
            hyperparams=hyperparams, dataset_sha=dataset_sha,
        )


class BoostedModel(TrainedModel):
    kind = "boosted"

    def __init__(self, init_scores, rounds, learning_rate, loss_trace=None, **common):
        super().__init__(**common)
        self.init_scores = np.asarray(init_scores, dtype=np.float64)
        self.rounds = [list(r) for r in rounds]
        self.learning_rate = float(learning_rate)
        self.loss_trace = list(loss_trace) if loss_trace is not None else []

    def raw_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        scores = np.tile(self.init_scores, (x_scaled.shape[0], 1))
        for round_trees in self.rounds:
            for k, root in enumerate(round_trees):
                scores[:, k] += self.learning_rate * tree_apply(root, x_scaled, 1)[:, 0]
        return scores

    def decision_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        scores = self.raw_scores(x_scaled)
        shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)

    def params_to_dict(self) -> dict:
        return {
            "init_scores": self.init_scores.tolist(),
            "learning_rate": self.learning_rate,
            "rounds": [[t.to_dict() for t in r] for r in self.rounds],
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def params_from_dict(cls, params, class_names, scaler, seed, hyperparams, dataset_sha):
        return cls(
            params["init_scores"],
            [[TreeNode.from_dict(t) for t in r] for r in params["rounds"]],
            params["learning_rate"],
            loss_trace=params.get("loss_trace"),
            class_names=class_names, scaler=scaler, seed=seed,
            hyperparams=hyperparams, dataset_sha=dataset_sha,
        )


def train_tree(
    ds: LabeledDataset,
    max_depth: int | None = None,
    min_leaf: int = 1,
    seed: int = 0,
) -> DecisionTreeModel:
    """Single CART classification tree (unlimited depth memorizes)."""
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    scaler, x, labels = prepare_training_data(ds)
    root = grow_classification_tree(x, labels, ds.n_classes, max_depth, min_leaf)
    meta = training_meta(ds, seed, max_depth=max_depth, min_leaf=min_leaf)
    return DecisionTreeModel(
        root,
        class_names=ds.class_names, scaler=scaler, seed=seed,
        hyperparams=meta["hyperparams"], dataset_sha=meta["dataset_sha"],
    )


def train_forest(
    ds: LabeledDataset,
    n_trees: int = 200,
    max_depth: int | None = None,
    features_per_split: int | None = None,
    bootstrap: bool = True,
    min_leaf: int = 1,
    seed: int = 0,
) -> ForestModel:
    """Bagged CART trees with random per-split feature subsets.

    features_per_split defaults to floor(sqrt(n_features)); pass the
    full feature count (and bootstrap=False) to reduce a 1-tree forest
    to the plain tree.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    scaler, x, labels = prepare_training_data(ds)
    if features_per_split is None:
        features_per_split = max(1, int(np.sqrt(x.shape[1])))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed % (2**63), t])
        if bootstrap:
            idx = rng.integers(0, x.shape[0], size=x.shape[0])
        else:
            idx = np.arange(x.shape[0])
        trees.append(
            grow_classification_tree(
                x[idx], labels[idx], ds.n_classes, max_depth, min_leaf,
                features_per_split, rng,
            )
        )
    meta = training_meta(
        ds, seed, n_trees=n_trees, max_depth=max_depth,
        features_per_split=features_per_split, bootstrap=bootstrap, min_leaf=min_leaf,
    )
    return ForestModel(
        trees,
        class_names=ds.class_names, scaler=scaler, seed=seed,
        hyperparams=meta["hyperparams"], dataset_sha=meta["dataset_sha"],
    )


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def _log_loss(scores: np.ndarray, y_onehot: np.ndarray) -> float:
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float((log_norm - (shifted * y_onehot).sum(axis=1)).mean())


def train_boosted(
    ds: LabeledDataset,
    n_rounds: int = 100,
    learning_rate: float = 0.1,
    tree_depth: int = 3,
    seed: int = 0,
) -> BoostedModel:
    """Multiclass gradient boosting.

    Scores start at the log class priors; each round fits one
    depth-limited regression tree per class to the pseudo-residuals
    (one-hot minus softmax) and nudges the scores by learning_rate.
    The recorded training log-loss trace is non-increasing.
    """
    if n_rounds < 1 or tree_depth < 1:
        raise ValueError("n_rounds and tree_depth must be >= 1")
    if learning_rate < 0:
        raise ValueError("learning_rate must be non-negative")
    scaler, x, labels = prepare_training_data(ds)
    n, n_classes = x.shape[0], ds.n_classes
    y_onehot = np.zeros((n, n_classes))
    y_onehot[np.arange(n), labels] = 1.0
    priors = np.bincount(labels, minlength=n_classes) / n
    init_scores = np.log(np.maximum(priors, 1e-12))
    scores = np.tile(init_scores, (n, 1))
    rounds = []
    losses = [_log_loss(scores, y_onehot)]
    for _ in range(n_rounds):
        residuals = y_onehot - _softmax_rows(scores)
        round_trees = []
        for k in range(n_classes):
            root = grow_regression_tree(x, residuals[:, k], max_depth=tree_depth)
            scores[:, k] += learning_rate * tree_apply(root, x, 1)[:, 0]
            round_trees.append(root)
        rounds.append(round_trees)
        losses.append(_log_loss(scores, y_onehot))
    meta = training_meta(
        ds, seed, n_rounds=n_rounds, learning_rate=learning_rate, tree_depth=tree_depth
    )
    return BoostedModel(
        init_scores, rounds, learning_rate, loss_trace=losses,
        class_names=ds.class_names, scaler=scaler, seed=seed,
        hyperparams=meta["hyperparams"], dataset_sha=meta["dataset_sha"],
    )
