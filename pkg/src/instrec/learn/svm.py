"""Soft-margin RBF-kernel SVM trained with Platt's sequential minimal
optimization, reduced to one binary subproblem per unordered class pair
(one-vs-one) with majority voting.

The SMO loop alternates full sweeps with sweeps over non-bound
multipliers, picks the second multiplier by the largest error gap, and
falls back to randomized scans when that step stalls.  Convergence
means a full sweep finds no multiplier violating the KKT conditions by
more than `tol`.
"""

from __future__ import annotations

import numpy as np

from ..dataset import LabeledDataset
from .base import TrainedModel, prepare_training_data, training_meta


def rbf_kernel(x, y, gamma: float) -> float:
    """K(x, y) = exp(-gamma * ||x - y||^2), gamma = 1 / (2 sigma^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_kernel_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel between the rows of a and b."""
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo_solve(
    kernel: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_passes: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Maximize the SVM dual on a precomputed kernel matrix.

    Args:
        kernel: (n, n) PSD kernel matrix.
        y: labels in {-1, +1}.
        c: box constraint on the multipliers.
        tol: KKT tolerance.
        max_passes: cap on sweeps over the data.
        rng: drives the randomized fallback scans.

    Returns:
        (alpha, b) with decision f(x) = sum_i alpha_i y_i K(x_i, x) + b.
    """
    n = y.size
    alpha = np.zeros(n)
    b = 0.0
    errors = -y.astype(np.float64)  # E_i = f(x_i) - y_i, f starts at zero

    def dual_gain_end(i1, i2, lo, hi):
        # dual objective along the constraint line at both clip ends;
        # used only when the usual second-derivative step is flat
        y1, y2 = y[i1], y[i2]
        a1, a2 = alpha[i1], alpha[i2]
        s = y1 * y2
        k11, k12, k22 = kernel[i1, i1], kernel[i1, i2], kernel[i2, i2]
        g1 = errors[i1] + y1 - b
        g2 = errors[i2] + y2 - b
        v1 = g1 - a1 * y1 * k11 - a2 * y2 * k12
        v2 = g2 - a1 * y1 * k12 - a2 * y2 * k22
        gamma_sum = a1 + s * a2

        def dual_at(t):
            a1t = gamma_sum - s * t
            return (
                a1t
                + t
                - 0.5 * (a1t * a1t * k11 + t * t * k22 + 2.0 * s * a1t * t * k12)
                - a1t * y1 * v1
                - t * y2 * v2
            )

        return dual_at(lo), dual_at(hi)

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b
        if i1 == i2:
            return False
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - c), min(c, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(c, c + a2 - a1)
        if hi - lo < 1e-12:
            return False
        k11, k12, k22 = kernel[i1, i1], kernel[i1, i2], kernel[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 1e-12:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            obj_lo, obj_hi = dual_gain_end(i1, i2, lo, hi)
            if obj_lo > obj_hi + 1e-12:
                a2_new = lo
            elif obj_hi > obj_lo + 1e-12:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        b1 = b - (e1 + d1 * k11 + d2 * k12)
        b2 = b - (e2 + d1 * k12 + d2 * k22)
        if 0.0 < a1_new < c:
            b_new = b1
        elif 0.0 < a2_new < c:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        errors += d1 * kernel[i1] + d2 * kernel[i2] + (b_new - b)
        alpha[i1] = a1_new
        alpha[i2] = a2_new
        b = b_new
        return True

    def examine(i2: int) -> bool:
        r2 = errors[i2] * y[i2]
        a2 = alpha[i2]
        if not ((r2 < -tol and a2 < c) or (r2 > tol and a2 > 0.0)):
            return False
        non_bound = np.nonzero((alpha > 0.0) & (alpha < c))[0]
        if non_bound.size > 1:
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - errors[i2]))])
            if take_step(i1, i2):
                return True
        if non_bound.size:
            for i1 in np.roll(non_bound, int(rng.integers(non_bound.size))):
                if take_step(int(i1), i2):
                    return True
        for i1 in np.roll(np.arange(n), int(rng.integers(n))):
            if take_step(int(i1), i2):
                return True
        return False

    examine_all = True
    for _ in range(max_passes):
        if examine_all:
            targets = range(n)
        else:
            targets = np.nonzero((alpha > 0.0) & (alpha < c))[0]
        changed = 0
        for i2 in targets:
            changed += examine(int(i2))
        if examine_all:
            if changed == 0:
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alpha, b


def kkt_max_violation(
    kernel: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, c: float
) -> tuple[float, float]:
    """Worst KKT margin violation and |sum alpha_i y_i| at a solution."""
    margins = y * ((alpha * y) @ kernel + b)
    at_zero = alpha <= 1e-12
    at_c = alpha >= c - 1e-12
    interior = ~(at_zero | at_c)
    worst = 0.0
    if at_zero.any():
        worst = max(worst, float(np.max(1.0 - margins[at_zero], initial=0.0)))
    if at_c.any():
        worst = max(worst, float(np.max(margins[at_c] - 1.0, initial=0.0)))
    if interior.any():
        worst = max(worst, float(np.max(np.abs(margins[interior] - 1.0))))
    return worst, float(abs(np.dot(alpha, y)))


class PairwiseSvm:
    """One trained binary subproblem: lower-index class maps to +1."""

    def __init__(self, class_a, class_b, support, target, alpha, bias, gamma, c):
        self.class_a = int(class_a)
        self.class_b = int(class_b)
        self.support = np.asarray(support, dtype=np.float64)
        self.target = np.asarray(target, dtype=np.float64)
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.bias = float(bias)
        self.gamma = float(gamma)
        self.c = float(c)

    def decision(self, x_scaled: np.ndarray) -> np.ndarray:
        k = rbf_kernel_matrix(x_scaled, self.support, self.gamma)
        return k @ (self.alpha * self.target) + self.bias


class SvmModel(TrainedModel):
    kind = "svm_rbf"

    def __init__(self, pairs, gamma, c, **common):
        super().__init__(**common)
        self.pairs = list(pairs)
        self.gamma = float(gamma)
        self.c = float(c)

    def decision_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        votes = np.zeros((x_scaled.shape[0], self.n_classes))
        for pair in self.pairs:
            f = pair.decision(x_scaled)
            winners = np.where(f >= 0.0, pair.class_a, pair.class_b)
            votes[np.arange(x_scaled.shape[0]), winners] += 1.0
        return votes

    def params_to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "C": self.c,
            "pairs": [
                {
                    "class_a": p.class_a,
                    "class_b": p.class_b,
                    "support": p.support.tolist(),
                    "target": p.target.tolist(),
                    "alpha": p.alpha.tolist(),
                    "bias": p.bias,
                }
                for p in self.pairs
            ],
        }

    @classmethod
    def params_from_dict(cls, params, class_names, scaler, seed, hyperparams, dataset_sha):
        pairs = [
            PairwiseSvm(
                d["class_a"], d["class_b"], d["support"], d["target"], d["alpha"],
                d["bias"], params["gamma"], params["C"],
            )
            for d in params["pairs"]
        ]
        return cls(
            pairs, params["gamma"], params["C"],
            class_names=class_names, scaler=scaler, seed=seed,
            hyperparams=hyperparams, dataset_sha=dataset_sha,
        )


def resolve_gamma(gamma, x_scaled: np.ndarray) -> float:
    """Numeric gamma, or the variance-based 'scale' default."""
    if isinstance(gamma, str):
        if gamma != "scale":
            raise ValueError(f"gamma must be a positive number or 'scale', got {gamma!r}")
        mean_var = float(x_scaled.var(axis=0).mean())
        return 1.0 / (x_scaled.shape[1] * mean_var) if mean_var > 0 else 1.0 / x_scaled.shape[1]
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return gamma


def train_svm_smo(
    ds: LabeledDataset,
    c: float = 10.0,
    gamma="scale",
    tol: float = 1e-3,
    max_passes: int = 200,
    seed: int = 0,
) -> SvmModel:
    """Train a one-vs-one RBF SVM; each pair runs SMO to KKT tolerance."""
    if c <= 0:
        raise ValueError("C must be positive")
    scaler, x, labels = prepare_training_data(ds)
    gamma_val = resolve_gamma(gamma, x)
    present = np.unique(labels)
    pairs = []
    for ai in range(present.size):
        for bi in range(ai + 1, present.size):
            class_a, class_b = int(present[ai]), int(present[bi])
            mask = (labels == class_a) | (labels == class_b)
            x_pair = x[mask]
            y_pair = np.where(labels[mask] == class_a, 1.0, -1.0)
            kernel = rbf_kernel_matrix(x_pair, x_pair, gamma_val)
            rng = np.random.default_rng([seed % (2**63), class_a, class_b])
            alpha, bias = smo_solve(kernel, y_pair, c, tol, max_passes, rng)
            keep = alpha > 0.0
            pairs.append(
                PairwiseSvm(
                    class_a, class_b, x_pair[keep], y_pair[keep], alpha[keep],
                    bias, gamma_val, c,
                )
            )
    meta = training_meta(ds, seed, C=c, gamma=gamma, tol=tol, max_passes=max_passes)
    return SvmModel(
        pairs, gamma_val, c,
        class_names=ds.class_names, scaler=scaler, seed=seed,
        hyperparams=meta["hyperparams"], dataset_sha=meta["dataset_sha"],
    )
