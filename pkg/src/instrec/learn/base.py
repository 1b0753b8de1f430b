"""Shared model plumbing: the trained-model base class, the classifier
spec consumed by the dispatcher, and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..dataset import LabeledDataset, Scaler, dataset_fingerprint, fit_scaler

KINDS = ("logistic", "tree", "forest", "boosted", "svm_rbf")


@dataclass(frozen=True)
class ClassifierSpec:
    """Which learner to train and with what hyperparameters."""

    kind: str
    hyperparams: Mapping = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}, expected one of {KINDS}")


class TrainedModel:
    """Base for all trained classifiers.

    Subclasses implement `decision_scores` over already-scaled inputs
    and the params (de)serialization pair.  The scaler fitted on the
    training rows travels with the model so prediction never sees
    unscaled features.
    """

    kind: str = ""

    def __init__(
        self,
        class_names,
        scaler: Scaler,
        seed: int,
        hyperparams: Mapping,
        dataset_sha: str,
    ):
        self.class_names = tuple(class_names)
        self.scaler = scaler
        self.seed = int(seed)
        self.hyperparams = dict(hyperparams)
        self.dataset_sha = dataset_sha

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.scaler.means.size

    def decision_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        """Per-class scores for scaled rows, shape (n_rows, n_classes)."""
        raise NotImplementedError

    def params_to_dict(self) -> dict:
        raise NotImplementedError

    @classmethod
    def params_from_dict(cls, params: dict, class_names, scaler, seed, hyperparams, dataset_sha):
        raise NotImplementedError


def prepare_training_data(ds: LabeledDataset) -> tuple[Scaler, np.ndarray, np.ndarray]:
    """Validate a training set, fit its scaler, and return scaled features."""
    if ds.n_samples == 0:
        raise ValueError("cannot train on an empty dataset")
    if not np.all(np.isfinite(ds.features)):
        raise ValueError("training features contain non-finite values")
    if np.unique(ds.labels).size < 2:
        raise ValueError("training requires at least two classes present")
    scaler = fit_scaler(ds.features)
    return scaler, scaler.transform(ds.features), ds.labels.astype(np.int64)


def training_meta(ds: LabeledDataset, seed: int, **hyperparams) -> dict:
    return {"seed": int(seed), "hyperparams": hyperparams, "dataset_sha": dataset_fingerprint(ds)}


def predict(model: TrainedModel, features) -> tuple[int, np.ndarray]:
    """Classify one feature vector; returns (class index, per-class scores)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.size != model.n_features:
        raise ValueError(f"expected a {model.n_features}-dimensional input, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    scores = model.decision_scores(model.scaler.transform(x[None, :]))[0]
    return int(np.argmax(scores)), scores


def predict_batch(model: TrainedModel, features: np.ndarray) -> np.ndarray:
    """Class indices for a feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"expected (n, {model.n_features}) inputs, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return np.argmax(model.decision_scores(model.scaler.transform(x)), axis=1)
