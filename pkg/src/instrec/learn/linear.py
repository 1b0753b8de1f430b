"""Multinomial logistic regression fit by full-batch gradient descent.

Loss is mean softmax cross-entropy plus l2/2 * ||W||^2; the bias row is
left unregularized so that in the heavy-regularization limit the model
degrades to the class priors.
"""

from __future__ import annotations

import numpy as np

from ..dataset import LabeledDataset
from .base import TrainedModel, prepare_training_data, training_meta


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    x: np.ndarray,
    y_onehot: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + l2/2 * ||W||^2 and its exact gradient."""
    n = x.shape[0]
    logits = x @ weights + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    ce = float((log_norm - (shifted * y_onehot).sum(axis=1)).mean())
    loss = ce + 0.5 * l2 * float((weights * weights).sum())
    p = softmax(logits)
    delta = (p - y_onehot) / n
    grad_w = x.T @ delta + l2 * weights
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


class LogisticModel(TrainedModel):
    kind = "logistic"

    def __init__(self, weights, bias, **common):
        super().__init__(**common)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def decision_scores(self, x_scaled: np.ndarray) -> np.ndarray:
        return softmax(x_scaled @ self.weights + self.bias)

    def params_to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def params_from_dict(cls, params, class_names, scaler, seed, hyperparams, dataset_sha):
        return cls(
            params["weights"], params["bias"],
            class_names=class_names, scaler=scaler, seed=seed,
            hyperparams=hyperparams, dataset_sha=dataset_sha,
        )


def train_logistic(
    ds: LabeledDataset,
    l2: float = 0.0,
    lr: float = 0.1,
    epochs: int = 500,
    seed: int = 0,
) -> LogisticModel:
    """Gradient descent from zero weights until the epoch budget or a
    vanishing gradient."""
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    if lr <= 0 or epochs < 1:
        raise ValueError("lr must be positive and epochs >= 1")
    scaler, x, labels = prepare_training_data(ds)
    n_classes = ds.n_classes
    y_onehot = np.zeros((x.shape[0], n_classes))
    y_onehot[np.arange(x.shape[0]), labels] = 1.0
    weights = np.zeros((x.shape[1], n_classes))
    bias = np.zeros(n_classes)
    for _ in range(epochs):
        _, grad_w, grad_b = loss_and_grad(weights, bias, x, y_onehot, l2)
        weights -= lr * grad_w
        bias -= lr * grad_b
        if max(np.abs(grad_w).max(), np.abs(grad_b).max()) < 1e-9:
            break
    meta = training_meta(ds, seed, l2=l2, lr=lr, epochs=epochs)
    return LogisticModel(
        weights, bias,
        class_names=ds.class_names, scaler=scaler, seed=seed,
        hyperparams=meta["hyperparams"], dataset_sha=meta["dataset_sha"],
    )
