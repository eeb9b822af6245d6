"""Toy training loop for the stacked GRU (full-batch, BCE loss)."""
from dataclasses import dataclass
import warnings

import numpy as np

from .gru import forward, loss_and_grads, stack_windows


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 200
    learning_rate: float = 0.05
    optimizer: str = "adam"  # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    fit_normalization: bool = True


class DegenerateTrainingWarning(UserWarning):
    pass


def train_toy(model, windows, labels, params=TrainParams()):
    """Minimise binary cross-entropy in place; returns ``(model, loss_curve)``.

    ``loss_curve[k]`` is the training loss before the update of epoch ``k``,
    followed by the final loss, so it has ``epochs + 1`` entries.
    """
    if not windows:
        raise ValueError("training set is empty")
    y = np.asarray(labels, dtype=float)
    if len(y) != len(windows):
        raise ValueError("labels and windows differ in length")
    if len(np.unique(y)) < 2:
        warnings.warn("training set holds a single class", DegenerateTrainingWarning, stacklevel=2)
    if params.optimizer not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {params.optimizer!r}")
    batch = stack_windows(windows)
    if params.fit_normalization:
        model.fit_normalization(batch)
    named = model.parameters()
    m1 = {k: np.zeros_like(v) for k, v in named.items()}
    m2 = {k: np.zeros_like(v) for k, v in named.items()}
    curve = []
    lr = params.learning_rate
    for epoch in range(1, params.epochs + 1):
        loss, grads = loss_and_grads(model, batch, y)
        curve.append(loss)
        if lr == 0:
            continue
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = min(1.0, params.grad_clip / norm) if norm > 0 else 1.0
        for k, p in named.items():
            g = grads[k] * scale
            if params.optimizer == "sgd":
                p -= lr * g
                continue
            m1[k] = params.beta1 * m1[k] + (1 - params.beta1) * g
            m2[k] = params.beta2 * m2[k] + (1 - params.beta2) * g * g
            mhat = m1[k] / (1 - params.beta1**epoch)
            vhat = m2[k] / (1 - params.beta2**epoch)
            p -= lr * mhat / (np.sqrt(vhat) + params.eps)
    curve.append(loss_and_grads(model, batch, y)[0])
    return model, curve


def predict_proba(model, windows):
    if not windows:
        return np.zeros(0)
    return forward(model, stack_windows(windows))


def accuracy(model, windows, labels, threshold=0.5):
    probs = predict_proba(model, windows)
    return float(np.mean((probs >= threshold) == np.asarray(labels, dtype=bool)))
