"""Linear one-vs-rest SVM on single-epoch features plus causal majority filtering."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gru import CLASS_NAMES, Normalizer, ModelFormatError, ModelVersionError, _dec, _enc

SVM_FORMAT = "gnss-ncr-svm"
SVM_VERSION = 1


@dataclass
class SvmModel:
    weights: np.ndarray  # (classes, d)
    biases: np.ndarray   # (classes,)
    normalizer: Normalizer
    mode: str = "zt"

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.weights.shape[1]:
            raise ValueError(f"feature dim {X.shape[-1]} does not match SVM dim {self.weights.shape[1]}")
        return self.normalizer.apply(X) @ self.weights.T + self.biases


def train_svm(X, y, epochs: int = 20, lr: float = 0.1, C: float = 1.0, seed: int = 0,
              n_classes: int = 7, mode: str = "zt", normalizer: Optional[Normalizer] = None) -> SvmModel:
    """Averaged stochastic subgradient descent on ``0.5*|w|^2 + C * sum(hinge)`` per class.

    The step size decays as ``lr / (1 + lr * t / n)`` and the returned
    machines are the running average of the iterates over the second half
    of the epochs. All one-vs-rest machines share the same seeded visiting
    order. Biases are not regularized.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) with one label per row")
    if np.unique(y).size < 2:
        raise ValueError("SVM training needs at least two classes")
    if epochs < 1 or not lr > 0 or C < 0:
        raise ValueError("need epochs >= 1, lr > 0 and C >= 0")
    norm = normalizer if normalizer is not None else Normalizer.fit(X)
    Xn = norm.apply(X)
    n, d = Xn.shape
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    W_avg, b_avg = W.copy(), b.copy()
    # +1 for the machine's own class, -1 otherwise
    Y = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)
    rng = np.random.default_rng(seed)
    t, averaged = 0, 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = lr / (1.0 + lr * t / n)
            x, yi = Xn[i], Y[i]
            active = yi * (W @ x + b) < 1.0
            # per-sample share of the objective: |w|^2 / (2n) + C * hinge_i
            W *= 1.0 - eta / n
            if active.any():
                W[active] += eta * C * yi[active, None] * x[None, :]
                b[active] += eta * C * yi[active]
            if 2 * epoch >= epochs - 1:
                averaged += 1
                W_avg += (W - W_avg) / averaged
                b_avg += (b - b_avg) / averaged
    return SvmModel(W_avg, b_avg, norm, mode)


def predict_svm(x, m: SvmModel):
    """Label(s) as argmax of machine scores; ties go to the lowest index."""
    s = m.scores(x)
    return np.argmax(s, axis=-1) if s.ndim > 1 else int(np.argmax(s))


def _majority(window: Sequence[int], prev: Optional[int]) -> int:
    counts = Counter(window)
    top = max(counts.values())
    winners = [lab for lab, c in counts.items() if c == top]
    if len(winners) == 1:
        return winners[0]
    if prev is not None and prev in winners:
        return prev
    # previous output not among the tied labels: most recent tied label wins
    for lab in reversed(window):
        if lab in winners:
            return lab
    return winners[0]


class TemporalFilter:
    """Streaming majority vote over the last ``window`` raw labels."""

    def __init__(self, window: int = 6):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._buf: list = []
        self._prev: Optional[int] = None

    def push(self, label: int) -> int:
        self._buf.append(int(label))
        if len(self._buf) > self.window:
            self._buf.pop(0)
        prev = self._prev if self._prev is not None else int(label)
        self._prev = _majority(self._buf, prev)
        return self._prev


def temporal_filter(labels: Sequence[int], window: int = 6) -> list:
    f = TemporalFilter(window)
    return [f.push(lab) for lab in labels]


def svm_to_dict(m: SvmModel) -> dict:
    return {
        "format": SVM_FORMAT, "version": SVM_VERSION, "mode": m.mode,
        "dims": {"input": int(m.weights.shape[1]), "classes": m.n_classes},
        "class_names": list(CLASS_NAMES[:m.n_classes]),
        "weights": _enc(m.weights), "biases": _enc(m.biases),
        "normalizer": {"mean": _enc(m.normalizer.mean), "std": _enc(m.normalizer.std)},
    }


def save_svm(m: SvmModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(svm_to_dict(m), fh, indent=1)


def load_svm(path) -> SvmModel:
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") != SVM_FORMAT:
        raise ModelFormatError(f"{path}: not an SVM model file")
    if d.get("version") != SVM_VERSION:
        raise ModelVersionError(f"{path}: SVM format version {d.get('version')!r}, expected {SVM_VERSION}")
    D, C = d["dims"]["input"], d["dims"]["classes"]
    return SvmModel(_dec(d["weights"], (C, D), "weights"), _dec(d["biases"], (C,), "biases"),
                    Normalizer(_dec(d["normalizer"]["mean"], (D,), "normalizer.mean"),
                               _dec(d["normalizer"]["std"], (D,), "normalizer.std")), d["mode"])
