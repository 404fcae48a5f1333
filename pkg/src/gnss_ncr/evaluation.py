"""Confusion matrices, transition delays, ablation and prediction traces."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import gru
from .dataset import LabeledRecording, split_by_sets, train_normalizer, windows_for, window_arrays
from .features import FeatureMode
from .gru import CLASS_NAMES, TrainConfig
from .svm import SvmModel, predict_svm, temporal_filter, train_svm

log = logging.getLogger(__name__)

VIADUCT_DOWN, SHALLOW_INDOOR = 4, 5


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # actual in rows, predicted in columns

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def percentages(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(rows > 0, 100.0 * self.counts / np.maximum(rows, 1), 0.0)
        return pct

    def per_class_accuracy(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        return np.where(rows > 0, np.diag(self.counts) / np.maximum(rows, 1), np.nan)

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(),
                "percent": np.round(self.percentages(), 4).tolist(),
                "overall_accuracy": overall_accuracy(self),
                "per_class_accuracy": [None if math.isnan(a) else float(a) for a in self.per_class_accuracy()]}

    def write_csv(self, path, class_names: Sequence[str] = CLASS_NAMES) -> None:
        k = self.counts.shape[0]
        names = list(class_names[:k])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["actual\\predicted"] + names)
            for name, row in zip(names, self.counts):
                w.writerow([name] + [int(v) for v in row])


def confusion_matrix(predictions, truths, n_classes: int = 7) -> ConfusionMatrix:
    p = np.asarray(predictions, dtype=int).reshape(-1)
    t = np.asarray(truths, dtype=int).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions vs {t.size} truths")
    if p.size == 0:
        raise ValueError("no samples to evaluate")
    for name, a in (("prediction", p), ("truth", t)):
        if a.min() < 0 or a.max() >= n_classes:
            raise ValueError(f"{name} label outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


@dataclass
class TransitionEvent:
    truth_index: int
    truth_time: float
    new_class: int
    detection_index: Optional[int]
    detection_time: Optional[float]
    delay: Optional[float]
    detected: bool


@dataclass
class TransitionReport:
    events: list
    accuracy: float
    rate: float
    stability: int

    @property
    def detected(self) -> list:
        return [e for e in self.events if e.detected]

    @property
    def missed(self) -> int:
        return sum(not e.detected for e in self.events)

    @property
    def mean_delay(self) -> float:
        d = [e.delay for e in self.detected]
        return float(np.mean(d)) if d else math.nan

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "mean_delay": None if math.isnan(self.mean_delay) else self.mean_delay,
                "missed": self.missed, "rate": self.rate, "stability": self.stability,
                "events": [asdict(e) for e in self.events]}


def transition_delays(predictions, truths, rate: float = 5.0, stability: int = 5,
                      times: Optional[Sequence[float]] = None) -> TransitionReport:
    """Delay from each truth change to the first stable adoption of the new class.

    A change at index ``i`` to class ``c`` is detected at the first ``j >= i``
    where ``stability`` consecutive predictions starting at ``j`` equal ``c``
    and that run ends before the next truth change (or the series end).
    """
    p = np.asarray(predictions, dtype=int)
    t = np.asarray(truths, dtype=int)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions vs {t.size} truths")
    n = t.size
    if n == 0:
        raise ValueError("empty series")
    changes = np.flatnonzero(t[1:] != t[:-1]) + 1
    bounds = list(changes) + [n]
    tt = np.asarray(times, dtype=float) if times is not None else np.arange(n) / rate
    events = []
    for k, i in enumerate(changes):
        end = bounds[k + 1]
        c = int(t[i])
        hit = (p[i:end] == c).astype(int)
        j = None
        if hit.size >= stability:
            runs = np.convolve(hit, np.ones(stability, dtype=int), mode="valid")
            ok = np.flatnonzero(runs == stability)
            if ok.size:
                j = int(i + ok[0])
        if j is None:
            events.append(TransitionEvent(int(i), float(tt[i]), c, None, None, None, False))
        else:
            events.append(TransitionEvent(int(i), float(tt[i]), c, j, float(tt[j]), (j - int(i)) / rate, True))
    return TransitionReport(events, float(np.mean(p == t)), rate, stability)


# ---- model-level prediction helpers ----

def gru_predict_series(features, m: gru.GruModel) -> np.ndarray:
    """Per-epoch labels from trailing windows; the first ``window-1`` epochs get -1."""
    X = np.asarray(features, dtype=float)
    W, _ = window_arrays(X, np.zeros(X.shape[0], dtype=int), m.window)
    out = np.full(X.shape[0], -1, dtype=int)
    if W.shape[0]:
        out[m.window - 1:] = gru.predict_proba(W, m).argmax(axis=1)
    return out


def svmtf_predict_series(features, m: SvmModel, window: int = 6):
    raw = np.asarray(predict_svm(np.asarray(features, dtype=float), m), dtype=int).reshape(-1)
    return raw, np.asarray(temporal_filter(raw.tolist(), window), dtype=int)


def write_trace_csv(path, times, truth, raw, filtered) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "truth", "raw_pred", "filtered_pred"])
        for row in zip(times, truth, raw, filtered):
            w.writerow([repr(float(row[0]))] + [int(v) for v in row[1:]])


def evaluate_gru(recordings: Sequence[LabeledRecording], m: gru.GruModel) -> ConfusionMatrix:
    X, y = windows_for(recordings, m.mode, m.window)
    pred = gru.predict_proba(X, m).argmax(axis=1)
    return confusion_matrix(pred, y, m.n_classes)


def evaluate_svmtf(recordings: Sequence[LabeledRecording], m: SvmModel, window: int = 6) -> ConfusionMatrix:
    """Isolated-set accuracy of SVM-TF; the filter runs within each recording."""
    preds, truths = [], []
    for r in recordings:
        _, filt = svmtf_predict_series(r.features(m.mode), m, window)
        preds.append(filt[window - 1:])
        truths.append(r.epoch_labels()[window - 1:])
    return confusion_matrix(np.concatenate(preds), np.concatenate(truths), m.n_classes)


def train_gru_on(recordings: Sequence[LabeledRecording], mode="zt", config: TrainConfig = TrainConfig(),
                 val: Optional[Sequence[LabeledRecording]] = None, window: int = 6):
    mode = FeatureMode.parse(mode)
    X, y = windows_for(recordings, mode, window)
    norm = train_normalizer(recordings, mode)
    val_xy = windows_for(val, mode, window) if val else None
    return gru.train(X, y, config, val=val_xy, normalizer=norm, mode=mode.value)


def train_svm_on(recordings: Sequence[LabeledRecording], mode="zt", seed: int = 0, **kw) -> SvmModel:
    mode = FeatureMode.parse(mode)
    X = np.vstack([r.features(mode) for r in recordings])
    y = np.concatenate([r.epoch_labels() for r in recordings])
    return train_svm(X, y, seed=seed, mode=mode.value, normalizer=train_normalizer(recordings, mode), **kw)


@dataclass
class AblationArm:
    mode: str
    confusion: ConfusionMatrix
    metrics: list = field(default_factory=list)
    model: Optional[gru.GruModel] = None

    @property
    def overall(self) -> float:
        return overall_accuracy(self.confusion)

    @property
    def viaduct_shallow_confusion(self) -> int:
        c = self.confusion.counts
        return int(c[VIADUCT_DOWN, SHALLOW_INDOOR] + c[SHALLOW_INDOOR, VIADUCT_DOWN])

    def to_dict(self) -> dict:
        c = self.confusion.counts
        return {"mode": self.mode, **self.confusion.to_dict(),
                "viaduct_down_as_shallow_indoor": int(c[VIADUCT_DOWN, SHALLOW_INDOOR]),
                "shallow_indoor_as_viaduct_down": int(c[SHALLOW_INDOOR, VIADUCT_DOWN]),
                "training_log": self.metrics}


def ablation_run(recordings: Sequence[LabeledRecording], modes=("yt", "zt"),
                 config: TrainConfig = TrainConfig(), holdout: int = 1, split_seed: int = 0,
                 window: int = 6) -> dict:
    """Train one GRU per feature mode on the same split and seed; evaluate on the held-out sets."""
    train, test = split_by_sets(recordings, holdout, split_seed)
    arms = []
    for mode in modes:
        model, metrics = train_gru_on(train, mode, config, val=test, window=window)
        cm = evaluate_gru(test, model)
        arms.append(AblationArm(FeatureMode.parse(mode).value, cm, metrics, model))
        log.info("ablation %s: overall %.4f, viaduct/shallow confusions %d",
                 mode, arms[-1].overall, arms[-1].viaduct_shallow_confusion)
    return {"split": {"train": [r.set_id for r in train], "test": [r.set_id for r in test]},
            "config": asdict(config), "arms": arms}


def ablation_report_dict(report: dict) -> dict:
    return {**report, "arms": [a.to_dict() for a in report["arms"]]}


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
