"""Labeled recordings, normalization, sliding windows and set-wise splits."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .features import FeatureMode, feature_matrix, mode_for_dim, read_feature_csv
from .gru import CLASS_NAMES, Normalizer
from .nmea import read_epochs

log = logging.getLogger(__name__)

NMEA_SUFFIXES = {".nmea", ".txt", ".log", ".ubx.nmea"}


class DatasetError(ValueError):
    pass


@dataclass
class LabeledRecording:
    """One contiguous collection session.

    ``labels`` holds per-epoch truth for transition traces; otherwise every
    epoch carries ``label``. Recordings loaded from feature CSVs have no
    epochs, only ``features`` for the CSV's mode.
    """

    label: int
    set_id: str
    epochs: Optional[list] = None
    labels: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    _features: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        if self.epochs is not None:
            return len(self.epochs)
        return next(iter(self._features.values())).shape[0]

    def epoch_labels(self) -> np.ndarray:
        if self.labels is not None:
            return np.asarray(self.labels, dtype=int)
        return np.full(len(self), self.label, dtype=int)

    def epoch_times(self) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        if self.epochs is not None:
            return np.array([np.nan if e.timestamp is None else e.timestamp for e in self.epochs])
        return np.full(len(self), np.nan)

    def features(self, mode="zt") -> np.ndarray:
        mode = FeatureMode.parse(mode)
        if mode not in self._features:
            if self.epochs is None:
                have = ", ".join(m.value for m in self._features)
                raise DatasetError(f"recording {self.set_id} only has {have} features, not {mode.value}")
            self._features[mode] = feature_matrix(self.epochs, mode)
        return self._features[mode]

    def set_features(self, mode, X) -> None:
        self._features[FeatureMode.parse(mode)] = np.asarray(X, dtype=float)


@dataclass
class WindowSample:
    features: np.ndarray  # (length, d)
    label: int


def _recording_files(d: Path) -> list:
    return sorted(p for p in d.iterdir()
                  if p.is_file() and not p.name.endswith(".labels.csv")
                  and (p.suffix.lower() in NMEA_SUFFIXES or p.suffix.lower() == ".csv"))


def load_recording(path, label: int = -1) -> LabeledRecording:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        try:
            t, labels, X = read_feature_csv(path)
        except (ValueError, OSError) as e:
            raise DatasetError(f"cannot read feature file {path}: {e}") from e
        mode = mode_for_dim(X.shape[1])
        if mode is None:
            raise DatasetError(f"{path}: {X.shape[1]} feature columns match no feature mode")
        if label < 0 and labels.size and (labels >= 0).all():
            label = int(labels[-1])
        per_epoch = labels if labels.size and (labels >= 0).all() and np.unique(labels).size > 1 else None
        rec = LabeledRecording(label, path.stem, None, per_epoch, t)
        rec.set_features(mode, X)
        return rec
    try:
        epochs = read_epochs(path)
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot parse NMEA file {path}: {e}") from e
    if not epochs:
        raise DatasetError(f"{path}: no epochs found (no RMC/GGA sentences)")
    rec = LabeledRecording(label, path.stem, epochs)
    labels_path = path.with_suffix(".labels.csv")
    if labels_path.exists():
        rec.labels = _read_label_sidecar(labels_path, len(epochs))
    return rec


def _read_label_sidecar(path: Path, n: int) -> np.ndarray:
    rows = path.read_text().split()
    if rows and rows[0].startswith("t,"):
        rows = rows[1:]
    labels = np.array([int(r.split(",")[1]) for r in rows], dtype=int)
    if labels.size != n:
        raise DatasetError(f"{path}: {labels.size} labels for {n} epochs")
    return labels


def load_labeled_dataset(root, class_names: Sequence[str] = CLASS_NAMES) -> list:
    """Load ``root/<class_name>/<set files>`` into recordings, one per file."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    missing = [c for c in class_names if not (root / c).is_dir()]
    if missing:
        raise DatasetError(f"dataset root {root} is missing class directories: {', '.join(missing)}")
    recordings = []
    for label, name in enumerate(class_names):
        files = _recording_files(root / name)
        if not files:
            raise DatasetError(f"class directory {root / name} holds no recordings")
        for f in files:
            rec = load_recording(f, label)
            rec.set_id = f"{name}/{f.stem}"
            recordings.append(rec)
    total = sum(len(r) for r in recordings)
    log.info("loaded %d recordings, %d epochs from %s", len(recordings), total, root)
    return recordings


def fit_normalizer(X) -> Normalizer:
    return Normalizer.fit(X)


def apply_normalizer(norm: Normalizer, X) -> np.ndarray:
    return norm.apply(X)


def window_arrays(features, labels, length: int = 6, stride: int = 1):
    """Stacked windows ``(N, length, d)`` and final-epoch labels ``(N,)``."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    n = X.shape[0]
    count = max(0, n - length + 1)
    starts = np.arange(0, count, stride)
    if starts.size == 0:
        return np.zeros((0, length, X.shape[1] if X.ndim == 2 else 0)), np.zeros(0, dtype=int)
    idx = starts[:, None] + np.arange(length)[None, :]
    return X[idx], y[starts + length - 1]


def make_windows(recording: LabeledRecording, length: int = 6, stride: int = 1, mode="zt") -> list:
    X, y = window_arrays(recording.features(mode), recording.epoch_labels(), length, stride)
    return [WindowSample(x, int(lab)) for x, lab in zip(X, y)]


def windows_for(recordings: Sequence[LabeledRecording], mode="zt", length: int = 6):
    """Concatenated windows over recordings; no window crosses a recording."""
    parts = [window_arrays(r.features(mode), r.epoch_labels(), length) for r in recordings]
    d = FeatureMode.parse(mode).dim
    if not parts:
        return np.zeros((0, length, d)), np.zeros(0, dtype=int)
    return np.concatenate([p[0].reshape(-1, length, d) for p in parts]), np.concatenate([p[1] for p in parts])


def split_by_sets(recordings: Sequence[LabeledRecording], holdout: int = 1, seed: int = 0):
    """Hold out ``holdout`` whole recordings per class; returns ``(train, test)``."""
    if holdout < 0:
        raise DatasetError("holdout must be non-negative")
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for r in recordings:
        by_class.setdefault(r.label, []).append(r)
    train, test = [], []
    for label in sorted(by_class):
        recs = sorted(by_class[label], key=lambda r: r.set_id)
        if len(recs) <= holdout:
            raise DatasetError(f"class {label} has {len(recs)} sets; cannot hold out {holdout} "
                               f"and keep a training set")
        chosen = set(rng.choice(len(recs), size=holdout, replace=False).tolist())
        for i, r in enumerate(recs):
            (test if i in chosen else train).append(r)
    return train, test


def train_normalizer(recordings: Sequence[LabeledRecording], mode="zt") -> Normalizer:
    """Per-feature z-score constants from the epochs of training recordings only."""
    X = np.vstack([r.features(mode) for r in recordings if len(r)])
    return Normalizer.fit(X)


def class_dir_name(label: int) -> str:
    return CLASS_NAMES[label]


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
