"""Per-epoch C/N0 statistics, azimuth distribution factor and feature vectors."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import astuple, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .nmea import Epoch

# denominator floor (dB-Hz) and clamp for the azimuth distribution factor
RATIO_EPS = 1.0
RATIO_MAX = 100.0


class FeatureMode(str, enum.Enum):
    XT = "xt"
    YT = "yt"
    ZT = "zt"

    @classmethod
    def parse(cls, value) -> "FeatureMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())

    @property
    def names(self) -> tuple:
        return FEATURE_NAMES[self]

    @property
    def dim(self) -> int:
        return len(FEATURE_NAMES[self])


FEATURE_NAMES = {
    FeatureMode.XT: ("num", "sum", "mean", "std", "max", "min", "range",
                     "skewness", "kurtosis", "median", "iqr"),
    FeatureMode.YT: ("num", "mean", "std", "max", "min",
                     "skewness", "kurtosis", "median", "iqr"),
    FeatureMode.ZT: ("num", "mean", "std", "max", "min",
                     "skewness", "kurtosis", "median", "iqr", "ratio"),
}


@dataclass(frozen=True)
class StatSet:
    num: float = 0.0
    sum: float = 0.0
    mean: float = 0.0
    std: float = 0.0
    max: float = 0.0
    min: float = 0.0
    range: float = 0.0
    skewness: float = 0.0
    kurtosis: float = 0.0
    median: float = 0.0
    iqr: float = 0.0


def _cn0_values(epoch) -> np.ndarray:
    if isinstance(epoch, Epoch):
        return np.array([o.cn0 for o in epoch.available], dtype=float)
    return np.asarray(epoch, dtype=float)


def cn0_statistics(epoch) -> StatSet:
    """Statistics of the C/N0 values of the tracked satellites in an epoch.

    Accepts an :class:`Epoch` or a plain sequence of C/N0 values. Moments are
    population moments; kurtosis is excess kurtosis; quartiles interpolate
    linearly between closest ranks. Empty epochs give all zeros, and
    skewness/kurtosis are 0 when every value is identical.
    """
    c = _cn0_values(epoch)
    n = c.size
    if n == 0:
        return StatSet()
    mean = float(c.mean())
    hi, lo = float(c.max()), float(c.min())
    dev = c - mean
    m2 = float(np.mean(dev ** 2))
    if hi == lo or m2 == 0.0:  # the second guard covers spreads that underflow
        skew = kurt = 0.0
    else:
        skew = float(np.mean(dev ** 3)) / m2 ** 1.5
        kurt = float(np.mean(dev ** 4)) / m2 ** 2 - 3.0
    q1, med, q3 = np.percentile(c, [25.0, 50.0, 75.0])
    return StatSet(
        num=float(n), sum=float(c.sum()), mean=mean, std=math.sqrt(m2),
        max=hi, min=lo, range=hi - lo, skewness=skew, kurtosis=kurt,
        median=float(med), iqr=float(q3 - q1),
    )


def azimuth_distribution_factor(epoch, cn0=None) -> float:
    """Largest ratio of C/N0 mass between the two half-skies over all bisectors.

    ``epoch`` is an :class:`Epoch` or an azimuth array (degrees) paired with
    ``cn0``. A bisector ``b`` splits the sky into ``[b, b+180)`` and its
    complement (circularly). The ratio only changes when ``b`` crosses a
    satellite azimuth or its antipode, and on each piece it equals the value
    at the piece's right end, so scanning those candidates is exact.
    """
    if cn0 is None:
        obs = [o for o in epoch.available if o.azimuth is not None]
        az = np.array([o.azimuth for o in obs], dtype=float)
        c = np.array([o.cn0 for o in obs], dtype=float)
    else:
        az = np.asarray(epoch, dtype=float) % 360.0
        c = np.asarray(cn0, dtype=float)
    if az.size == 0:
        return 1.0
    # offsets relative to each candidate, built from azimuth differences so a
    # satellite lands exactly on its own candidate (0) and antipode (180)
    diff = az[None, :] - az[:, None]
    best = -math.inf
    for offset in (0.0, 180.0):
        in_first = np.mod(diff - offset, 360.0) < 180.0
        first = np.where(in_first, c[None, :], 0.0).sum(axis=1)
        second = np.where(in_first, 0.0, c[None, :]).sum(axis=1)
        r = first / np.maximum(second, RATIO_EPS)
        best = max(best, float(r.max()))
    return min(max(best, 1.0), RATIO_MAX)


def feature_vector(epoch: Epoch, mode="zt") -> np.ndarray:
    mode = FeatureMode.parse(mode)
    st = cn0_statistics(epoch)
    if mode is FeatureMode.XT:
        return np.array(astuple(st), dtype=float)
    vals = [st.num, st.mean, st.std, st.max, st.min,
            st.skewness, st.kurtosis, st.median, st.iqr]
    if mode is FeatureMode.ZT:
        vals.append(azimuth_distribution_factor(epoch))
    return np.array(vals, dtype=float)


def feature_matrix(epochs: Sequence[Epoch], mode="zt") -> np.ndarray:
    mode = FeatureMode.parse(mode)
    if not epochs:
        return np.zeros((0, mode.dim))
    return np.vstack([feature_vector(ep, mode) for ep in epochs])


def write_feature_csv(path, times: Iterable, labels: Iterable, features: np.ndarray) -> None:
    """Write ``t,label,f0..f{k-1}`` rows; label -1 means unlabeled."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    k = features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "label"] + [f"f{i}" for i in range(k)])
        for t, lab, row in zip(times, labels, features):
            w.writerow(["" if t is None else repr(float(t)), int(lab)] + [repr(float(v)) for v in row])


def read_feature_csv(path):
    """Returns ``(times, labels, features)``; missing times come back as NaN."""
    times, labels, rows = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or header[:2] != ["t", "label"]:
            raise ValueError(f"{path}: not a feature CSV (header {header!r})")
        k = len(header) - 2
        for lineno, rec in enumerate(r, start=2):
            if not rec:
                continue
            if len(rec) != k + 2:
                raise ValueError(f"{path}:{lineno}: expected {k + 2} columns, got {len(rec)}")
            times.append(float(rec[0]) if rec[0] else math.nan)
            labels.append(int(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    feats = np.array(rows, dtype=float).reshape(len(rows), k)
    return np.array(times, dtype=float), np.array(labels, dtype=int), feats


def mode_for_dim(dim: int) -> Optional[FeatureMode]:
    for m in FeatureMode:
        if m.dim == dim:
            return m
    return None
