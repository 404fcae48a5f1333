"""Synthetic epochs, recordings and scripted transition traces per context class.

Each class has a signature: how many satellites are tracked, their C/N0
range and where on the sky they may appear. A recording is a sequence of
"scenes" (a fixed set of satellites re-drawn every few seconds, as the
vehicle moves) observed at 5 Hz with C/N0 noise and occasional dropouts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import LabeledRecording
from .gru import CLASS_NAMES
from .nmea import EMIT_TALKER, Constellation, Epoch, SatelliteObservation, build_sentence, format_time_of_day

OPEN_SKY, TREE_LINED, SEMI_OUTDOOR, URBAN_CANYON, VIADUCT_DOWN, SHALLOW_INDOOR, DEEP_INDOOR = range(7)

# the four transition experiments (10 transitions in total)
FIGURE_SCENARIOS = {
    "scenario1": [(OPEN_SKY, 40), (SEMI_OUTDOOR, 40), (SHALLOW_INDOOR, 40), (DEEP_INDOOR, 40)],
    "scenario2": [(DEEP_INDOOR, 40), (SHALLOW_INDOOR, 40), (SEMI_OUTDOOR, 40), (OPEN_SKY, 40)],
    "scenario3": [(OPEN_SKY, 40), (VIADUCT_DOWN, 15), (OPEN_SKY, 40)],
    "scenario4": [(OPEN_SKY, 40), (TREE_LINED, 40), (OPEN_SKY, 40)],
}

_PRN_RANGES = {
    Constellation.GPS: (1, 32),
    Constellation.GLONASS: (65, 96),
    Constellation.GALILEO: (1, 36),
    Constellation.BEIDOU: (1, 63),
    Constellation.QZSS: (193, 199),
}
_CONST_WEIGHTS = np.array([0.3, 0.2, 0.2, 0.25, 0.05])


@dataclass(frozen=True)
class ClassSignature:
    """Generator parameters for one context class (not measured values)."""

    name: str
    n_sats: tuple            # inclusive range of tracked satellites
    cn0: tuple               # dB-Hz range
    mask: str                # full / one-side-blocked / high-elevation / low-both-sides / window-side / near-empty
    elevation: tuple = (5, 85)
    cn0_noise: float = 1.5
    dropout: float = 0.04
    untracked: tuple = (0, 3)


DEFAULT_SIGNATURES = (
    ClassSignature("open_sky", (15, 25), (40, 52), "full"),
    ClassSignature("tree_lined_avenue", (12, 20), (25, 42), "full"),
    ClassSignature("semi_outdoor", (16, 26), (30, 48), "one-side-blocked"),
    ClassSignature("urban_canyon", (4, 8), (35, 48), "high-elevation", elevation=(60, 88)),
    ClassSignature("viaduct_down", (4, 8), (18, 35), "low-both-sides", elevation=(5, 30)),
    ClassSignature("shallow_indoor", (2, 6), (12, 30), "window-side", elevation=(5, 60)),
    ClassSignature("deep_indoor", (0, 2), (8, 20), "near-empty", untracked=(0, 4)),
)

# urban canyon also sees a few weak low satellites on both sides
_CANYON_LOW = dict(n=(0, 3), cn0=(15, 25), elevation=(10, 40))


@dataclass
class _Sat:
    const: Constellation
    prn: int
    el: int
    az: int
    cn0: Optional[float]  # base level; None for untracked
    bounds: tuple = (0, 99)


@dataclass
class Scene:
    """A fixed sky for a few seconds: tracked satellites plus untracked ones."""

    label: int
    tracked: list
    untracked: list
    n_min: int


def _draw_ids(rng, n: int) -> list:
    out, used = [], set()
    consts = list(_PRN_RANGES)
    while len(out) < n:
        c = consts[rng.choice(len(consts), p=_CONST_WEIGHTS)]
        lo, hi = _PRN_RANGES[c]
        prn = int(rng.integers(lo, hi + 1))
        if (c, prn) not in used:
            used.add((c, prn))
            out.append((c, prn))
    return out


def _azimuths(rng, sig: ClassSignature, n: int) -> np.ndarray:
    if sig.mask == "window-side":
        centre = rng.uniform(0, 360)
        return centre + rng.uniform(-60, 60, n)
    return rng.uniform(0, 360, n)


def draw_scene(label: int, rng: np.random.Generator,
               signatures: Sequence[ClassSignature] = DEFAULT_SIGNATURES) -> Scene:
    sig = signatures[label]
    lo, hi = sig.n_sats
    n = int(rng.integers(lo, hi + 1))
    az = _azimuths(rng, sig, n)
    el = rng.uniform(*sig.elevation, n)
    cn0 = rng.uniform(*sig.cn0, n)
    if sig.mask == "low-both-sides":
        # satellites on both sides of the road in roughly opposite pairs of similar strength
        road = rng.uniform(0, 360)
        half = (n + 1) // 2
        side = road + 90.0 + rng.uniform(-30, 30, half)
        az = np.concatenate([side, side + 180.0])[:n]
        cn0 = np.concatenate([cn0[:half], np.clip(cn0[:half] + rng.uniform(-3, 3, half), *sig.cn0)])[:n]
    n_min = lo
    if sig.mask == "one-side-blocked":
        blocked = rng.uniform(0, 360)
        keep = ~((np.mod(az - blocked, 360.0) < 180.0) & (el < 45.0))
        az, el, cn0 = az[keep], el[keep], cn0[keep]
        n_min = min(n_min, int(keep.sum()))
    rows = [(a, e, s, sig.cn0) for a, e, s in zip(az, el, cn0)]
    if sig.mask == "high-elevation":
        k = int(rng.integers(_CANYON_LOW["n"][0], _CANYON_LOW["n"][1] + 1))
        rows += [(a, e, s, _CANYON_LOW["cn0"]) for a, e, s in zip(
            rng.uniform(0, 360, k), rng.uniform(*_CANYON_LOW["elevation"], k), rng.uniform(*_CANYON_LOW["cn0"], k))]
    n_untracked = int(rng.integers(sig.untracked[0], sig.untracked[1] + 1))
    ids = _draw_ids(rng, len(rows) + n_untracked)
    tracked = [_Sat(c, p, int(round(e)), int(round(a)) % 360, float(s), b)
               for (c, p), (a, e, s, b) in zip(ids, rows)]
    untracked = [_Sat(c, p, int(rng.integers(0, 90)), int(rng.integers(0, 360)), None)
                 for c, p in ids[len(rows):]]
    return Scene(label, tracked, untracked, n_min)


def observe(scene: Scene, rng: np.random.Generator, timestamp: Optional[float] = None,
            signatures: Sequence[ClassSignature] = DEFAULT_SIGNATURES) -> Epoch:
    """One epoch of a scene: C/N0 noise, random dropouts (never below the class minimum)."""
    sig = signatures[scene.label]
    n = len(scene.tracked)
    drop = rng.random(n) < sig.dropout
    keep_n = n - int(drop.sum())
    if keep_n < scene.n_min:
        drop[:] = False
    noise = rng.normal(0.0, sig.cn0_noise, n)
    obs = []
    for s, d, e in zip(scene.tracked, drop, noise):
        if d:
            continue
        lo, hi = s.bounds
        obs.append(SatelliteObservation(s.const, s.prn, float(s.el), float(s.az),
                                        float(min(max(round(s.cn0 + e), lo), hi))))
    for s in scene.untracked:
        obs.append(SatelliteObservation(s.const, s.prn, float(s.el), float(s.az), None))
    return Epoch(timestamp, obs)


def sample_epoch(label: int, rng: np.random.Generator,
                 signatures: Sequence[ClassSignature] = DEFAULT_SIGNATURES) -> Epoch:
    if not 0 <= label < len(signatures):
        raise ValueError(f"class {label} out of range")
    return observe(draw_scene(label, rng, signatures), rng, signatures=signatures)


@dataclass
class ScenarioScript:
    segments: list  # [(label, seconds), ...]
    rate: float = 5.0
    seed: int = 0
    start_time: float = 12 * 3600.0

    def __post_init__(self):
        segs = []
        for lab, sec in self.segments:
            lab = class_index(lab)
            if not sec > 0:
                raise ValueError(f"segment duration must be positive, got {sec}")
            segs.append((lab, float(sec)))
        if not segs:
            raise ValueError("script has no segments")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        self.segments = segs

    @classmethod
    def from_json(cls, path, rate: float = 5.0, seed: int = 0) -> "ScenarioScript":
        data = json.loads(Path(path).read_text())
        return cls([(d["class"], d["seconds"]) for d in data], rate=rate, seed=seed)


def class_index(c) -> int:
    if isinstance(c, (int, np.integer)):
        if not 0 <= int(c) < len(CLASS_NAMES):
            raise ValueError(f"class {c} out of range")
        return int(c)
    key = str(c).strip().lower().replace("-", "_").replace(" ", "_")
    aliases = {"tree_lined": "tree_lined_avenue", "under_viaduct": "viaduct_down"}
    key = aliases.get(key, key)
    if key.isdigit():
        return class_index(int(key))
    if key not in CLASS_NAMES:
        raise ValueError(f"unknown class {c!r}")
    return CLASS_NAMES.index(key)


@dataclass
class Trace:
    epochs: list
    labels: np.ndarray
    times: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.times is None:
            self.times = np.array([e.timestamp for e in self.epochs], dtype=float)

    def to_recording(self, set_id: str = "trace") -> LabeledRecording:
        return LabeledRecording(int(self.labels[-1]), set_id, self.epochs, np.asarray(self.labels), self.times)


def _scene_epochs(label: int, n: int, rng, t0: float, rate: float, scene_seconds: tuple,
                  signatures) -> list:
    out = []
    while len(out) < n:
        scene = draw_scene(label, rng, signatures)
        span = int(round(rng.uniform(*scene_seconds) * rate))
        for _ in range(min(max(span, 1), n - len(out))):
            t = round(t0 + len(out) / rate, 2)
            out.append(observe(scene, rng, t, signatures))
    return out


def generate_trace(script: ScenarioScript, signatures: Sequence[ClassSignature] = DEFAULT_SIGNATURES,
                   scene_seconds: tuple = (4.0, 15.0)) -> Trace:
    rng = np.random.default_rng(script.seed)
    epochs, labels = [], []
    t = script.start_time
    for label, seconds in script.segments:
        n = int(round(seconds * script.rate))
        epochs += _scene_epochs(label, n, rng, t, script.rate, scene_seconds, signatures)
        labels += [label] * n
        t += n / script.rate
    return Trace(epochs, np.array(labels, dtype=int))


def generate_recording(label: int, n_epochs: int, rng: np.random.Generator, set_id: str = "",
                       rate: float = 5.0, signatures: Sequence[ClassSignature] = DEFAULT_SIGNATURES,
                       scene_seconds: tuple = (4.0, 15.0)) -> LabeledRecording:
    t0 = float(rng.integers(0, 20 * 3600)) + 3600.0
    eps = _scene_epochs(label, n_epochs, rng, t0, rate, scene_seconds, signatures)
    return LabeledRecording(label, set_id or f"{CLASS_NAMES[label]}/set", eps)


def generate_dataset(windows_per_class: int = 2000, sets_per_class: int = 7, seed: int = 0,
                     window: int = 6, rate: float = 5.0,
                     signatures: Sequence[ClassSignature] = DEFAULT_SIGNATURES) -> list:
    """Isolated-scenario recordings, ``sets_per_class`` per class.

    Set lengths are chosen so each class yields ``windows_per_class``
    sliding windows in total.
    """
    root = np.random.SeedSequence(seed)
    streams = root.spawn(len(signatures) * sets_per_class)
    base, extra = divmod(windows_per_class, sets_per_class)
    recs = []
    for label in range(len(signatures)):
        for s in range(sets_per_class):
            rng = np.random.default_rng(streams[label * sets_per_class + s])
            n = base + (1 if s < extra else 0) + window - 1
            recs.append(generate_recording(label, n, rng, f"{CLASS_NAMES[label]}/set{s + 1:02d}",
                                           rate, signatures))
    return recs


# ---- NMEA emission ----

def _rmc(t: float) -> str:
    return build_sentence(f"GNRMC,{format_time_of_day(t)},A,2751.6200,N,11253.8400,E,0.5,90.0,161026,,,A,V")


def _gsv_sentences(talker: str, obs: list) -> list:
    def f(v):
        return "" if v is None else "%d" % int(round(v))
    n_msgs = max(1, math.ceil(len(obs) / 4))
    out = []
    for i in range(n_msgs):
        chunk = obs[4 * i:4 * i + 4]
        parts = [talker + "GSV", str(n_msgs), str(i + 1), "%02d" % len(obs)]
        for o in chunk:
            parts += ["%02d" % o.prn, f(o.elevation), "%03d" % int(round(o.azimuth)) if o.azimuth is not None else "",
                      f(o.cn0)]
        out.append(build_sentence(",".join(parts)))
    return out


def epochs_to_nmea(epochs: Sequence[Epoch]) -> str:
    """Checksum-valid RMC + GSV text; values are rounded to NMEA integer resolution."""
    lines = []
    for ep in epochs:
        lines.append(_rmc(ep.timestamp or 0.0))
        by_talker: dict = {}
        for o in ep.observations:
            by_talker.setdefault(EMIT_TALKER[o.constellation], []).append(o)
        for talker in sorted(by_talker):
            lines += _gsv_sentences(talker, by_talker[talker])
    return "\r\n".join(lines) + "\r\n"


def write_labels_csv(path, times, labels) -> None:
    with open(path, "w") as fh:
        fh.write("t,label\n")
        for t, lab in zip(times, labels):
            fh.write(f"{t!r},{int(lab)}\n")


def write_dataset(recordings: Sequence[LabeledRecording], root) -> None:
    """Write recordings as ``root/<class>/<set>.nmea`` in the loader's layout."""
    root = Path(root)
    for r in recordings:
        d = root / CLASS_NAMES[r.label]
        d.mkdir(parents=True, exist_ok=True)
        (d / (r.set_id.split("/")[-1] + ".nmea")).write_text(epochs_to_nmea(r.epochs), newline="")
