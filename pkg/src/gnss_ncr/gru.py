"""Stacked GRU sequence classifier written directly in numpy.

Cell convention (update gate ``z``, reset gate ``r``, candidate ``c``)::

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    c = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * c

Gate matrices are stored stacked in ``z, r, h`` order, so ``W`` is
``(3*hidden, input)`` and ``U`` is ``(3*hidden, hidden)``.
"""

from __future__ import annotations

import base64
import copy
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

FORMAT_NAME = "gnss-ncr-gru"
FORMAT_VERSION = 1
GATES = ("z", "r", "h")

CLASS_NAMES = (
    "open_sky", "tree_lined_avenue", "semi_outdoor", "urban_canyon",
    "viaduct_down", "shallow_indoor", "deep_indoor",
)


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class ModelTruncatedError(ModelFormatError):
    pass


class ModelDimensionError(ModelFormatError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class GruLayerParams:
    W: np.ndarray  # (3H, D)
    U: np.ndarray  # (3H, H)
    b: np.ndarray  # (3H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str, gate: str) -> np.ndarray:
        """View of one gate's block, e.g. ``gate("W", "z")`` is ``W_z``."""
        H = self.hidden
        k = GATES.index(gate)
        return getattr(self, name)[k * H:(k + 1) * H]

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "GruLayerParams":
        return cls(np.zeros((3 * hidden, input_dim)), np.zeros((3 * hidden, hidden)), np.zeros(3 * hidden))


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Normalizer":
        X = np.asarray(X, dtype=float)
        X = X.reshape(-1, X.shape[-1])
        if X.shape[0] == 0:
            raise ValueError("cannot fit a normalizer on zero vectors")
        return cls(X.mean(axis=0), X.std(axis=0))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / np.maximum(self.std, 1e-8)


@dataclass
class GruModel:
    layers: list
    head_W: np.ndarray  # (classes, hidden)
    head_b: np.ndarray
    normalizer: Normalizer
    mode: str = "zt"
    window: int = 6
    class_names: tuple = CLASS_NAMES

    @classmethod
    def init(cls, input_dim: int, hidden: int = 180, n_layers: int = 2, n_classes: int = 7,
             rng: Optional[np.random.Generator] = None, **meta) -> "GruModel":
        """Weights uniform in +-1/sqrt(fan_in); biases zero. ``rng=None`` gives all zeros."""
        layers = []
        d = input_dim
        for _ in range(n_layers):
            p = GruLayerParams.zeros(d, hidden)
            if rng is not None:
                p.W[:] = rng.uniform(-1, 1, p.W.shape) / math.sqrt(d)
                p.U[:] = rng.uniform(-1, 1, p.U.shape) / math.sqrt(hidden)
            layers.append(p)
            d = hidden
        head_W = np.zeros((n_classes, hidden))
        if rng is not None:
            head_W[:] = rng.uniform(-1, 1, head_W.shape) / math.sqrt(hidden)
        meta.setdefault("class_names", CLASS_NAMES[:n_classes] if n_classes <= 7
                        else tuple(f"class{i}" for i in range(n_classes)))
        return cls(layers, head_W, np.zeros(n_classes), Normalizer.identity(input_dim), **meta)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden

    @property
    def n_classes(self) -> int:
        return self.head_W.shape[0]

    def params(self) -> dict:
        """Trainable arrays by name (live references)."""
        out = {}
        for i, p in enumerate(self.layers):
            out[f"layer{i}.W"] = p.W
            out[f"layer{i}.U"] = p.U
            out[f"layer{i}.b"] = p.b
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    def param_blocks(self) -> dict:
        """Per-gate views (``layer0.W_z`` ...) plus the head."""
        out = {}
        for i, p in enumerate(self.layers):
            for name in ("W", "U", "b"):
                for g in GATES:
                    out[f"layer{i}.{name}_{g}"] = p.gate(name, g)
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    def copy(self) -> "GruModel":
        return copy.deepcopy(self)

    def equals(self, other: "GruModel") -> bool:
        a, b = self.params(), other.params()
        return (a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
                and np.array_equal(self.normalizer.mean, other.normalizer.mean)
                and np.array_equal(self.normalizer.std, other.normalizer.std)
                and self.mode == other.mode and self.window == other.window
                and tuple(self.class_names) == tuple(other.class_names))


def gru_cell_forward(x, h_prev, p: GruLayerParams):
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != p.hidden:
        raise ValueError(f"shape mismatch: x {x.shape}, h {h_prev.shape} vs layer "
                         f"{p.input_dim}->{p.hidden}")
    H = p.hidden
    a = x @ p.W.T + p.b
    u = h_prev @ p.U[:2 * H].T
    z = sigmoid(a[..., :H] + u[..., :H])
    r = sigmoid(a[..., H:2 * H] + u[..., H:])
    c = np.tanh(a[..., 2 * H:] + (r * h_prev) @ p.U[2 * H:].T)
    return (1.0 - z) * h_prev + z * c


def _layer_forward(X, p: GruLayerParams):
    """X: (B, T, D). Returns hidden sequence (B, T, H) and a cache for backprop."""
    B, T, _ = X.shape
    H = p.hidden
    A = (X.reshape(B * T, -1) @ p.W.T + p.b).reshape(B, T, 3 * H)
    Uzr, Uh = p.U[:2 * H], p.U[2 * H:]
    h = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        a = A[:, t]
        u = h @ Uzr.T
        z = sigmoid(a[:, :H] + u[:, :H])
        r = sigmoid(a[:, H:2 * H] + u[:, H:])
        rh = r * h
        c = np.tanh(a[:, 2 * H:] + rh @ Uh.T)
        cache.append((h, z, r, rh, c))
        h = (1.0 - z) * h + z * c
        hs[:, t] = h
    return hs, cache


def _layer_backward(X, dHs, p: GruLayerParams, cache):
    """Backprop through one layer; returns (dX, dW, dU, db)."""
    B, T, _ = X.shape
    H = p.hidden
    Uz, Ur, Uh = p.U[:H], p.U[H:2 * H], p.U[2 * H:]
    dA = np.empty((B, T, 3 * H))
    dU = np.zeros_like(p.U)
    dh_next = np.zeros((B, H))
    for t in reversed(range(T)):
        h_prev, z, r, rh, c = cache[t]
        dh = dHs[:, t] + dh_next
        dc = dh * z
        dz = dh * (c - h_prev)
        dh_prev = dh * (1.0 - z)
        da_h = dc * (1.0 - c * c)
        d_rh = da_h @ Uh
        dr = d_rh * h_prev
        dh_prev += d_rh * r
        da_z = dz * z * (1.0 - z)
        da_r = dr * r * (1.0 - r)
        dU[:H] += da_z.T @ h_prev
        dU[H:2 * H] += da_r.T @ h_prev
        dU[2 * H:] += da_h.T @ rh
        dh_prev += da_z @ Uz + da_r @ Ur
        dA[:, t, :H] = da_z
        dA[:, t, H:2 * H] = da_r
        dA[:, t, 2 * H:] = da_h
        dh_next = dh_prev
    dA2 = dA.reshape(B * T, 3 * H)
    dW = dA2.T @ X.reshape(B * T, -1)
    db = dA2.sum(axis=0)
    dX = (dA2 @ p.W).reshape(X.shape)
    return dX, dW, dU, db


def _check_input(X, m: GruModel):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != m.input_dim:
        raise ValueError(f"window shape {X.shape[1:]} does not match model input dim {m.input_dim}")
    if X.shape[1] != m.window:
        raise ValueError(f"window length {X.shape[1]} does not match model window {m.window}")
    return X


def forward(window, m: GruModel, return_cache: bool = False):
    """Class probabilities for one window ``(T, d)`` or a batch ``(B, T, d)``."""
    X = _check_input(window, m)
    single = np.asarray(window).ndim == 2
    inp = m.normalizer.apply(X)
    caches, inputs = [], []
    for p in m.layers:
        inputs.append(inp)
        inp, cache = _layer_forward(inp, p)
        caches.append(cache)
    h_last = inp[:, -1]
    probs = softmax(h_last @ m.head_W.T + m.head_b)
    if return_cache:
        return probs, (inputs, caches, inp)
    return probs[0] if single else probs


def cross_entropy(probs, label: int, n_classes: Optional[int] = None) -> float:
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[-1] if n_classes is None else n_classes
    if not 0 <= int(label) < n:
        raise ValueError(f"label {label} out of range 0..{n - 1}")
    return float(-math.log(max(float(probs[int(label)]), 1e-12)))


def backward(windows, labels, m: GruModel):
    """Gradients of the mean cross-entropy over a batch.

    Returns ``(grads, loss)`` where ``grads`` maps the names of
    :meth:`GruModel.params` to arrays of the same shape.
    """
    X = _check_input(windows, m)
    y = np.asarray(labels, dtype=int).reshape(-1)
    B = X.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    if y.shape[0] != B:
        raise ValueError(f"{B} windows but {y.shape[0]} labels")
    if y.min() < 0 or y.max() >= m.n_classes:
        raise ValueError(f"labels must lie in 0..{m.n_classes - 1}")
    probs, (inputs, caches, hs_top) = forward(X, m, return_cache=True)
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(B), y], 1e-12))))

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    h_last = hs_top[:, -1]
    grads = {"head.W": dlogits.T @ h_last, "head.b": dlogits.sum(axis=0)}
    dHs = np.zeros_like(hs_top)
    dHs[:, -1] = dlogits @ m.head_W
    for i in reversed(range(len(m.layers))):
        dHs, dW, dU, db = _layer_backward(inputs[i], dHs, m.layers[i], caches[i])
        grads[f"layer{i}.W"], grads[f"layer{i}.U"], grads[f"layer{i}.b"] = dW, dU, db
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return grads, loss


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(model: GruModel, grads: dict, state: AdamState, lr: float = 5.0e-5,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """In-place Adam update of ``model``; returns ``(model, state)``."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    params = model.params()
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {name} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return model, state


@dataclass
class TrainConfig:
    max_epochs: int = 35
    batch_size: int = 256
    learning_rate: float = 5.0e-5
    seed: int = 0
    patience: int = 10
    hidden: int = 180
    n_layers: int = 2

    def __post_init__(self):
        for name in ("max_epochs", "batch_size", "patience", "hidden", "n_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def predict_proba(X, m: GruModel, batch_size: int = 1024) -> np.ndarray:
    X = _check_input(X, m)
    if X.shape[0] == 0:
        return np.zeros((0, m.n_classes))
    return np.vstack([forward(X[i:i + batch_size], m) for i in range(0, X.shape[0], batch_size)])


def predict(window, m: GruModel):
    """``(label, probs)`` for one window; ties go to the lowest class index."""
    probs = forward(window, m)
    return int(np.argmax(probs)), probs


def accuracy(X, y, m: GruModel) -> float:
    if len(y) == 0:
        return math.nan
    return float(np.mean(predict_proba(X, m).argmax(axis=1) == np.asarray(y)))


def train(X, y, config: TrainConfig = TrainConfig(), val: Optional[tuple] = None,
          normalizer: Optional[Normalizer] = None, mode: str = "zt", n_classes: int = 7,
          class_names: Optional[Sequence[str]] = None):
    """Mini-batch Adam training with best-validation snapshotting.

    ``X`` is ``(N, window, d)`` raw (unnormalized) features and ``y`` the
    window labels. Without ``val`` the training accuracy selects the snapshot.
    Returns ``(model, metrics)`` with one metrics dict per epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} windows but {y.shape[0]} labels")
    rng = np.random.default_rng(config.seed)
    meta = dict(mode=mode, window=X.shape[1])
    if class_names is not None:
        meta["class_names"] = tuple(class_names)
    model = GruModel.init(X.shape[2], config.hidden, config.n_layers, n_classes, rng, **meta)
    model.normalizer = normalizer if normalizer is not None else Normalizer.fit(X)

    state = AdamState()
    best, best_acc, since_best = model.copy(), -1.0, 0
    metrics = []
    n = X.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        tot_loss, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            grads, loss = backward(X[idx], y[idx], model)
            tot_loss += loss * len(idx)
            adam_step(model, grads, state, config.learning_rate)
        train_acc = accuracy(X, y, model)
        val_acc = accuracy(*val, model) if val is not None and len(val[1]) else math.nan
        score = train_acc if math.isnan(val_acc) else val_acc
        metrics.append(dict(epoch=epoch, train_loss=tot_loss / n, train_acc=train_acc, val_acc=val_acc))
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", epoch, tot_loss / n, train_acc, val_acc)
        if score > best_acc:
            best, best_acc, since_best = model.copy(), score, 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return best, metrics


def write_metrics_csv(metrics, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,train_acc,val_acc\n")
        for r in metrics:
            fh.write(f"{r['epoch']},{r['train_loss']!r},{r['train_acc']!r},{r['val_acc']!r}\n")


def _enc(a) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _dec(s: str, shape, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(s, validate=True)
    except (ValueError, TypeError) as e:
        raise ModelTruncatedError(f"{what}: bad base64 payload") from e
    need = int(np.prod(shape)) * 8
    if len(raw) != need:
        raise ModelDimensionError(f"{what}: {len(raw)} bytes, expected {need} for shape {tuple(shape)}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)


def model_to_dict(m: GruModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "mode": m.mode,
        "gate_order": "".join(GATES),
        "dims": {"input": m.input_dim, "hidden": m.hidden, "layers": len(m.layers),
                 "classes": m.n_classes, "window": m.window},
        "class_names": list(m.class_names),
        "normalizer": {"mean": _enc(m.normalizer.mean), "std": _enc(m.normalizer.std)},
        "layers": [{"W": _enc(p.W), "U": _enc(p.U), "b": _enc(p.b)} for p in m.layers],
        "head": {"W": _enc(m.head_W), "b": _enc(m.head_b)},
    }


def model_from_dict(d: dict) -> GruModel:
    if d.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"not a GRU model file (format {d.get('format')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise ModelVersionError(f"model format version {d.get('version')!r}, expected {FORMAT_VERSION}")
    try:
        dims = d["dims"]
        D, H, L, C, T = (int(dims[k]) for k in ("input", "hidden", "layers", "classes", "window"))
        if len(d["layers"]) != L:
            raise ModelDimensionError(f"dims declare {L} layers, file has {len(d['layers'])}")
        if len(d["class_names"]) != C:
            raise ModelDimensionError(f"dims declare {C} classes, file names {len(d['class_names'])}")
        layers = []
        din = D
        for i, lp in enumerate(d["layers"]):
            layers.append(GruLayerParams(
                _dec(lp["W"], (3 * H, din), f"layer{i}.W"),
                _dec(lp["U"], (3 * H, H), f"layer{i}.U"),
                _dec(lp["b"], (3 * H,), f"layer{i}.b")))
            din = H
        norm = Normalizer(_dec(d["normalizer"]["mean"], (D,), "normalizer.mean"),
                          _dec(d["normalizer"]["std"], (D,), "normalizer.std"))
        return GruModel(layers, _dec(d["head"]["W"], (C, H), "head.W"), _dec(d["head"]["b"], (C,), "head.b"),
                        norm, mode=d["mode"], window=T, class_names=tuple(d["class_names"]))
    except KeyError as e:
        raise ModelTruncatedError(f"model file missing field {e}") from None


def model_bytes(m: GruModel) -> bytes:
    return json.dumps(model_to_dict(m), indent=1).encode("utf-8")


def save_model(m: GruModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(m))


def load_model(path) -> GruModel:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        d = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelTruncatedError(f"{path}: incomplete or corrupt model file ({e})") from None
    if not isinstance(d, dict):
        raise ModelTruncatedError(f"{path}: model file is not a JSON object")
    return model_from_dict(d)
