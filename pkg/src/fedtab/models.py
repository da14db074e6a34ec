"""Differentiable tabular classifiers trained with plain minibatch SGD.

Two model kinds: logistic regression and a three-weight-layer MLP
(tanh hidden activations, sigmoid output).  Forward, loss, and gradients are
written out by hand on numpy arrays; everything here is a pure function of
its inputs, so identical calls produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .rng import Stream

Layout = tuple[tuple[str, tuple[int, ...]], ...]

LOGISTIC = "logistic-regression"
MLP3 = "mlp3"

# Open-interval clamp for reported risk scores; training uses raw logits.
_SCORE_EPS = 1e-15


def layout_size(layout: Layout) -> int:
    return sum(int(np.prod(shape)) for _, shape in layout)


@dataclass(frozen=True)
class ParameterVector:
    """Flat float64 weight vector plus the (name, shape) layout that maps it
    onto layers.  Entries whose name starts with "b" are biases and are
    exempt from L2."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size != layout_size(self.layout):
            raise ShapeError(
                f"vector length {vals.size} != layout size {layout_size(self.layout)}"
            )
        if not np.all(np.isfinite(vals)):
            raise ShapeError("parameter vector contains non-finite values")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def compatible(self, other: "ParameterVector") -> bool:
        return self.layout == other.layout

    def unpack(self) -> dict[str, np.ndarray]:
        out = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            out[name] = self.values[offset : offset + size].reshape(shape)
            offset += size
        return out

    def bias_mask(self) -> np.ndarray:
        mask = np.zeros(self.values.size, dtype=bool)
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            if name.startswith("b"):
                mask[offset : offset + size] = True
            offset += size
        return mask


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    hidden_dims: tuple[int, int] = (32, 16)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (LOGISTIC, MLP3):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.kind == MLP3:
            if len(self.hidden_dims) != 2 or any(h < 1 for h in self.hidden_dims):
                raise ConfigError("mlp3 needs exactly two positive hidden dims")

    def layout(self) -> Layout:
        d = self.input_dim
        if self.kind == LOGISTIC:
            return (("w", (d,)), ("b", (1,)))
        h1, h2 = self.hidden_dims
        return (
            ("W1", (d, h1)),
            ("b1", (h1,)),
            ("W2", (h1, h2)),
            ("b2", (h2,)),
            ("W3", (h2, 1)),
            ("b3", (1,)),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            kind=d["kind"],
            input_dim=int(d["input_dim"]),
            hidden_dims=tuple(d.get("hidden_dims", (32, 16))),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    local_epochs: int = 1
    batch_size: int = 64
    l2: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "local_epochs": self.local_epochs,
            "batch_size": self.batch_size,
            "l2": self.l2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(d["learning_rate"]),
            local_epochs=int(d.get("local_epochs", 1)),
            batch_size=int(d.get("batch_size", 64)),
            l2=float(d.get("l2", 0.0)),
        )


def init_model(spec: ModelSpec) -> ParameterVector:
    """Initial weights: zeros for logistic regression; for the MLP each weight
    matrix is uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)] with zero biases,
    drawn from the stream derived from (spec.seed, "init", layer name)."""
    layout = spec.layout()
    if spec.kind == LOGISTIC:
        return ParameterVector(np.zeros(layout_size(layout)), layout)
    root = Stream(spec.seed)
    parts = []
    for name, shape in layout:
        size = int(np.prod(shape))
        if name.startswith("b"):
            parts.append(np.zeros(size))
        else:
            fan_in = shape[0]
            r = 1.0 / np.sqrt(fan_in)
            u = root.derive("init", name).uniform(size)
            parts.append((2.0 * u - 1.0) * r)
    return ParameterVector(np.concatenate(parts), layout)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_matrix(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"expected rows of dim {spec.input_dim}, got shape {x.shape}")
    return x


def _forward(w: ParameterVector, spec: ModelSpec, x: np.ndarray):
    """Returns (logits, hidden activations) for a 2-D batch."""
    p = w.unpack()
    if spec.kind == LOGISTIC:
        z = x @ p["w"] + p["b"][0]
        return z, ()
    a1 = np.tanh(x @ p["W1"] + p["b1"])
    a2 = np.tanh(a1 @ p["W2"] + p["b2"])
    z = (a2 @ p["W3"]).reshape(-1) + p["b3"][0]
    return z, (a1, a2)


def predict_batch(w: ParameterVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Risk scores in the open interval (0, 1) for each row of x."""
    x = _check_matrix(spec, x)
    if w.layout != spec.layout():
        raise ShapeError("weight layout does not match model spec")
    z, _ = _forward(w, spec, x)
    return np.clip(_sigmoid(z), _SCORE_EPS, 1.0 - _SCORE_EPS)


def predict(w: ParameterVector, spec: ModelSpec, x) -> float:
    return float(predict_batch(w, spec, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def loss_and_gradient(
    w: ParameterVector,
    spec: ModelSpec,
    x: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, ParameterVector]:
    """Mean binary cross-entropy plus l2/2 * ||non-bias weights||^2, with its
    analytic gradient in the same layout as w.

    Cross-entropy is computed from logits (softplus form), so saturated
    scores never produce log(0).
    """
    x = _check_matrix(spec, x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.size != n:
        raise ShapeError(f"{n} rows but {y.size} labels")
    if w.layout != spec.layout():
        raise ShapeError("weight layout does not match model spec")

    params = w.unpack()
    z, hidden = _forward(w, spec, x)
    # log(1 + e^z) - y*z, stable for any |z|
    bce = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    loss = float(np.mean(bce))
    if l2 > 0.0:
        nb = w.values[~w.bias_mask()]
        loss += 0.5 * l2 * float(nb @ nb)

    dz = (_sigmoid(z) - y) / n
    grads: dict[str, np.ndarray] = {}
    if spec.kind == LOGISTIC:
        grads["w"] = x.T @ dz
        grads["b"] = np.array([dz.sum()])
    else:
        a1, a2 = hidden
        d3 = dz.reshape(-1, 1)
        grads["W3"] = a2.T @ d3
        grads["b3"] = np.array([d3.sum()])
        d2 = (d3 @ params["W3"].T) * (1.0 - a2 * a2)
        grads["W2"] = a1.T @ d2
        grads["b2"] = d2.sum(axis=0)
        d1 = (d2 @ params["W2"].T) * (1.0 - a1 * a1)
        grads["W1"] = x.T @ d1
        grads["b1"] = d1.sum(axis=0)
    if l2 > 0.0:
        for name, _ in w.layout:
            if not name.startswith("b"):
                grads[name] = grads[name] + l2 * params[name]

    flat = np.concatenate([grads[name].reshape(-1) for name, _ in w.layout])
    return loss, ParameterVector(flat, w.layout)


def train_local(
    w: ParameterVector,
    spec: ModelSpec,
    config: TrainConfig,
    x: np.ndarray,
    y: np.ndarray,
    rng_seed: int,
) -> ParameterVector:
    """config.local_epochs epochs of minibatch SGD from w over (x, y).

    Each epoch shuffles row indices with the stream derived from
    (rng_seed, "epoch", e); when batch_size >= n an epoch is a single
    full-batch step and no shuffle is drawn.  Fully deterministic given
    (w, config, data, rng_seed).
    """
    x = _check_matrix(spec, x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty training data")
    if y.size != n:
        raise ShapeError(f"{n} rows but {y.size} labels")
    root = Stream(rng_seed)
    cur = w
    for epoch in range(config.local_epochs):
        if config.batch_size >= n:
            order = np.arange(n)
        else:
            order = root.derive("epoch", epoch).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grad = loss_and_gradient(cur, spec, x[idx], y[idx], config.l2)
            cur = ParameterVector(
                cur.values - config.learning_rate * grad.values, cur.layout
            )
    return cur


def encode_values(values: np.ndarray) -> list[str]:
    """Wire encoding: one decimal string per weight, 17 significant digits,
    which round-trips IEEE-754 doubles exactly."""
    return [format(float(v), ".17g") for v in values]


def decode_values(strings: list[str]) -> np.ndarray:
    out = np.array([float(s) for s in strings], dtype=np.float64)
    if out.size and not np.all(np.isfinite(out)):
        raise ShapeError("decoded weights contain non-finite values")
    return out
