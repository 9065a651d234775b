"""A 400-64-32-4 multilayer perceptron with hand-written backprop.

ReLU hidden layers, softmax output, mean cross-entropy (natural log) loss.
Everything is double precision and purely functional: forward/loss/grad
never mutate their inputs, so callers may evaluate batches concurrently.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

LAYER_SIZES = (400, 64, 32, 4)
# 400*64 + 64 + 64*32 + 32 + 32*4 + 4
PARAM_COUNT = 27_876
PROB_FLOOR = 1e-15

_FIELDS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class ModelParams:
    """Weights and biases; W_l maps layer l-1 activations to layer l."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray


@dataclass(frozen=True)
class MiniBatch:
    """A batch of standardized feature rows with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.labels) or len(self.labels) < 1:
            raise ValueError("batch needs matching, nonempty inputs and labels")


def shapes() -> list[tuple[int, ...]]:
    d0, d1, d2, d3 = LAYER_SIZES
    return [(d1, d0), (d1,), (d2, d1), (d2,), (d3, d2), (d3,)]


def init(rng: np.random.Generator) -> ModelParams:
    """He-normal weights (sd = sqrt(2 / fan_in)), zero biases."""
    d0, d1, d2, d3 = LAYER_SIZES
    return ModelParams(
        W1=rng.standard_normal((d1, d0)) * np.sqrt(2.0 / d0),
        b1=np.zeros(d1),
        W2=rng.standard_normal((d2, d1)) * np.sqrt(2.0 / d1),
        b2=np.zeros(d2),
        W3=rng.standard_normal((d3, d2)) * np.sqrt(2.0 / d2),
        b3=np.zeros(d3),
    )


def _forward_pass(params: ModelParams, x: np.ndarray):
    z1 = x @ params.W1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.W2.T + params.b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ params.W3.T + params.b3
    z3 = z3 - z3.max(axis=-1, keepdims=True)
    e = np.exp(z3)
    probs = e / e.sum(axis=-1, keepdims=True)
    return z1, a1, z2, a2, probs


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single input (400,) or a batch (B, 400)."""
    single = x.ndim == 1
    X = x[None, :] if single else x
    probs = _forward_pass(params, X)[-1]
    return probs[0] if single else probs


def loss(params: ModelParams, batch: MiniBatch) -> float:
    """Mean cross-entropy -ln p_label; probabilities floored at 1e-15."""
    probs = _forward_pass(params, batch.inputs)[-1]
    picked = probs[np.arange(len(batch.labels)), batch.labels]
    return float(-np.mean(np.log(np.clip(picked, PROB_FLOOR, 1.0))))


def grad(params: ModelParams, batch: MiniBatch) -> ModelParams:
    """Backprop gradient of :func:`loss`; ReLU subgradient at 0 taken as 0."""
    X, y = batch.inputs, batch.labels
    B = len(y)
    z1, a1, z2, a2, probs = _forward_pass(params, X)
    delta3 = probs.copy()
    delta3[np.arange(B), y] -= 1.0
    delta3 /= B
    gW3 = delta3.T @ a2
    gb3 = delta3.sum(axis=0)
    delta2 = (delta3 @ params.W3) * (z2 > 0.0)
    gW2 = delta2.T @ a1
    gb2 = delta2.sum(axis=0)
    delta1 = (delta2 @ params.W2) * (z1 > 0.0)
    gW1 = delta1.T @ X
    gb1 = delta1.sum(axis=0)
    return ModelParams(W1=gW1, b1=gb1, W2=gW2, b2=gb2, W3=gW3, b3=gb3)


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Argmax class indices for a batch of inputs."""
    return np.argmax(forward(params, x), axis=-1)


def add_scaled(p: ModelParams, q: ModelParams, coeff: float) -> ModelParams:
    """p + coeff * q, elementwise over every parameter array."""
    return ModelParams(*(getattr(p, f) + coeff * getattr(q, f) for f in _FIELDS))


def average(params_list: list[ModelParams]) -> ModelParams:
    """Unweighted mean of a nonempty list of parameter sets."""
    if not params_list:
        raise ValueError("cannot average an empty list")
    n = len(params_list)
    return ModelParams(*(sum(getattr(p, f) for p in params_list) / n for f in _FIELDS))


def to_vector(params: ModelParams) -> np.ndarray:
    """Flatten to the canonical order W1, b1, W2, b2, W3, b3 (row-major)."""
    return np.concatenate([getattr(params, f).ravel() for f in _FIELDS])


def from_vector(vec: np.ndarray) -> ModelParams:
    if vec.size != PARAM_COUNT:
        raise ValueError(f"expected {PARAM_COUNT} values, got {vec.size}")
    out, offset = [], 0
    for shape in shapes():
        n = int(np.prod(shape))
        out.append(vec[offset : offset + n].reshape(shape).copy())
        offset += n
    return ModelParams(*out)


# Checkpoint format: one ASCII header line, then PARAM_COUNT little-endian
# float64 values in canonical flattening order.
_CKPT_HEADER = f"risfed-mlp-v1 layers={','.join(map(str, LAYER_SIZES))} dtype=<f8 count={PARAM_COUNT}\n"


def save_params(params: ModelParams, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.encode("ascii"))
        f.write(to_vector(params).astype("<f8").tobytes())


def load_params(path: str) -> ModelParams:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii")
        if header != _CKPT_HEADER:
            raise ValueError(f"unsupported checkpoint header: {header!r}")
        payload = f.read()
    expected = PARAM_COUNT * struct.calcsize("<d")
    if len(payload) != expected:
        raise ValueError(f"checkpoint payload is {len(payload)} bytes, expected {expected}")
    return from_vector(np.frombuffer(payload, dtype="<f8").astype(np.float64))
