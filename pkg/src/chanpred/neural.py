"""Multilayer perceptron with ReLU hidden layers, trained with ADAM on MSE.

Parameters live in one flat float64 buffer; :meth:`MlpModel.layers` exposes
per-layer ``(W, b)`` views with ``W`` of shape ``(fan_in, fan_out)``, so a
layer computes ``a @ W + b``.  Gradients use the same flat layout.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

MODEL_MAGIC = b"CPMLP"
MODEL_VERSION = 1


@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ValueError(f"all layer sizes must be >= 1: {self.dims}")

    @classmethod
    def for_subchannel(cls, I: int, K1: int, p: int = 1, hidden: Sequence[int] | None = None):
        """Default predictor network: two hidden layers of ``2 I K1`` nodes."""
        n_node = 2 * I * K1
        return cls(2 * I * K1, tuple(hidden) if hidden is not None else (n_node, n_node),
                   2 * p * K1)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    def shapes(self) -> list[tuple[tuple[int, int], int]]:
        d = self.dims
        return [((d[k], d[k + 1]), d[k + 1]) for k in range(len(d) - 1)]


def param_count(arch: MlpArch) -> int:
    """Trainable parameters: sum over layers of ``fan_in * fan_out + fan_out``."""
    return sum(i * o + o for (i, o), _ in arch.shapes())


def _views(arch: MlpArch, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out, k = [], 0
    for (fi, fo), nb in arch.shapes():
        W = flat[k:k + fi * fo].reshape(fi, fo)
        k += fi * fo
        b = flat[k:k + nb]
        k += nb
        out.append((W, b))
    return out


@dataclass
class MlpModel:
    arch: MlpArch
    params: np.ndarray
    input_scale: float = 1.0
    loss_history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if self.params.shape != (param_count(self.arch),):
            raise ValueError("parameter buffer does not match architecture")

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return _views(self.arch, self.params)

    def copy(self) -> "MlpModel":
        return replace(self, params=self.params.copy(), loss_history=list(self.loss_history))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on unnormalized inputs; outputs are rescaled back."""
        s = self.input_scale
        return forward(self, np.asarray(x, dtype=float) / s) * s


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 150
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    scale: float | None = None   # None: max |feature coefficient| of the dataset

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        return cls(np.zeros_like(model.params), np.zeros_like(model.params), 0)


def init_model(arch: MlpArch, rng: np.random.Generator) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    params = np.zeros(param_count(arch))
    for W, _ in _views(arch, params):
        bound = math.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-bound, bound, W.shape)
    return MlpModel(arch, params)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.arch.input_dim:
        raise ValueError(f"input length {x.shape[-1]} != input_dim {model.arch.input_dim}")
    a = x
    layers = model.layers()
    for W, b in layers[:-1]:
        a = np.maximum(a @ W + b, 0.0)
    W, b = layers[-1]
    return a @ W + b


def _as_batch(batch, y=None) -> tuple[np.ndarray, np.ndarray]:
    if y is not None:
        return np.atleast_2d(np.asarray(batch, dtype=float)), np.atleast_2d(np.asarray(y, dtype=float))
    samples = list(batch)
    return np.stack([s.x for s in samples]), np.stack([s.y for s in samples])


def loss_and_grad(model: MlpModel, batch, y: np.ndarray | None = None,
                  out: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean over the batch of ``||y - f(x)||^2`` and its gradient (flat layout).

    ``batch`` is either a sequence of :class:`PackedSample` or an ``(B, in)``
    array with targets passed as ``y``.
    """
    X, Y = _as_batch(batch, y)
    B = X.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    layers = model.layers()
    acts = [X]
    for W, b in layers[:-1]:
        acts.append(np.maximum(acts[-1] @ W + b, 0.0))
    W, b = layers[-1]
    err = acts[-1] @ W + b - Y
    loss = float(np.einsum("ij,ij->", err, err) / B)

    grad = np.empty_like(model.params) if out is None else out
    gviews = _views(model.arch, grad)
    delta = (2.0 / B) * err
    for k in range(len(layers) - 1, -1, -1):
        gW, gb = gviews[k]
        np.matmul(acts[k].T, delta, out=gW)
        np.sum(delta, axis=0, out=gb)
        if k:
            delta = (delta @ layers[k][0].T) * (acts[k] > 0)
    return loss, grad


def adam_step(model: MlpModel, grads: np.ndarray, state: AdamState, config: TrainConfig,
              inplace: bool = False) -> tuple[MlpModel, AdamState]:
    """One bias-corrected ADAM update."""
    if grads.shape != model.params.shape or state.m.shape != model.params.shape:
        raise ValueError("gradient/state shapes do not match the model")
    if not inplace:
        model = model.copy()
        state = AdamState(state.m.copy(), state.v.copy(), state.t)
    b1, b2 = config.beta1, config.beta2
    state.t += 1
    state.m *= b1
    state.m += (1 - b1) * grads
    state.v *= b2
    state.v += (1 - b2) * np.square(grads)
    lr_t = config.learning_rate * math.sqrt(1 - b2 ** state.t) / (1 - b1 ** state.t)
    eps_t = config.eps * math.sqrt(1 - b2 ** state.t)
    # lr_t * m / (sqrt(v) + eps_t) == lr * m_hat / (sqrt(v_hat) + eps)
    model.params -= lr_t * state.m / (np.sqrt(state.v) + eps_t)
    return model, state


def mse(model: MlpModel, X: np.ndarray, Y: np.ndarray) -> float:
    err = forward(model, X) - Y
    return float(np.einsum("ij,ij->", err, err) / X.shape[0])


def train_arrays(X: np.ndarray, Y: np.ndarray, arch: MlpArch, config: TrainConfig,
                 scale: float = 1.0) -> MlpModel:
    """Train on packed real arrays that are divided by ``scale`` first.

    Runs ``epochs * ceil(n / batch_size)`` ADAM steps with a fresh shuffle per
    epoch (last batch may be short).  ``loss_history`` holds the normalized
    full-dataset MSE before training and after every epoch.
    """
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if X.shape[1] != arch.input_dim or Y.shape[1] != arch.output_dim:
        raise ValueError("dataset dimensions do not match the architecture")
    Xs, Ys = X / scale, Y / scale
    rng = np.random.default_rng(config.seed)
    model = init_model(arch, rng)
    model.input_scale = float(scale)
    state = AdamState.zeros_like(model)
    grad = np.empty_like(model.params)
    history = [mse(model, Xs, Ys)]
    bs = config.batch_size
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss_and_grad(model, Xs[idx], Ys[idx], out=grad)
            adam_step(model, grad, state, config, inplace=True)
        history.append(mse(model, Xs, Ys))
    model.loss_history = history
    return model


def train(dataset, arch: MlpArch, config: TrainConfig) -> MlpModel:
    """Fit an MLP to a :class:`~chanpred.dataset.Dataset`.

    Features and labels are divided by one global scale (``config.scale`` or
    the dataset's largest feature magnitude) that is stored in the model.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    scale = config.scale if config.scale is not None else dataset.feature_scale()
    if not scale > 0:
        scale = 1.0
    X, Y = dataset.packed()
    return train_arrays(X, Y, arch, config, scale)


def save_model(model: MlpModel, path) -> Path:
    """Binary layout: magic, version byte, uint32 layer count + dims, float64 scale, params (LE)."""
    path = Path(path)
    dims = model.arch.dims
    with path.open("wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<B", MODEL_VERSION))
        fh.write(struct.pack("<I", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(struct.pack("<d", model.input_scale))
        fh.write(model.params.astype("<f8").tobytes())
    return path


def load_model(path) -> MlpModel:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(MODEL_MAGIC):
        raise ValueError(f"{path}: not a model file")
    k = len(MODEL_MAGIC)
    (version,) = struct.unpack_from("<B", data, k)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    k += 1
    (nd,) = struct.unpack_from("<I", data, k)
    k += 4
    dims = struct.unpack_from(f"<{nd}I", data, k)
    k += 4 * nd
    (scale,) = struct.unpack_from("<d", data, k)
    k += 8
    arch = MlpArch(dims[0], dims[1:-1], dims[-1])
    params = np.frombuffer(data, dtype="<f8", offset=k).astype(float)
    return MlpModel(arch, params, scale)
