"""Training data for sub-channel predictors.

A training pair holds ``I`` consecutive estimated channels as the feature and
the following ``p`` as the label.  Each ``M x L`` matrix splits into ``K2``
sub-channels of length ``K1``:

* array domain: column ``l`` (the MIMO channel of subcarrier ``l``),
  ``K1 = M``, ``K2 = L``;
* frequency domain: row ``m`` (the frequency response of antenna pair
  ``m``), ``K1 = L``, ``K2 = M``.

Aggregated learning (AL) pools the sub-samples of all ``K2`` sub-channels
into one dataset; separate learning (SL) keeps one dataset per sub-channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .channel_model import ChannelTrajectory


class Domain(str, Enum):
    ARRAY = "AD"
    FREQUENCY = "FD"

    def dims(self, M: int, L: int) -> tuple[int, int]:
        """``(K1, K2)`` for an ``M x L`` array-frequency channel."""
        return (M, L) if self is Domain.ARRAY else (L, M)

    @classmethod
    def parse(cls, value) -> "Domain":
        if isinstance(value, Domain):
            return value
        key = str(value).strip().upper()
        aliases = {"AD": cls.ARRAY, "ARRAY": cls.ARRAY, "ARRAYDOMAIN": cls.ARRAY,
                   "FD": cls.FREQUENCY, "FREQUENCY": cls.FREQUENCY,
                   "FREQUENCYDOMAIN": cls.FREQUENCY}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown domain {value!r}") from None


class RawPair(NamedTuple):
    features: np.ndarray   # (I, M, L), oldest first
    labels: np.ndarray     # (p, M, L), next slot first
    base_slot: int         # slot index of the newest feature


@dataclass(frozen=True)
class SubSample:
    feature: np.ndarray    # (I, K1)
    label: np.ndarray      # (p, K1)
    subchannel_index: int
    base_slot: int


@dataclass(frozen=True)
class PackedSample:
    x: np.ndarray          # (2 I K1,)
    y: np.ndarray          # (2 p K1,)


@dataclass(frozen=True)
class Dataset:
    """Sub-samples stored column-wise.

    ``features`` is ``(n, I, K1)`` and ``labels`` ``(n, p, K1)``, both complex.
    """

    features: np.ndarray
    labels: np.ndarray
    subchannel_index: np.ndarray
    base_slot: np.ndarray
    domain: Domain
    num_subchannels: int
    provenance: str = "AL"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 3 or self.labels.ndim != 3:
            raise ValueError("features/labels must be (n, steps, K1)")
        if self.labels.shape[0] != n or len(self.subchannel_index) != n or len(self.base_slot) != n:
            raise ValueError("dataset columns have inconsistent lengths")
        if self.labels.shape[2] != self.features.shape[2]:
            raise ValueError("feature and label sub-channel sizes differ")

    def __len__(self):
        return self.features.shape[0]

    @property
    def input_order(self) -> int:
        return self.features.shape[1]

    @property
    def prediction_order(self) -> int:
        return self.labels.shape[1]

    @property
    def k1(self) -> int:
        return self.features.shape[2]

    @property
    def samples(self) -> list[SubSample]:
        return [SubSample(self.features[k], self.labels[k], int(self.subchannel_index[k]),
                          int(self.base_slot[k])) for k in range(len(self))]

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Real design matrices ``(n, 2 I K1)`` and ``(n, 2 p K1)``."""
        return pack_steps(self.features), pack_steps(self.labels)

    def feature_scale(self) -> float:
        """Largest coefficient magnitude over all features."""
        return float(np.max(np.abs(self.features))) if len(self) else 0.0


def build_raw(traj: ChannelTrajectory, I: int, p: int = 1) -> list[RawPair]:
    """Sliding-window pairs ``({G_k}_{n-I+1..n}, {G_k}_{n+1..n+p})``.

    ``N - I - p + 1`` pairs for ``N`` slots.
    """
    N = len(traj)
    if I < 1 or p < 1:
        raise ValueError("input and prediction orders must be >= 1")
    if N < I + p:
        raise ValueError(f"insufficient collection time: {N} slots < I + p = {I + p}")
    G = traj.slots
    return [RawPair(G[s:s + I], G[s + I:s + I + p], traj.start_slot + s + I - 1)
            for s in range(N - I - p + 1)]


def subchannel_view(block: np.ndarray, domain: Domain) -> np.ndarray:
    # (T, M, L) -> (K2, T, K1)
    if domain is Domain.ARRAY:
        return block.transpose(2, 0, 1)
    return block.transpose(1, 0, 2)


def split(pair: RawPair, domain: Domain) -> list[SubSample]:
    domain = Domain.parse(domain)
    X = subchannel_view(pair.features, domain)
    Y = subchannel_view(pair.labels, domain)
    return [SubSample(X[i].copy(), Y[i].copy(), i, pair.base_slot) for i in range(X.shape[0])]


def _stack(pairs: Sequence[RawPair], domain: Domain):
    if not pairs:
        raise ValueError("need at least one training pair")
    X = np.stack([subchannel_view(p.features, domain) for p in pairs])   # (P, K2, I, K1)
    Y = np.stack([subchannel_view(p.labels, domain) for p in pairs])
    slots = np.array([p.base_slot for p in pairs])
    return X, Y, slots


def aggregate_al(pairs: Sequence[RawPair], domain) -> Dataset:
    """Pool all sub-samples: outer loop over pairs (slots), inner over sub-channels."""
    domain = Domain.parse(domain)
    X, Y, slots = _stack(pairs, domain)
    P, K2 = X.shape[:2]
    return Dataset(
        features=X.reshape(P * K2, *X.shape[2:]),
        labels=Y.reshape(P * K2, *Y.shape[2:]),
        subchannel_index=np.tile(np.arange(K2), P),
        base_slot=np.repeat(slots, K2),
        domain=domain,
        num_subchannels=K2,
        provenance="AL",
    )


def sl_datasets(pairs: Sequence[RawPair], domain) -> list[Dataset]:
    """One dataset per sub-channel, each in slot order."""
    domain = Domain.parse(domain)
    X, Y, slots = _stack(pairs, domain)
    K2 = X.shape[1]
    return [Dataset(X[:, i].copy(), Y[:, i].copy(), np.full(len(slots), i), slots.copy(),
                    domain, K2, provenance=f"SL({i})") for i in range(K2)]


def flip_augment(dataset: Dataset) -> Dataset:
    """Append a copy with every feature and label vector reversed along K1."""
    return Dataset(
        features=np.concatenate([dataset.features, dataset.features[:, :, ::-1]]),
        labels=np.concatenate([dataset.labels, dataset.labels[:, :, ::-1]]),
        subchannel_index=np.concatenate([dataset.subchannel_index] * 2),
        base_slot=np.concatenate([dataset.base_slot] * 2),
        domain=dataset.domain,
        num_subchannels=dataset.num_subchannels,
        provenance=dataset.provenance + "+FLIP",
    )


def pack_steps(z: np.ndarray) -> np.ndarray:
    """``(..., T, K1)`` complex -> ``(..., 2 T K1)`` real, per step ``[Re; Im]``."""
    z = np.asarray(z)
    out = np.concatenate([z.real, z.imag], axis=-1)
    return out.reshape(*z.shape[:-2], -1).astype(float, copy=False)


def unpack_steps(v: np.ndarray, K1: int, steps: int) -> np.ndarray:
    """Inverse of :func:`pack_steps`; ``(..., 2 steps K1)`` -> ``(..., steps, K1)``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 2 * steps * K1:
        raise ValueError(f"packed length {v.shape[-1]} != 2 * {steps} * {K1}")
    r = v.reshape(*v.shape[:-1], steps, 2, K1)
    return r[..., 0, :] + 1j * r[..., 1, :]


def pack_real(sub: SubSample) -> PackedSample:
    return PackedSample(pack_steps(sub.feature), pack_steps(sub.label))


def unpack_complex(y: np.ndarray, K1: int, p: int) -> np.ndarray:
    return unpack_steps(y, K1, p)


def reconstruct(predictions: np.ndarray, domain, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Reassemble ``K2`` sub-channel vectors (``(K2, K1)``) into an ``M x L`` matrix."""
    domain = Domain.parse(domain)
    pred = np.asarray(predictions)
    if pred.ndim != 2:
        raise ValueError(f"expected (K2, K1) predictions, got shape {pred.shape}")
    H = pred.T if domain is Domain.ARRAY else pred
    if shape is not None and H.shape != tuple(shape):
        raise ValueError(f"reconstructed shape {H.shape} != expected {tuple(shape)}")
    return H.copy()


def save_dataset(dataset: Dataset, path, scale: float = 1.0) -> Path:
    """Write packed samples as one JSON header line followed by raw little-endian float64."""
    path = Path(path)
    x, y = dataset.packed()
    header = {
        "format": "chanpred-dataset", "version": 1,
        "domain": dataset.domain.value, "I": dataset.input_order, "p": dataset.prediction_order,
        "K1": dataset.k1, "K2": dataset.num_subchannels, "n": len(dataset),
        "scale": float(scale), "provenance": dataset.provenance,
    }
    body = np.concatenate([x, y, dataset.subchannel_index[:, None], dataset.base_slot[:, None]],
                          axis=1).astype("<f8")
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(body.tobytes())
    return path


def load_dataset(path) -> tuple[Dataset, dict]:
    path = Path(path)
    with path.open("rb") as fh:
        header = json.loads(fh.readline())
        raw = np.frombuffer(fh.read(), dtype="<f8")
    I, p, K1, n = header["I"], header["p"], header["K1"], header["n"]
    width = 2 * I * K1 + 2 * p * K1 + 2
    body = raw.reshape(n, width)
    x, y = body[:, :2 * I * K1], body[:, 2 * I * K1:-2]
    ds = Dataset(unpack_steps(x, K1, I), unpack_steps(y, K1, p),
                 body[:, -2].astype(int), body[:, -1].astype(int),
                 Domain.parse(header["domain"]), header["K2"], header["provenance"])
    return ds, header
