"""AL, SL and OUT channel predictors built on the dataset and neural modules."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _seeding
from .channel_model import ChannelTrajectory
from .dataset import (Domain, subchannel_view, aggregate_al, build_raw, flip_augment,
                      pack_steps, reconstruct, sl_datasets, unpack_steps)
from .neural import MlpArch, MlpModel, TrainConfig, load_model, save_model, train

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class PredictorKind:
    tag: str                      # "AL" | "SL" | "OUT"
    domain: Domain | None = None
    flip: bool = False

    def __post_init__(self):
        if self.tag not in ("AL", "SL", "OUT"):
            raise ValueError(f"unknown predictor tag {self.tag!r}")
        if self.flip and self.tag != "SL":
            raise ValueError("flip augmentation only applies to SL predictors")
        if (self.tag == "OUT") != (self.domain is None):
            raise ValueError("AL/SL predictors need a domain, OUT has none")

    @property
    def name(self) -> str:
        if self.tag == "OUT":
            return "OUT"
        return f"{self.tag}-{self.domain.value}" + ("-FLIP" if self.flip else "")

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, name: str) -> "PredictorKind":
        """Parse names such as ``AL-FD``, ``SL-AD``, ``SL-FD-FLIP``, ``SLxFLIP-FD``, ``OUT``."""
        key = name.strip().upper().replace("_", "-").replace(" ", "")
        if key == "OUT":
            return cls("OUT")
        flip = "FLIP" in key
        key = key.replace("XFLIP", "").replace("-FLIP", "").replace("FLIP", "")
        parts = [p for p in key.split("-") if p]
        if len(parts) != 2:
            raise ValueError(f"cannot parse predictor name {name!r}")
        return cls(parts[0], Domain.parse(parts[1]), flip)


@dataclass
class TrainedPredictor:
    kind: PredictorKind
    models: list[MlpModel]
    I: int
    p: int
    shape: tuple[int, int]
    t_com_serial: float = 0.0     # summed wall clock of all train() calls
    t_com_parallel: float = 0.0   # longest single train() call
    dataset_sizes: list[int] = field(default_factory=list)

    def __post_init__(self):
        expected = {"OUT": 0, "AL": 1}.get(self.kind.tag)
        if expected is None:
            K1, K2 = self.kind.domain.dims(*self.shape)
            expected = K2
        if len(self.models) != expected:
            raise ValueError(f"{self.kind.name} needs {expected} models, got {len(self.models)}")


def _sl_seed(master: int, kind: PredictorKind, i: int) -> int:
    return _seeding.derive_seed(master, _seeding.TRAIN, _seeding.name_key(kind.name), i)


def _al_seed(master: int, kind: PredictorKind) -> int:
    return _seeding.derive_seed(master, _seeding.TRAIN, _seeding.name_key(kind.name))


def train_predictor(kind: PredictorKind | str, estimated: ChannelTrajectory, I: int, p: int,
                    config: TrainConfig, hidden: Sequence[int] | None = None) -> TrainedPredictor:
    """Train one predictor on every slot of ``estimated``.

    AL trains a single network on the pooled sub-samples.  SL trains ``K2``
    networks, network ``i`` seeded from ``(config.seed, kind, i)`` so that the
    models do not depend on training order.
    """
    if isinstance(kind, str):
        kind = PredictorKind.parse(kind)
    N = len(estimated)
    if N < I + p + 1:
        raise ValueError(f"need at least I + p + 1 = {I + p + 1} slots, got {N}")
    shape = estimated.shape
    if kind.tag == "OUT":
        return TrainedPredictor(kind, [], I, p, shape)

    pairs = build_raw(estimated, I, p)
    K1, K2 = kind.domain.dims(*shape)
    arch = MlpArch.for_subchannel(I, K1, p, hidden)
    if kind.tag == "AL":
        data = aggregate_al(pairs, kind.domain)
        cfg = replace(config, seed=_al_seed(config.seed, kind))
        t0 = time.perf_counter()
        model = train(data, arch, cfg)
        dt = time.perf_counter() - t0
        return TrainedPredictor(kind, [model], I, p, shape, dt, dt, [len(data)])

    models, times, sizes = [], [], []
    for i, data in enumerate(sl_datasets(pairs, kind.domain)):
        if kind.flip:
            data = flip_augment(data)
        cfg = replace(config, seed=_sl_seed(config.seed, kind, i))
        t0 = time.perf_counter()
        models.append(train(data, arch, cfg))
        times.append(time.perf_counter() - t0)
        sizes.append(len(data))
    return TrainedPredictor(kind, models, I, p, shape, float(sum(times)), float(max(times)), sizes)


def predict_windows(pred: TrainedPredictor, windows: np.ndarray) -> np.ndarray:
    """Predict from a batch of input windows ``(B, I, M, L)``; returns ``(B, p, M, L)``."""
    windows = np.asarray(windows)
    if windows.ndim != 4 or windows.shape[1] != pred.I or windows.shape[2:] != tuple(pred.shape):
        raise ValueError(f"expected windows of shape (B, {pred.I}, {pred.shape[0]}, {pred.shape[1]}),"
                         f" got {windows.shape}")
    B = windows.shape[0]
    if pred.kind.tag == "OUT":
        return np.repeat(windows[:, -1:], pred.p, axis=1).copy()
    domain = pred.kind.domain
    K1, K2 = domain.dims(*pred.shape)
    feats = np.stack([subchannel_view(w, domain) for w in windows])     # (B, K2, I, K1)
    X = pack_steps(feats)                                                # (B, K2, 2 I K1)
    if pred.kind.tag == "AL":
        out = pred.models[0].predict(X.reshape(B * K2, -1)).reshape(B, K2, -1)
    else:
        out = np.stack([pred.models[i].predict(X[:, i]) for i in range(K2)], axis=1)
    sub = unpack_steps(out, K1, pred.p)                                  # (B, K2, p, K1)
    result = np.empty((B, pred.p) + tuple(pred.shape), dtype=complex)
    for b in range(B):
        for j in range(pred.p):
            result[b, j] = reconstruct(sub[b, :, j], domain, pred.shape)
    return result


def predict_horizon(pred: TrainedPredictor, recent: np.ndarray, steps: int | None = None) -> np.ndarray:
    """Direct multi-step prediction: ``p`` matrices for slots ``n+1 .. n+p``.

    ``steps``, if given, must equal the predictor's ``p``.
    """
    recent = np.asarray(recent)
    if steps is not None and steps != pred.p:
        raise ValueError(f"predictor was trained for p={pred.p}, requested {steps} steps")
    if recent.shape[0] != pred.I:
        raise ValueError(f"expected {pred.I} recent matrices, got {recent.shape[0]}")
    return predict_windows(pred, recent[None])[0]


def predict_next(pred: TrainedPredictor, recent: np.ndarray) -> np.ndarray:
    """Next-slot prediction ``M x L`` (``p x M x L`` if the predictor is multi-step)."""
    out = predict_horizon(pred, recent)
    return out[0] if pred.p == 1 else out


def save_predictor(pred: TrainedPredictor, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, m in enumerate(pred.models):
        fname = f"model_{i:04d}.bin"
        save_model(m, directory / fname)
        files.append(fname)
    meta = {"version": BUNDLE_VERSION, "kind": pred.kind.name, "I": pred.I, "p": pred.p,
            "shape": list(pred.shape), "models": files, "t_com_serial": pred.t_com_serial,
            "t_com_parallel": pred.t_com_parallel, "dataset_sizes": pred.dataset_sizes}
    (directory / "kind.json").write_text(json.dumps(meta, indent=2))
    return directory


def load_predictor(directory) -> TrainedPredictor:
    directory = Path(directory)
    meta = json.loads((directory / "kind.json").read_text())
    if meta.get("version") != BUNDLE_VERSION:
        raise ValueError(f"{directory}: unsupported bundle version {meta.get('version')}")
    models = [load_model(directory / f) for f in meta["models"]]
    return TrainedPredictor(PredictorKind.parse(meta["kind"]), models, meta["I"], meta["p"],
                            tuple(meta["shape"]), meta["t_com_serial"], meta["t_com_parallel"],
                            meta["dataset_sizes"])
