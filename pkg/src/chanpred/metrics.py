"""Correlation analysis, NMSE, ZF combining, sum-rate and overhead bookkeeping.

All expectations are sample averages over the slots of a trajectory.  The
covariance of two complex vectors is the scalar
``E[(a - E a)^H (b - E b)]``; correlations normalize it by the square roots
of the two auto-covariances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel_model import ChannelTrajectory
from .dataset import Domain, subchannel_view
from .neural import MlpArch

NMSE_DB_FLOOR = -120.0
DEFAULT_WINDOW = 100


def _subchannels(traj, domain, window: int | None) -> np.ndarray:
    """``(N, K2, K1)`` sub-channel stack over the first ``window`` slots."""
    slots = traj.slots if isinstance(traj, ChannelTrajectory) else np.asarray(traj)
    if window is not None:
        slots = slots[:window]
    if len(slots) < 1:
        raise ValueError("trajectory is empty")
    # subchannel_view maps (T, M, L) -> (K2, T, K1)
    return subchannel_view(slots, Domain.parse(domain)).transpose(1, 0, 2)


def _check_index(i, n, what):
    if not 0 <= i < n:
        raise IndexError(f"{what} index {i} outside [0, {n})")


@dataclass
class CorrelationReport:
    domain: Domain
    kind: str                     # "TypeI" | "TypeII" | "Temporal"
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def average_magnitude(self) -> float:
        """Mean ``|r|`` over off-diagonal entries (Type-I/II) or over lags (temporal)."""
        v = np.abs(self.values)
        if self.kind == "Temporal":
            return float(v.mean())
        mask = ~np.eye(v.shape[0], dtype=bool)
        return float(v[mask].mean()) if mask.any() else 1.0

    def rows(self):
        """CSV rows ``(domain, kind, a, b, real, imag, abs)``."""
        if self.values.ndim == 1:
            for k, r in enumerate(self.values):
                yield (self.domain.value, self.kind, k, "", r.real, r.imag, abs(r))
        else:
            for a in range(self.values.shape[0]):
                for b in range(self.values.shape[1]):
                    r = self.values[a, b]
                    yield (self.domain.value, self.kind, a, b, r.real, r.imag, abs(r))


def _normalize(C: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.real(np.diagonal(C, axis1=-2, axis2=-1)))
    with np.errstate(invalid="ignore", divide="ignore"):
        return C / (d[..., :, None] * d[..., None, :])


def type1_matrix(traj, domain, window: int | None = DEFAULT_WINDOW) -> CorrelationReport:
    """Type-I correlation between all pairs of sub-channels (``K2 x K2``)."""
    domain = Domain.parse(domain)
    X = _subchannels(traj, domain, window)
    Xc = X - X.mean(axis=0)
    A = Xc.transpose(0, 2, 1).reshape(-1, Xc.shape[1])          # (N K1, K2)
    C = (A.conj().T @ A) / X.shape[0]
    return CorrelationReport(domain, "TypeI", _normalize(C), {"slots": X.shape[0]})


def type1_corr(traj, domain, i: int, i2: int, window: int | None = DEFAULT_WINDOW) -> complex:
    domain = Domain.parse(domain)
    X = _subchannels(traj, domain, window)
    K2 = X.shape[1]
    _check_index(i, K2, "sub-channel")
    _check_index(i2, K2, "sub-channel")
    a = X[:, i] - X[:, i].mean(axis=0)
    b = X[:, i2] - X[:, i2].mean(axis=0)
    cab = np.vdot(a, b) / len(a)
    caa = np.vdot(a, a).real / len(a)
    cbb = np.vdot(b, b).real / len(b)
    return complex(cab / math.sqrt(caa * cbb))


def type2_corr(traj, domain, i: int, j: int, j2: int,
               window: int | None = DEFAULT_WINDOW) -> complex:
    """Type-II correlation between elements ``j`` and ``j2`` of sub-channel ``i``."""
    domain = Domain.parse(domain)
    X = _subchannels(traj, domain, window)
    K2, K1 = X.shape[1:]
    _check_index(i, K2, "sub-channel")
    _check_index(j, K1, "element")
    _check_index(j2, K1, "element")
    a = X[:, i, j] - X[:, i, j].mean()
    b = X[:, i, j2] - X[:, i, j2].mean()
    return complex(np.vdot(a, b) / math.sqrt(np.vdot(a, a).real * np.vdot(b, b).real))


def type2_matrices(traj, domain, window: int | None = DEFAULT_WINDOW) -> np.ndarray:
    """Type-II correlation matrices of every sub-channel, ``(K2, K1, K1)``."""
    X = _subchannels(traj, Domain.parse(domain), window)
    Xc = X - X.mean(axis=0)
    A = Xc.transpose(1, 0, 2)                                   # (K2, N, K1)
    C = (A.conj().transpose(0, 2, 1) @ A) / X.shape[0]
    return _normalize(C)


def type2_average(traj, domain, window: int | None = DEFAULT_WINDOW) -> CorrelationReport:
    """Type-II correlation averaged over all ``K2`` sub-channels (``K1 x K1``)."""
    domain = Domain.parse(domain)
    R = type2_matrices(traj, domain, window)
    return CorrelationReport(domain, "TypeII", R.mean(axis=0),
                             {"slots": min(len(traj), window or len(traj)), "averaged_over": R.shape[0]})


def temporal_corr(traj, domain, i: int, k: int) -> complex:
    """``mean_n (h_n^i)^H h_{n+k}^i / ||h_n^i||^2`` over all available ``n``."""
    X = _subchannels(traj, Domain.parse(domain), None)
    N, K2 = X.shape[:2]
    _check_index(i, K2, "sub-channel")
    if not 0 <= k < N:
        raise ValueError(f"lag {k} needs more than {N} slots")
    h0, hk = X[:N - k, i], X[k:, i]
    num = np.einsum("nk,nk->n", h0.conj(), hk)
    return complex(np.mean(num / np.einsum("nk,nk->n", h0.conj(), h0).real))


def temporal_average(traj, domain, max_lag: int) -> CorrelationReport:
    """Temporal correlation for lags ``0..max_lag`` averaged over all sub-channels."""
    domain = Domain.parse(domain)
    X = _subchannels(traj, domain, None)
    N = X.shape[0]
    if not 0 <= max_lag < N:
        raise ValueError(f"lag {max_lag} needs more than {N} slots")
    power = np.einsum("nik,nik->ni", X.conj(), X).real
    vals = np.empty(max_lag + 1, dtype=complex)
    for k in range(max_lag + 1):
        num = np.einsum("nik,nik->ni", X[:N - k].conj(), X[k:])
        vals[k] = np.mean(num / power[:N - k])
    return CorrelationReport(domain, "Temporal", vals, {"slots": N, "averaged_over": X.shape[1]})


def correlation_summary(traj, window: int | None = DEFAULT_WINDOW) -> dict:
    """Table-I style averages: mean off-diagonal ``|r|`` of Type-I and Type-II per domain."""
    out = {}
    for d in Domain:
        out[f"type1_{d.value}"] = type1_matrix(traj, d, window).average_magnitude()
        out[f"type2_{d.value}"] = type2_average(traj, d, window).average_magnitude()
    return out


# ---------------------------------------------------------------- prediction error

def nmse(predicted: Sequence[np.ndarray], truth: Sequence[np.ndarray]) -> float:
    """Mean over slots of ``||H - H_hat||_F^2 / ||H||_F^2``."""
    P = np.asarray(predicted)
    T = np.asarray(truth)
    if P.shape != T.shape:
        raise ValueError(f"shape mismatch: {P.shape} vs {T.shape}")
    if P.size == 0:
        raise ValueError("nmse of an empty list")
    if P.ndim == 2:
        P, T = P[None], T[None]
    axes = tuple(range(1, P.ndim))
    err = np.sum(np.abs(T - P) ** 2, axis=axes)
    ref = np.sum(np.abs(T) ** 2, axis=axes)
    return float(np.mean(err / ref))


def to_db(value: float, floor: float = NMSE_DB_FLOOR) -> float:
    if value <= 0:
        return floor
    return max(10 * math.log10(value), floor)


# ---------------------------------------------------------------- ZF and rates

def zf_combiner(channels: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Row-normalized ZF combiner ``(Hb^H Hb)^-1 Hb^H`` for an ``M x U`` channel.

    Raises ``np.linalg.LinAlgError`` for rank-deficient input instead of
    regularizing.
    """
    Hb = np.asarray(channels)
    M, U = Hb.shape
    if U > M:
        raise ValueError(f"ZF needs U <= M, got U={U}, M={M}")
    s = np.linalg.svd(Hb, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise np.linalg.LinAlgError("channel matrix is rank deficient; ZF undefined")
    Ft = np.linalg.solve(Hb.conj().T @ Hb, Hb.conj().T)
    return Ft / np.linalg.norm(Ft, axis=1, keepdims=True)


@dataclass(frozen=True)
class RateConfig:
    num_ues: int = 5
    gamma_dbm: float = 0.0
    sigma2: float = 1.6e-16
    symbols_per_slot: int = 14
    pilot_len: int = 2

    def __post_init__(self):
        if self.num_ues < 1:
            raise ValueError("num_ues must be >= 1")
        if not 0 < self.pilot_len <= self.symbols_per_slot:
            raise ValueError("need 0 < tau <= N_s")

    @property
    def alpha(self) -> float:
        return (self.symbols_per_slot - self.pilot_len) / self.symbols_per_slot

    @property
    def gamma_w(self) -> float:
        return 10 ** ((self.gamma_dbm - 30) / 10)


def phase_rates(true_channels: np.ndarray, combiners: np.ndarray, cfg: RateConfig) -> np.ndarray:
    """Per-UE rate ``alpha/L sum_l log2(1 + SINR)``.

    ``true_channels`` is ``(U, M, L)`` (one array-domain channel per UE and
    subcarrier), ``combiners`` is ``(L, U, M)`` with unit-norm rows.
    """
    H = np.asarray(true_channels)
    F = np.asarray(combiners)
    U, M, L = H.shape
    if F.shape != (L, U, M):
        raise ValueError(f"combiners must be (L, U, M) = {(L, U, M)}, got {F.shape}")
    # G[l, u, v] = f_u^T h_v on subcarrier l
    G = np.einsum("lum,vml->luv", F, H)
    p = cfg.gamma_w * np.abs(G) ** 2
    signal = np.einsum("luu->lu", p)
    interference = p.sum(axis=2) - signal
    sinr = signal / (interference + cfg.sigma2)
    return cfg.alpha * np.mean(np.log2(1 + sinr), axis=0)


def combiners_from_csi(csi: np.ndarray) -> np.ndarray:
    """ZF combiners ``(L, U, M)`` from per-UE CSI ``(U, M, L)``."""
    csi = np.asarray(csi)
    return np.stack([zf_combiner(csi[:, :, l].T) for l in range(csi.shape[2])])


@dataclass
class SumRate:
    rate_tr: np.ndarray
    rate_pr: np.ndarray
    beta: float

    @property
    def per_ue(self) -> np.ndarray:
        return self.beta * self.rate_tr + (1 - self.beta) * self.rate_pr

    @property
    def total(self) -> float:
        return float(np.sum(self.per_ue))


def achievable_sum_rate(true_channels: np.ndarray, combiners_tr: np.ndarray,
                        combiners_pr: np.ndarray, cfg: RateConfig, beta: float) -> SumRate:
    """``R_sum = sum_u beta R_tr^u + (1 - beta) R_pr^u``."""
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return SumRate(phase_rates(true_channels, combiners_tr, cfg),
                   phase_rates(true_channels, combiners_pr, cfg), float(beta))


# ---------------------------------------------------------------- overhead / complexity

@dataclass(frozen=True)
class OverheadReport:
    t_dur: float
    num_slots: int
    t_col: float
    t_com: float
    t_tot: float
    t_cyc: float | None
    beta: float | None


def overhead(t_dur: float, num_slots: int, t_com: float, t_cyc: float | None = None) -> OverheadReport:
    if t_dur <= 0 or num_slots < 1 or t_com < 0:
        raise ValueError("overhead inputs must be positive")
    t_col = t_dur * num_slots
    t_tot = t_col + t_com
    beta = None
    if t_cyc is not None:
        if t_cyc < t_tot:
            raise ValueError(f"cycle {t_cyc}s shorter than training overhead {t_tot}s")
        beta = t_tot / t_cyc
    return OverheadReport(t_dur, num_slots, t_col, t_com, t_tot, t_cyc, beta)


def complexity_estimate(arch: MlpArch, n_epoch: int, n_train: int, p: int = 1) -> int:
    """``N_epoch N_node N_train (N_node + K1 (I + 1))`` for a two-hidden-layer MLP."""
    if len(arch.hidden_dims) != 2 or arch.hidden_dims[0] != arch.hidden_dims[1]:
        raise ValueError("estimate applies to two equal hidden layers only")
    if arch.output_dim % (2 * p) or arch.input_dim % (arch.output_dim // p):
        raise ValueError("architecture is not a sub-channel predictor")
    K1 = arch.output_dim // (2 * p)
    I = arch.input_dim // (2 * K1)
    n_node = arch.hidden_dims[0]
    return n_epoch * n_node * n_train * (n_node + K1 * (I + 1))


def predictor_complexity(tag: str, domain, M: int, L: int, N: int, I: int, n_epoch: int,
                         n_node: int | None = None) -> int:
    """Training complexity of one AL network or of one SL network (per sub-channel)."""
    domain = Domain.parse(domain)
    K1, K2 = domain.dims(M, L)
    n_node = 2 * I * K1 if n_node is None else n_node
    n_train = (N - I) * (K2 if tag == "AL" else 1)
    if tag not in ("AL", "SL"):
        raise ValueError(f"unknown predictor tag {tag!r}")
    arch = MlpArch(2 * I * K1, (n_node, n_node), 2 * K1)
    return complexity_estimate(arch, n_epoch, n_train)
