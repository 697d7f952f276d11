"""Pilot transmission and least-squares channel estimation.

Per slot and subcarrier the BS receives ``Y = sqrt(rho) H Phi^T + W`` with
``H`` the ``M_BS x M_UE`` channel, ``Phi`` a ``tau x M_UE`` pilot with
orthogonal columns and ``W`` white noise of variance ``sigma^2``.  Because
``Phi^H Phi = tau I`` the LS estimate collapses to::

    g = h + vec(W conj(Phi)) / (sqrt(rho) tau),

whose error is CN(0, sigma^2 / (rho tau) I).  :func:`ls_estimate_explicit`
keeps the Kronecker form ``(Psi^H Psi)^-1 Psi^H vec(Y)`` for cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import ArrayGeometry, ChannelTrajectory


def dbm_to_watts(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def watts_to_dbm(watts: float) -> float:
    return 10 * np.log10(watts) + 30


@dataclass(frozen=True)
class PilotConfig:
    pilot_len: int = 2
    pilot_power_dbm: float = 10.0
    noise_psd_dbm_hz: float = -174.0
    subcarrier_spacing_hz: float = 40e3

    def __post_init__(self):
        if self.pilot_len < 1:
            raise ValueError("pilot_len must be >= 1")
        if not np.isfinite(self.pilot_power_dbm):
            raise ValueError("pilot power must be finite")

    @property
    def pilot_power_w(self) -> float:
        return dbm_to_watts(self.pilot_power_dbm)

    def check(self, geometry: ArrayGeometry) -> None:
        if self.pilot_len < geometry.m_ue:
            raise ValueError(f"pilot length {self.pilot_len} < M_UE={geometry.m_ue}: "
                             "LS estimate is not identifiable")


def noise_variance(config: PilotConfig) -> float:
    """Per-subcarrier noise power in watts (``-inf`` dBm/Hz gives 0)."""
    dbm = config.noise_psd_dbm_hz + 10 * np.log10(config.subcarrier_spacing_hz)
    return float(dbm_to_watts(dbm))


def error_variance(config: PilotConfig) -> float:
    """Variance of each LS error coefficient, sigma^2 / (rho tau)."""
    return noise_variance(config) / (config.pilot_power_w * config.pilot_len)


def dft_pilot(tau: int, m_ue: int) -> np.ndarray:
    """First ``m_ue`` columns of the unnormalized ``tau``-point DFT matrix."""
    if m_ue < 1 or tau < m_ue:
        raise ValueError(f"need tau >= M_UE >= 1, got tau={tau}, M_UE={m_ue}")
    k = np.arange(tau)
    phi = np.exp(-2j * np.pi * np.outer(k, np.arange(m_ue)) / tau)
    # exact values for the 2- and 4-point cases keep Phi^H Phi = tau I bitwise
    return np.round(phi.real, 15) + 1j * np.round(phi.imag, 15)


def draw_pilot_noise(config: PilotConfig, m_bs: int, num_subcarriers: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Received pilot noise ``W`` for every subcarrier, shape ``(L, M_BS, tau)``."""
    shape = (num_subcarriers, m_bs, config.pilot_len)
    scale = np.sqrt(noise_variance(config) / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def ls_error_from_noise(noise: np.ndarray, pilot: np.ndarray, rho: float) -> np.ndarray:
    """LS error ``vec(W conj(Phi)) / (sqrt(rho) tau)`` for stacked noise ``(L, M_BS, tau)``.

    Returns ``(M, L)`` with antenna pairs in ``vec`` order.
    """
    tau = pilot.shape[0]
    e = noise @ pilot.conj() / (np.sqrt(rho) * tau)          # (L, M_BS, M_UE)
    L = e.shape[0]
    return e.transpose(0, 2, 1).reshape(L, -1).T


def ls_estimate_frame(true_matrix: np.ndarray, pilot: PilotConfig, rng: np.random.Generator,
                      m_bs: int | None = None, noise: np.ndarray | None = None) -> np.ndarray:
    """LS estimate ``G = H + W~`` of one ``M x L`` array-frequency channel.

    ``m_bs`` must be given when ``M_UE > 1``; with ``m_bs=None`` the channel
    is treated as having a single UE antenna.  ``noise`` replaces the drawn
    pilot noise (shape ``(L, M_BS, tau)``).
    """
    M, L = true_matrix.shape
    m_bs = M if m_bs is None else m_bs
    if M % m_bs:
        raise ValueError(f"M={M} is not a multiple of M_BS={m_bs}")
    m_ue = M // m_bs
    phi = dft_pilot(pilot.pilot_len, m_ue)
    if noise is None:
        noise = draw_pilot_noise(pilot, m_bs, L, rng)
    return true_matrix + ls_error_from_noise(noise, phi, pilot.pilot_power_w)


def ls_estimate_explicit(true_matrix: np.ndarray, pilot: PilotConfig, m_bs: int,
                         noise: np.ndarray) -> np.ndarray:
    """Reference LS estimate built from the full Kronecker pilot matrix.

    Forms ``Y = sqrt(rho) H Phi^T + W`` per subcarrier, vectorizes it and
    applies ``(Psi^H Psi)^-1 Psi^H`` with ``Psi = sqrt(rho) (Phi kron I)``.
    Slow; meant for tests.
    """
    M, L = true_matrix.shape
    m_ue = M // m_bs
    phi = dft_pilot(pilot.pilot_len, m_ue)
    rho = pilot.pilot_power_w
    psi = np.sqrt(rho) * np.kron(phi, np.eye(m_bs))
    solve = np.linalg.solve(psi.conj().T @ psi, psi.conj().T)
    out = np.empty_like(true_matrix, dtype=complex)
    for l in range(L):
        H = true_matrix[:, l].reshape(m_ue, m_bs).T
        Y = np.sqrt(rho) * H @ phi.T + noise[l]
        out[:, l] = solve @ Y.reshape(-1, order="F")
    return out


def estimate_trajectory(true_traj: ChannelTrajectory, pilot: PilotConfig,
                        rng: np.random.Generator, m_bs: int | None = None) -> ChannelTrajectory:
    """Apply :func:`ls_estimate_frame` slot by slot with fresh noise each slot."""
    if m_bs is None:
        m_bs = true_traj.geometry.m_bs if true_traj.geometry is not None else true_traj.shape[0]
    if true_traj.geometry is not None:
        pilot.check(true_traj.geometry)
    out = np.empty_like(true_traj.slots)
    for n, H in enumerate(true_traj.slots):
        out[n] = ls_estimate_frame(H, pilot, rng, m_bs=m_bs)
    return ChannelTrajectory(out, "estimated", true_traj.start_slot, true_traj.geometry)
