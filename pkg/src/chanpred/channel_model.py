"""Geometric sum-of-paths channel generator.

The BS carries a uniform planar array (UPA), the UE a uniform linear array
(ULA).  Every path has a complex gain, an arrival direction at the BS, a
departure angle at the UE, a delay and a Doppler shift, and the
array-frequency domain channel at slot ``n`` is::

    H_n[:, l] = vec( sum_p g_p exp(j2pi fD_p n Tdur) exp(-j2pi f_l tau_p) a_bs(p) a_ue(p)^T )

with baseband subcarrier offsets ``f_l = (l - (L-1)/2) * df``.  Columns of
``H_n`` are the per-subcarrier MIMO channels; rows are the per-antenna-pair
frequency responses.  Antenna pairs are ordered as ``vec`` of the
``M_BS x M_UE`` matrix (column-major), i.e. index ``u * M_BS + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _seeding

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    bs_rows: int = 8
    bs_cols: int = 8
    ue_antennas: int = 2
    spacing_bs: float = 0.5
    spacing_ue: float = 0.5

    def __post_init__(self):
        for name in ("bs_rows", "bs_cols", "ue_antennas"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.spacing_bs <= 0 or self.spacing_ue <= 0:
            raise ValueError("antenna spacings must be positive")

    @property
    def m_bs(self) -> int:
        return self.bs_rows * self.bs_cols

    @property
    def m_ue(self) -> int:
        return self.ue_antennas

    @property
    def num_pairs(self) -> int:
        """M = M_BS * M_UE."""
        return self.m_bs * self.m_ue

    def with_spacing(self, spacing: float) -> "ArrayGeometry":
        return ArrayGeometry(self.bs_rows, self.bs_cols, self.ue_antennas, spacing, spacing)


@dataclass(frozen=True)
class ScenarioConfig:
    """Propagation scenario.

    ``travel_angle_spread_deg`` is the half-width of the spread of path
    directions around a common direction relative to the UE's direction of
    travel.  It sets the Doppler spectrum: 180 gives the isotropic (Jakes)
    case, smaller values a clustered one.  ``path_loss_db`` is a
    large-scale attenuation applied to the whole channel; at 0 dB the
    average power per coefficient is 1.
    """

    carrier_hz: float = 2.53e9
    subcarrier_spacing_hz: float = 40e3
    num_subcarriers: int = 128
    slot_duration_s: float = 2e-3
    ue_speed_mps: float = 20 / 3.6
    num_paths: int = 20
    delay_spread_s: float = 100e-9
    travel_angle_spread_deg: float = 20.0
    path_loss_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.slot_duration_s <= 0:
            raise ValueError("slot_duration_s must be positive")
        if self.delay_spread_s < 0 or self.ue_speed_mps < 0:
            raise ValueError("delay spread and speed must be non-negative")
        if self.carrier_hz <= self.num_subcarriers * self.subcarrier_spacing_hz:
            raise ValueError("carrier must exceed the occupied bandwidth")
        if not 0 <= self.travel_angle_spread_deg <= 180:
            raise ValueError("travel_angle_spread_deg must lie in [0, 180]")

    @property
    def max_doppler_hz(self) -> float:
        return self.ue_speed_mps * self.carrier_hz / SPEED_OF_LIGHT

    def subcarrier_offsets(self) -> np.ndarray:
        L = self.num_subcarriers
        return (np.arange(L) - (L - 1) / 2) * self.subcarrier_spacing_hz


@dataclass(frozen=True)
class PathSet:
    gain: np.ndarray
    aoa_az: np.ndarray
    aoa_el: np.ndarray
    aod: np.ndarray
    delay_s: np.ndarray
    doppler_hz: np.ndarray

    def __len__(self):
        return len(self.gain)


@dataclass(frozen=True)
class ChannelTrajectory:
    """Consecutive array-frequency channels, ``slots[n]`` is ``M x L``."""

    slots: np.ndarray
    kind: Literal["true", "estimated"] = "true"
    start_slot: int = 0
    geometry: ArrayGeometry | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.slots.ndim != 3:
            raise ValueError(f"slots must be (N, M, L), got shape {self.slots.shape}")
        if self.kind not in ("true", "estimated"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        self.slots.flags.writeable = False

    def __len__(self):
        return self.slots.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.slots.shape[1], self.slots.shape[2]

    def window(self, start: int, stop: int) -> "ChannelTrajectory":
        """Sub-trajectory of local slot positions ``[start, stop)``."""
        return ChannelTrajectory(self.slots[start:stop], self.kind,
                                 self.start_slot + start, self.geometry)


def steering_vector(geometry: ArrayGeometry, side: str, angles) -> np.ndarray:
    """Array response of the BS UPA or the UE ULA.

    For ``side="bs"`` pass ``(azimuth, elevation)``; element ``(r, c)`` sits
    at index ``r * bs_cols + c`` and has phase
    ``-2pi d (c sin(az) cos(el) + r sin(el))``.  For ``side="ue"`` pass a
    single angle; element ``m`` has phase ``-2pi d m sin(angle)``.  Angles
    may be arrays, in which case the element axis comes first.
    """
    if side == "bs":
        try:
            az, el = angles
        except (TypeError, ValueError):
            raise ValueError("bs steering needs (azimuth, elevation)") from None
        az = np.asarray(az, dtype=float)
        el = np.asarray(el, dtype=float)
        r, c = np.divmod(np.arange(geometry.m_bs), geometry.bs_cols)
        r = r.reshape((-1,) + (1,) * az.ndim)
        c = c.reshape((-1,) + (1,) * az.ndim)
        proj = c * (np.sin(az) * np.cos(el)) + r * np.sin(el)
        return np.exp(-2j * np.pi * geometry.spacing_bs * proj)
    if side == "ue":
        theta = np.asarray(angles, dtype=float)
        m = np.arange(geometry.m_ue).reshape((-1,) + (1,) * theta.ndim)
        return np.exp(-2j * np.pi * geometry.spacing_ue * m * np.sin(theta))
    raise ValueError(f"side must be 'bs' or 'ue', got {side!r}")


def generate_paths(config: ScenarioConfig, rng: np.random.Generator) -> PathSet:
    """Draw one set of propagation paths.

    Arrival azimuth is uniform on [-pi/2, pi/2), elevation on [-pi/4, pi/4),
    UE departure angle on [-pi/2, pi/2).  Delays are exponential with mean
    ``delay_spread_s`` truncated to four delay spreads, and path powers
    follow the same exponential profile before normalization to unit sum.
    """
    P = config.num_paths
    ds = config.delay_spread_s
    aoa_az = rng.uniform(-np.pi / 2, np.pi / 2, P)
    aoa_el = rng.uniform(-np.pi / 4, np.pi / 4, P)
    aod = rng.uniform(-np.pi / 2, np.pi / 2, P)

    u = rng.uniform(0.0, 1.0, P)
    if ds > 0:
        delay = -ds * np.log1p(-u * (1 - np.exp(-4.0)))
        power = np.exp(-delay / ds)
    else:
        delay = np.zeros(P)
        power = np.ones(P)

    spread = np.deg2rad(config.travel_angle_spread_deg)
    center = rng.uniform(0.0, 2 * np.pi)
    offsets = rng.uniform(-1.0, 1.0, P)
    if config.travel_angle_spread_deg >= 180:
        travel = 2 * np.pi * (offsets + 1) / 2
    else:
        travel = center + spread * offsets
    doppler = config.max_doppler_hz * np.cos(travel)

    g = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) * np.sqrt(power / 2)
    g /= np.sqrt(np.sum(np.abs(g) ** 2))
    return PathSet(g, aoa_az, aoa_el, aod, delay, doppler)


def _pair_responses(paths: PathSet, geometry: ArrayGeometry) -> np.ndarray:
    # (M, P) with row u * M_BS + b = a_bs[b] * a_ue[u]
    a_bs = steering_vector(geometry, "bs", (paths.aoa_az, paths.aoa_el))
    a_ue = steering_vector(geometry, "ue", paths.aod)
    return (a_ue[:, None, :] * a_bs[None, :, :]).reshape(geometry.num_pairs, len(paths))


def _amplitude(config: ScenarioConfig) -> float:
    return 10 ** (-config.path_loss_db / 20)


def channel_at(paths: PathSet, geometry: ArrayGeometry, config: ScenarioConfig,
               slot: int, subcarrier: int) -> np.ndarray:
    """Vectorized MIMO channel (length M) at one slot and subcarrier."""
    L = config.num_subcarriers
    if not 0 <= subcarrier < L:
        raise IndexError(f"subcarrier {subcarrier} outside [0, {L})")
    f_l = config.subcarrier_offsets()[subcarrier]
    coef = paths.gain * np.exp(2j * np.pi * paths.doppler_hz * slot * config.slot_duration_s) \
        * np.exp(-2j * np.pi * f_l * paths.delay_s)
    return _amplitude(config) * (_pair_responses(paths, geometry) @ coef)


def trajectory_from_paths(paths: PathSet, geometry: ArrayGeometry, config: ScenarioConfig,
                          num_slots: int, start_slot: int = 0) -> ChannelTrajectory:
    if num_slots < 1:
        raise ValueError("num_slots must be >= 1")
    n = np.arange(start_slot, start_slot + num_slots)
    time_phase = np.exp(2j * np.pi * np.outer(n * config.slot_duration_s, paths.doppler_hz))
    freq_phase = np.exp(-2j * np.pi * np.outer(paths.delay_s, config.subcarrier_offsets()))
    A = _pair_responses(paths, geometry) * paths.gain
    H = np.einsum("mp,np,pl->nml", A, time_phase, freq_phase, optimize=True)
    return ChannelTrajectory(_amplitude(config) * H, "true", start_slot, geometry)


def generate_trajectory(config: ScenarioConfig, geometry: ArrayGeometry, num_slots: int,
                        rng: np.random.Generator | None = None,
                        start_slot: int = 0) -> ChannelTrajectory:
    """True channel trajectory of ``num_slots`` consecutive slots.

    With ``rng=None`` the path stream is derived from ``config.seed``.
    """
    if num_slots < 1:
        raise ValueError("num_slots must be >= 1")
    if rng is None:
        rng = _seeding.stream(config.seed, _seeding.PATHS)
    paths = generate_paths(config, rng)
    return trajectory_from_paths(paths, geometry, config, num_slots, start_slot)
