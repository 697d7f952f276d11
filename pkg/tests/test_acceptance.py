"""Acceptance criteria 1-10.

Each test records one ``CRITERION n PASS|FAIL`` line, printed in the
terminal summary, and then asserts the criterion at its stated tolerance.
"""
import dataclasses
import time

import numpy as np
import pytest

from chanpred import _seeding, runner
from chanpred.channel_model import ArrayGeometry, ScenarioConfig, generate_trajectory
from chanpred.config import EvalConfig, ExperimentConfig, SweepSpec
from chanpred.dataset import Domain, aggregate_al, build_raw, sl_datasets
from chanpred.estimation import (PilotConfig, draw_pilot_noise, error_variance, ls_estimate_explicit,
                                 ls_estimate_frame)
from chanpred.metrics import (RateConfig, achievable_sum_rate, combiners_from_csi, correlation_summary,
                              overhead, temporal_average)
from chanpred.neural import MlpArch, load_model, param_count, save_model
from oracles import gradient_relative_error

RESULTS: dict[int, str] = {}

DESK_SCENARIO = ScenarioConfig(num_subcarriers=32)
DESK_GEOMETRY = ArrayGeometry(bs_rows=4, bs_cols=4, ue_antennas=1)
TRAINED = ("AL-AD", "AL-FD", "SL-AD", "SL-FD")
WALL_CLOCK = {"t_com_s", "t_com_parallel_s"}


def record(n: int, ok: bool, detail: str, t0: float) -> None:
    RESULTS[n] = f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.1f}s) {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def test_criterion_01_dataset_size_identities():
    t0 = time.perf_counter()
    t_dur = 2e-3
    n_short = round(0.02 / t_dur)
    n_long = round(1.28 / t_dur)
    geom = ArrayGeometry(1, 1, 1)
    scen = ScenarioConfig(num_subcarriers=128)
    short = build_raw(generate_trajectory(scen, geom, n_short), 2)
    long_ = build_raw(generate_trajectory(scen, geom, n_long), 2)
    al = aggregate_al(short, Domain.ARRAY)
    sl = sl_datasets(short, Domain.ARRAY)
    sl_long = sl_datasets(long_, Domain.ARRAY)
    t_short = overhead(t_dur, n_short, 0.0).t_col
    t_long = overhead(t_dur, n_long, 0.0).t_col
    ok = (n_short == 10 and len(al) == 1024 and len(sl) == 128 and {len(d) for d in sl} == {8}
          and {len(d) for d in sl_long} == {638} and t_short == pytest.approx(0.02)
          and t_long == pytest.approx(1.28))
    record(1, ok, f"N={n_short} |AL|={len(al)} |SL|={len(sl[0])} |SL(1.28s)|={len(sl_long[0])} "
                  f"T_col={t_short:.2f}/{t_long:.2f}s", t0)


def test_criterion_02_parameter_count():
    t0 = time.perf_counter()
    arch = MlpArch(2 * 3 * 128, (768, 768), 256)
    n = param_count(arch)
    record(2, n == 1_378_048 and abs(n - 1_378_044) <= 4, f"param_count={n:,} (reference 1,378,044)", t0)


def test_criterion_03_gradient_oracle():
    t0 = time.perf_counter()
    errs = [gradient_relative_error(seed) for seed in range(20)]
    record(3, max(errs) < 1e-5, f"max relative error over 20 draws = {max(errs):.2e}", t0)


def test_criterion_04_ls_estimator_oracle():
    t0 = time.perf_counter()
    cfg = PilotConfig(pilot_len=2, pilot_power_dbm=10)
    rng = np.random.default_rng(_seeding.derive_seed(0, _seeding.NOISE))
    H = np.zeros((16, 1024), dtype=complex)                  # 16384 coefficients
    err = ls_estimate_frame(H, cfg, rng, m_bs=16)
    ratio = np.mean(np.abs(err) ** 2) / error_variance(cfg)

    geo = ArrayGeometry(2, 2, 2)
    scen = ScenarioConfig(num_subcarriers=8)
    true = generate_trajectory(scen, geo, 1).slots[0]
    noise = draw_pilot_noise(cfg, geo.m_bs, 8, rng) * 1e6
    fast = ls_estimate_frame(true, cfg, rng, m_bs=geo.m_bs, noise=noise)
    slow = ls_estimate_explicit(true, cfg, geo.m_bs, noise)
    gap = float(np.max(np.abs(fast - slow)))
    record(4, abs(ratio - 1) <= 0.05 and gap < 1e-10,
           f"empirical/analytic error variance = {ratio:.4f} over {err.size} coeffs; "
           f"closed form vs Kronecker max diff = {gap:.1e}", t0)


def _correlation_medians(spacing: float, seeds: int = 20) -> dict:
    geom = ArrayGeometry().with_spacing(spacing)
    vals = [correlation_summary(generate_trajectory(ScenarioConfig(seed=s), geom, 100), 100)
            for s in range(seeds)]
    return {k: float(np.median([v[k] for v in vals])) for k in vals[0]}


@pytest.mark.slow
def test_criterion_05_correlation_structure():
    t0 = time.perf_counter()
    half = _correlation_medians(0.5)
    tenth = _correlation_medians(0.1)
    ok = (half["type1_FD"] < half["type1_AD"] and half["type2_FD"] > half["type2_AD"]
          and tenth["type2_AD"] > half["type2_AD"])
    fmt = lambda d: " ".join(f"{k}={v:.3f}" for k, v in d.items())
    record(5, ok, f"0.5λ: {fmt(half)} | 0.1λ: {fmt(tenth)}", t0)


def test_criterion_06_temporal_trend():
    t0 = time.perf_counter()
    med = {}
    for kmh in (20, 40, 60):
        for d in Domain:
            vals = [np.abs(temporal_average(
                generate_trajectory(ScenarioConfig(seed=s, ue_speed_mps=kmh / 3.6), ArrayGeometry(), 100),
                d, 5).values[1:]) for s in range(20)]
            med[kmh, d] = np.median(vals, axis=0)
    ok = all(np.all(med[40, d] <= med[20, d]) and np.all(med[60, d] <= med[40, d]) for d in Domain)
    detail = " | ".join(f"{kmh}km/h FD " + ",".join(f"{x:.3f}" for x in med[kmh, Domain.FREQUENCY])
                        for kmh in (20, 40, 60))
    record(6, ok, detail, t0)


@pytest.mark.slow
def test_criterion_07_prediction_ordering():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(scenario=DESK_SCENARIO, geometry=DESK_GEOMETRY,
                           predictors=TRAINED + ("OUT",), input_order=2, num_slots=10,
                           sweep=SweepSpec("N", (10, 80)), num_seeds=5)
    rep = runner.sweep(cfg)
    m = {(p, n): rep.median_nmse_db(p, n) for p in cfg.predictors for n in (10, 80)}
    ordering = m["AL-FD", 10] < m["SL-FD", 10] and m["AL-FD", 10] < m["OUT", 10]
    improves = all(m[p, 80] < m[p, 10] for p in TRAINED)
    detail = " ".join(f"{p}:{m[p, 10]:.1f}->{m[p, 80]:.1f}dB" for p in cfg.predictors)
    record(7, ordering and improves, f"median NMSE N=10->80: {detail}", t0)


@pytest.mark.slow
def test_criterion_08_degenerate_exactness():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        scenario=dataclasses.replace(DESK_SCENARIO, ue_speed_mps=0.0), geometry=DESK_GEOMETRY,
        pilot=PilotConfig(noise_psd_dbm_hz=-np.inf), predictors=TRAINED + ("OUT",),
        train=dataclasses.replace(ExperimentConfig().train, epochs=500),
        eval=EvalConfig(gap_slots=10, eval_slots=10))
    worst = {}
    for s in range(5):
        for r in runner.run_cycle(cfg, runner.cell_seed(0, s)):
            key = r.predictor
            value = r.nmse_linear if key == "OUT" else r.nmse_db
            worst[key] = max(worst.get(key, -np.inf), value)
    ok = worst["OUT"] == 0.0 and all(worst[p] < -30 for p in TRAINED)
    detail = f"OUT NMSE={worst['OUT']} " + " ".join(f"{p}<={worst[p]:.1f}dB" for p in TRAINED)
    record(8, ok, f"worst over 5 seeds: {detail}", t0)


def test_criterion_09_zf_properties():
    t0 = time.perf_counter()
    U = 5
    H = np.stack([generate_trajectory(ScenarioConfig(num_subcarriers=16, seed=u), ArrayGeometry(8, 8, 1), 1).slots[0]
                  for u in range(U)])                                       # (U, M_BS, L)
    F = combiners_from_csi(H)
    G = np.abs(np.einsum("lum,vml->luv", F, H))
    leak = float(np.max(G[:, ~np.eye(U, dtype=bool)]))
    cfg = RateConfig(num_ues=U, symbols_per_slot=14, pilot_len=2)
    rng = np.random.default_rng(0)
    F_out = combiners_from_csi(H + 0.3 * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)))
    rates = {b: achievable_sum_rate(H, F_out, F, cfg, b) for b in (0.0, 0.5, 1.0)}
    r_tr, r_pr = rates[1.0].rate_tr.sum(), rates[1.0].rate_pr.sum()
    linear = (rates[1.0].total == r_tr and rates[0.0].total == r_pr
              and rates[0.5].total == pytest.approx(0.5 * r_tr + 0.5 * r_pr, rel=1e-14))
    ok = leak < 1e-10 and cfg.alpha == 12 / 14 and linear
    record(9, ok, f"max |f_u^T h_v| = {leak:.1e}; alpha = {cfg.alpha:.6f}; "
                  f"R_sum(0, .5, 1) = {rates[0.0].total:.3f}, {rates[0.5].total:.3f}, {rates[1.0].total:.3f}", t0)


def test_criterion_10_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(scenario=DESK_SCENARIO, geometry=DESK_GEOMETRY,
                           train=dataclasses.replace(ExperimentConfig().train, epochs=20),
                           eval=EvalConfig(gap_slots=20, eval_slots=20),
                           sweep=SweepSpec("N", (10,)), num_seeds=2)
    seed = runner.cell_seed(cfg.master_seed, 0)
    _, est = runner.simulate_ue(cfg, seed)
    first = runner.train_all(cfg, est, seed)
    second = runner.train_all(cfg, runner.simulate_ue(cfg, seed)[1], seed)
    models_equal = all(a.params.tobytes() == b.params.tobytes() and a.input_scale == b.input_scale
                       for p, q in zip(first, second) for a, b in zip(p.models, q.models))
    # wall-clock timings are measured, not derived, so they are excluded
    strip = lambda rows: [{k: v for k, v in r.items() if k not in WALL_CLOCK} for r in rows]
    rows_a = strip(runner.sweep(cfg).rows)
    rows_b = strip(runner.sweep(cfg, jobs=2).rows)
    roundtrip = True
    for pred in first:
        for i, m in enumerate(pred.models):
            back = load_model(save_model(m, tmp_path / f"{pred.kind.name}_{i}.bin"))
            roundtrip &= back.params.tobytes() == m.params.tobytes() and back.input_scale == m.input_scale
    n_models = sum(len(p.models) for p in first)
    ok = models_equal and rows_a == rows_b and roundtrip
    record(10, ok, f"{n_models} models bit-identical={models_equal}; NMSE rows identical={rows_a == rows_b}; "
                   f"save/load bit-exact={roundtrip}", t0)
