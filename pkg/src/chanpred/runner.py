"""Training/prediction cycles, parameter sweeps and result files.

One cycle follows the online re-training timeline::

    | N training slots | gap_slots | I input slots + eval_slots targets |

Predictors are trained on the estimates of the first ``N`` slots.  The
prediction phase starts ``gap_slots`` after the training window; for each of
``eval_slots`` windows the last ``I`` estimates predict the true channel
``p`` slots ahead, and NMSE is taken against the true channels.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _seeding
from .channel_model import ChannelTrajectory, generate_trajectory
from .config import ExperimentConfig
from .estimation import estimate_trajectory, noise_variance
from .metrics import (RateConfig, achievable_sum_rate, combiners_from_csi,
                      correlation_summary, nmse, overhead, to_db)
from .predictors import PredictorKind, TrainedPredictor, predict_windows, train_predictor

log = logging.getLogger(__name__)

CSV_COLUMNS = ("predictor", "axis", "axis_value", "seed", "nmse_linear", "nmse_db",
               "t_col_s", "t_com_s", "sum_rate")


def cell_seed(master_seed: int, seed_index: int) -> int:
    """Seed of the ``seed_index``-th repetition; independent of ``num_seeds``."""
    return _seeding.derive_seed(master_seed, _seeding.CELL, seed_index)


def apply_axis(cfg: ExperimentConfig, axis: str | None, value) -> ExperimentConfig:
    if axis is None:
        return cfg
    if axis == "N":
        return cfg.replace(num_slots=int(value))
    if axis == "spacing":
        return cfg.replace(geometry=cfg.geometry.with_spacing(float(value)))
    if axis == "pilot_power":
        return cfg.replace(pilot=dataclasses.replace(cfg.pilot, pilot_power_dbm=float(value)))
    if axis == "speed":
        return cfg.replace(scenario=dataclasses.replace(cfg.scenario, ue_speed_mps=float(value) / 3.6))
    if axis == "p":
        return cfg.replace(prediction_order=int(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def total_slots(cfg: ExperimentConfig) -> int:
    return (cfg.num_slots + cfg.eval.gap_slots + cfg.eval.eval_slots
            + cfg.input_order + cfg.prediction_order - 1)


def simulate_ue(cfg: ExperimentConfig, seed: int, ue: int = 0) -> tuple[ChannelTrajectory, ChannelTrajectory]:
    """True and estimated trajectories of one UE for a whole cycle."""
    scenario = dataclasses.replace(cfg.scenario, seed=seed)
    true = generate_trajectory(scenario, cfg.geometry, total_slots(cfg),
                               rng=_seeding.stream(seed, _seeding.PATHS, ue))
    est = estimate_trajectory(true, cfg.pilot, _seeding.stream(seed, _seeding.NOISE, ue))
    return true, est


def eval_windows(cfg: ExperimentConfig, est: ChannelTrajectory, true: ChannelTrajectory):
    """Input windows ``(E, I, M, L)`` and true targets ``(E, p, M, L)``."""
    I, p = cfg.input_order, cfg.prediction_order
    first = cfg.num_slots + cfg.eval.gap_slots
    starts = first + np.arange(cfg.eval.eval_slots)
    windows = np.stack([est.slots[s:s + I] for s in starts])
    targets = np.stack([true.slots[s + I:s + I + p] for s in starts])
    return windows, targets


@dataclass
class CycleResult:
    predictor: str
    nmse_linear: float
    nmse_steps: list
    t_col: float
    t_com: float
    t_com_parallel: float
    dataset_size: int
    sum_rate: float | None = None
    rates: dict = field(default_factory=dict)

    @property
    def nmse_db(self) -> float:
        return to_db(self.nmse_linear)


def train_all(cfg: ExperimentConfig, est: ChannelTrajectory, seed: int, ue: int = 0) -> list[TrainedPredictor]:
    """Train ``cfg.predictors`` on the first ``num_slots`` estimates of UE ``ue``."""
    train_cfg = dataclasses.replace(cfg.train, seed=_seeding.derive_seed(seed, _seeding.TRAIN, ue))
    train_traj = est.window(0, cfg.num_slots)
    out = []
    for name in cfg.predictors:
        out.append(train_predictor(PredictorKind.parse(name), train_traj, cfg.input_order,
                                   cfg.prediction_order, train_cfg, cfg.hidden))
    return out


def run_cycle(cfg: ExperimentConfig, seed: int) -> list[CycleResult]:
    """Train every requested predictor once and evaluate it on the prediction window.

    With ``cfg.rate`` set, ``num_ues`` single-antenna UEs are simulated, every
    predictor is trained per UE, NMSE is averaged over UEs, and the sum-rate
    (first gamma, first beta) is recorded.
    """
    num_ues = cfg.rate.num_ues if cfg.rate else 1
    per_ue = []
    for u in range(num_ues):
        true, est = simulate_ue(cfg, seed, u)
        windows, targets = eval_windows(cfg, est, true)
        preds = train_all(cfg, est, seed, u)
        outputs = [predict_windows(pr, windows) for pr in preds]
        per_ue.append((windows, targets, preds, outputs))

    results = []
    t_dur = cfg.scenario.slot_duration_s
    for k, name in enumerate(cfg.predictors):
        steps = np.mean([[nmse(out[k][:, j], tg[:, j]) for j in range(cfg.prediction_order)]
                         for _, tg, _, out in per_ue], axis=0)
        t_com = sum(pr[k].t_com_serial for _, _, pr, _ in per_ue)
        t_par = max(pr[k].t_com_parallel for _, _, pr, _ in per_ue)
        size = per_ue[0][2][k].dataset_sizes[0] if per_ue[0][2][k].dataset_sizes else 0
        ov = overhead(t_dur, cfg.num_slots, t_com)
        res = CycleResult(PredictorKind.parse(name).name, float(steps[-1]), [float(s) for s in steps],
                          ov.t_col, ov.t_com, t_par, size)
        if cfg.rate:
            res.rates = cycle_rates(cfg, per_ue, k)
            g0, b0 = cfg.rate.gamma_dbm[0], cfg.rate.betas[0]
            res.sum_rate = res.rates[(g0, b0)]
        results.append(res)
    return results


def _rate_config(cfg: ExperimentConfig, gamma_dbm: float) -> RateConfig:
    return RateConfig(num_ues=cfg.rate.num_ues, gamma_dbm=gamma_dbm,
                      sigma2=noise_variance(cfg.pilot),
                      symbols_per_slot=cfg.rate.symbols_per_slot, pilot_len=cfg.pilot.pilot_len)


def cycle_rates(cfg: ExperimentConfig, per_ue, k: int) -> dict:
    """Mean sum-rate over evaluation slots for every (gamma, beta) pair.

    Training-phase combiners use the latest (outdated) estimate, prediction
    phase combiners the predicted channel; both are scored on the true
    channel of the target slot.
    """
    p = cfg.prediction_order
    csi_tr = np.stack([w[:, -1] for w, _, _, _ in per_ue])            # (U, E, M, L)
    csi_pr = np.stack([out[k][:, p - 1] for _, _, _, out in per_ue])
    truth = np.stack([tg[:, p - 1] for _, tg, _, _ in per_ue])
    E = truth.shape[1]
    combs = [(combiners_from_csi(csi_tr[:, e]), combiners_from_csi(csi_pr[:, e])) for e in range(E)]
    rates = {}
    for g in cfg.rate.gamma_dbm:
        rc = _rate_config(cfg, g)
        per_slot = [achievable_sum_rate(truth[:, e], ftr, fpr, rc, 1.0) for e, (ftr, fpr) in enumerate(combs)]
        r_tr = float(np.mean([r.rate_tr.sum() for r in per_slot]))
        r_pr = float(np.mean([r.rate_pr.sum() for r in per_slot]))
        for b in cfg.rate.betas:
            rates[(g, b)] = b * r_tr + (1 - b) * r_pr
    return rates


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[dict]
    correlations: list[dict] = field(default_factory=list)
    rates: list[dict] = field(default_factory=list)

    def aggregates(self) -> list[dict]:
        """Median and inter-quartile range of NMSE (dB) per (predictor, axis value)."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r["predictor"], r["axis_value"]), []).append(r)
        out = []
        for (pred, val), rows in groups.items():
            db = sorted(r["nmse_db"] for r in rows)
            q = np.percentile(db, [25, 75]) if len(db) > 1 else (db[0], db[0])
            out.append({"predictor": pred, "axis_value": val, "n": len(rows),
                        "nmse_db_median": statistics.median(db),
                        "nmse_db_q25": float(q[0]), "nmse_db_q75": float(q[1]),
                        "t_com_s_median": statistics.median(r["t_com_s"] for r in rows)})
        return out

    def median_nmse_db(self, predictor: str, axis_value) -> float:
        vals = [r["nmse_db"] for r in self.rows
                if r["predictor"] == predictor and r["axis_value"] == axis_value]
        if not vals:
            raise KeyError((predictor, axis_value))
        return statistics.median(vals)


def _run_cell(args):
    cfg, axis, value, seed_index = args
    seed = cell_seed(cfg.master_seed, seed_index)
    cell_cfg = apply_axis(cfg, axis, value)
    t0 = time.perf_counter()
    results = run_cycle(cell_cfg, seed)
    corr = None
    if axis == "spacing":
        true, _ = simulate_ue(cell_cfg, seed)
        corr = correlation_summary(true, cell_cfg.correlation_window)
    log.info("cell %s=%s seed#%d done in %.1fs", axis, value, seed_index, time.perf_counter() - t0)
    return cell_cfg, axis, value, seed_index, seed, results, corr


def sweep(cfg: ExperimentConfig, jobs: int | None = None) -> ExperimentReport:
    """Run every (axis value, seed) cell and collect one row per predictor.

    Rows are ordered by axis value, then seed index, then predictor, regardless
    of completion order.
    """
    axis, values = cfg.sweep.axis, cfg.sweep.values
    if not values:
        raise ValueError("sweep values must be non-empty")
    cells = [(cfg, axis, v, s) for v in values for s in range(cfg.num_seeds)]
    for _, _, v, _ in cells[::cfg.num_seeds]:
        apply_axis(cfg, axis, v)   # surface config errors before any work
    jobs = cfg.jobs if jobs is None else jobs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_cell, cells))
    else:
        done = [_run_cell(c) for c in cells]

    report = ExperimentReport(cfg, [])
    chash = cfg.config_hash()
    for cell_cfg, axis, value, seed_index, seed, results, corr in done:
        for res in results:
            report.rows.append({
                "predictor": res.predictor, "axis": axis, "axis_value": value, "seed": seed,
                "nmse_linear": res.nmse_linear, "nmse_db": res.nmse_db,
                "t_col_s": res.t_col, "t_com_s": res.t_com,
                "sum_rate": res.sum_rate,
                "seed_index": seed_index, "config_hash": chash,
                "nmse_steps": res.nmse_steps, "t_com_parallel_s": res.t_com_parallel,
                "dataset_size": res.dataset_size,
            })
            for (g, b), rate in res.rates.items():
                report.rates.append({"predictor": res.predictor, "axis_value": value, "seed": seed,
                                     "gamma_dbm": g, "beta": b, "sum_rate": rate})
        if corr is not None:
            report.correlations.append({"axis_value": value, "seed": seed, **corr})
    return report


# ---------------------------------------------------------------- output files

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _config_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, default=str)


def results_csv(report: ExperimentReport) -> str:
    """CSV text: ``#`` preamble with tool version and resolved config, then the table."""
    buf = io.StringIO()
    buf.write(f"# chanpred {__version__}\n")
    buf.write(f"# config_hash {report.config.config_hash()}\n")
    buf.write(f"# config {_config_json(report.config)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_summary(path) -> dict:
    return json.loads(Path(path).read_text())


def summary_dict(report: ExperimentReport, timestamp: str | None = None) -> dict:
    return {
        "tool": "chanpred", "version": __version__,
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(),
        "config_hash": report.config.config_hash(),
        "config": json.loads(_config_json(report.config)),
        "columns": list(CSV_COLUMNS),
        "aggregates": report.aggregates(),
        "rows": report.rows,
        "correlations": report.correlations,
        "rates": report.rates,
    }


def emit(report: ExperimentReport, out_dir, timestamp: str | None = None) -> dict[str, Path]:
    """Write ``results.csv``, ``summary.json`` and, when present, correlation/rate CSVs."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out_dir / "results.csv", "json": out_dir / "summary.json"}
        paths["csv"].write_text(results_csv(report))
        paths["json"].write_text(json.dumps(summary_dict(report, timestamp), indent=2, default=str) + "\n")
        preamble = f"# config {_config_json(report.config)}\n"
        if report.correlations:
            paths["correlations"] = out_dir / "correlations.csv"
            _write_table(paths["correlations"], report.correlations, preamble)
        if report.rates:
            paths["rates"] = out_dir / "rates.csv"
            _write_table(paths["rates"], report.rates, preamble)
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc}") from exc
    return paths


def _write_table(path: Path, rows: list[dict], preamble: str = "") -> None:
    buf = io.StringIO()
    buf.write(preamble)
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    path.write_text(buf.getvalue())
