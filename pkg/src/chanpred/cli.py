"""Command-line interface: ``chanpred <command> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, runner
from .config import AXES, ExperimentConfig, RateSpec, SweepSpec, load_config
from .metrics import correlation_summary, nmse, temporal_average, to_db
from .dataset import Domain
from .predictors import PredictorKind, load_predictor, predict_windows, save_predictor


def _values(text: str) -> tuple:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        num = float(tok)
        out.append(int(num) if num.is_integer() and "." not in tok else num)
    if not out:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return tuple(out)


def _names(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out-dir", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--predictors", type=_names, help="comma-separated, e.g. AL-FD,SL-FD,OUT")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="chanpred", description=__doc__)
    ap.add_argument("--version", action="version", version=f"chanpred {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="simulate true and estimated channels (.npz)")
    c = sub.add_parser("correlate", parents=[common], help="Type-I/II and temporal correlation summary")
    c.add_argument("--max-lag", type=int, default=5)
    sub.add_parser("train", parents=[common], help="train predictors on one simulated cycle")
    p = sub.add_parser("predict", parents=[common], help="evaluate saved predictors on the prediction window")
    p.add_argument("--model-dir", type=Path, help="directory written by 'train' (default: OUT_DIR/models)")
    s = sub.add_parser("sweep", parents=[common], help="NMSE sweep over one axis")
    s.add_argument("--axis", choices=AXES)
    s.add_argument("--values", type=_values)
    s.add_argument("--seeds", type=int, help="number of seeds per axis value")
    r = sub.add_parser("rate", parents=[common], help="multi-UE sum-rate sweep")
    r.add_argument("--axis", choices=AXES)
    r.add_argument("--values", type=_values)
    r.add_argument("--seeds", type=int)
    r.add_argument("--gamma-dbm", type=_values, help="transmit SNR values in dBm")
    r.add_argument("--betas", type=_values, help="overhead ratios")
    r.add_argument("--ues", type=int, help="number of single-antenna UEs")
    return ap


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.predictors:
        changes["predictors"] = args.predictors
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "seeds", None) is not None:
        changes["num_seeds"] = args.seeds
    axis, values = getattr(args, "axis", None), getattr(args, "values", None)
    if axis or values:
        changes["sweep"] = SweepSpec(axis or cfg.sweep.axis, values or cfg.sweep.values)
    return cfg.replace(**changes) if changes else cfg


def _single(cfg: ExperimentConfig):
    seed = runner.cell_seed(cfg.master_seed, 0)
    true, est = runner.simulate_ue(cfg, seed)
    return seed, true, est


def cmd_generate(cfg, args):
    seed, true, est = _single(cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "channels.npz"
    np.savez_compressed(path, true=true.slots, estimated=est.slots,
                        config=json.dumps(cfg.to_dict(), default=str), seed=seed)
    print(f"wrote {path} ({len(true)} slots, M={true.shape[0]}, L={true.shape[1]})")


def cmd_correlate(cfg, args):
    _, true, _ = _single(cfg)
    summary = correlation_summary(true, cfg.correlation_window)
    for d in Domain:
        rep = temporal_average(true, d, args.max_lag)
        summary[f"temporal_{d.value}"] = [float(abs(v)) for v in rep.values]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "correlations.json").write_text(json.dumps(summary, indent=2) + "\n")
    for k, v in summary.items():
        print(f"{k:12s} {np.round(v, 4).tolist() if isinstance(v, list) else round(v, 4)}")


def cmd_train(cfg, args):
    seed, true, est = _single(cfg)
    model_root = args.out_dir / "models"
    for pred in runner.train_all(cfg, est, seed):
        save_predictor(pred, model_root / pred.kind.name)
        print(f"{pred.kind.name:12s} models={len(pred.models):4d} t_com={pred.t_com_serial:.3f}s")
    (model_root / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, default=str))


def cmd_predict(cfg, args):
    model_root = args.model_dir or args.out_dir / "models"
    if not model_root.is_dir():
        raise FileNotFoundError(f"no trained models in {model_root}; run 'chanpred train' first")
    _, true, est = _single(cfg)
    windows, targets = runner.eval_windows(cfg, est, true)
    for name in cfg.predictors:
        pred = load_predictor(model_root / PredictorKind.parse(name).name)
        out = predict_windows(pred, windows)
        err = nmse(out[:, -1], targets[:, -1])
        print(f"{pred.kind.name:12s} NMSE={err:.4e} ({to_db(err):.2f} dB)")


def _finish(report, args):
    paths = runner.emit(report, args.out_dir)
    for agg in report.aggregates():
        print(f"{agg['predictor']:12s} {report.config.sweep.axis}={agg['axis_value']!s:8s} "
              f"median NMSE {agg['nmse_db_median']:8.2f} dB  "
              f"IQR [{agg['nmse_db_q25']:.2f}, {agg['nmse_db_q75']:.2f}]")
    for p in paths.values():
        print(f"wrote {p}")


def cmd_sweep(cfg, args):
    _finish(runner.sweep(cfg), args)


def cmd_rate(cfg, args):
    base = cfg.rate or RateSpec()
    overrides = {"gamma_dbm": args.gamma_dbm, "betas": args.betas, "num_ues": args.ues}
    spec = dataclasses.replace(base, **{k: v for k, v in overrides.items() if v is not None})
    cfg = cfg.replace(rate=spec)
    _finish(runner.sweep(cfg), args)
    report_rates = {}
    for r in runner.read_results_csv(args.out_dir / "results.csv"):
        report_rates.setdefault((r["predictor"], r["axis_value"]), []).append(float(r["sum_rate"]))
    for (pred, val), rates in report_rates.items():
        print(f"{pred:12s} {cfg.sweep.axis}={val:8s} mean sum-rate {np.mean(rates):.3f} bit/s/Hz")


COMMANDS = {"generate": cmd_generate, "correlate": cmd_correlate, "train": cmd_train,
            "predict": cmd_predict, "sweep": cmd_sweep, "rate": cmd_rate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except (ValueError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"chanpred: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
