"""Experiment config, cycles, sweeps, result files and the command-line interface."""
import dataclasses
import json

import numpy as np
import pytest

from chanpred import runner
from chanpred.channel_model import ArrayGeometry
from chanpred.cli import main
from chanpred.config import (EvalConfig, ExperimentConfig, RateSpec, SweepSpec, config_from_dict,
                             load_config)


# ---------------------------------------------------------------- config

def test_config_defaults_follow_reference_setup():
    cfg = ExperimentConfig()
    assert (cfg.input_order, cfg.prediction_order, cfg.num_slots) == (2, 1, 10)
    assert (cfg.eval.gap_slots, cfg.eval.eval_slots) == (100, 100)
    assert cfg.geometry.num_pairs == 128 and cfg.scenario.num_subcarriers == 128
    assert "OUT" in cfg.predictors


@pytest.mark.parametrize("kwargs", [dict(num_slots=3), dict(num_seeds=0), dict(predictors=())])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_eval_and_sweep_validation():
    with pytest.raises(ValueError):
        EvalConfig(gap_slots=-1)
    with pytest.raises(ValueError):
        EvalConfig(eval_slots=0)
    with pytest.raises(ValueError):
        SweepSpec("N", ())
    with pytest.raises(ValueError):
        SweepSpec("bandwidth", (1,))
    with pytest.raises(ValueError):
        RateSpec(betas=(1.5,))


def test_config_from_dict_and_file(tmp_path):
    data = {"scenario": {"num_subcarriers": 16, "subcarrier_spacing_hz": 15e3},
            "geometry": {"bs_rows": 2, "bs_cols": 2, "ue_antennas": 1},
            "predictors": ["AL-FD", "OUT"], "sweep": {"axis": "speed", "values": [20, 60]},
            "rate": {"num_ues": 2}}
    cfg = config_from_dict(data)
    assert cfg.pilot.subcarrier_spacing_hz == 15e3
    assert cfg.predictors == ("AL-FD", "OUT") and cfg.sweep.values == (20, 60)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    assert load_config(path) == cfg
    assert config_from_dict(cfg.to_dict() | {"sweep": {"axis": "speed", "values": [20, 60]}}).config_hash() \
        == cfg.config_hash()


def test_config_errors(tmp_path):
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_dict({"scenario": {"colour": 1}})
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_dict({"epochs": 3})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError, match="bad.json"):
        load_config(bad)


def test_config_hash_changes_with_content(tiny_experiment):
    assert tiny_experiment.config_hash() == tiny_experiment.replace().config_hash()
    assert tiny_experiment.config_hash() != tiny_experiment.replace(num_slots=9).config_hash()


# ---------------------------------------------------------------- cycles

def test_apply_axis(tiny_experiment):
    c = tiny_experiment
    assert runner.apply_axis(c, "N", 20).num_slots == 20
    assert runner.apply_axis(c, "spacing", 0.1).geometry.spacing_bs == 0.1
    assert runner.apply_axis(c, "pilot_power", 20).pilot.pilot_power_dbm == 20
    assert runner.apply_axis(c, "speed", 36).scenario.ue_speed_mps == pytest.approx(10.0)
    assert runner.apply_axis(c, "p", 2).prediction_order == 2
    assert runner.apply_axis(c, None, 1) is c
    with pytest.raises(ValueError):
        runner.apply_axis(c, "rows", 1)


def test_eval_windows_disjoint_from_training(tiny_experiment):
    c = tiny_experiment
    true, est = runner.simulate_ue(c, 7)
    assert len(true) == runner.total_slots(c) == 8 + 4 + 5 + 2 + 1 - 1
    windows, targets = runner.eval_windows(c, est, true)
    assert windows.shape == (5, 2) + true.shape and targets.shape == (5, 1) + true.shape
    # first evaluation input is exactly gap_slots after the last training slot (N - 1)
    np.testing.assert_array_equal(windows[0, 0], est.slots[c.num_slots + c.eval.gap_slots])
    np.testing.assert_array_equal(targets[-1, 0], true.slots[-1])


def test_run_cycle_rows(tiny_experiment):
    res = runner.run_cycle(tiny_experiment, 3)
    assert [r.predictor for r in res] == ["AL-AD", "AL-FD", "SL-AD", "SL-FD", "OUT"]
    for r in res:
        assert r.t_col == pytest.approx(0.016)
        assert np.isfinite(r.nmse_linear) and r.nmse_db == pytest.approx(10 * np.log10(r.nmse_linear))
        assert r.sum_rate is None
    assert res[-1].t_com == 0.0


def test_run_cycle_deterministic(tiny_experiment):
    a = runner.run_cycle(tiny_experiment, 11)
    b = runner.run_cycle(tiny_experiment, 11)
    assert [r.nmse_linear for r in a] == [r.nmse_linear for r in b]


def test_run_cycle_multistep_reports_last_step(tiny_experiment):
    res = runner.run_cycle(tiny_experiment.replace(prediction_order=2, predictors=("AL-FD",)), 1)
    assert len(res[0].nmse_steps) == 2 and res[0].nmse_linear == res[0].nmse_steps[-1]


def test_run_cycle_with_rates(tiny_experiment):
    cfg = tiny_experiment.replace(rate=RateSpec(num_ues=2, gamma_dbm=(0.0, 10.0), betas=(0.2, 1.0)),
                                  pilot=dataclasses.replace(tiny_experiment.pilot))
    res = runner.run_cycle(cfg.replace(predictors=("AL-FD", "OUT")), 5)
    for r in res:
        assert set(r.rates) == {(0.0, 0.2), (0.0, 1.0), (10.0, 0.2), (10.0, 1.0)}
        assert r.sum_rate == r.rates[(0.0, 0.2)] > 0
    # beta = 1 uses the training-phase combiners only, which do not depend on the predictor
    assert res[0].rates[(0.0, 1.0)] == pytest.approx(res[1].rates[(0.0, 1.0)])


def test_rates_need_single_antenna_ues(tiny_experiment):
    with pytest.raises(ValueError, match="single-antenna"):
        tiny_experiment.replace(geometry=ArrayGeometry(2, 2, 2), rate=RateSpec(num_ues=2))
    with pytest.raises(ValueError, match="M_BS"):
        tiny_experiment.replace(rate=RateSpec(num_ues=5))


# ---------------------------------------------------------------- sweeps

def test_sweep_row_count_and_order(tiny_experiment):
    cfg = tiny_experiment.replace(predictors=("AL-FD", "SL-FD", "AL-AD", "OUT"), num_seeds=5,
                                  sweep=SweepSpec("N", (10, 20, 40, 80)),
                                  train=dataclasses.replace(tiny_experiment.train, epochs=1))
    rep = runner.sweep(cfg)
    assert len(rep.rows) == 80
    keys = [(r["axis_value"], r["seed_index"]) for r in rep.rows]
    assert keys == sorted(keys)
    assert all(r["config_hash"] == cfg.config_hash() for r in rep.rows)
    agg = rep.aggregates()
    assert len(agg) == 16 and all(a["n"] == 5 for a in agg)


def test_sweep_seed_discipline(tiny_experiment):
    cfg = tiny_experiment.replace(sweep=SweepSpec("N", (8,)), predictors=("AL-FD", "OUT"))
    two = runner.sweep(cfg.replace(num_seeds=2)).rows
    three = runner.sweep(cfg.replace(num_seeds=3)).rows
    strip = lambda rows: [(r["predictor"], r["seed"], r["nmse_linear"]) for r in rows]
    assert strip(three)[:len(two)] == strip(two)


def test_sweep_parallel_matches_serial(tiny_experiment):
    cfg = tiny_experiment.replace(sweep=SweepSpec("speed", (20, 60)), predictors=("AL-FD", "OUT"))
    serial = runner.sweep(cfg, jobs=1).rows
    parallel = runner.sweep(cfg, jobs=2).rows
    assert [(r["seed"], r["nmse_linear"]) for r in serial] == [(r["seed"], r["nmse_linear"]) for r in parallel]


def test_spacing_sweep_emits_correlations(tiny_experiment, tmp_path):
    cfg = tiny_experiment.replace(sweep=SweepSpec("spacing", (0.1, 0.5)), predictors=("OUT",),
                                  correlation_window=20)
    rep = runner.sweep(cfg)
    assert len(rep.correlations) == 4 and "type2_AD" in rep.correlations[0]
    paths = runner.emit(rep, tmp_path)
    assert paths["correlations"].read_text().startswith("# config ")


def test_common_random_numbers_across_axis_values(tiny_experiment):
    cfg = tiny_experiment.replace(sweep=SweepSpec("N", (8, 10)), predictors=("OUT",), num_seeds=1)
    rows = runner.sweep(cfg).rows
    assert rows[0]["seed"] == rows[1]["seed"]


# ---------------------------------------------------------------- result files

@pytest.fixture
def small_report(tiny_experiment):
    cfg = tiny_experiment.replace(sweep=SweepSpec("N", (8,)), predictors=("AL-FD", "OUT"))
    return runner.sweep(cfg)


def test_csv_header_and_preamble(small_report, tmp_path):
    paths = runner.emit(small_report, tmp_path)
    lines = paths["csv"].read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    assert any(ln.startswith("# config {") for ln in comments)
    header = lines[len(comments)]
    assert header == "predictor,axis,axis_value,seed,nmse_linear,nmse_db,t_col_s,t_com_s,sum_rate"
    rows = runner.read_results_csv(paths["csv"])
    assert len(rows) == len(small_report.rows)
    assert float(rows[0]["nmse_linear"]) == small_report.rows[0]["nmse_linear"]
    assert rows[0]["sum_rate"] == ""


def test_csv_rows_reproducible_from_embedded_config(small_report, tmp_path):
    paths = runner.emit(small_report, tmp_path)
    line = next(ln for ln in paths["csv"].read_text().splitlines() if ln.startswith("# config "))
    cfg = config_from_dict(json.loads(line[len("# config "):]))
    assert cfg.config_hash() == small_report.config.config_hash()
    row = runner.read_results_csv(paths["csv"])[0]
    res = runner.run_cycle(runner.apply_axis(cfg, row["axis"], int(row["axis_value"])), int(row["seed"]))
    assert repr(res[0].nmse_linear) == row["nmse_linear"]


def test_json_summary_round_trip(small_report, tmp_path):
    paths = runner.emit(small_report, tmp_path)
    summary = runner.read_summary(paths["json"])
    assert summary["version"] and summary["config_hash"] == small_report.config.config_hash()
    assert summary["aggregates"] == json.loads(json.dumps(small_report.aggregates()))
    assert [r["nmse_db"] for r in summary["rows"]] == [r["nmse_db"] for r in small_report.rows]


def test_reemit_identical_except_timestamp(small_report, tmp_path):
    a = runner.emit(small_report, tmp_path / "a", timestamp="t1")
    b = runner.emit(small_report, tmp_path / "b", timestamp="t2")
    assert a["csv"].read_bytes() == b["csv"].read_bytes()
    ja, jb = runner.read_summary(a["json"]), runner.read_summary(b["json"])
    assert ja.pop("timestamp") != jb.pop("timestamp")
    assert ja == jb


def test_emit_reports_path_on_failure(small_report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        runner.emit(small_report, blocker / "sub")


# ---------------------------------------------------------------- CLI

@pytest.fixture
def cli_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "scenario": {"num_subcarriers": 8, "num_paths": 6},
        "geometry": {"bs_rows": 2, "bs_cols": 2, "ue_antennas": 1},
        "train": {"epochs": 2}, "eval": {"gap_slots": 4, "eval_slots": 4},
        "num_seeds": 1, "correlation_window": 20, "rate": None}))
    return path


def test_cli_sweep(cli_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["sweep", "--config", str(cli_config), "--out-dir", str(out), "--axis", "N",
                 "--values", "8,10", "--predictors", "AL-FD,OUT", "--seed", "3"])
    assert code == 0
    rows = runner.read_results_csv(out / "results.csv")
    assert {r["axis_value"] for r in rows} == {"8", "10"} and len(rows) == 4
    assert "median NMSE" in capsys.readouterr().out


def test_cli_generate_correlate_train_predict(cli_config, tmp_path, capsys):
    out = tmp_path / "o"
    base = ["--config", str(cli_config), "--out-dir", str(out)]
    assert main(["generate", *base]) == 0
    data = np.load(out / "channels.npz")
    assert data["true"].shape == data["estimated"].shape
    assert main(["correlate", *base, "--max-lag", "3"]) == 0
    assert "temporal_FD" in json.loads((out / "correlations.json").read_text())
    assert main(["train", *base, "--predictors", "AL-FD,SL-AD,OUT"]) == 0
    assert (out / "models" / "SL-AD" / "kind.json").exists()
    assert main(["predict", *base, "--predictors", "AL-FD,OUT"]) == 0
    assert "NMSE=" in capsys.readouterr().out


def test_cli_rate(tmp_path, cli_config):
    out = tmp_path / "r"
    code = main(["rate", "--config", str(cli_config), "--out-dir", str(out), "--predictors", "AL-FD,OUT",
                 "--axis", "N", "--values", "8", "--gamma-dbm", "0,10", "--betas", "0.16,1",
                 "--ues", "3"])
    assert code == 0
    assert all(r["sum_rate"] for r in runner.read_results_csv(out / "results.csv"))
    assert (out / "rates.csv").exists()


def test_cli_errors_exit_nonzero(tmp_path, cli_config, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) != 0
    assert "error" in capsys.readouterr().err
    assert main(["predict", "--config", str(cli_config), "--out-dir", str(tmp_path / "none")]) != 0
    assert main(["sweep", "--config", str(cli_config), "--predictors", "XYZ", "--out-dir", str(tmp_path)]) != 0
    with pytest.raises(SystemExit):
        main(["sweep", "--axis", "colour"])
