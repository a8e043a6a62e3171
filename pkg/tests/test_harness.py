"""Sweep orchestration tests, kept at toy scale so they stay fast."""

import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from slicerc.cli import main as cli_main
from slicerc.esn import EsnConfig
from slicerc.harness import (
    ConfigError,
    EsnParams,
    ExperimentConfig,
    GridPoint,
    LinkParams,
    SweepRecord,
    config_from_dict,
    config_to_dict,
    emit_plot_data,
    grid_points,
    load_config,
    read_results,
    run_experiment,
    run_sweep,
    save_config,
    series_curve,
    write_results,
)
from slicerc.metrics import complexity_rmps


def toy_config(**kw) -> ExperimentConfig:
    base = dict(
        fiber_length_km=(0.0,),
        snr_db=(30.0,),
        n_out=(1,),
        seeds=(0,),
        total_symbols=2048,
        esn=EsnParams(washout=2),
        label="toy",
    )
    base.update(kw)
    return ExperimentConfig(**base)


# ------------------------------------------------------------------ config

def test_empty_config_names_missing_field(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    with pytest.raises(ConfigError, match="fiber_length_km"):
        load_config(path)


def test_minimal_config_fills_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("fiber_length_km: [0, 10, 30, 50]\n")
    cfg = load_config(path)
    assert cfg.fiber_length_km == (0.0, 10.0, 30.0, 50.0)
    assert cfg.snr_db == tuple(float(s) for s in range(8, 31))
    assert cfg.n_out == (1, 17, 23)
    assert cfg.total_symbols == 2**22
    assert cfg.train_fraction == 0.15
    assert cfg.link == LinkParams()
    assert cfg.esn == EsnParams()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key 'snr'"):
        config_from_dict({"fiber_length_km": [0], "snr": [10]})
    with pytest.raises(ConfigError, match="esn.n_nodes"):
        config_from_dict({"fiber_length_km": [0], "esn": {"n_nodes": 10}})


def test_type_errors_name_the_field():
    with pytest.raises(ConfigError, match="snr_db"):
        config_from_dict({"fiber_length_km": [0], "snr_db": ["high"]})
    with pytest.raises(ConfigError, match="total_symbols"):
        config_from_dict({"fiber_length_km": [0], "total_symbols": 2.5})


def test_grid_ordering_enforced():
    with pytest.raises(ConfigError, match="strictly increasing"):
        config_from_dict({"fiber_length_km": [10, 0]})
    with pytest.raises(ConfigError, match="seeds"):
        config_from_dict({"fiber_length_km": [0], "seeds": [1, 1]})


def test_config_roundtrip(tmp_path):
    cfg = toy_config(
        fiber_length_km=(0.0, 10.0),
        snr_db=(8.0, 9.0),
        n_out=(1, 17),
        seeds=(0, 1),
        link=LinkParams(num_slices=2),
        esn=EsnParams(ridge_lambda=1e-3),
    )
    path = tmp_path / "round.yaml"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_malformed_yaml_reports_parse_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("fiber_length_km: [0\n")
    with pytest.raises(ConfigError, match="could not parse"):
        load_config(path)


# ------------------------------------------------------------- experiments

def test_run_experiment_deterministic():
    cfg = toy_config()
    point = GridPoint(0.0, 1, 30.0)
    a = run_experiment(cfg, point, seed=0)
    b = run_experiment(cfg, point, seed=0)
    assert a.ber == b.ber
    assert a.ser == b.ser
    assert a.per_position_ber == b.per_position_ber
    assert a.test_symbols == b.test_symbols


def test_record_carries_complexity_of_its_variant():
    cfg = toy_config(n_out=(3,))
    rec = run_experiment(cfg, GridPoint(0.0, 3, 30.0), seed=0)
    assert rec.rmps == complexity_rmps(
        EsnConfig(n_out=3, washout=2, seed=0)
    )


def test_sweep_cardinality_and_order():
    cfg = toy_config(
        snr_db=(26.0, 27.0, 28.0, 29.0, 30.0),
        n_out=(1, 3, 5),
        seeds=(0, 1),
    )
    records = run_sweep(cfg)
    assert len(records) == 30
    keys = [(r.fiber_length_km, r.n_out, r.snr_db, r.seed) for r in records]
    assert keys == [
        (p.fiber_length_km, p.n_out, p.snr_db, s) for p, s in grid_points(cfg)
    ]


def test_sweep_records_independent_of_parallelism():
    cfg = toy_config(snr_db=(29.0, 30.0), seeds=(0, 1))
    serial = run_sweep(cfg, parallel=1)
    pooled = run_sweep(cfg, parallel=2)
    for a, b in zip(serial, pooled):
        assert a.ber == b.ber
        assert a.ser == b.ser
        assert a.per_position_ber == b.per_position_ber


def test_sweep_resume_skips_completed_points():
    cfg = toy_config(snr_db=(29.0, 30.0))
    first = run_sweep(cfg)
    # poison one completed record; a resumed sweep must trust it on key
    # match instead of recomputing
    poisoned = replace(first[0], ber=0.123)
    resumed = run_sweep(cfg, existing=[poisoned])
    assert resumed[0].ber == 0.123
    assert resumed[1].ber == first[1].ber


def test_sweep_retries_error_rows():
    cfg = toy_config()
    failed = SweepRecord(
        label="toy", seed=0, snr_db=30.0, fiber_length_km=0.0, n_out=1,
        n_res=30, ber=math.nan, ser=math.nan, per_position_ber=(),
        rmps=math.nan, train_symbols=0, test_symbols=0, wall_time_s=0.0,
        error="ValueError: boom",
    )
    records = run_sweep(cfg, existing=[failed])
    assert records[0].ok
    assert records[0].ber == records[0].ber  # not nan


def test_failing_point_becomes_error_row():
    # washout larger than the step count of the training region
    cfg = toy_config(esn=EsnParams(washout=1000))
    records = run_sweep(cfg)
    assert len(records) == 1
    assert not records[0].ok
    assert "washout" in records[0].error
    assert math.isnan(records[0].ber)


# ---------------------------------------------------------------- results

def test_results_roundtrip(tmp_path):
    cfg = toy_config(snr_db=(29.0, 30.0))
    records = run_sweep(cfg)
    write_results(records, tmp_path, cfg)
    parsed = read_results(tmp_path / "results.csv")
    assert parsed == records


def test_zero_records_writes_header_only(tmp_path):
    write_results([], tmp_path)
    lines = (tmp_path / "results.csv").read_text().strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("label,seed,snr_db")


def test_manifest_lists_every_seed(tmp_path):
    cfg = toy_config(seeds=(0, 3, 11), snr_db=(30.0,))
    records = run_sweep(cfg)
    write_results(records, tmp_path, cfg)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 3, 11]
    assert manifest["n_records"] == 3
    assert manifest["config"]["label"] == "toy"


def test_read_results_rejects_foreign_header(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="header"):
        read_results(path)


# ---------------------------------------------------------------- plotting

def synthetic_records():
    """Fabricated sweep: clean log-linear curves with a known geometry.

    n_out=1 curves cross KP4 near 11.3 dB at 0 km and 12.3 dB at 10 km;
    n_out=17 sits 0.5 dB to the right of n_out=1 at each length.
    """
    records = []
    for length, shift_l in ((0.0, 0.0), (10.0, 1.0)):
        for n_out, shift_v in ((1, 0.0), (17, 0.5)):
            rmps = complexity_rmps(EsnConfig(n_out=n_out))
            for snr in (8.0, 10.0, 12.0, 14.0):
                for seed in (0, 1):
                    eff = snr - shift_l - shift_v
                    ber = 10.0 ** (-eff / 3.1)
                    records.append(
                        SweepRecord(
                            label="synth", seed=seed, snr_db=snr,
                            fiber_length_km=length, n_out=n_out, n_res=30,
                            ber=ber, ser=2 * ber, per_position_ber=(ber,) * n_out,
                            rmps=rmps, train_symbols=1000, test_symbols=10000,
                            wall_time_s=0.1,
                        )
                    )
    return records


def test_emit_plot_data_files(tmp_path):
    paths = emit_plot_data(synthetic_records(), tmp_path)
    with paths["ber_vs_snr"].open() as fh:
        rows = list(csv.DictReader(fh))
    series = {(r["fiber_length_km"], r["n_out"]) for r in rows}
    assert len(series) == 4  # |lengths| x |n_out list|
    assert len(rows) == 16

    with paths["snr_penalty"].open() as fh:
        rows = list(csv.DictReader(fh))
    by_key = {(float(r["fiber_length_km"]), int(r["n_out"])): r for r in rows}
    # the reference series against itself at l=0 is the zero row
    assert float(by_key[(0.0, 1)]["penalty_db"]) == pytest.approx(0.0, abs=1e-12)
    assert float(by_key[(10.0, 1)]["penalty_db"]) == pytest.approx(1.0, abs=1e-9)
    assert float(by_key[(0.0, 17)]["penalty_db"]) == pytest.approx(0.5, abs=1e-9)
    assert float(by_key[(10.0, 17)]["penalty_db"]) == pytest.approx(1.5, abs=1e-9)

    with paths["complexity"].open() as fh:
        rows = list(csv.DictReader(fh))
    got = {int(r["n_out"]): float(r["rmps"]) for r in rows}
    assert got[1] == pytest.approx(691.0, abs=1e-9)
    assert got[17] == pytest.approx(1235.0 / 17.0, abs=1e-9)


def test_emit_plot_data_notes_unbracketed_series(tmp_path):
    records = synthetic_records()
    for snr in (8.0, 10.0, 12.0, 14.0):
        records.append(
            SweepRecord(
                label="synth", seed=0, snr_db=snr, fiber_length_km=30.0,
                n_out=17, n_res=30, ber=0.4, ser=0.5, per_position_ber=(0.4,),
                rmps=complexity_rmps(EsnConfig(n_out=17)), train_symbols=1000,
                test_symbols=10000, wall_time_s=0.1,
            )
        )
    paths = emit_plot_data(records, tmp_path)
    with paths["snr_penalty"].open() as fh:
        rows = {
            (float(r["fiber_length_km"]), int(r["n_out"])): r
            for r in csv.DictReader(fh)
        }
    bad = rows[(30.0, 17)]
    assert bad["note"] == "NotBracketed"
    assert bad["penalty_db"] == ""


def test_emit_plot_data_requires_unique_reference(tmp_path):
    records = [r for r in synthetic_records() if not (r.fiber_length_km == 0.0 and r.n_out == 1)]
    with pytest.raises(ValueError, match="reference"):
        emit_plot_data(records, tmp_path)


def test_series_curve_medians_and_floors():
    base = dict(
        label="s", fiber_length_km=0.0, n_out=1, n_res=30,
        per_position_ber=(0.0,), rmps=691.0, train_symbols=10,
        test_symbols=1000, wall_time_s=0.0,
    )
    records = [
        SweepRecord(seed=0, snr_db=10.0, ber=1e-2, ser=2e-2, **base),
        SweepRecord(seed=1, snr_db=10.0, ber=3e-2, ser=4e-2, **base),
        SweepRecord(seed=2, snr_db=10.0, ber=2e-2, ser=3e-2, **base),
        SweepRecord(seed=0, snr_db=12.0, ber=0.0, ser=0.0, **base),
        SweepRecord(seed=1, snr_db=12.0, ber=1e-3, ser=1e-3, **base),
        SweepRecord(seed=2, snr_db=12.0, ber=0.0, ser=0.0, **base),
    ]
    curve = series_curve(records)
    assert curve.ber[0] == pytest.approx(2e-2)
    assert not curve.floored[0]
    # two of three seeds saw zero errors at 12 dB
    assert curve.floored[1]
    assert curve.ber[1] == pytest.approx(1.0 / (4.0 * 1000))


# --------------------------------------------------------------------- cli

def test_cli_complexity_table(capsys):
    assert cli_main(["complexity"]) == 0
    out = capsys.readouterr().out
    assert "691" in out
    assert "72.6" in out


def test_cli_simulate_and_sweep(tmp_path, capsys):
    config = tmp_path / "toy.yaml"
    config.write_text(
        "fiber_length_km: [0]\n"
        "snr_db: [30]\n"
        "n_out: [1]\n"
        "seeds: [0]\n"
        "total_symbols: 2048\n"
        "esn: {washout: 2}\n"
    )
    assert cli_main(["simulate", "--config", str(config)]) == 0
    assert "ber=" in capsys.readouterr().out
    out_dir = tmp_path / "run"
    assert cli_main(["sweep", "--config", str(config), "--out", str(out_dir)]) == 0
    capsys.readouterr()
    assert (out_dir / "results.csv").exists()
    assert (out_dir / "manifest.json").exists()
    # resuming reuses the completed point
    assert cli_main(["sweep", "--config", str(config), "--out", str(out_dir)]) == 0
    assert "resuming: 1 completed" in capsys.readouterr().out


def test_cli_plotdata_from_results(tmp_path, capsys):
    write_results(synthetic_records(), tmp_path)
    assert cli_main(["plotdata", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert (tmp_path / "ber_vs_snr.csv").exists()
    assert (tmp_path / "snr_penalty.csv").exists()
    assert (tmp_path / "complexity.csv").exists()


def test_cli_reports_config_errors(tmp_path, capsys):
    missing = tmp_path / "nope.yaml"
    assert cli_main(["simulate", "--config", str(missing)]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("fiber_length_km: [0]\nsnr: oops\n")
    assert cli_main(["sweep", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "unknown key" in capsys.readouterr().err
