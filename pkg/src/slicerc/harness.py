"""Experiment configuration, seeded sweeps, and result emission.

A sweep is the Cartesian product of the fiber-length grid, the n_out
variant list, the SNR grid, and the seed list, executed point by point
with bounded parallelism. Records always come back in deterministic
grid order (lengths outermost, then n_out, then SNR, then seeds) no
matter how the points were scheduled, and a failed point becomes an
error row instead of aborting the sweep.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import yaml

from .esn import EsnConfig, equalize, fit_readout, init_weights
from .link import LinkConfig, simulate_link
from .metrics import (
    BerSnrCurve,
    FecThreshold,
    NonMonotone,
    NotBracketed,
    complexity_rmps,
    count_errors,
    curve_from_points,
    hard_decision,
    snr_at_threshold,
)


class ConfigError(ValueError):
    """Configuration file could not be parsed or validated."""


@dataclass(frozen=True, slots=True)
class LinkParams:
    """Link settings shared by every grid point."""

    baud_rate: float = 32e9
    sps: int = 2
    rolloff: float = 0.1
    rrc_span_symbols: int = 64
    dispersion_ps_nm_km: float = 16.4
    wavelength_nm: float = 1550.0
    num_slices: int = 4
    mzm_mod_index: float = 0.5


@dataclass(frozen=True, slots=True)
class EsnParams:
    """Equalizer settings shared by every grid point."""

    k: int = 11
    n_res: int = 30
    spectral_radius: float = 1.2
    leak: float = 0.7
    s_in: float = 0.1
    s_res: float = 0.05
    s_out: float = 0.1
    input_scaling: float = 1.0
    ridge_lambda: float = 1e-4
    washout: int = 100


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """One sweep: grids, seeds, scale, and the shared link/esn settings."""

    fiber_length_km: tuple[float, ...]
    snr_db: tuple[float, ...] = tuple(float(s) for s in range(8, 31))
    n_out: tuple[int, ...] = (1, 17, 23)
    seeds: tuple[int, ...] = (0,)
    total_symbols: int = 2**22
    train_fraction: float = 0.15
    label: str = "sweep"
    link: LinkParams = LinkParams()
    esn: EsnParams = EsnParams()

    def __post_init__(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.total_symbols < 1:
            raise ConfigError("total_symbols must be >= 1")
        for name in ("fiber_length_km", "snr_db", "n_out"):
            grid = getattr(self, name)
            if len(grid) == 0:
                raise ConfigError(f"grid '{name}' must not be empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"grid '{name}' must be strictly increasing")
        if len(self.seeds) == 0:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be unique")


class GridPoint(NamedTuple):
    fiber_length_km: float
    n_out: int
    snr_db: float


@dataclass(slots=True)
class SweepRecord:
    """One row of a sweep: one grid point evaluated under one seed."""

    label: str
    seed: int
    snr_db: float
    fiber_length_km: float
    n_out: int
    n_res: int
    ber: float
    ser: float
    per_position_ber: tuple[float, ...]
    rmps: float
    train_symbols: int
    test_symbols: int
    wall_time_s: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.error == ""

    @property
    def key(self) -> tuple[float, int, float, int]:
        return (self.fiber_length_km, self.n_out, self.snr_db, self.seed)


_RECORD_COLUMNS = [f.name for f in fields(SweepRecord)]


def _coerce(value, ftype: type, path: str):
    if ftype is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{path}' must be a number, got {value!r}")
        return float(value)
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{path}' must be an integer, got {value!r}")
        return int(value)
    if ftype is str:
        if not isinstance(value, str):
            raise ConfigError(f"'{path}' must be a string, got {value!r}")
        return value
    raise ConfigError(f"'{path}' has unsupported type")


def _coerce_listable(value, item_type: type, path: str) -> tuple:
    items = value if isinstance(value, list) else [value]
    return tuple(_coerce(v, item_type, path) for v in items)


# dataclasses stores annotations as strings under future-import semantics;
# resolve the handful of types the schema uses.
_TYPE_NAMES = {"float": float, "int": int, "str": str}


def _resolved(f) -> type:
    t = f.type
    return _TYPE_NAMES[t] if isinstance(t, str) else t


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a plain mapping against the documented schema."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    scalar = {
        "total_symbols": int,
        "train_fraction": float,
        "label": str,
    }
    grids = {
        "fiber_length_km": float,
        "snr_db": float,
        "n_out": int,
        "seeds": int,
    }
    known = set(scalar) | set(grids) | {"link", "esn"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{key}'")
    if "fiber_length_km" not in raw:
        raise ConfigError("missing required field 'fiber_length_km'")
    kwargs: dict = {}
    for name, item_type in grids.items():
        if name in raw:
            kwargs[name] = _coerce_listable(raw[name], item_type, name)
    for name, ftype in scalar.items():
        if name in raw:
            kwargs[name] = _coerce(raw[name], ftype, name)
    if "link" in raw:
        kwargs["link"] = _build_params_resolved(LinkParams, raw["link"], "link")
    if "esn" in raw:
        kwargs["esn"] = _build_params_resolved(EsnParams, raw["esn"], "esn")
    return ExperimentConfig(**kwargs)


def _build_params_resolved(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    known = {f.name: _resolved(f) for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{path}.{key}'")
    kwargs = {
        name: _coerce(value, known[name], f"{path}.{name}")
        for name, value in data.items()
    }
    return cls(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and validate a YAML experiment configuration."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse '{path}': {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-mapping form of a config; inverse of config_from_dict."""
    return {
        "label": cfg.label,
        "total_symbols": cfg.total_symbols,
        "train_fraction": cfg.train_fraction,
        "seeds": list(cfg.seeds),
        "fiber_length_km": list(cfg.fiber_length_km),
        "snr_db": list(cfg.snr_db),
        "n_out": list(cfg.n_out),
        "link": asdict(cfg.link),
        "esn": asdict(cfg.esn),
    }


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def grid_points(cfg: ExperimentConfig) -> list[tuple[GridPoint, int]]:
    """Deterministic sweep order: length, n_out, SNR, then seed."""
    return [
        (GridPoint(length, n_out, snr), seed)
        for length in cfg.fiber_length_km
        for n_out in cfg.n_out
        for snr in cfg.snr_db
        for seed in cfg.seeds
    ]


def run_experiment(cfg: ExperimentConfig, point: GridPoint, seed: int) -> SweepRecord:
    """Simulate, train, and evaluate one grid point under one seed.

    The frame is split into a contiguous training prefix
    (train_fraction of the usable region), a k-symbol gap, and the test
    region; both regions exclude the dispersion guard at the frame
    edges. Weights depend only on (topology, seed), so every SNR point
    of a sweep shares the same draw and retrains only the readout.
    """
    started = time.perf_counter()
    link_cfg = LinkConfig(
        fiber_length_km=point.fiber_length_km,
        snr_db=point.snr_db,
        n_symbols=cfg.total_symbols,
        seed=seed,
        **asdict(cfg.link),
    )
    esn_cfg = EsnConfig(
        n_out=point.n_out,
        sps=cfg.link.sps,
        num_slices=cfg.link.num_slices,
        seed=seed,
        **asdict(cfg.esn),
    )
    obs, frame = simulate_link(link_cfg)
    guard = obs.guard_symbols
    usable = frame.n_symbols - 2 * guard
    if usable < esn_cfg.m:
        raise ValueError("frame too short after guard discard")
    n_train = int(cfg.train_fraction * usable)
    train_first, train_last = guard, guard + n_train
    test_first = train_last + esn_cfg.k
    # scored windows must not hang off the burst end, so the test region
    # stops k symbols short of the guard boundary
    test_last = frame.n_symbols - guard - esn_cfg.k
    if test_first >= test_last:
        raise ValueError("no test region left after the training split")
    weights = init_weights(esn_cfg)
    weights.w_out = fit_readout(obs, frame, weights, esn_cfg, train_first, train_last)
    estimates, first = equalize(obs, frame, weights, esn_cfg, test_first, test_last)
    truth = frame.levels[first : first + estimates.size]
    report = count_errors(hard_decision(estimates), truth, esn_cfg.n_out)
    n_train_steps = n_train // esn_cfg.n_out
    return SweepRecord(
        label=cfg.label,
        seed=int(seed),
        snr_db=float(point.snr_db),
        fiber_length_km=float(point.fiber_length_km),
        n_out=int(point.n_out),
        n_res=int(esn_cfg.n_res),
        ber=float(report.ber),
        ser=float(report.ser),
        per_position_ber=tuple(float(v) for v in report.per_position_ber),
        rmps=float(complexity_rmps(esn_cfg)),
        train_symbols=int((n_train_steps - esn_cfg.washout) * esn_cfg.n_out),
        test_symbols=int(report.n_symbols),
        wall_time_s=time.perf_counter() - started,
    )


def _error_record(
    cfg: ExperimentConfig, point: GridPoint, seed: int, exc: Exception
) -> SweepRecord:
    return SweepRecord(
        label=cfg.label,
        seed=int(seed),
        snr_db=float(point.snr_db),
        fiber_length_km=float(point.fiber_length_km),
        n_out=int(point.n_out),
        n_res=int(cfg.esn.n_res),
        ber=math.nan,
        ser=math.nan,
        per_position_ber=(),
        rmps=math.nan,
        train_symbols=0,
        test_symbols=0,
        wall_time_s=0.0,
        error=f"{type(exc).__name__}: {exc}",
    )


def _run_point(args: tuple[ExperimentConfig, GridPoint, int]) -> SweepRecord:
    cfg, point, seed = args
    try:
        return run_experiment(cfg, point, seed)
    except Exception as exc:
        return _error_record(cfg, point, seed, exc)


def run_sweep(
    cfg: ExperimentConfig,
    parallel: int = 1,
    existing: Iterable[SweepRecord] | None = None,
) -> list[SweepRecord]:
    """Evaluate every grid point under every seed.

    ``existing`` records (for example from a partial results.csv) are
    reused by key and their points are skipped; error rows are retried.
    Output order is always the deterministic grid order.
    """
    if parallel < 1:
        raise ValueError("parallel must be >= 1")
    done: dict[tuple, SweepRecord] = {}
    for rec in existing or ():
        if rec.ok:
            done[rec.key] = rec
    points = grid_points(cfg)
    todo = [(cfg, p, s) for p, s in points if (p.fiber_length_km, p.n_out, p.snr_db, s) not in done]
    if parallel == 1 or len(todo) <= 1:
        fresh = [_run_point(args) for args in todo]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            fresh = list(pool.map(_run_point, todo, chunksize=1))
    by_key = dict(done)
    for rec in fresh:
        by_key[rec.key] = rec
    return [by_key[(p.fiber_length_km, p.n_out, p.snr_db, s)] for p, s in points]


def _format_cell(value) -> str:
    if isinstance(value, tuple):
        return ";".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(
    records: Iterable[SweepRecord],
    out_dir: str | Path,
    cfg: ExperimentConfig | None = None,
) -> Path:
    """Write results.csv (RFC 4180) and a run manifest into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    csv_path = out / "results.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RECORD_COLUMNS)
        for rec in records:
            writer.writerow(
                [_format_cell(getattr(rec, col)) for col in _RECORD_COLUMNS]
            )
    manifest = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "package_version": _package_version(),
        "git_commit": _git_commit(),
        "n_records": len(records),
        "seeds": sorted({rec.seed for rec in records}),
        "config": config_to_dict(cfg) if cfg is not None else None,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return csv_path


def _package_version() -> str:
    from . import __version__

    return __version__


def _git_commit() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def read_results(csv_path: str | Path) -> list[SweepRecord]:
    """Parse a results.csv back into records, exactly."""
    records = []
    with Path(csv_path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _RECORD_COLUMNS:
            raise ValueError(f"unexpected results.csv header in '{csv_path}'")
        for row in reader:
            per_pos = row["per_position_ber"]
            records.append(
                SweepRecord(
                    label=row["label"],
                    seed=int(row["seed"]),
                    snr_db=float(row["snr_db"]),
                    fiber_length_km=float(row["fiber_length_km"]),
                    n_out=int(row["n_out"]),
                    n_res=int(row["n_res"]),
                    ber=float(row["ber"]),
                    ser=float(row["ser"]),
                    per_position_ber=tuple(
                        float(v) for v in per_pos.split(";") if v
                    ),
                    rmps=float(row["rmps"]),
                    train_symbols=int(row["train_symbols"]),
                    test_symbols=int(row["test_symbols"]),
                    wall_time_s=float(row["wall_time_s"]),
                    error=row["error"],
                )
            )
    return records


def series_curve(records: list[SweepRecord]) -> BerSnrCurve:
    """Median-across-seeds BER curve for records of one series.

    All records must share (fiber_length_km, n_out, n_res). A point is
    floor-flagged when at least half of its seeds saw zero errors.
    """
    ok = [r for r in records if r.ok]
    if not ok:
        raise ValueError("series has no successful records")
    curve_snr, curve_ber, curve_floor = [], [], []
    for snr in sorted({r.snr_db for r in ok}):
        group = [r for r in ok if r.snr_db == snr]
        effective = [max(r.ber, 1.0 / (4.0 * r.test_symbols)) for r in group]
        curve_snr.append(snr)
        curve_ber.append(float(np.median(effective)))
        curve_floor.append(sum(r.ber == 0 for r in group) * 2 >= len(group))
    return BerSnrCurve(
        snr_db=np.array(curve_snr),
        ber=np.array(curve_ber),
        floored=np.array(curve_floor),
    )


def _series_groups(records: list[SweepRecord]) -> dict[tuple, list[SweepRecord]]:
    groups: dict[tuple, list[SweepRecord]] = {}
    for rec in records:
        if rec.ok:
            groups.setdefault(
                (rec.fiber_length_km, rec.n_out, rec.n_res), []
            ).append(rec)
    return groups


def emit_plot_data(
    records: list[SweepRecord],
    out_dir: str | Path,
    fec: FecThreshold = FecThreshold(),
) -> dict[str, Path]:
    """Write the three plot-ready CSV files.

    ber_vs_snr.csv: median-seed BER per (length, n_out, n_res) series.
    snr_penalty.csv: SNR at threshold and penalty versus the n_out=1
    series at 0 km; series that never bracket the threshold are emitted
    with empty numbers and a note instead of being dropped silently.
    complexity.csv: multiplications per symbol per equalizer variant.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = _series_groups(records)
    if not groups:
        raise ValueError("no successful records to plot")

    ber_path = out / "ber_vs_snr.csv"
    with ber_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["fiber_length_km", "n_out", "n_res", "snr_db", "ber_median", "floored", "n_seeds"]
        )
        for (length, n_out, n_res), group in sorted(groups.items()):
            curve = series_curve(group)
            for snr, ber, floored in zip(curve.snr_db, curve.ber, curve.floored):
                n_seeds = len({r.seed for r in group if r.snr_db == snr})
                writer.writerow(
                    [repr(float(length)), n_out, n_res, repr(float(snr)),
                     repr(float(ber)), int(floored), n_seeds]
                )

    references = [
        key for key in groups if key[0] == 0.0 and key[1] == 1
    ]
    penalty_path = out / "snr_penalty.csv"
    with penalty_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["fiber_length_km", "n_out", "n_res", "snr_at_threshold_db", "penalty_db", "note"]
        )
        if len(references) != 1:
            raise ValueError(
                "penalty reference requires exactly one n_out=1 series at 0 km, "
                f"found {len(references)}"
            )
        ref_curve = series_curve(groups[references[0]])
        try:
            ref_snr = snr_at_threshold(ref_curve, fec)
        except (NotBracketed, NonMonotone) as exc:
            raise ValueError(f"reference series unusable: {exc}") from exc
        for (length, n_out, n_res), group in sorted(groups.items()):
            try:
                snr = snr_at_threshold(series_curve(group), fec)
            except (NotBracketed, NonMonotone) as exc:
                writer.writerow(
                    [repr(float(length)), n_out, n_res, "", "", type(exc).__name__]
                )
                continue
            writer.writerow(
                [repr(float(length)), n_out, n_res, repr(float(snr)),
                 repr(float(snr - ref_snr)), ""]
            )

    rmps_path = out / "complexity.csv"
    with rmps_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_out", "n_res", "rmps"])
        variants = sorted(
            {(r.n_out, r.n_res, r.rmps) for r in records if r.ok}
        )
        for n_out, n_res, rmps in variants:
            writer.writerow([n_out, n_res, repr(float(rmps))])

    return {"ber_vs_snr": ber_path, "snr_penalty": penalty_path, "complexity": rmps_path}
