#!/usr/bin/env python3
"""Run the desk-scale sweep end to end and print the threshold table.

Equivalent to `slicerc sweep` followed by `slicerc plotdata`, plus a
console summary of SNR-at-KP4 crossings and penalties per series.

    python3 scripts/run_desk_study.py --out runs/desk
    python3 scripts/run_desk_study.py --config configs/desk_curves.yaml \
        --out runs/desk --parallel 4
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from slicerc.harness import (
    emit_plot_data,
    load_config,
    read_results,
    run_sweep,
    series_curve,
    write_results,
)
from slicerc.metrics import (
    KP4_BER,
    NonMonotone,
    NotBracketed,
    snr_at_threshold,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--config",
        type=Path,
        default=Path(__file__).resolve().parents[1] / "configs" / "desk_curves.yaml",
    )
    parser.add_argument("--out", type=Path, default=Path("runs/desk"))
    parser.add_argument("--parallel", type=int, default=1)
    args = parser.parse_args()

    cfg = load_config(args.config)
    existing = []
    results_path = args.out / "results.csv"
    if results_path.exists():
        existing = read_results(results_path)
        print(f"resuming from {results_path} ({len(existing)} records)")

    records = run_sweep(cfg, parallel=args.parallel, existing=existing)
    write_results(records, args.out, cfg)
    paths = emit_plot_data(records, args.out)
    for name, path in paths.items():
        print(f"wrote {path}")

    bad = [r for r in records if not r.ok]
    if bad:
        for r in bad:
            print(f"FAILED {r.key}: {r.error}")
        return 2

    series = sorted({(r.fiber_length_km, r.n_out) for r in records})
    reference = None
    print(f"\n{'length_km':>9} {'n_out':>5} {'snr_at_kp4_db':>13} {'penalty_db':>10}")
    for length, n_out in series:
        curve = series_curve(
            [r for r in records if (r.fiber_length_km, r.n_out) == (length, n_out)]
        )
        try:
            thr = snr_at_threshold(curve, KP4_BER)
        except (NotBracketed, NonMonotone) as err:
            print(f"{length:9.1f} {n_out:5d} {type(err).__name__:>13}")
            continue
        if reference is None and length == min(r.fiber_length_km for r in records) and n_out == 1:
            reference = thr
        penalty = thr - reference if reference is not None else float("nan")
        print(f"{length:9.1f} {n_out:5d} {thr:13.2f} {penalty:10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
