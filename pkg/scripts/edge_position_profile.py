#!/usr/bin/env python3
"""Per-position BER profile of a multi-symbol readout at one grid point.

Positions at the window edges see less symmetric context than the centre,
so their BER sits above the mid-window median. Prints the seed-median
profile and the first/last position ratios.

    python3 scripts/edge_position_profile.py --length-km 10 --snr-db 10
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from slicerc.harness import EsnParams, ExperimentConfig, GridPoint, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length-km", type=float, default=10.0)
    parser.add_argument("--snr-db", type=float, default=10.0)
    parser.add_argument("--n-out", type=int, default=23)
    parser.add_argument("--symbols", type=int, default=2**18)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = parser.parse_args()

    records = []
    for seed in args.seeds:
        cfg = ExperimentConfig(
            fiber_length_km=(args.length_km,),
            snr_db=(args.snr_db,),
            n_out=(args.n_out,),
            seeds=(seed,),
            total_symbols=args.symbols,
            esn=EsnParams(),
            label="edge-profile",
        )
        point = GridPoint(args.length_km, args.n_out, args.snr_db)
        rec = run_experiment(cfg, point, seed)
        if not rec.ok:
            print(f"seed {seed} failed: {rec.error}")
            return 2
        records.append(rec)
        print(f"seed {seed}: ber={rec.ber:.3e} over {rec.test_symbols} symbols")

    profile = np.median([r.per_position_ber for r in records], axis=0)
    mid = float(np.median(profile[args.n_out // 4 : -args.n_out // 4 or None]))
    print(f"\n{'pos':>3} {'ber':>10}")
    for i, value in enumerate(profile):
        print(f"{i:3d} {value:10.3e}")
    if mid > 0:
        print(f"\nmid-window median {mid:.3e}")
        print(f"first position {profile[0] / mid:.1f}x the mid median")
        print(f"last position  {profile[-1] / mid:.1f}x the mid median")
    return 0


if __name__ == "__main__":
    sys.exit(main())
