"""Single-draw convergence traces for the three path-following algorithms.

Writes convergence.csv(.traces.csv); render with
    fdsec-plot --in convergence.csv --fig convergence --out convergence.png
"""

import argparse

from fdsec.config import SystemConfig
from fdsec.harness import ExperimentSpec, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="convergence.csv")
    args = ap.parse_args()
    for mode in ("EWCI", "SCSI", "WCS"):
        spec = ExperimentSpec(
            base=SystemConfig(mode=mode), schemes=("PROPOSED_FD",), modes=(mode,),
            n_runs=1, base_seed=args.seed,
            out_path=args.out.replace(".csv", f"_{mode.lower()}.csv"),
            keep_traces=True,
        )
        records = run_experiment(spec)
        print(mode, records[0].status, f"{records[0].iterations} iterations,",
              f"min SR {records[0].min_sr_bits:.3f} bits/s/Hz")


if __name__ == "__main__":
    main()
