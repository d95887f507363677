"""Artificial-noise power share versus BS power for the three Eve models.

The worst-case (MMSE) Eve model is the one that leans on AN; render with
    fdsec-plot --in an_wcs.csv --fig an_vs_pbs --out an.png
"""

import argparse

from fdsec.config import SystemConfig
from fdsec.harness import ExperimentSpec, run_experiment, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--modes", default="WCS,EWCI,SCSI")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for mode in args.modes.split(","):
        out = f"an_{mode.lower()}.csv"
        spec = ExperimentSpec(
            base=SystemConfig(mode=mode),
            sweep_axis="Pbs_max", sweep_values=(22.0, 26.0, 30.0),
            schemes=("PROPOSED_FD",), modes=(mode,),
            n_runs=args.runs, base_seed=args.seed, out_path=out, jobs=args.jobs,
        )
        run_experiment(spec, progress=lambda n: print(f"\r{mode}: {n} records", end=""))
        print()
        for key, cell in summarize(out)["cells"].items():
            print(key, cell)


if __name__ == "__main__":
    main()
