"""Robustness to residual self-interference: proposed vs conventional FD.

Render with: fdsec-plot --in si_sweep.csv --fig sr_vs_sigma_si --out si.png
"""

import argparse

from fdsec.config import SystemConfig
from fdsec.harness import ExperimentSpec, run_experiment, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="si_sweep.csv")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    spec = ExperimentSpec(
        base=SystemConfig(),
        sweep_axis="sigma_si", sweep_values=(-90.0, -80.0, -70.0, -60.0, -50.0),
        schemes=("PROPOSED_FD", "CONVENTIONAL_FD"),
        modes=("EWCI",), n_runs=args.runs, base_seed=args.seed,
        out_path=args.out, jobs=args.jobs,
    )
    run_experiment(spec, progress=lambda n: print(f"\r{n} records", end=""))
    print()
    for key, cell in summarize(args.out)["cells"].items():
        print(key, cell)


if __name__ == "__main__":
    main()
