"""Scheme comparison versus the BS power budget (the headline experiment).

Writes power_sweep.csv plus the per-point design sidecar; render with
    fdsec-plot --in power_sweep.csv --fig srp_vs_pbs --out power_sweep.png
"""

import argparse

from fdsec.config import SystemConfig
from fdsec.harness import ExperimentSpec, run_experiment, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--mode", default="EWCI")
    ap.add_argument("--out", default="power_sweep.csv")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    spec = ExperimentSpec(
        base=SystemConfig(mode=args.mode),
        sweep_axis="Pbs_max", sweep_values=(18.0, 22.0, 26.0, 30.0),
        schemes=("PROPOSED_FD", "CONVENTIONAL_FD", "HD"),
        modes=(args.mode,), n_runs=args.runs, base_seed=args.seed,
        out_path=args.out, jobs=args.jobs,
    )
    run_experiment(spec, progress=lambda n: print(f"\r{n} records", end=""))
    print()
    for key, cell in summarize(args.out)["cells"].items():
        print(key, cell)


if __name__ == "__main__":
    main()
