"""Command-line interface: run sweeps, summarize results, audit claims."""

from __future__ import annotations

import argparse
import sys

from fdsec.config import SystemConfig, default_config_yaml, load_config
from fdsec.harness import (
    SWEEP_AXES,
    ExperimentSpec,
    audit_results,
    run_experiment,
    summarize,
)


def _parse_sweep(text: str) -> tuple[str, tuple[float, ...]]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("sweep must look like AXIS=v1,v2,...")
    axis, _, vals = text.partition("=")
    axis = axis.strip()
    if axis not in SWEEP_AXES:
        raise argparse.ArgumentTypeError(f"axis must be one of {SWEEP_AXES}")
    values = tuple(float(v) for v in vals.split(",") if v)
    if not values:
        raise argparse.ArgumentTypeError("sweep needs at least one value")
    return axis, values


def _parse_mode(text: str) -> tuple[str, str]:
    """EWCI | SCSI | WCS, with an optional _DL suffix for the DL-only
    max-min objective, e.g. EWCI_DL."""
    name = text.strip().upper()
    objective = "MAXMIN_ALL"
    if name.endswith("_DL"):
        objective = "MAXMIN_DL"
        name = name[:-3]
    return name, objective


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdsec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo sweep")
    run.add_argument("--config", default=None, help="YAML config path (defaults to Table-I values)")
    run.add_argument("--sweep", default="none=0", type=_parse_sweep,
                     help="AXIS=v1,v2,... with AXIS in " + "/".join(SWEEP_AXES))
    run.add_argument("--runs", type=int, default=1, help="channel draws per sweep value")
    run.add_argument("--seed", type=int, default=1, help="base seed")
    run.add_argument("--out", default="results.csv", help="output CSV path")
    run.add_argument("--schemes", default="PROPOSED_FD",
                     help="comma list from PROPOSED_FD,CONVENTIONAL_FD,HD")
    run.add_argument("--mode", default="EWCI", type=_parse_mode,
                     help="EWCI, SCSI, WCS, optionally with _DL suffix")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--traces", action="store_true", help="also write per-iteration objectives")

    summ = sub.add_parser("summarize", help="print per-cell stats and pairwise gains")
    summ.add_argument("--in", dest="inp", required=True)

    aud = sub.add_parser("audit", help="re-check ok records against the exact rate oracles")
    aud.add_argument("--in", dest="inp", required=True)

    cfg = sub.add_parser("config", help="print the default YAML config")
    cfg.add_argument("--out", default=None, help="write instead of printing")
    return p


def cmd_run(args) -> int:
    base = load_config(args.config) if args.config else SystemConfig()
    mode, objective = args.mode
    axis, values = args.sweep
    base = base.replace(mode=mode, objective=objective)
    spec = ExperimentSpec(
        base=base, sweep_axis=axis, sweep_values=values,
        schemes=tuple(s.strip().upper() for s in args.schemes.split(",") if s),
        modes=(mode,), n_runs=args.runs, base_seed=args.seed,
        out_path=args.out, jobs=args.jobs, keep_traces=args.traces,
    )
    records = run_experiment(spec)
    bad = sum(1 for r in records if r.status != "ok")
    print(f"wrote {len(records)} records to {spec.out_path} ({bad} not ok)")
    return 0 if bad == 0 else 1


def cmd_summarize(args) -> int:
    s = summarize(args.inp)
    print(f"{'sweep':>10} {'scheme':>16} {'mode':>5} {'ok':>4} {'mean':>9} {'std':>8} {'mean>0':>9}")
    for (val, scheme, mode), row in s["cells"].items():
        print(f"{val:>10.4g} {scheme:>16} {mode:>5} {row['ok']:>4d} "
              f"{row['mean']:>9.4f} {row['std']:>8.4f} {row['mean_excl_zero']:>9.4f}")
    if s["pairwise"]:
        print("\npairwise gains (paired ok runs):")
        for (val, mode, a, b), g in s["pairwise"].items():
            print(f"  sweep={val:.4g} {mode}: {a} vs {b}: "
                  f"{g['mean_' + a]:.4f} vs {g['mean_' + b]:.4f} bits "
                  f"({g['gain_pct_a_over_b']:+.1f}% | n={g['pairs']})")
    return 0


def cmd_audit(args) -> int:
    checked, failed, messages = audit_results(args.inp)
    for msg in messages:
        print("AUDIT", msg)
    print(f"audited {checked} ok records: {failed} failed")
    return 0 if failed == 0 else 1


def cmd_config(args) -> int:
    text = default_config_yaml()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "summarize": cmd_summarize,
        "audit": cmd_audit,
        "config": cmd_config,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
