"""Monte Carlo experiment runner with seeded, paired, resumable sweeps.

One experiment = a sweep axis, a list of schemes, and n_runs channel draws
per sweep value.  All schemes within one (sweep value, run) cell share the
identical topology and fading draw, so comparisons are paired.  Records
stream to CSV as they finish and the file is rewritten in a normalized
order on completion; a sidecar .npz stores every final design point so the
`audit` command can re-check claims against the exact rate oracles later.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os

import numpy as np

from fdsec import rates
from fdsec.algorithms import solve_instance
from fdsec.config import SystemConfig, config_from_dict, config_to_dict
from fdsec.scenario import sample_channels, sample_topology

SWEEP_AXES = ("Pbs_max", "sigma_si", "Rbar_ul", "Nt_Nr", "K_L", "none")

CSV_COLUMNS = (
    "run_id", "seed", "scheme", "mode", "objective", "sweep_axis", "sweep_value",
    "min_sr_bits", "per_user_sr_bits", "iterations", "solve_time_s",
    "tau1", "tau2", "an_fraction_pct", "status", "channel_hash",
)


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig
    sweep_axis: str = "none"
    sweep_values: tuple[float, ...] = (0.0,)
    schemes: tuple[str, ...] = ("PROPOSED_FD",)
    modes: tuple[str, ...] = ("EWCI",)
    n_runs: int = 1
    base_seed: int = 1
    out_path: str = "results.csv"
    jobs: int = 1
    keep_traces: bool = False

    def validate(self) -> None:
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
        if not self.sweep_values:
            raise ValueError("sweep needs at least one value")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")


@dataclasses.dataclass(frozen=True)
class ResultRecord:
    run_id: int
    seed: int
    scheme: str
    mode: str
    objective: str
    sweep_axis: str
    sweep_value: float
    min_sr_bits: float
    per_user_sr_bits: tuple[float, ...]
    iterations: int
    solve_time_s: float
    tau1: float
    tau2: float
    an_fraction_pct: float
    status: str
    channel_hash: str

    def to_row(self) -> str:
        def f9(x: float) -> str:
            return "nan" if not np.isfinite(x) else f"{x:.9g}"

        cells = [
            str(self.run_id), str(self.seed), self.scheme, self.mode, self.objective,
            self.sweep_axis, f9(self.sweep_value), f9(self.min_sr_bits),
            ";".join(f9(v) for v in self.per_user_sr_bits),
            str(self.iterations), f9(self.solve_time_s),
            f9(self.tau1), f9(self.tau2), f9(self.an_fraction_pct),
            self.status, self.channel_hash,
        ]
        return ",".join(cells)


def apply_sweep(cfg: SystemConfig, axis: str, value: float) -> SystemConfig:
    """Sweep values use the figure-axis units: dBm for power, dB for the
    residual SI, bits/s/Hz for the UL floor, counts for antennas/users."""
    if axis == "none":
        return cfg
    if axis == "Pbs_max":
        return cfg.replace(pbs_max_dbm=float(value))
    if axis == "sigma_si":
        return cfg.replace(sigma_si_db=float(value))
    if axis == "Rbar_ul":
        return cfg.replace(rbar_ul_bps=float(value))
    if axis == "Nt_Nr":
        n = int(value)
        return cfg.replace(nt=n, nr=n)
    if axis == "K_L":
        n = int(value)
        return cfg.replace(k=n, l=n)
    raise ValueError(f"unknown sweep axis {axis}")


def derive_seed(base_seed: int, sweep_idx: int, run_idx: int) -> int:
    ss = np.random.SeedSequence((base_seed, sweep_idx, run_idx))
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def channel_hash(ch) -> str:
    h = hashlib.sha256()
    for arr in (ch.h_full, ch.g_full, ch.f_cci, ch.g_si, *ch.h_eve_full, *ch.g_eve):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def run_cell(args) -> tuple[list[ResultRecord], dict, list]:
    """One (sweep value, run) cell: one channel draw, every scheme/mode."""
    spec_dict, sweep_idx, run_idx = args
    spec = _spec_from_dict(spec_dict)
    cfg0 = apply_sweep(spec.base, spec.sweep_axis, spec.sweep_values[sweep_idx])
    seed = derive_seed(spec.base_seed, sweep_idx, run_idx)
    topo = sample_topology(cfg0, seed)
    ch = sample_channels(topo, cfg0, seed + 1)
    chash = channel_hash(ch)
    records, points, traces = [], {}, []
    run_id = sweep_idx * spec.n_runs + run_idx
    for scheme in spec.schemes:
        for mode in spec.modes:
            cfg = cfg0.replace(scheme=scheme, mode=mode)
            try:
                tr = solve_instance(cfg, ch)
                rec = ResultRecord(
                    run_id=run_id, seed=seed, scheme=scheme, mode=mode,
                    objective=cfg.objective,
                    sweep_axis=spec.sweep_axis,
                    sweep_value=float(spec.sweep_values[sweep_idx]),
                    min_sr_bits=tr.min_sr_bits,
                    per_user_sr_bits=tr.per_user_sr_bits,
                    iterations=tr.iterations, solve_time_s=tr.solve_time_total,
                    tau1=tr.tau_star[0],
                    tau2=tr.tau_star[1] if len(tr.tau_star) > 1 else float("nan"),
                    an_fraction_pct=tr.an_fraction_pct, status=tr.status,
                    channel_hash=chash,
                )
                points[(run_id, scheme, mode)] = tr
                if spec.keep_traces:
                    traces.append((run_id, scheme, mode, float(spec.sweep_values[sweep_idx]), tr.etas))
            except Exception as err:   # crash isolation: record, keep sweeping
                rec = ResultRecord(
                    run_id=run_id, seed=seed, scheme=scheme, mode=mode,
                    objective=cfg.objective,
                    sweep_axis=spec.sweep_axis,
                    sweep_value=float(spec.sweep_values[sweep_idx]),
                    min_sr_bits=float("nan"), per_user_sr_bits=(),
                    iterations=0, solve_time_s=0.0,
                    tau1=float("nan"), tau2=float("nan"),
                    an_fraction_pct=float("nan"),
                    status=f"crashed:{type(err).__name__}", channel_hash=chash,
                )
            records.append(rec)
    return records, points, traces


def _spec_to_dict(spec: ExperimentSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["base"] = config_to_dict(spec.base)
    return d


def _spec_from_dict(d: dict) -> ExperimentSpec:
    kw = dict(d)
    kw["base"] = config_from_dict(kw["base"])
    kw["sweep_values"] = tuple(kw["sweep_values"])
    kw["schemes"] = tuple(kw["schemes"])
    kw["modes"] = tuple(kw["modes"])
    return ExperimentSpec(**kw)


def run_experiment(spec: ExperimentSpec, progress=None) -> list[ResultRecord]:
    """Execute the sweep, streaming records to CSV and points to a sidecar.

    Individual run failures are recorded with a non-ok status and never
    abort the sweep.  The final file is rewritten in (sweep, run, scheme,
    mode) order so its body is independent of worker scheduling.
    """
    spec.validate()
    cells = [(_spec_to_dict(spec), si, ri)
             for si in range(len(spec.sweep_values)) for ri in range(spec.n_runs)]
    all_records: list[ResultRecord] = []
    all_points: dict = {}
    all_traces: list = []
    partial = spec.out_path + ".partial"
    with open(partial, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        if spec.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=spec.jobs) as pool:
                for records, points, traces in pool.map(run_cell, cells):
                    _collect(fh, records, points, traces, all_records, all_points, all_traces)
                    if progress:
                        progress(len(all_records))
        else:
            for cell in cells:
                records, points, traces = run_cell(cell)
                _collect(fh, records, points, traces, all_records, all_points, all_traces)
                if progress:
                    progress(len(all_records))
    all_records.sort(key=lambda r: (r.sweep_value, r.run_id, r.scheme, r.mode))
    _write_csv(spec, all_records)
    _write_sidecar(spec, all_points)
    if spec.keep_traces:
        _write_traces(spec, all_traces)
    os.remove(partial)
    return all_records


def _collect(fh, records, points, traces, all_records, all_points, all_traces):
    for rec in records:
        fh.write(rec.to_row() + "\n")
    fh.flush()
    all_records.extend(records)
    all_points.update(points)
    all_traces.extend(traces)


def _write_csv(spec: ExperimentSpec, records: list[ResultRecord]) -> None:
    cfg_json = json.dumps(_spec_to_dict(spec), sort_keys=True)
    with open(spec.out_path, "w") as fh:
        fh.write(f"# fdsec results v1 n_runs={spec.n_runs} base_seed={spec.base_seed}\n")
        fh.write(f"# spec {cfg_json}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(rec.to_row() + "\n")
        fh.write("# summary cell mean std count (ok runs, min_sr_bits)\n")
        for (axis_val, scheme, mode), vals in sorted(_cells(records).items()):
            ok = [v for v, s in vals if s == "ok"]
            mean = float(np.mean(ok)) if ok else float("nan")
            std = float(np.std(ok)) if ok else float("nan")
            fh.write(f"# cell sweep={axis_val:.9g} scheme={scheme} mode={mode} "
                     f"mean={mean:.9g} std={std:.9g} count={len(ok)}\n")


def _cells(records):
    cells: dict = {}
    for r in records:
        cells.setdefault((r.sweep_value, r.scheme, r.mode), []).append((r.min_sr_bits, r.status))
    return cells


def _write_sidecar(spec: ExperimentSpec, points: dict) -> None:
    payload = {}
    for (run_id, scheme, mode), tr in points.items():
        prefix = f"{run_id}|{scheme}|{mode}"
        payload[prefix + "|nblocks"] = np.array([len(tr.points)])
        for b, pt in enumerate(tr.points):
            for i in range(pt.n_groups):
                payload[f"{prefix}|{b}|w{i}"] = pt.w[i]
                payload[f"{prefix}|{b}|V{i}"] = pt.V[i]
                payload[f"{prefix}|{b}|rho{i}"] = pt.rho[i]
                if pt.gamma_dl is not None:
                    payload[f"{prefix}|{b}|gd{i}"] = np.asarray(pt.gamma_dl[i])
                    payload[f"{prefix}|{b}|gu{i}"] = np.asarray(pt.gamma_ul[i])
            payload[f"{prefix}|{b}|tau"] = np.asarray(pt.tau)
        payload[prefix + "|eta"] = np.array([tr.eta_final])
    np.savez_compressed(spec.out_path + ".points.npz", **payload)


def _write_traces(spec: ExperimentSpec, traces: list) -> None:
    path = spec.out_path + ".traces.csv"
    with open(path, "w") as fh:
        fh.write("run_id,scheme,mode,sweep_value,iteration,eta_nats\n")
        for run_id, scheme, mode, sweep_value, etas in sorted(traces):
            for it, eta in enumerate(etas):
                fh.write(f"{run_id},{scheme},{mode},{sweep_value:.9g},{it},{eta:.9g}\n")


# ---------------------------------------------------------------------------
# Reading, summaries, audit
# ---------------------------------------------------------------------------


def read_records(path: str) -> tuple[list[ResultRecord], dict | None]:
    records = []
    spec_dict = None
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# spec "):
                spec_dict = json.loads(line[len("# spec "):])
                continue
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                if tuple(header) != CSV_COLUMNS:
                    raise ValueError("unexpected CSV columns")
                continue
            cells = line.split(",")
            if len(cells) != len(CSV_COLUMNS):
                raise ValueError(f"malformed CSV row: {line!r}")
            d = dict(zip(CSV_COLUMNS, cells))
            records.append(ResultRecord(
                run_id=int(d["run_id"]), seed=int(d["seed"]), scheme=d["scheme"],
                mode=d["mode"], objective=d["objective"], sweep_axis=d["sweep_axis"],
                sweep_value=float(d["sweep_value"]),
                min_sr_bits=float(d["min_sr_bits"]),
                per_user_sr_bits=tuple(float(x) for x in d["per_user_sr_bits"].split(";") if x),
                iterations=int(d["iterations"]), solve_time_s=float(d["solve_time_s"]),
                tau1=float(d["tau1"]), tau2=float(d["tau2"]),
                an_fraction_pct=float(d["an_fraction_pct"]), status=d["status"],
                channel_hash=d["channel_hash"],
            ))
    if header is None:
        raise ValueError("no header row found")
    return records, spec_dict


def summarize(path: str) -> dict:
    """Per-cell statistics plus pairwise scheme gains on paired ok runs.

    Mean min-SR is reported both over ok runs (inclusive of zero-clamped
    values) and excluding clamped-to-zero runs.
    """
    records, _ = read_records(path)
    cells = {}
    for r in records:
        cells.setdefault((r.sweep_value, r.scheme, r.mode), []).append(r)
    table = {}
    for key, rs in sorted(cells.items()):
        ok = [r.min_sr_bits for r in rs if r.status == "ok"]
        nz = [v for v in ok if v > 1e-12]
        table[key] = {
            "count": len(rs),
            "ok": len(ok),
            "mean": float(np.mean(ok)) if ok else float("nan"),
            "std": float(np.std(ok)) if ok else float("nan"),
            "mean_excl_zero": float(np.mean(nz)) if nz else float("nan"),
        }
    gains = {}
    schemes = sorted({r.scheme for r in records})
    modes = sorted({r.mode for r in records})
    values = sorted({r.sweep_value for r in records})
    by_key = {}
    for r in records:
        by_key[(r.sweep_value, r.scheme, r.mode, r.run_id)] = r
    for mode in modes:
        for val in values:
            for a in schemes:
                for b in schemes:
                    if a >= b:
                        continue
                    pairs = []
                    for r in records:
                        if r.scheme != a or r.mode != mode or r.sweep_value != val:
                            continue
                        other = by_key.get((val, b, mode, r.run_id))
                        if other and r.status == "ok" and other.status == "ok":
                            pairs.append((r.min_sr_bits, other.min_sr_bits))
                    if pairs:
                        ma = float(np.mean([p[0] for p in pairs]))
                        mb = float(np.mean([p[1] for p in pairs]))
                        gains[(val, mode, a, b)] = {
                            "pairs": len(pairs),
                            f"mean_{a}": ma, f"mean_{b}": mb,
                            "gain_pct_a_over_b": 100.0 * (ma - mb) / mb if mb else float("nan"),
                        }
    return {"cells": table, "pairwise": gains}


def audit_results(path: str) -> tuple[int, int, list[str]]:
    """Re-check every ok record's persisted final point with the exact rate
    oracles: claimed min-SR within tolerance and power budgets honored.
    Returns (n_checked, n_failed, messages)."""
    records, spec_dict = read_records(path)
    if spec_dict is None:
        raise ValueError("results file lacks the embedded spec header")
    spec = _spec_from_dict(spec_dict)
    data = np.load(path + ".points.npz")
    from fdsec.algorithms import AUDIT_SLACK
    from fdsec.rates import DesignPoint
    from fdsec.scenario import (derive_scsi, group_conventional, group_hd_blocks,
                                group_proposed)

    checked = failed = 0
    messages = []
    for rec in records:
        if rec.status != "ok":
            continue
        prefix = f"{rec.run_id}|{rec.scheme}|{rec.mode}"
        if prefix + "|nblocks" not in data:
            failed += 1
            messages.append(f"{prefix}: missing persisted point")
            continue
        cfg = apply_sweep(spec.base, spec.sweep_axis, rec.sweep_value)
        cfg = cfg.replace(scheme=rec.scheme, mode=rec.mode)
        topo = sample_topology(cfg, rec.seed)
        ch = sample_channels(topo, cfg, rec.seed + 1)
        if rec.mode == "SCSI":
            ch = derive_scsi(ch)
        nblocks = int(data[prefix + "|nblocks"][0])
        eta = float(data[prefix + "|eta"][0])
        if rec.scheme == "HD":
            gchs = list(group_hd_blocks(ch, cfg))
        elif rec.scheme == "CONVENTIONAL_FD":
            gchs = [group_conventional(ch, cfg)]
        else:
            gchs = [group_proposed(ch, cfg)]
        mins = []
        power_ok = True
        for b in range(nblocks):
            gch = gchs[b]
            n_groups = gch.n_groups
            kw = {}
            if prefix + f"|{b}|gd0" in data:
                kw["gamma_dl"] = tuple(data[f"{prefix}|{b}|gd{i}"] for i in range(n_groups))
                kw["gamma_ul"] = tuple(data[f"{prefix}|{b}|gu{i}"] for i in range(n_groups))
            pt = DesignPoint(
                w=tuple(data[f"{prefix}|{b}|w{i}"] for i in range(n_groups)),
                V=tuple(data[f"{prefix}|{b}|V{i}"] for i in range(n_groups)),
                rho=tuple(data[f"{prefix}|{b}|rho{i}"] for i in range(n_groups)),
                tau=tuple(float(t) for t in data[f"{prefix}|{b}|tau"]),
                **kw)
            caps = None
            if rec.mode == "SCSI":
                caps = (pt.gamma_dl or tuple(np.zeros(gch.h[i].shape[0]) for i in range(n_groups)),
                        pt.gamma_ul or tuple(np.zeros(gch.g[i].shape[0]) for i in range(n_groups)))
            aud = rates.secrecy_rates(gch, pt, rec.mode, gamma_caps=caps)
            mins.append(aud.raw_min)
            used = sum(pt.tau[i] * (float(np.sum(np.abs(pt.w[i]) ** 2))
                                    + float(np.sum(np.abs(pt.V[i]) ** 2)))
                       for i in range(n_groups))
            if used > cfg.pbs_max_w * (1 + 1e-8):
                power_ok = False
        scale = 0.5 if rec.scheme == "HD" else 1.0
        raw_min = scale * min(mins)
        checked += 1
        bad = False
        if rec.objective == "MAXMIN_ALL" and raw_min < eta - AUDIT_SLACK:
            bad = True
            messages.append(f"{prefix}: audited min {raw_min:.6f} < claimed {eta:.6f}")
        if not power_ok:
            bad = True
            messages.append(f"{prefix}: power budget exceeded")
        if bad:
            failed += 1
    return checked, failed, messages
