"""Figure registry and rendering.

Each figure type plots one statistic of the result records against the
sweep value, one line per (scheme, mode) series with std/sqrt(n) error
bars.  The convergence figure instead reads the per-iteration objective
sidecar (<results>.traces.csv).
"""

from __future__ import annotations

import dataclasses
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = {"run_id", "scheme", "mode", "sweep_axis", "sweep_value",
                    "min_sr_bits", "an_fraction_pct", "status"}


@dataclasses.dataclass(frozen=True)
class FigureSpec:
    name: str
    stat: str                  # min_sr_bits | an_fraction_pct
    axis: str                  # expected sweep axis, for labeling
    xlabel: str
    ylabel: str


FIGURES = {
    "srp_vs_pbs": FigureSpec("srp_vs_pbs", "min_sr_bits", "Pbs_max",
                             "BS power budget (dBm)", "average max-min SR (bits/s/Hz)"),
    "sr_vs_sigma_si": FigureSpec("sr_vs_sigma_si", "min_sr_bits", "sigma_si",
                                 "residual SI (dB)", "average max-min SR (bits/s/Hz)"),
    "sr_vs_rbar_ul": FigureSpec("sr_vs_rbar_ul", "min_sr_bits", "Rbar_ul",
                                "UL SR floor (bits/s/Hz)",
                                "average max-min DL SR (bits/s/Hz)"),
    "sr_vs_nt_nr": FigureSpec("sr_vs_nt_nr", "min_sr_bits", "Nt_Nr",
                              "BS antennas per direction", "average max-min SR (bits/s/Hz)"),
    "sr_vs_kl": FigureSpec("sr_vs_kl", "min_sr_bits", "K_L",
                           "users per zone per direction", "average max-min SR (bits/s/Hz)"),
    "an_vs_pbs": FigureSpec("an_vs_pbs", "an_fraction_pct", "Pbs_max",
                            "BS power budget (dBm)", "AN share of transmit power (%)"),
    "convergence": FigureSpec("convergence", "eta_nats", "iteration",
                              "iteration", "objective (nats/s/Hz)"),
}


class PlotError(ValueError):
    pass


def read_csv(path: str) -> list[dict]:
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            rows.append(dict(zip(header, cells)))
    if header is None:
        raise PlotError(f"{path}: empty file")
    missing = REQUIRED_COLUMNS - set(header)
    if missing and "eta_nats" not in header:
        raise PlotError(f"{path}: missing columns {sorted(missing)}")
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return rows


def _series(rows: list[dict], stat: str) -> dict:
    out: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        key = (r["scheme"], r["mode"])
        x = float(r["sweep_value"])
        out.setdefault(key, {}).setdefault(x, []).append(float(r[stat]))
    return out


def render(fig: str | FigureSpec, in_path: str, out_path: str) -> str:
    """Render one figure type from a results CSV; returns the output path.

    Raises PlotError (before creating any file) when the input is empty or
    lacks the needed columns.
    """
    spec = FIGURES[fig] if isinstance(fig, str) else fig
    if spec.name == "convergence":
        return _render_convergence(spec, in_path, out_path)
    rows = read_csv(in_path)
    if spec.stat not in rows[0]:
        raise PlotError(f"{in_path}: missing column {spec.stat}")
    series = _series(rows, spec.stat)
    if not series:
        raise PlotError(f"{in_path}: no ok records to plot")
    fig_, ax = plt.subplots(figsize=(6.0, 4.2))
    markers = ["o", "s", "^", "d", "v", "*"]
    for n, (key, pts) in enumerate(sorted(series.items())):
        xs = np.array(sorted(pts))
        means = np.array([np.mean(pts[x]) for x in xs])
        errs = np.array([np.std(pts[x]) / math.sqrt(len(pts[x])) for x in xs])
        ax.errorbar(xs, means, yerr=errs, marker=markers[n % len(markers)],
                    capsize=3, label=f"{key[0]} ({key[1]})")
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=8)
    axes_seen = {r["sweep_axis"] for r in rows}
    if spec.axis not in axes_seen:
        ax.set_title(f"sweep axis: {'/'.join(sorted(axes_seen))}", fontsize=8)
    _save(fig_, out_path)
    return out_path


def _render_convergence(spec: FigureSpec, in_path: str, out_path: str) -> str:
    path = in_path if in_path.endswith(".traces.csv") else in_path + ".traces.csv"
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            rows.append(dict(zip(header, cells)))
    if header is None or not rows:
        raise PlotError(f"{path}: no trace rows")
    for col in ("run_id", "scheme", "iteration", "eta_nats"):
        if col not in header:
            raise PlotError(f"{path}: missing column {col}")
    fig_, ax = plt.subplots(figsize=(6.0, 4.2))
    series: dict = {}
    for r in rows:
        key = (r["run_id"], r["scheme"], r.get("mode", ""))
        series.setdefault(key, []).append((int(r["iteration"]), float(r["eta_nats"])))
    for key, pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker=".", label=f"run {key[0]} {key[1]} {key[2]}".strip())
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.grid(True, alpha=0.4)
    if len(series) <= 8:
        ax.legend(fontsize=7)
    _save(fig_, out_path)
    return out_path


def _save(fig_, out_path: str) -> None:
    fig_.tight_layout()
    fig_.savefig(out_path, dpi=120, metadata={"Software": "fdsec-plot"})
    plt.close(fig_)
