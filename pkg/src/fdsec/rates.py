"""Exact rate and secrecy-rate oracles.

These evaluate the true nonconvex expressions and are kept independent of
the optimization path: feasibility audits and all reported numbers come
from here.  All rates are in nats/s/Hz; conversion to bits happens only at
reporting boundaries.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from fdsec.scenario import GroupedChannels

LN2 = math.log(2.0)


@dataclasses.dataclass(frozen=True)
class DesignPoint:
    """One candidate transmit strategy plus mode-dependent auxiliaries.

    `w[i]` stacks the group-i beamformers as rows (K_i, n_tx); `V[i]` is the
    artificial-noise precoder; `rho[i]` the UL amplitudes; `tau` the time
    fractions.  Auxiliary blocks (eta, Eve-rate caps gamma_*, mu/beta/t)
    are populated on iterates produced by the optimizer and stay None on
    hand-built points.
    """

    w: tuple[np.ndarray, ...]
    V: tuple[np.ndarray, ...]
    rho: tuple[np.ndarray, ...]
    tau: tuple[float, ...]
    eta: float | None = None
    gamma_dl: tuple[np.ndarray, ...] | None = None   # per group (K_i,)
    gamma_ul: tuple[np.ndarray, ...] | None = None   # per group (L_i,)
    mu_dl: tuple[np.ndarray, ...] | None = None      # per group (M, K_i)
    mu_ul: tuple[np.ndarray, ...] | None = None      # per group (M, L_i)
    beta_dl: tuple[np.ndarray, ...] | None = None    # per group (K_i,)
    beta_ul: tuple[np.ndarray, ...] | None = None
    t_dl: tuple[np.ndarray, ...] | None = None       # per group (M, K_i)
    t_ul: tuple[np.ndarray, ...] | None = None

    @property
    def n_groups(self) -> int:
        return len(self.w)

    @property
    def alpha(self) -> tuple[float, ...]:
        return tuple(1.0 / t for t in self.tau)


def dl_interference(ch: GroupedChannels, pt: DesignPoint, i: int, k: int) -> float:
    """Denominator of the DL SINR: MUI + AN leakage + CCI + noise."""
    h = ch.h[i][k]
    w = pt.w[i]
    mui = sum(abs(h.conj() @ w[j]) ** 2 for j in range(w.shape[0]) if j != k)
    an = float(np.sum(np.abs(pt.V[i].conj().T @ h) ** 2))
    cci = float(np.sum(pt.rho[i] ** 2 * np.abs(ch.f[i][k]) ** 2))
    return float(mui) + an + cci + ch.sigma2


def dl_rate(ch: GroupedChannels, pt: DesignPoint, i: int, k: int) -> float:
    h = ch.h[i][k]
    num = abs(h.conj() @ pt.w[i][k]) ** 2
    return pt.tau[i] * math.log1p(num / dl_interference(ch, pt, i, k))


def phi_matrix(ch: GroupedChannels, pt: DesignPoint, i: int, ell: int) -> np.ndarray:
    """UL covariance seen when decoding user ell (1-based); ell=0 keeps the
    full UL sum, the convention that makes Phi_{ell-1} - Phi_ell PSD for
    ell = 1."""
    n_rx = ch.n_rx
    g = ch.g[i]
    out = ch.sigma2 * np.eye(n_rx, dtype=complex)
    for j in range(g.shape[0]):
        if j + 1 > ell:
            out += pt.rho[i][j] ** 2 * np.outer(g[j], g[j].conj())
    if ch.g_si is not None and ch.sigma_si > 0.0:
        w = pt.w[i]
        # sum_k w_k w_k^H for row-stacked beamformers
        s = w.T @ w.conj() if w.size else np.zeros((ch.n_tx, ch.n_tx), dtype=complex)
        s = s + pt.V[i] @ pt.V[i].conj().T
        out += ch.sigma_si * ch.g_si.conj().T @ s @ ch.g_si
    return out


def ul_rates(ch: GroupedChannels, pt: DesignPoint, i: int) -> np.ndarray:
    """Per-user MMSE-SIC rates in decoding order (strongest first)."""
    g = ch.g[i]
    out = np.zeros(g.shape[0])
    for ell in range(1, g.shape[0] + 1):
        phi = phi_matrix(ch, pt, i, ell)
        gl = g[ell - 1]
        gamma = pt.rho[i][ell - 1] ** 2 * float(np.real(gl.conj() @ np.linalg.solve(phi, gl)))
        out[ell - 1] = pt.tau[i] * math.log1p(gamma)
    return out


def eve_psi(ch: GroupedChannels, pt: DesignPoint, m: int, i: int, k: int) -> float:
    H = ch.h_eve[m]
    w = pt.w[i]
    mui = sum(float(np.sum(np.abs(H.conj().T @ w[j]) ** 2)) for j in range(w.shape[0]) if j != k)
    an = float(np.sum(np.abs(H.conj().T @ pt.V[i]) ** 2))
    ul = float(np.sum(pt.rho[i] ** 2 * np.sum(np.abs(ch.g_eve[m][i]) ** 2, axis=1)))
    return mui + an + ul + ch.ne[m] * ch.sigma2


def eve_chi(ch: GroupedChannels, pt: DesignPoint, m: int, i: int, ell: int) -> float:
    H = ch.h_eve[m]
    w = pt.w[i]
    dl = sum(float(np.sum(np.abs(H.conj().T @ w[j]) ** 2)) for j in range(w.shape[0]))
    an = float(np.sum(np.abs(H.conj().T @ pt.V[i]) ** 2))
    gm = ch.g_eve[m][i]
    ul = sum(
        pt.rho[i][j] ** 2 * float(np.sum(np.abs(gm[j]) ** 2))
        for j in range(gm.shape[0]) if j != ell
    )
    return dl + an + ul + ch.ne[m] * ch.sigma2


def eve_rates_ewci(ch: GroupedChannels, pt: DesignPoint, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case-information Eve rates (C_ED, C_EU), shapes (M, K_i)/(M, L_i)."""
    K = ch.h[i].shape[0]
    L = ch.g[i].shape[0]
    c_ed = np.zeros((ch.n_eves, K))
    c_eu = np.zeros((ch.n_eves, L))
    for m in range(ch.n_eves):
        H = ch.h_eve[m]
        for k in range(K):
            num = float(np.sum(np.abs(H.conj().T @ pt.w[i][k]) ** 2))
            c_ed[m, k] = pt.tau[i] * math.log1p(num / eve_psi(ch, pt, m, i, k))
        for ell in range(L):
            num = pt.rho[i][ell] ** 2 * float(np.sum(np.abs(ch.g_eve[m][i][ell]) ** 2))
            c_eu[m, ell] = pt.tau[i] * math.log1p(num / eve_chi(ch, pt, m, i, ell))
    return c_ed, c_eu


def eve_rates_wcs(ch: GroupedChannels, pt: DesignPoint, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Eve rates under an MMSE decoder with all multiuser interference
    cancelled; only the AN covariance plus noise remains."""
    K = ch.h[i].shape[0]
    L = ch.g[i].shape[0]
    c_ed = np.zeros((ch.n_eves, K))
    c_eu = np.zeros((ch.n_eves, L))
    for m in range(ch.n_eves):
        H = ch.h_eve[m]
        hv = H.conj().T @ pt.V[i]
        xi = hv @ hv.conj().T + ch.sigma2 * np.eye(ch.ne[m], dtype=complex)
        for k in range(K):
            q = H.conj().T @ pt.w[i][k]
            c_ed[m, k] = pt.tau[i] * math.log1p(float(np.real(q.conj() @ np.linalg.solve(xi, q))))
        for ell in range(L):
            q = ch.g_eve[m][i][ell]          # row vector; SINR is g Xi^-1 g^H
            val = pt.rho[i][ell] ** 2 * float(np.real(q @ np.linalg.solve(xi, q.conj())))
            c_eu[m, ell] = pt.tau[i] * math.log1p(val)
    return c_ed, c_eu


@dataclasses.dataclass(frozen=True)
class SecrecyAudit:
    """Exact per-user secrecy rates (nats) and summary minima."""

    sr_dl: tuple[np.ndarray, ...]        # clamped at zero, per group
    sr_ul: tuple[np.ndarray, ...]
    raw_dl: tuple[np.ndarray, ...]       # before the [x]^+ clamp
    raw_ul: tuple[np.ndarray, ...]
    min_sr: float                        # clamped min over every user
    raw_min: float                       # unclamped min (can be negative)
    clamped: tuple[tuple[str, int, int], ...]   # ('dl'|'ul', group, index)

    @property
    def min_sr_bits(self) -> float:
        return self.min_sr / LN2


def secrecy_rates(ch: GroupedChannels, pt: DesignPoint, mode: str,
                  gamma_caps: tuple | None = None) -> SecrecyAudit:
    """Exact secrecy rates under the requested Eve model.

    EWCI and WCS evaluate their Eve oracles on instantaneous channels.
    SCSI has no instantaneous Eve channels; the certified caps
    (gamma_dl, gamma_ul) from the solved design stand in for the Eve
    rates, so the result is the outage-safe secrecy rate.
    """
    sr_dl, sr_ul, raw_dl, raw_ul = [], [], [], []
    clamped = []
    for i in range(ch.n_groups):
        K = ch.h[i].shape[0]
        L = ch.g[i].shape[0]
        c_dl = np.array([dl_rate(ch, pt, i, k) for k in range(K)])
        c_ul = ul_rates(ch, pt, i)
        if mode == "SCSI":
            if gamma_caps is None:
                raise ValueError("SCSI secrecy rates need the certified Eve caps")
            cap_dl = np.asarray(gamma_caps[0][i])
            cap_ul = np.asarray(gamma_caps[1][i])
        else:
            if mode == "EWCI":
                c_ed, c_eu = eve_rates_ewci(ch, pt, i)
            elif mode == "WCS":
                c_ed, c_eu = eve_rates_wcs(ch, pt, i)
            else:
                raise ValueError(f"unknown mode {mode!r}")
            cap_dl = c_ed.max(axis=0) if ch.n_eves else np.zeros(K)
            cap_ul = c_eu.max(axis=0) if ch.n_eves else np.zeros(L)
        r_dl = c_dl - cap_dl
        r_ul = c_ul - cap_ul
        for k in range(K):
            if r_dl[k] < 0:
                clamped.append(("dl", i, k))
        for ell in range(L):
            if r_ul[ell] < 0:
                clamped.append(("ul", i, ell))
        raw_dl.append(r_dl)
        raw_ul.append(r_ul)
        sr_dl.append(np.maximum(r_dl, 0.0))
        sr_ul.append(np.maximum(r_ul, 0.0))
    everything = np.concatenate([*raw_dl, *raw_ul]) if raw_dl or raw_ul else np.zeros(0)
    raw_min = float(everything.min()) if everything.size else 0.0
    return SecrecyAudit(
        sr_dl=tuple(sr_dl), sr_ul=tuple(sr_ul),
        raw_dl=tuple(raw_dl), raw_ul=tuple(raw_ul),
        min_sr=max(raw_min, 0.0), raw_min=raw_min,
        clamped=tuple(clamped),
    )


def empirical_outage(pt: DesignPoint, scsi_ch: GroupedChannels,
                     n_samples: int, seed: int) -> dict:
    """Monte Carlo estimate of the per-constraint Eve-cap outage levels.

    Samples Eve channels consistent with the stored second moments
    (columns i.i.d. CN(0, H_bar/ne); UL-to-Eve entries i.i.d. with
    variance g_bar/ne) and counts how often max_m C_eve stays below the
    certified caps carried on the design point.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples for a usable estimate")
    if pt.gamma_dl is None or pt.gamma_ul is None:
        raise ValueError("design point carries no certified Eve caps")
    rng = np.random.default_rng(seed)
    M = scsi_ch.n_eves
    probs_dl = {}
    probs_ul = {}
    for i in range(scsi_ch.n_groups):
        K = scsi_ch.h[i].shape[0]
        L = scsi_ch.g[i].shape[0]
        alpha_i = 1.0 / pt.tau[i]
        cap_ed = np.full((n_samples, K), -np.inf)
        cap_eu = np.full((n_samples, L), -np.inf)
        for m in range(M):
            ne = scsi_ch.ne[m]
            scale_h = math.sqrt(float(np.real(scsi_ch.h_bar[m][0, 0])) / ne)
            H = scale_h / math.sqrt(2) * (
                rng.standard_normal((n_samples, scsi_ch.n_tx, ne))
                + 1j * rng.standard_normal((n_samples, scsi_ch.n_tx, ne)))
            var = np.asarray(scsi_ch.g_bar[m][i]) / ne
            g_rows = np.sqrt(var)[None, :, None] / math.sqrt(2) * (
                rng.standard_normal((n_samples, L, ne))
                + 1j * rng.standard_normal((n_samples, L, ne)))
            dl_pow = np.zeros((n_samples, K))
            if K:
                t = np.einsum("sne,kn->ske", H.conj(), pt.w[i])
                dl_pow = np.sum(np.abs(t) ** 2, axis=2)
            an = np.sum(np.abs(np.einsum("sne,nj->sje", H.conj(), pt.V[i])) ** 2, axis=(1, 2))
            ul_pow = pt.rho[i][None, :] ** 2 * np.sum(np.abs(g_rows) ** 2, axis=2)
            base = an + ul_pow.sum(axis=1) + ne * scsi_ch.sigma2
            dl_total = dl_pow.sum(axis=1)
            for k in range(K):
                psi = dl_total - dl_pow[:, k] + base
                cap_ed[:, k] = np.maximum(cap_ed[:, k], np.log1p(dl_pow[:, k] / psi) / alpha_i)
            for ell in range(L):
                chi = dl_total + base - ul_pow[:, ell]
                cap_eu[:, ell] = np.maximum(cap_eu[:, ell], np.log1p(ul_pow[:, ell] / chi) / alpha_i)
        for k in range(K):
            ok = cap_ed[:, k] <= float(pt.gamma_dl[i][k]) + 1e-12
            probs_dl[(i, k)] = float(ok.mean())
        for ell in range(L):
            ok = cap_eu[:, ell] <= float(pt.gamma_ul[i][ell]) + 1e-12
            probs_ul[(i, ell)] = float(ok.mean())
    return {"dl": probs_dl, "ul": probs_ul}
