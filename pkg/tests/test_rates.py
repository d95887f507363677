import dataclasses
import math

import numpy as np
import pytest

from fdsec.config import SystemConfig
from fdsec.rates import (
    DesignPoint,
    dl_rate,
    empirical_outage,
    eve_rates_ewci,
    eve_rates_wcs,
    secrecy_rates,
    ul_rates,
)
from fdsec.scenario import GroupedChannels, derive_scsi, group_proposed, sample_channels, sample_topology

from conftest import crandn


def make_instance(rng, n_groups=2, K=2, L=2, M=2, nt=4, nr=4, ne=2,
                  sigma2=1.0, sigma_si=1e-3):
    """Random grouped channels with unit-scale entries for oracle tests."""
    h = tuple(crandn(rng, K, nt) for _ in range(n_groups))
    g = tuple(crandn(rng, L, nr) for _ in range(n_groups))
    f = tuple(0.1 * crandn(rng, K, L) for _ in range(n_groups))
    g_si = crandn(rng, nt, nr)
    h_eve = tuple(crandn(rng, nt, ne) for _ in range(M))
    g_eve = tuple(tuple(0.5 * crandn(rng, L, ne) for _ in range(n_groups)) for _ in range(M))
    return GroupedChannels(
        n_tx=nt, n_rx=nr, sigma2=sigma2, sigma_si=sigma_si,
        h=h, g=g, f=f, g_si=g_si, h_eve=h_eve, g_eve=g_eve,
        ne=(ne,) * M,
        dl_ids=tuple(tuple(range(i * K, (i + 1) * K)) for i in range(n_groups)),
        ul_ids=tuple(tuple(range(i * L, (i + 1) * L)) for i in range(n_groups)),
    )


def make_point(rng, gch, scale=1.0):
    return DesignPoint(
        w=tuple(scale * crandn(rng, gch.h[i].shape[0], gch.n_tx) for i in range(gch.n_groups)),
        V=tuple(scale * 0.3 * crandn(rng, gch.n_tx, gch.n_tx) for i in range(gch.n_groups)),
        rho=tuple(rng.uniform(0.1, 1.5, gch.g[i].shape[0]) for i in range(gch.n_groups)),
        tau=(0.45, 0.55)[:gch.n_groups] if gch.n_groups > 1 else (1.0,),
    )


def test_dl_rate_zero_point(rng):
    gch = make_instance(rng)
    pt = DesignPoint(
        w=tuple(np.zeros((2, 4), dtype=complex) for _ in range(2)),
        V=tuple(np.zeros((4, 4), dtype=complex) for _ in range(2)),
        rho=tuple(np.zeros(2) for _ in range(2)),
        tau=(0.5, 0.5))
    assert dl_rate(gch, pt, 0, 0) == 0.0
    assert np.all(ul_rates(gch, pt, 0) == 0.0)


def test_dl_rate_single_user_reduction(rng):
    h = crandn(rng, 1, 3)
    gch = GroupedChannels(
        n_tx=3, n_rx=3, sigma2=2.0, sigma_si=0.0,
        h=(h,), g=(np.zeros((0, 3)),), f=(np.zeros((1, 0)),),
        g_si=None, h_eve=(), g_eve=((),), ne=(),
        dl_ids=((0,),), ul_ids=((),))
    gch = dataclasses.replace(gch, g_eve=())
    w = crandn(rng, 1, 3)
    pt = DesignPoint(w=(w,), V=(np.zeros((3, 3), dtype=complex),),
                     rho=(np.zeros(0),), tau=(1.0,))
    expected = math.log1p(abs(h[0].conj() @ w[0]) ** 2 / 2.0)
    assert dl_rate(gch, pt, 0, 0) == pytest.approx(expected, rel=1e-12)


def test_dl_rate_term_enumeration_oracle(rng):
    """Independent re-derivation: enumerate every received-signal term."""
    gch = make_instance(rng)
    pt = make_point(rng, gch)
    for i in range(2):
        for k in range(2):
            h = gch.h[i][k]
            sig = abs(np.vdot(h, pt.w[i][k])) ** 2
            interf = 0.0
            for j in range(2):
                if j != k:
                    interf += abs(np.vdot(h, pt.w[i][j])) ** 2
            for col in range(gch.n_tx):
                interf += abs(np.vdot(h, pt.V[i][:, col])) ** 2
            for ell in range(2):
                interf += pt.rho[i][ell] ** 2 * abs(gch.f[i][k, ell]) ** 2
            expected = pt.tau[i] * math.log1p(sig / (interf + gch.sigma2))
            assert dl_rate(gch, pt, i, k) == pytest.approx(expected, abs=1e-12)


def test_ul_rate_mrc_reduction(rng):
    g = crandn(rng, 1, 4)
    gch = GroupedChannels(
        n_tx=4, n_rx=4, sigma2=1.5, sigma_si=0.0,
        h=(np.zeros((0, 4), dtype=complex),), g=(g,), f=(np.zeros((0, 1)),),
        g_si=None, h_eve=(), g_eve=(), ne=(),
        dl_ids=((),), ul_ids=((0,),))
    pt = DesignPoint(w=(np.zeros((0, 4), dtype=complex),),
                     V=(np.zeros((4, 4), dtype=complex),),
                     rho=(np.array([0.7]),), tau=(1.0,))
    expected = math.log1p(0.7 ** 2 * np.linalg.norm(g[0]) ** 2 / 1.5)
    assert ul_rates(gch, pt, 0)[0] == pytest.approx(expected, rel=1e-12)


def test_ul_sic_sum_rate_identity(rng):
    """With no self-interference the SIC rates sum to the MAC capacity."""
    gch = make_instance(rng, sigma_si=0.0)
    pt = make_point(rng, gch)
    for i in range(2):
        rates_i = ul_rates(gch, pt, i)
        G = gch.g[i]
        gram = sum(pt.rho[i][j] ** 2 * np.outer(G[j], G[j].conj()) for j in range(2))
        expected = pt.tau[i] * math.log(np.real(
            np.linalg.det(np.eye(gch.n_rx) + gram / gch.sigma2)))
        assert rates_i.sum() == pytest.approx(expected, rel=1e-10)


def test_eve_ewci_zero_beam_and_noise_domination(rng):
    gch = make_instance(rng)
    pt = make_point(rng, gch)
    pt0 = dataclasses.replace(pt, w=tuple(np.zeros_like(w) for w in pt.w))
    ed, _ = eve_rates_ewci(gch, pt0, 0)
    assert np.all(ed == 0.0)
    loud = dataclasses.replace(gch, sigma2=1e12)
    ed2, eu2 = eve_rates_ewci(loud, pt, 0)
    assert np.all(ed2 < 1e-9) and np.all(eu2 < 1e-9)


def test_eve_ewci_term_enumeration_oracle(rng):
    gch = make_instance(rng)
    pt = make_point(rng, gch)
    i = 1
    ed, eu = eve_rates_ewci(gch, pt, i)
    for m in range(2):
        H = gch.h_eve[m]
        dl_pow = [np.linalg.norm(H.conj().T @ pt.w[i][k]) ** 2 for k in range(2)]
        an = np.linalg.norm(H.conj().T @ pt.V[i], "fro") ** 2
        ul_pow = [pt.rho[i][j] ** 2 * np.linalg.norm(gch.g_eve[m][i][j]) ** 2 for j in range(2)]
        for k in range(2):
            psi = sum(dl_pow) - dl_pow[k] + an + sum(ul_pow) + 2 * gch.sigma2
            expected = pt.tau[i] * math.log1p(dl_pow[k] / psi)
            assert ed[m, k] == pytest.approx(expected, abs=1e-12)
        for ell in range(2):
            chi = sum(dl_pow) + an + sum(ul_pow) - ul_pow[ell] + 2 * gch.sigma2
            expected = pt.tau[i] * math.log1p(ul_pow[ell] / chi)
            assert eu[m, ell] == pytest.approx(expected, abs=1e-12)


def test_eve_wcs_anfree_reduction(rng):
    gch = make_instance(rng)
    pt = make_point(rng, gch)
    pt0 = dataclasses.replace(pt, V=tuple(np.zeros_like(v) for v in pt.V))
    ed, eu = eve_rates_wcs(gch, pt0, 0)
    for m in range(2):
        H = gch.h_eve[m]
        for k in range(2):
            expected = pt.tau[0] * math.log1p(
                np.linalg.norm(H.conj().T @ pt.w[0][k]) ** 2 / gch.sigma2)
            assert ed[m, k] == pytest.approx(expected, rel=1e-10)
    pt_rho0 = dataclasses.replace(pt, rho=tuple(np.zeros(2) for _ in range(2)))
    _, eu0 = eve_rates_wcs(gch, pt_rho0, 0)
    assert np.all(eu0 == 0.0)


def test_wcs_dominates_ewci_paired(rng):
    """The MMSE decoder with interference cancellation never does worse."""
    worst = 0.0
    for _ in range(1000):
        gch = make_instance(rng, n_groups=1, K=2, L=2, M=1, nt=3, nr=3, ne=2)
        pt = dataclasses.replace(make_point(rng, gch), tau=(1.0,))
        ed_w, eu_w = eve_rates_wcs(gch, pt, 0)
        ed_e, eu_e = eve_rates_ewci(gch, pt, 0)
        worst = min(worst, float((ed_w - ed_e).min()), float((eu_w - eu_e).min()))
    assert worst >= -1e-9


def test_secrecy_rates_clamp_and_min(rng):
    gch = make_instance(rng)
    pt = make_point(rng, gch, scale=0.05)
    aud = secrecy_rates(gch, pt, "EWCI")
    brute = []
    for i in range(2):
        ed, eu = eve_rates_ewci(gch, pt, i)
        for k in range(2):
            brute.append(dl_rate(gch, pt, i, k) - ed[:, k].max())
        ul = ul_rates(gch, pt, i)
        for ell in range(2):
            brute.append(ul[ell] - eu[:, ell].max())
    assert aud.raw_min == pytest.approx(min(brute), abs=1e-12)
    assert aud.min_sr == max(min(brute), 0.0)
    assert all(np.all(s >= 0) for s in aud.sr_dl + aud.sr_ul)


def test_secrecy_rates_no_eves(rng):
    gch = make_instance(rng, M=0)
    gch = dataclasses.replace(gch, h_eve=(), g_eve=(), ne=())
    pt = make_point(rng, gch)
    aud = secrecy_rates(gch, pt, "EWCI")
    assert aud.raw_min == pytest.approx(
        min(min(dl_rate(gch, pt, i, k) for i in range(2) for k in range(2)),
            min(float(ul_rates(gch, pt, i).min()) for i in range(2))), abs=1e-12)
    assert not aud.clamped


def _scsi_instance_with_point():
    cfg = SystemConfig(k=1, l=1, m=1, ne=(2,), nt=3, nr=3)
    topo = sample_topology(cfg, 4)
    ch = derive_scsi(sample_channels(topo, cfg, 4))
    gch = group_proposed(ch, cfg)
    rng = np.random.default_rng(1)
    pt = DesignPoint(
        w=tuple(0.05 * crandn(rng, 1, 3) for _ in range(2)),
        V=tuple(0.01 * crandn(rng, 3, 3) for _ in range(2)),
        rho=tuple(np.array([0.3]) for _ in range(2)),
        tau=(0.5, 0.5))
    return gch, pt


def test_empirical_outage_extreme_caps():
    gch, pt = _scsi_instance_with_point()
    loose = dataclasses.replace(
        pt, gamma_dl=(np.array([1e9]), np.array([1e9])),
        gamma_ul=(np.array([1e9]), np.array([1e9])))
    probs = empirical_outage(loose, gch, n_samples=200, seed=0)
    assert all(v == 1.0 for v in probs["dl"].values())
    assert all(v == 1.0 for v in probs["ul"].values())
    tight = dataclasses.replace(
        pt, gamma_dl=(np.array([0.0]), np.array([0.0])),
        gamma_ul=(np.array([0.0]), np.array([0.0])))
    probs = empirical_outage(tight, gch, n_samples=200, seed=0)
    assert all(v == 0.0 for v in probs["dl"].values())
    assert all(v == 0.0 for v in probs["ul"].values())


def test_empirical_outage_needs_enough_samples():
    gch, pt = _scsi_instance_with_point()
    with pytest.raises(ValueError):
        empirical_outage(pt, gch, n_samples=10, seed=0)
