import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsec import rates
from fdsec.approx import (
    AssemblyOptions,
    ProblemParams,
    PsdLmi,
    RateRhs,
    SumLe,
    assemble_sketches,
    declare_variables,
    expand,
    log_majorant,
    normsq_minorant,
    sqrt_prod_majorant,
    zeta_minorant,
)
from fdsec.config import SystemConfig
from fdsec.exprs import VarSpace
from fdsec.scenario import derive_scsi, group_proposed, normalize, sample_channels, sample_topology
from fdsec.algorithms import _attach_closures, _claimed_eta, _params_for, _seed_point
from fdsec.conic import expansion_values

from conftest import crandn

NSAMPLE = 10_000


# ---- primitive bounds -------------------------------------------------------

def test_zeta_minorant_tight_at_expansion():
    for g0, t0 in [(0.5, 1.2), (3e4, 2.0), (1e-3, 1.01)]:
        a, b, c = zeta_minorant(g0, t0)
        assert a - b / g0 - c * t0 == pytest.approx(math.log1p(g0) / t0, rel=1e-12)


def test_zeta_minorant_reference_point():
    a, b, c = zeta_minorant(1.0, 1.0)
    bound = a - b / 2.0 - c * 1.0
    assert bound == pytest.approx(math.log(2) + 0.25, rel=1e-12)
    assert bound <= math.log(3)


def test_zeta_minorant_dominance_bulk(rng):
    g0 = 10 ** rng.uniform(-3, 6, NSAMPLE)
    t0 = 10 ** rng.uniform(-2, 2, NSAMPLE)
    g = 10 ** rng.uniform(-3, 6, NSAMPLE)
    t = 10 ** rng.uniform(-2, 2, NSAMPLE)
    zeta0 = np.log1p(g0) / t0
    a = 2 * zeta0 + g0 / (t0 * (g0 + 1))
    b = g0**2 / (t0 * (g0 + 1))
    c = zeta0 / t0
    bound = a - b / g - c * t
    truth = np.log1p(g) / t
    assert np.all(bound <= truth * (1 + 1e-12) + 1e-12)


def test_zeta_minorant_rejects_bad_input():
    with pytest.raises(ValueError):
        zeta_minorant(0.0, 1.0)
    with pytest.raises(ValueError):
        zeta_minorant(1.0, -1.0)


def test_log_majorant_properties(rng):
    a, b = log_majorant(0.0)
    assert a == 0.0 and b == 1.0
    for x0 in [0.0, 0.7, 1e5]:
        a, b = log_majorant(x0)
        assert a + b * x0 == pytest.approx(math.log1p(x0), rel=1e-12)
    x0 = 10 ** rng.uniform(-3, 6, NSAMPLE)
    x = 10 ** rng.uniform(-3, 6, NSAMPLE)
    a = np.log1p(x0) - x0 / (1 + x0)
    b = 1 / (1 + x0)
    assert np.all(a + b * x >= np.log1p(x) * (1 - 1e-12) - 1e-12)


def test_normsq_minorant_properties(rng):
    x0 = crandn(rng, 6)
    f = normsq_minorant(x0)
    assert f(x0) == pytest.approx(np.linalg.norm(x0) ** 2, rel=1e-12)
    assert f(np.zeros(6)) == pytest.approx(-np.linalg.norm(x0) ** 2, rel=1e-12)
    for _ in range(NSAMPLE // 10):
        x = crandn(rng, 6) * rng.uniform(0, 3)
        assert f(x) <= np.linalg.norm(x) ** 2 + 1e-12


def test_sqrt_prod_majorant_properties(rng):
    cy, cz = sqrt_prod_majorant(1.0, 1.0)
    assert cy * 4.0 + cz * 1.0 == pytest.approx(2.5)
    assert 2.5 >= 2.0
    for y0, z0 in [(1.0, 1.0), (10.0, 0.1), (1e5, 3.0)]:
        cy, cz = sqrt_prod_majorant(y0, z0)
        assert cy * y0 + cz * z0 == pytest.approx(math.sqrt(y0 * z0), rel=1e-12)
    y0 = 10 ** rng.uniform(-3, 5, NSAMPLE)
    z0 = 10 ** rng.uniform(-3, 5, NSAMPLE)
    y = 10 ** rng.uniform(-3, 5, NSAMPLE)
    z = 10 ** rng.uniform(-3, 5, NSAMPLE)
    cy = np.sqrt(z0) / (2 * np.sqrt(y0))
    cz = np.sqrt(y0) / (2 * np.sqrt(z0))
    assert np.all(cy * y + cz * z >= np.sqrt(y * z) * (1 - 1e-12))


@settings(max_examples=200, deadline=None)
@given(
    g0=st.floats(1e-3, 1e6), t0=st.floats(1e-2, 1e2),
    g=st.floats(1e-3, 1e6), t=st.floats(1e-2, 1e2),
)
def test_zeta_minorant_dominance_hypothesis(g0, t0, g, t):
    a, b, c = zeta_minorant(g0, t0)
    assert a - b / g - c * t <= math.log1p(g) / t + 1e-9


# ---- constraint sketches: agreement at the expansion point ------------------

def _instance(mode, seed=3, cfg=None):
    cfg = cfg or SystemConfig(mode=mode)
    topo = sample_topology(cfg, seed)
    ch = sample_channels(topo, cfg, seed + 100)
    if mode == "SCSI":
        ch = derive_scsi(ch)
    gch = normalize(group_proposed(ch, cfg))
    params = _params_for(cfg, None)
    params = dataclasses.replace(params, mode=mode)
    pt = _seed_point(gch, cfg, None)
    pt = _attach_closures(gch, pt, mode, params)
    exp = expand(gch, pt, mode)
    return cfg, gch, params, pt, exp


def _sketch_map(space, exp, params, options):
    out = {}
    for sk in assemble_sketches(space, exp, params, options):
        out[sk.label] = sk
    return out


def _vals(exp, params, mode, include_eves, eta=0.0):
    vals = expansion_values(exp, params, mode, include_eves, eta=eta)
    for i in range(exp.gch.n_groups):
        if ("GammaD", i) not in vals and exp.gch.h[i].shape[0] and include_eves:
            pass
    return vals


@pytest.mark.parametrize("mode", ["EWCI", "SCSI", "WCS"])
def test_dl_minorant_agrees_with_exact_rate(mode):
    cfg, gch, params, pt, exp = _instance(mode)
    space = VarSpace()
    declare_variables(space, gch, mode, params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, False), RateRhs(1.0, 0.0, False))
    sk = _sketch_map(space, exp, params, options)
    vals = _vals(exp, params, mode, True)
    for i in range(2):
        for k in range(2):
            lhs = sk[("dl_min", i, k)].lhs(vals)
            exact = rates.dl_rate(gch, pt, i, k)
            assert lhs == pytest.approx(-exact, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("ul_bound", ["strong", "printed"])
def test_ul_minorant_agrees_with_exact_rate(ul_bound):
    cfg, gch, params, pt, exp = _instance("EWCI")
    params = dataclasses.replace(params, ul_bound=ul_bound)
    space = VarSpace()
    declare_variables(space, gch, "EWCI", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, False), RateRhs(1.0, 0.0, False))
    sk = _sketch_map(space, exp, params, options)
    vals = _vals(exp, params, "EWCI", True)
    for i in range(2):
        exact = rates.ul_rates(gch, pt, i)
        for ell in range(2):
            lhs = sk[("ul_min", i, ell)].lhs(vals)
            assert lhs == pytest.approx(-exact[ell], rel=1e-9, abs=1e-9)


def test_ul_minorant_guards_tiny_rho():
    cfg, gch, params, pt, exp = _instance("EWCI")
    pt0 = dataclasses.replace(pt, rho=tuple(np.full_like(r, 1e-13) for r in pt.rho))
    pt0 = _attach_closures(gch, pt0, "EWCI", params)
    exp0 = expand(gch, pt0, "EWCI")
    params_p = dataclasses.replace(params, ul_bound="printed")
    space = VarSpace()
    declare_variables(space, gch, "EWCI", params_p, True, exp=exp0)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, False), RateRhs(1.0, 0.0, False))
    for sk in assemble_sketches(space, exp0, params_p, options):
        if isinstance(sk, SumLe):
            for t in sk.terms:
                for arr in getattr(t, "forms", ()):
                    for mat in arr.coef.values():
                        assert np.all(np.isfinite(mat))


def test_eve_cap_agreement_ewci():
    cfg, gch, params, pt, exp = _instance("EWCI")
    space = VarSpace()
    declare_variables(space, gch, "EWCI", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
    sk = _sketch_map(space, exp, params, options)
    vals = _vals(exp, params, "EWCI", True)
    for i in range(2):
        ed, eu = rates.eve_rates_ewci(gch, pt, i)
        for m in range(2):
            for k in range(2):
                cap = sk[("eve_dl_cap", m, i, k)]
                # lhs = chained bound - Gamma; at the mu closure the chain is exact
                lhs = cap.lhs({**vals, ("GammaD", i): np.zeros(2)})
                assert lhs == pytest.approx(ed[m, k], rel=1e-10, abs=1e-10)
                res = sk[("eve_dl_res", m, i, k)].lhs(vals)
                assert res == pytest.approx(0.0, abs=1e-8)
            for ell in range(2):
                cap = sk[("eve_ul_cap", m, i, ell)]
                lhs = cap.lhs({**vals, ("GammaU", i): np.zeros(2)})
                assert lhs == pytest.approx(eu[m, ell], rel=1e-10, abs=1e-10)


def test_power_sketch_agreement_and_zero_feasible():
    cfg, gch, params, pt, exp = _instance("EWCI")
    space = VarSpace()
    declare_variables(space, gch, "EWCI", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
    sk = _sketch_map(space, exp, params, options)
    vals = _vals(exp, params, "EWCI", True)
    used = sum(pt.tau[i] * (np.sum(np.abs(pt.w[i]) ** 2) + np.sum(np.abs(pt.V[i]) ** 2))
               for i in range(2))
    assert sk[("bs_power",)].lhs(vals) == pytest.approx(used - cfg.pbs_max_w, rel=1e-9)
    zero = {k: np.zeros_like(np.asarray(v, dtype=float)) for k, v in vals.items()}
    zero[("alpha",)] = np.array([2.0, 2.0])
    assert sk[("bs_power",)].lhs(zero) < 0
    for ell in range(2):
        assert sk[("ul_power", 0, ell)].lhs(zero) < 0


def test_scsi_sketch_agreement():
    cfg, gch, params, pt, exp = _instance("SCSI")
    space = VarSpace()
    declare_variables(space, gch, "SCSI", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
    sk = _sketch_map(space, exp, params, options)
    vals = _vals(exp, params, "SCSI", True)
    for i in range(2):
        for k in range(2):
            # markov rows hold with slack >= 0 at the beta closure
            for m in range(2):
                assert sk[("scsi_dl_markov", m, i, k)].lhs(vals) <= 1e-9
            # cap chain equals ln(1+beta)/alpha at expansion (W-bound tight)
            lhs = sk[("scsi_dl_cap", i, k)].lhs({**vals, ("GammaD", i): np.zeros(2)})
            expected = math.log1p(pt.beta_dl[i][k]) * pt.tau[i]
            assert lhs == pytest.approx(expected, rel=1e-10)


def test_scsi_outage_slack_vanishes_as_eps_to_one():
    cfg, gch, params, pt, exp = _instance("SCSI")
    params1 = dataclasses.replace(params, eps_dl=1.0 - 1e-12, eps_ul=1.0 - 1e-12)
    ne = gch.ne[0]
    slack = (1.0 - params1.eps_dl ** (1.0 / gch.n_eves)) * ne
    assert slack == pytest.approx(0.0, abs=1e-9)


def test_wcs_lmi_and_trust_agreement():
    cfg, gch, params, pt, exp = _instance("WCS")
    space = VarSpace()
    declare_variables(space, gch, "WCS", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
    sketches = assemble_sketches(space, exp, params, options)
    vals = _vals(exp, params, "WCS", True)
    for sk in sketches:
        if isinstance(sk, PsdLmi):
            m = sk.matrix(vals)
            lam = np.linalg.eigvalsh(m)
            assert lam.min() >= -1e-8 * max(1.0, lam.max())
            if sk.label[0] == "wcs_trust":
                mm, i = sk.label[1], sk.label[2]
                H = gch.h_eve[mm]
                exact = H.conj().T @ pt.V[i] @ pt.V[i].conj().T @ H
                assert np.allclose(m, exact, atol=1e-10 * max(1.0, np.abs(exact).max()))


def test_wcs_lmi_schur_implication(rng):
    """LMI-feasible (t, w, V) implies the quadratic-form bound."""
    cfg, gch, params, pt, exp = _instance("WCS")
    space = VarSpace()
    declare_variables(space, gch, "WCS", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
    sketches = [s for s in assemble_sketches(space, exp, params, options)
                if isinstance(s, PsdLmi) and s.label[0] == "wcs_dl_lmi"]
    vals = dict(_vals(exp, params, "WCS", True))
    for sk in sketches[:4]:
        m_, i, k = sk.label[1], sk.label[2], sk.label[3]
        for trial in range(20):
            v2 = dict(vals)
            v2[("t", m_, i)] = vals[("t", m_, i)] * rng.uniform(1.0, 3.0, 2)
            mat = sk.matrix(v2)
            lam = np.linalg.eigvalsh(mat)
            if lam.min() < 1e-12:
                continue
            # Schur complement: t >= w^H H (Sigma + I)^-1 H^H w
            t_val = float(np.real(mat[0, 0]))
            q = mat[1:, 0]
            xi = mat[1:, 1:]
            assert t_val >= float(np.real(q.conj() @ np.linalg.solve(xi, q))) - 1e-9


# ---- inner-approximation soundness by sketch-feasible sampling --------------

@pytest.mark.parametrize("mode", ["EWCI", "SCSI", "WCS"])
def test_sketch_feasible_points_satisfy_exact_constraints(mode, rng):
    """Sample sketch-feasible points (solved vertex plus convex blends back
    toward the expansion point) and audit the exact nonconvex constraints
    (inner-approximation soundness)."""
    from fdsec.conic import build_subproblem, extract_point
    from fdsec.solver import SolverSettings, solve

    checked = 0
    for seed in (3, 5):
        cfg, gch, params, pt, exp = _instance(mode, seed=seed)
        options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
        prog = build_subproblem(mode, exp, params, options)
        rep = solve(prog, SolverSettings(feas_tol=1e-5, gap_tol=1e-2))
        assert rep.status == "optimal"
        eta0 = _claimed_eta(gch, pt, "MAXMIN_ALL")
        z_exp = prog.encode_point(_vals(exp, params, mode, True, eta=eta0))
        for lam in (0.0, 0.3, 0.7):
            z = (1 - lam) * rep.x + lam * z_exp
            sol = extract_point(prog.space, z, gch, params, mode, True)
            caps = (sol.gamma_dl, sol.gamma_ul) if mode == "SCSI" else None
            aud = rates.secrecy_rates(gch, sol, mode, gamma_caps=caps)
            assert aud.raw_min >= float(sol.eta) - 2e-4, f"{mode} seed {seed} lam {lam}"
            used = sum(sol.tau[i] * (np.sum(np.abs(sol.w[i]) ** 2)
                                     + np.sum(np.abs(sol.V[i]) ** 2)) for i in range(2))
            assert used <= cfg.pbs_max_w * (1 + 1e-6)
            for i in range(2):
                for ell in range(gch.g[i].shape[0]):
                    assert sol.tau[i] * sol.rho[i][ell] ** 2 <= cfg.pu_max_w * (1 + 1e-6)
            checked += 1
    assert checked >= 4


def test_omega_psd_and_rank_one_identity():
    """The SIC weighting matrices from the closed form match the inverse
    difference and are PSD."""
    cfg, gch, params, pt, exp = _instance("EWCI")
    for i in range(2):
        L = gch.g[i].shape[0]
        for ell in range(1, L + 1):
            s = exp.omega_sqrt[i][ell - 1]
            om = s @ s.conj().T
            phi_l = rates.phi_matrix(gch, pt, i, ell)
            phi_lm1 = rates.phi_matrix(gch, pt, i, ell - 1)
            direct = np.linalg.inv(phi_l) - np.linalg.inv(phi_lm1)
            assert np.allclose(om, direct, atol=1e-9 * max(1.0, np.abs(direct).max()))
            lam = np.linalg.eigvalsh(om)
            assert lam.min() >= -1e-9 * max(1.0, lam.max())


def test_expand_requires_phase_rotation():
    cfg, gch, params, pt, exp = _instance("EWCI")
    bad_w = tuple(w * np.exp(1j * 2.0) for w in pt.w)
    with pytest.raises(ValueError):
        expand(gch, dataclasses.replace(pt, w=bad_w), "EWCI")


def test_family_count_excludes_domain_guards():
    cfg, gch, params, pt, exp = _instance("EWCI")
    space = VarSpace()
    declare_variables(space, gch, "EWCI", params, True, exp=exp)
    options = AssemblyOptions(True, RateRhs(1.0, 0.0, True), RateRhs(1.0, 0.0, True))
    sketches = assemble_sketches(space, exp, params, options)
    families = [s for s in sketches if isinstance(s, SumLe) and not s.domain]
    K = L = M = 2
    assert len(families) == (4 * M + 6) * (K + L) + 2
