"""The inner-approximation bound catalog.

Four primitive bounds (tangent minorant of ln(1+g)/t, tangent majorant of
ln(1+x), tangent minorant of ||x||^2, and the convex majorant of
sqrt(y*z)) plus the constraint sketches each path-following subproblem is
assembled from.  Every sketch is tight at its expansion point; the
emitters work on noise-normalized channels (sigma2 = 1).

Sketch payloads are term lists of one inequality sum(terms) <= 0, with
terms drawn from {affine, quadratic, quadratic-over-affine, hyperbolic},
or positive-semidefinite requirements on a Hermitian affine matrix.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from fdsec.exprs import CExpr, RExpr, VarSpace, mat_adj_vec, mat_lmul, trace_adj
from fdsec.rates import DesignPoint, dl_interference, eve_chi, eve_psi, phi_matrix
from fdsec.scenario import GroupedChannels

# ---------------------------------------------------------------------------
# Primitive bounds
# ---------------------------------------------------------------------------


def zeta_minorant(gamma0: float, t0: float) -> tuple[float, float, float]:
    """Coefficients (A, B, C) with ln(1+g)/t >= A - B/g - C*t for g, t > 0."""
    if gamma0 <= 0 or t0 <= 0:
        raise ValueError("expansion point must be strictly positive")
    zeta = math.log1p(gamma0) / t0
    a = 2.0 * zeta + gamma0 / (t0 * (gamma0 + 1.0))
    b = gamma0**2 / (t0 * (gamma0 + 1.0))
    c = zeta / t0
    return a, b, c


def log_majorant(x0: float) -> tuple[float, float]:
    """Coefficients (a, b) with ln(1+x) <= a + b*x for all x >= 0."""
    if x0 < 0:
        raise ValueError("expansion point must be nonnegative")
    return math.log1p(x0) - x0 / (1.0 + x0), 1.0 / (1.0 + x0)


def normsq_minorant(x0: np.ndarray):
    """Affine global minorant of ||x||^2: returns f with f(x) <= ||x||^2.

    f(x) = 2 Re{x0^H x} - ||x0||^2, exact at x0.
    """
    x0 = np.asarray(x0)
    base = float(np.real(np.vdot(x0, x0)))

    def minorant(x: np.ndarray) -> float:
        return 2.0 * float(np.real(np.vdot(x0, x))) - base

    return minorant


def sqrt_prod_majorant(y0: float, z0: float) -> tuple[float, float]:
    """Coefficients (cy, cz) with sqrt(y z) <= cy*y + cz*z for y, z > 0."""
    if y0 <= 0 or z0 <= 0:
        raise ValueError("expansion point must be strictly positive")
    return math.sqrt(z0) / (2.0 * math.sqrt(y0)), math.sqrt(y0) / (2.0 * math.sqrt(z0))


# ---------------------------------------------------------------------------
# Constraint sketches
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TermAffine:
    expr: RExpr
    kind = "affine"

    def value(self, vals) -> float:
        return float(self.expr.value(vals)[0])


@dataclasses.dataclass(frozen=True)
class TermQuad:
    forms: tuple[RExpr, ...]
    kind = "quadratic"

    def value(self, vals) -> float:
        return float(sum(np.sum(f.value(vals) ** 2) for f in self.forms))


@dataclasses.dataclass(frozen=True)
class TermQuadOverAffine:
    forms: tuple[RExpr, ...]
    theta: RExpr
    kind = "quadratic-over-affine"

    def value(self, vals) -> float:
        num = float(sum(np.sum(f.value(vals) ** 2) for f in self.forms))
        return num / float(self.theta.value(vals)[0])


@dataclasses.dataclass(frozen=True)
class TermHyperbolic:
    c: float
    theta: RExpr
    kind = "hyperbolic"

    def value(self, vals) -> float:
        return self.c / float(self.theta.value(vals)[0])


Term = TermAffine | TermQuad | TermQuadOverAffine | TermHyperbolic


@dataclasses.dataclass(frozen=True)
class SumLe:
    """Inequality sum(terms) <= 0."""

    terms: tuple[Term, ...]
    label: tuple
    domain: bool = False    # variable-bound housekeeping, excluded from family tallies
    kind = "sum-le"

    def lhs(self, vals) -> float:
        return float(sum(t.value(vals) for t in self.terms))


@dataclasses.dataclass(frozen=True)
class PsdLmi:
    """Hermitian affine matrix (vec, column-major) required PSD."""

    mat: CExpr
    n: int
    label: tuple
    kind = "psd-lmi"

    def matrix(self, vals) -> np.ndarray:
        m = self.mat.value(vals).reshape(self.n, self.n, order="F")
        return 0.5 * (m + m.conj().T)


Sketch = SumLe | PsdLmi


def _is_const(e: RExpr) -> bool:
    return not e.coef or all(np.all(v == 0) for v in e.coef.values())


def make_sum(terms, label, domain=False) -> SumLe:
    """Build a SumLe, collapsing terms with constant denominators."""
    out = []
    for t in terms:
        if isinstance(t, TermHyperbolic) and t.c == 0.0:
            continue
        if isinstance(t, TermHyperbolic) and _is_const(t.theta):
            out.append(TermAffine(RExpr.constant(t.c / float(t.theta.const[0]))))
            continue
        if isinstance(t, TermQuadOverAffine) and _is_const(t.theta):
            s = 1.0 / math.sqrt(float(t.theta.const[0]))
            out.append(TermQuad(tuple(f * s for f in t.forms)))
            continue
        out.append(t)
    # merge affine terms into one
    aff = [t for t in out if isinstance(t, TermAffine)]
    rest = [t for t in out if not isinstance(t, TermAffine)]
    merged = []
    if aff:
        total = aff[0].expr
        for t in aff[1:]:
            total = total + t.expr
        merged.append(TermAffine(total))
    return SumLe(tuple(rest + merged), tuple(label), domain)


def cforms(*entries) -> tuple[RExpr, ...]:
    """Flatten complex/real affine forms into real rows for a quadratic."""
    forms = []
    for e in entries:
        if isinstance(e, CExpr):
            forms.append(e.re)
            forms.append(e.im)
        else:
            forms.append(e)
    return tuple(forms)


# ---------------------------------------------------------------------------
# Expansion point
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ExpansionPoint:
    """The current iterate plus every cached quantity the sketches need.

    Channels must be the noise-normalized view.  Eve-model caches are
    only present for the owning mode.
    """

    pt: DesignPoint
    gch: GroupedChannels
    alpha: tuple[float, ...]
    r0: tuple[np.ndarray, ...]
    gamma_dl: tuple[np.ndarray, ...]
    gamma_ul: tuple[np.ndarray, ...]
    omega_sqrt: tuple[tuple[np.ndarray, ...], ...]
    omega_trace: tuple[tuple[float, ...], ...]
    phi_inv: tuple[tuple[np.ndarray, ...], ...]      # [i][ell]: Phi_ell^-1 g_ell
    gamma_ed: tuple[np.ndarray, ...] | None = None   # per group (M, K_i)
    gamma_eu: tuple[np.ndarray, ...] | None = None
    psi0: tuple[np.ndarray, ...] | None = None
    chi0: tuple[np.ndarray, ...] | None = None

    @property
    def n_groups(self) -> int:
        return len(self.r0)


def expand(gch: GroupedChannels, pt: DesignPoint, mode: str) -> ExpansionPoint:
    """Cache SINRs, SIC weighting matrices, and Eve statistics at the iterate."""
    if abs(gch.sigma2 - 1.0) > 1e-12:
        raise ValueError("expansion expects noise-normalized channels")
    alpha = tuple(1.0 / t for t in pt.tau)
    r0, gamma_dl, gamma_ul = [], [], []
    omega_sqrt, omega_trace, phi_inv = [], [], []
    gamma_ed, gamma_eu, psi0, chi0 = [], [], [], []
    for i in range(gch.n_groups):
        K = gch.h[i].shape[0]
        L = gch.g[i].shape[0]
        r = np.array([float(np.real(gch.h[i][k].conj() @ pt.w[i][k])) for k in range(K)])
        if K and r.size and r.min() < -1e-6 * (1.0 + np.abs(r).max()):
            raise ValueError("beamformers must be phase-rotated before expansion")
        r = np.maximum(r, 0.0)
        phi = np.array([dl_interference(gch, pt, i, k) for k in range(K)])
        gamma_dl.append(r**2 / phi if K else np.zeros(0))
        r0.append(r)
        phis = [phi_matrix(gch, pt, i, ell) for ell in range(1, L + 1)]
        g_ul = np.zeros(L)
        sq, tr, dvecs = [], [], []
        for ell in range(1, L + 1):
            gl = gch.g[i][ell - 1]
            d = np.linalg.solve(phis[ell - 1], gl)
            dvecs.append(d)
            rho2 = pt.rho[i][ell - 1] ** 2
            gam = rho2 * float(np.real(gl.conj() @ d))
            g_ul[ell - 1] = gam
            # Omega = Phi_ell^-1 - Phi_{ell-1}^-1 is exactly the rank-one
            # matrix rho^2 d d^H / (1+gamma) (matrix inversion lemma), so it
            # is PSD by construction and its square root is closed-form
            dn = float(np.linalg.norm(d))
            if dn > 0:
                c = math.sqrt(rho2 / (1.0 + gam)) / dn
                sq.append(c * np.outer(d, d.conj()))
            else:
                sq.append(np.zeros((gch.n_rx, gch.n_rx), dtype=complex))
            tr.append(rho2 * dn**2 / (1.0 + gam))
        gamma_ul.append(g_ul)
        omega_sqrt.append(tuple(sq))
        omega_trace.append(tuple(tr))
        phi_inv.append(tuple(dvecs))
        if mode == "EWCI":
            M = gch.n_eves
            ps = np.zeros((M, K))
            ch_ = np.zeros((M, L))
            ged = np.zeros((M, K))
            geu = np.zeros((M, L))
            for m in range(M):
                H = gch.h_eve[m]
                for k in range(K):
                    ps[m, k] = eve_psi(gch, pt, m, i, k)
                    num = float(np.sum(np.abs(H.conj().T @ pt.w[i][k]) ** 2))
                    ged[m, k] = num / ps[m, k]
                for ell in range(L):
                    ch_[m, ell] = eve_chi(gch, pt, m, i, ell)
                    num = pt.rho[i][ell] ** 2 * float(np.sum(np.abs(gch.g_eve[m][i][ell]) ** 2))
                    geu[m, ell] = num / ch_[m, ell]
            gamma_ed.append(ged)
            gamma_eu.append(geu)
            psi0.append(ps)
            chi0.append(ch_)
    ewci = mode == "EWCI"
    return ExpansionPoint(
        pt=pt, gch=gch, alpha=alpha,
        r0=tuple(r0), gamma_dl=tuple(gamma_dl), gamma_ul=tuple(gamma_ul),
        omega_sqrt=tuple(omega_sqrt), omega_trace=tuple(omega_trace),
        phi_inv=tuple(phi_inv),
        gamma_ed=tuple(gamma_ed) if ewci else None,
        gamma_eu=tuple(gamma_eu) if ewci else None,
        psi0=tuple(psi0) if ewci else None,
        chi0=tuple(chi0) if ewci else None,
    )


# ---------------------------------------------------------------------------
# Assembly options and the sketch builder
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ProblemParams:
    """Scalar data the sketches need beyond channels.

    ul_bound selects the uplink-rate minorant: "strong" (default) chains
    the ln(1+g)/t tangent with a matrix-fractional tangent through one
    epigraph variable and stays rate-precise at any SINR; "printed" is the
    direct weighted-quadratic form, whose own-power curvature grows with
    the SINR and which therefore creeps at 50+ dB.
    """

    mode: str
    pbs_max_w: float
    pu_max_w: float
    eps_dl: float = 0.99
    eps_ul: float = 0.99
    rbar_nats: float = 0.0
    alpha_fixed: tuple[float, ...] | None = None
    ul_bound: str = "strong"
    delta_trust: float = 1e-9
    delta_alpha: float = 1e-6
    delta_mu: float = 1e-9


@dataclasses.dataclass(frozen=True)
class RateRhs:
    """Right-hand side of a legitimate-user rate constraint:
    rate >= eta_coef*eta + const (+ the user's Eve cap when with_gamma)."""

    eta_coef: float = 1.0
    const: float = 0.0
    with_gamma: bool = True


class SketchBuilder:
    """Emits the full sketch set for one subproblem at one expansion point."""

    def __init__(self, space: VarSpace, exp: ExpansionPoint, params: ProblemParams):
        self.space = space
        self.exp = exp
        self.params = params
        self.gch = exp.gch
        self.sketches: list[Sketch] = []

    # -- variable expression helpers ------------------------------------

    def alpha_expr(self, i: int) -> RExpr:
        if self.params.alpha_fixed is not None:
            return RExpr.constant(self.params.alpha_fixed[i])
        return self.space.rvar(("alpha",))[i]

    def eta_expr(self) -> RExpr:
        return self.space.rvar(("eta",))[0]

    def w_expr(self, i: int, k: int) -> CExpr:
        return self.space.cvar(("w", i, k))

    def rho_expr(self, i: int, ell: int) -> RExpr:
        return self.space.rvar(("rho", i))[ell]

    def has_an(self, i: int) -> bool:
        return ("V", i) in self.space

    def v_shape(self, i: int) -> tuple[int, int]:
        return (self.gch.n_tx, self.gch.n_tx)

    def add(self, sk: Sketch) -> None:
        self.sketches.append(sk)

    # -- legitimate users -------------------------------------------------

    def dl_user(self, i: int, k: int, rhs: RateRhs | None) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        h = gch.h[i][k]
        hw_k = self.w_expr(i, k).lmul(h.conj()[None, :])
        re_k = hw_k.re
        self.add(make_sum([TermAffine(re_k * -1.0)], ("poscond", i, k)))
        r0 = float(exp.r0[i][k])
        g0 = float(exp.gamma_dl[i][k])
        if g0 < 1e-14:
            # zero-channel edge: no trust region, bound degenerates to A - C*alpha
            if rhs is not None:
                a = 2.0 * math.log1p(g0) / exp.alpha[i]
                c = math.log1p(g0) / exp.alpha[i] ** 2
                lin = self._rhs_expr(rhs, ("GammaD", i), k) + RExpr.constant(-a) \
                    + self.alpha_expr(i) * c
                self.add(make_sum([TermAffine(lin)], ("dl_min", i, k)))
            return
        self.add(make_sum(
            [TermAffine(RExpr.constant(r0 + self.params.delta_trust) - re_k * 2.0)],
            ("trust", i, k)))
        if rhs is None:
            return
        a, b, c = zeta_minorant(g0, exp.alpha[i])
        theta = (re_k * (2.0 * r0)) - r0 * r0
        forms = []
        sb = math.sqrt(b)
        for j in range(gch.h[i].shape[0]):
            if j != k:
                forms.append(self.w_expr(i, j).lmul(h.conj()[None, :]) * sb)
        if self.has_an(i):
            forms.append(mat_adj_vec(sp, ("V", i), self.v_shape(i), h) * sb)
        for ell in range(gch.g[i].shape[0]):
            forms.append(self.rho_expr(i, ell) * (sb * abs(gch.f[i][k, ell])))
        forms.append(RExpr.constant(sb))    # normalized noise
        lin = self._rhs_expr(rhs, ("GammaD", i), k) + RExpr.constant(-a) + self.alpha_expr(i) * c
        self.add(make_sum(
            [TermQuadOverAffine(cforms(*forms), theta), TermAffine(lin)],
            ("dl_min", i, k)))

    def ul_user(self, i: int, ell: int, rhs: RateRhs | None) -> None:
        gch, exp = self.gch, self.exp
        rho_l = self.rho_expr(i, ell)
        self.add(make_sum([TermAffine(rho_l * -1.0)], ("rho_nonneg", i, ell)))
        if rhs is None:
            return
        g0 = float(exp.gamma_ul[i][ell])
        a0 = exp.alpha[i]
        u0 = math.log1p(g0)
        if g0 < 1e-12:
            lin = self._rhs_expr(rhs, ("GammaU", i), ell) \
                + RExpr.constant(-2.0 * u0 / a0) + self.alpha_expr(i) * (u0 / a0**2)
            self.add(make_sum([TermAffine(lin)], ("ul_min", i, ell)))
            return
        if self.params.ul_bound == "printed":
            self._ul_user_printed(i, ell, rhs)
            return
        # strong form: rate >= A - B/u - C*alpha with an epigraph variable
        # u <= gamma_tilde(X), the tangent of the matrix-fractional SINR
        a, b, c = zeta_minorant(g0, a0)
        u_expr = self.space.rvar(("uGam", i))[ell]
        lin = self._rhs_expr(rhs, ("GammaU", i), ell) \
            + RExpr.constant(-a) + self.alpha_expr(i) * c
        self.add(make_sum(
            [TermHyperbolic(b, u_expr), TermAffine(lin)],
            ("ul_min", i, ell)))
        # u + rho0^2 d^H Phi(X) d <= 2 rho rho0 q0, with d = Phi0^{-1} g
        rho0 = max(float(exp.pt.rho[i][ell]), 1e-12)
        d = exp.phi_inv[i][ell]
        q0 = float(np.real(gch.g[i][ell].conj() @ d))
        forms = []
        L = gch.g[i].shape[0]
        for j in range(ell + 1, L):
            forms.append(self.rho_expr(i, j) * (rho0 * abs(complex(d.conj() @ gch.g[i][j]))))
        if gch.g_si is not None and gch.sigma_si > 0.0:
            gd = gch.g_si @ d            # (n_tx,)
            si_scale = rho0 * math.sqrt(gch.sigma_si)
            for k in range(gch.h[i].shape[0]):
                forms.append(self.w_expr(i, k).lmul(gd.conj()[None, :]) * si_scale)
            if self.has_an(i):
                forms.append(mat_adj_vec(self.space, ("V", i), self.v_shape(i), gd) * si_scale)
        noise_term = rho0**2 * float(np.real(d.conj() @ d)) * gch.sigma2
        lin_u = u_expr - rho_l * (2.0 * rho0 * q0) + RExpr.constant(noise_term)
        self.add(make_sum(
            [TermQuad(cforms(*forms)), TermAffine(lin_u)],
            ("ul_min_aux", i, ell), domain=True))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - u_expr)],
                          ("uGam_domain", i, ell), domain=True))

    def _ul_user_printed(self, i: int, ell: int, rhs: RateRhs) -> None:
        """Direct emission of the weighted-quadratic uplink minorant with the
        SIC weighting matrix; own-power part completed to a square so the
        rows carry no large cancellation."""
        gch, exp, sp = self.gch, self.exp, self.space
        rho_l = self.rho_expr(i, ell)
        g0 = float(exp.gamma_ul[i][ell])
        a0 = exp.alpha[i]
        u0 = math.log1p(g0)
        rho0 = max(float(exp.pt.rho[i][ell]), 1e-12)
        s_l = exp.omega_sqrt[i][ell]
        scale = 1.0 / math.sqrt(a0)
        q_own = max(float(np.real(gch.g[i][ell].conj() @ (s_l @ (s_l @ gch.g[i][ell])))), 1e-300)
        # 2 g0 rho/rho0 - g0 - q rho^2 == k0 - q (rho - center)^2, exactly
        center = g0 / (rho0 * q_own)
        k0 = g0**2 / (rho0**2 * q_own) - g0
        forms = [(rho_l - center) * (scale * math.sqrt(q_own))]
        L = gch.g[i].shape[0]
        for j in range(ell + 1, L):
            cj = float(np.linalg.norm(s_l @ gch.g[i][j]))
            forms.append(self.rho_expr(i, j) * (scale * cj))
        if gch.g_si is not None and gch.sigma_si > 0.0:
            sb = s_l @ gch.g_si.conj().T    # (n_rx, n_tx)
            si_scale = scale * math.sqrt(gch.sigma_si)
            for k in range(gch.h[i].shape[0]):
                forms.append(self.w_expr(i, k).lmul(sb) * si_scale)
            if self.has_an(i):
                forms.append(mat_lmul(sp, ("V", i), self.v_shape(i), sb) * si_scale)
        const = (exp.omega_trace[i][ell] - k0 - 2.0 * u0) / a0
        lin = self._rhs_expr(rhs, ("GammaU", i), ell) \
            + RExpr.constant(const) + self.alpha_expr(i) * (u0 / a0**2)
        self.add(make_sum(
            [TermQuad(cforms(*forms)), TermAffine(lin)],
            ("ul_min", i, ell)))

    def _rhs_expr(self, rhs: RateRhs, gamma_block: tuple, idx: int) -> RExpr:
        out = RExpr.constant(rhs.const)
        if rhs.eta_coef:
            out = out + self.eta_expr() * rhs.eta_coef
        if rhs.with_gamma and gamma_block in self.space:
            out = out + self.space.rvar(gamma_block)[idx]
        return out

    # -- Eve caps: exact-CSI worst-case-information model ----------------

    def ewci_dl(self, m: int, i: int, k: int) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        H = gch.h_eve[m]
        ne = gch.ne[m]
        g0 = float(exp.gamma_ed[i][m, k])
        a, b = log_majorant(g0)
        mu = sp.rvar(("mu", m, i))[k]
        hw = self.w_expr(i, k).lmul(H.conj().T) * math.sqrt(b)
        gamma = sp.rvar(("GammaD", i))[k]
        self.add(make_sum(
            [TermHyperbolic(a, self.alpha_expr(i)),
             TermQuadOverAffine(cforms(hw), mu),
             TermAffine(gamma * -1.0)],
            ("eve_dl_cap", m, i, k)))
        mu0 = float(exp.pt.mu_dl[i][m, k])
        a0 = exp.alpha[i]
        q = self._q_lin(m, i)
        own = self.w_expr(i, k).lmul((H @ (H.conj().T @ exp.pt.w[i][k]))[None, :].conj())
        own_minorant = own.re * 2.0 - float(np.sum(np.abs(H.conj().T @ exp.pt.w[i][k]) ** 2))
        lin = q * -1.0 + own_minorant + RExpr.constant(-float(ne))
        self.add(make_sum(
            [TermQuad((sp.rvar(("mu", m, i))[k] * (1.0 / math.sqrt(2.0 * mu0 * a0)),)),
             TermHyperbolic(mu0 / 2.0, self.alpha_expr(i) * 2.0 - a0),
             TermAffine(lin)],
            ("eve_dl_res", m, i, k)))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - mu)],
                          ("mu_domain", m, i, k), domain=True))

    def ewci_ul(self, m: int, i: int, ell: int) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        ne = gch.ne[m]
        gnorm2 = float(np.sum(np.abs(gch.g_eve[m][i][ell]) ** 2))
        g0 = float(exp.gamma_eu[i][m, ell])
        a, b = log_majorant(g0)
        mu = sp.rvar(("mut", m, i))[ell]
        gamma = sp.rvar(("GammaU", i))[ell]
        self.add(make_sum(
            [TermHyperbolic(a, self.alpha_expr(i)),
             TermQuadOverAffine((self.rho_expr(i, ell) * math.sqrt(b * gnorm2),), mu),
             TermAffine(gamma * -1.0)],
            ("eve_ul_cap", m, i, ell)))
        mu0 = float(exp.pt.mu_ul[i][m, ell])
        a0 = exp.alpha[i]
        rho0 = float(exp.pt.rho[i][ell])
        q = self._q_lin(m, i)
        own_minorant = self.rho_expr(i, ell) * (2.0 * rho0 * gnorm2) - rho0**2 * gnorm2
        lin = q * -1.0 + own_minorant + RExpr.constant(-float(ne))
        self.add(make_sum(
            [TermQuad((mu * (1.0 / math.sqrt(2.0 * mu0 * a0)),)),
             TermHyperbolic(mu0 / 2.0, self.alpha_expr(i) * 2.0 - a0),
             TermAffine(lin)],
            ("eve_ul_res", m, i, ell)))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - mu)],
                          ("mut_domain", m, i, ell), domain=True))

    def _q_lin(self, m: int, i: int) -> RExpr:
        """Tangent minorant of the total power the m-th Eve receives from
        group i (MUI + AN + UL), normalized units."""
        gch, exp, sp = self.gch, self.exp, self.space
        H = gch.h_eve[m]
        lin = RExpr.constant(0.0)
        const = 0.0
        for kp in range(gch.h[i].shape[0]):
            w0 = exp.pt.w[i][kp]
            lin = lin + self.w_expr(i, kp).lmul((H @ (H.conj().T @ w0))[None, :].conj()).re * 2.0
            const += float(np.sum(np.abs(H.conj().T @ w0) ** 2))
        if self.has_an(i):
            hv0 = H @ (H.conj().T @ exp.pt.V[i])
            lin = lin + trace_adj(sp, ("V", i), self.v_shape(i), hv0).re * 2.0
            const += float(np.sum(np.abs(H.conj().T @ exp.pt.V[i]) ** 2))
        for lp in range(gch.g[i].shape[0]):
            gn2 = float(np.sum(np.abs(gch.g_eve[m][i][lp]) ** 2))
            rho0 = float(exp.pt.rho[i][lp])
            lin = lin + self.rho_expr(i, lp) * (2.0 * rho0 * gn2)
            const += rho0**2 * gn2
        return lin - const

    # -- Eve caps: statistical-CSI model ---------------------------------

    def scsi_dl(self, i: int, k: int) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        M = gch.n_eves
        beta = sp.rvar(("betaD", i))[k]
        beta0 = float(exp.pt.beta_dl[i][k])
        a0 = exp.alpha[i]
        for m in range(M):
            ne = gch.ne[m]
            slack = (1.0 - self.params.eps_dl ** (1.0 / M)) * ne
            f_m = _psd_sqrt(gch.h_bar[m])
            qbar = self._qbar_lin(m, i)
            w0 = exp.pt.w[i][k]
            own = self.w_expr(i, k).lmul((gch.h_bar[m] @ w0)[None, :].conj()).re * 2.0 \
                - float(np.real(w0.conj() @ gch.h_bar[m] @ w0))
            lin = qbar * -1.0 + own + RExpr.constant(-slack)
            self.add(make_sum(
                [TermQuadOverAffine(cforms(self.w_expr(i, k).lmul(f_m)), beta),
                 TermAffine(lin)],
                ("scsi_dl_markov", m, i, k)))
        a, b = log_majorant(beta0)
        gamma = sp.rvar(("GammaD", i))[k]
        self.add(make_sum(
            [TermHyperbolic(a, self.alpha_expr(i)),
             TermQuad((beta * math.sqrt(b / (2.0 * beta0 * a0)),)),
             TermHyperbolic(b * beta0 / 2.0, self.alpha_expr(i) * 2.0 - a0),
             TermAffine(gamma * -1.0)],
            ("scsi_dl_cap", i, k)))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - beta)],
                          ("betaD_domain", i, k), domain=True))

    def scsi_ul(self, i: int, ell: int) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        M = gch.n_eves
        beta = sp.rvar(("betaU", i))[ell]
        beta0 = float(exp.pt.beta_ul[i][ell])
        a0 = exp.alpha[i]
        rho0 = float(exp.pt.rho[i][ell])
        for m in range(M):
            ne = gch.ne[m]
            slack = (1.0 - self.params.eps_ul ** (1.0 / M)) * ne
            gbar = float(gch.g_bar[m][i][ell])
            qbar = self._qbar_lin(m, i)
            own = self.rho_expr(i, ell) * (2.0 * rho0 * gbar) - rho0**2 * gbar
            lin = qbar * -1.0 + own + RExpr.constant(-slack)
            self.add(make_sum(
                [TermQuadOverAffine((self.rho_expr(i, ell) * math.sqrt(gbar),), beta),
                 TermAffine(lin)],
                ("scsi_ul_markov", m, i, ell)))
        a, b = log_majorant(beta0)
        gamma = sp.rvar(("GammaU", i))[ell]
        self.add(make_sum(
            [TermHyperbolic(a, self.alpha_expr(i)),
             TermQuad((beta * math.sqrt(b / (2.0 * beta0 * a0)),)),
             TermHyperbolic(b * beta0 / 2.0, self.alpha_expr(i) * 2.0 - a0),
             TermAffine(gamma * -1.0)],
            ("scsi_ul_cap", i, ell)))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - beta)],
                          ("betaU_domain", i, ell), domain=True))

    def _qbar_lin(self, m: int, i: int) -> RExpr:
        """SCSI analogue of the Eve received-power minorant, using second
        moments instead of instantaneous channels."""
        gch, exp, sp = self.gch, self.exp, self.space
        hb = gch.h_bar[m]
        lin = RExpr.constant(0.0)
        const = 0.0
        for kp in range(gch.h[i].shape[0]):
            w0 = exp.pt.w[i][kp]
            lin = lin + self.w_expr(i, kp).lmul((hb @ w0)[None, :].conj()).re * 2.0
            const += float(np.real(w0.conj() @ hb @ w0))
        if self.has_an(i):
            v0 = exp.pt.V[i]
            lin = lin + trace_adj(sp, ("V", i), self.v_shape(i), hb @ v0).re * 2.0
            const += float(np.real(np.trace(v0.conj().T @ hb @ v0)))
        for lp in range(gch.g[i].shape[0]):
            gbar = float(gch.g_bar[m][i][lp])
            rho0 = float(exp.pt.rho[i][lp])
            lin = lin + self.rho_expr(i, lp) * (2.0 * rho0 * gbar)
            const += rho0**2 * gbar
        return lin - const

    # -- Eve caps: worst-case MMSE decoder --------------------------------

    def wcs_dl(self, m: int, i: int, k: int) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        ne = gch.ne[m]
        t = sp.rvar(("t", m, i))[k]
        t0 = float(exp.pt.t_dl[i][m, k])
        a0 = exp.alpha[i]
        a, b = log_majorant(t0)
        gamma = sp.rvar(("GammaD", i))[k]
        self.add(make_sum(
            [TermHyperbolic(a, self.alpha_expr(i)),
             TermQuad((t * math.sqrt(b / (2.0 * t0 * a0)),)),
             TermHyperbolic(b * t0 / 2.0, self.alpha_expr(i) * 2.0 - a0),
             TermAffine(gamma * -1.0)],
            ("wcs_dl_cap", m, i, k)))
        hw = self.w_expr(i, k).lmul(gch.h_eve[m].conj().T)   # H^H w, (ne,)
        entries = _lmi_entries(t, hw, self._sigma_lin(m, i), ne)
        self.add(PsdLmi(entries, 1 + ne, ("wcs_dl_lmi", m, i, k)))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - t)],
                          ("t_domain", m, i, k), domain=True))

    def wcs_ul(self, m: int, i: int, ell: int) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        ne = gch.ne[m]
        t = sp.rvar(("tt", m, i))[ell]
        t0 = float(exp.pt.t_ul[i][m, ell])
        a0 = exp.alpha[i]
        a, b = log_majorant(t0)
        gamma = sp.rvar(("GammaU", i))[ell]
        self.add(make_sum(
            [TermHyperbolic(a, self.alpha_expr(i)),
             TermQuad((t * math.sqrt(b / (2.0 * t0 * a0)),)),
             TermHyperbolic(b * t0 / 2.0, self.alpha_expr(i) * 2.0 - a0),
             TermAffine(gamma * -1.0)],
            ("wcs_ul_cap", m, i, ell)))
        g_row = gch.g_eve[m][i][ell]    # (ne,) row vector
        rho_c = _to_cexpr(self.rho_expr(i, ell))
        gw = CExpr({k_: np.outer(g_row, v[0]) for k_, v in rho_c.coef.items()},
                   np.zeros(ne, dtype=complex))
        entries = _lmi_entries(t, gw.conj(), self._sigma_lin(m, i), ne)
        self.add(PsdLmi(entries, 1 + ne, ("wcs_ul_lmi", m, i, ell)))
        self.add(make_sum([TermAffine(RExpr.constant(self.params.delta_mu) - t)],
                          ("tt_domain", m, i, ell), domain=True))

    def wcs_trust(self, m: int, i: int) -> None:
        self.add(PsdLmi(self._sigma_lin(m, i), self.gch.ne[m], ("wcs_trust", m, i)))

    def _sigma_lin(self, m: int, i: int) -> CExpr:
        """Linearized AN covariance at the Eve: H^H (V V0^H + V0 V^H - V0 V0^H) H,
        affine in V, value as vec (column-major)."""
        gch, exp, sp = self.gch, self.exp, self.space
        ne = gch.ne[m]
        if not self.has_an(i):
            return CExpr({}, np.zeros(ne * ne, dtype=complex))
        H = gch.h_eve[m]
        nt = gch.n_tx
        v0 = exp.pt.V[i]
        vexpr = sp.cvar(("V", i))
        b1 = v0.conj().T @ H                       # V0^H H, (nt, ne)
        m1 = vexpr.lmul(np.kron(b1.T, H.conj().T))
        a2 = H.conj().T @ v0                       # (ne, nt)
        perm = _transpose_perm(nt)
        m2 = vexpr.conj().lmul(np.kron(H.T, a2) @ perm)
        const = -(H.conj().T @ v0 @ v0.conj().T @ H).reshape(-1, order="F")
        return m1 + m2 + const

    # -- power, fractional time, alpha domain ------------------------------

    def power(self) -> None:
        gch, exp, sp = self.gch, self.exp, self.space
        params = self.params
        if params.alpha_fixed is not None:
            forms = []
            for i in range(gch.n_groups):
                s = math.sqrt(1.0 / params.alpha_fixed[i])
                for k in range(gch.h[i].shape[0]):
                    forms.append(self.w_expr(i, k) * s)
                if self.has_an(i):
                    forms.append(sp.cvar(("V", i)) * s)
            if forms:
                self.add(make_sum(
                    [TermQuad(cforms(*forms)), TermAffine(RExpr.constant(-params.pbs_max_w))],
                    ("bs_power",)))
            for i in range(gch.n_groups):
                tau_i = 1.0 / params.alpha_fixed[i]
                for ell in range(gch.g[i].shape[0]):
                    self.add(make_sum(
                        [TermQuad((self.rho_expr(i, ell) * math.sqrt(tau_i),)),
                         TermAffine(RExpr.constant(-params.pu_max_w))],
                        ("ul_power", i, ell)))
            return
        if gch.n_groups != 2:
            raise ValueError("free fractional time requires exactly two groups")
        alpha2 = self.alpha_expr(1)
        a2_0 = exp.alpha[1]
        forms1 = [self.w_expr(0, k) for k in range(gch.h[0].shape[0])]
        if self.has_an(0):
            forms1.append(sp.cvar(("V", 0)))
        forms2 = [self.w_expr(1, k) for k in range(gch.h[1].shape[0])]
        if self.has_an(1):
            forms2.append(sp.cvar(("V", 1)))
        q1_0 = float(np.sum(np.abs(exp.pt.w[0]) ** 2)) + float(np.sum(np.abs(exp.pt.V[0]) ** 2))
        cross = RExpr.constant(0.0)
        for k in range(gch.h[0].shape[0]):
            cross = cross + self.w_expr(0, k).lmul(exp.pt.w[0][k][None, :].conj()).re
        if self.has_an(0):
            cross = cross + trace_adj(sp, ("V", 0), self.v_shape(0), exp.pt.V[0]).re
        lin = alpha2 * (q1_0 / a2_0**2) - cross * (2.0 / a2_0) \
            + RExpr.constant(-params.pbs_max_w)
        self.add(make_sum(
            [TermQuad(cforms(*forms1)),
             TermQuadOverAffine(cforms(*forms2), alpha2),
             TermAffine(lin)],
            ("bs_power",)))
        for ell in range(gch.g[0].shape[0]):
            rho0 = float(exp.pt.rho[0][ell])
            lin = self.rho_expr(0, ell) * (-2.0 * rho0 / a2_0) \
                + alpha2 * (rho0**2 / a2_0**2) + RExpr.constant(-params.pu_max_w)
            self.add(make_sum(
                [TermQuad((self.rho_expr(0, ell),)), TermAffine(lin)],
                ("ul_power", 0, ell)))
        for ell in range(gch.g[1].shape[0]):
            self.add(make_sum(
                [TermQuadOverAffine((self.rho_expr(1, ell),), alpha2),
                 TermAffine(RExpr.constant(-params.pu_max_w))],
                ("ul_power", 1, ell)))

    def fractional_time(self) -> None:
        if self.params.alpha_fixed is not None:
            return
        self.add(make_sum(
            [TermHyperbolic(1.0, self.alpha_expr(0)),
             TermHyperbolic(1.0, self.alpha_expr(1)),
             TermAffine(RExpr.constant(-1.0))],
            ("ft",)))
        for i in range(self.gch.n_groups):
            self.add(make_sum(
                [TermAffine(RExpr.constant(1.0 + self.params.delta_alpha) - self.alpha_expr(i))],
                ("alpha_domain", i), domain=True))
            self.add(make_sum(
                [TermAffine(RExpr.constant(self.exp.alpha[i] + self.params.delta_alpha)
                            - self.alpha_expr(i) * 2.0)],
                ("alpha_halftrust", i), domain=True))


def _to_cexpr(r: RExpr) -> CExpr:
    return CExpr({k: v.astype(complex) for k, v in r.coef.items()}, r.const.astype(complex))


def _transpose_perm(n: int) -> np.ndarray:
    """Permutation P with vec(M^T) = P vec(M) for n-by-n M (column-major)."""
    p = np.zeros((n * n, n * n))
    for r in range(n):
        for c in range(n):
            p[c + r * n, r + c * n] = 1.0
    return p


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    a = 0.5 * (a + a.conj().T)
    lam, u = np.linalg.eigh(a)
    if lam.size and lam.min() < -1e-9 * max(1.0, float(lam.max())):
        raise ValueError("second-moment matrix is not PSD")
    lam = np.maximum(lam, 0.0)
    return (u * np.sqrt(lam)) @ u.conj().T


def _lmi_entries(t: RExpr, hw: CExpr, sigma: CExpr, ne: int) -> CExpr:
    """vec of [[t, hw^H], [hw, Sigma + I]] (column-major), Hermitian affine.

    hw is the column H^H w; sigma the vec of the linearized AN covariance.
    """
    n = 1 + ne
    t_c = _to_cexpr(t)
    rows = []
    for c in range(n):
        for r in range(n):
            if r == 0 and c == 0:
                rows.append(t_c)
            elif c == 0:
                rows.append(hw[r - 1])
            elif r == 0:
                rows.append(hw[c - 1].conj())
            else:
                e = sigma[(r - 1) + (c - 1) * ne]
                if r == c:
                    e = e + 1.0     # normalized noise on the diagonal
                rows.append(e)
    return stack_c(rows)


def stack_c(exprs: list[CExpr]) -> CExpr:
    keys = []
    for e in exprs:
        for k in e.coef:
            if k not in keys:
                keys.append(k)
    n = len(exprs)
    coef = {}
    const = np.zeros(n, dtype=complex)
    sizes = {}
    for e in exprs:
        for k, v in e.coef.items():
            sizes[k] = v.shape[1]
    for k in keys:
        coef[k] = np.zeros((n, sizes[k]), dtype=complex)
    for r, e in enumerate(exprs):
        const[r] = e.const[0]
        for k, v in e.coef.items():
            coef[k][r, :] = v[0, :]
    return CExpr(coef, const)


# ---------------------------------------------------------------------------
# Full assembly per mode
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class AssemblyOptions:
    """What the subproblem constrains: Eve caps on/off and the rate RHS."""

    include_eves: bool = True
    dl_rhs: RateRhs | None = None
    ul_rhs: RateRhs | None = None


def declare_variables(space: VarSpace, gch: GroupedChannels, mode: str,
                      params: ProblemParams, include_eves: bool,
                      exp: ExpansionPoint | None = None,
                      ul_rate_constrained: bool = True) -> None:
    """Declare every primary block in the deterministic order: per-group
    design variables, then time/objective scalars, then caps and mode
    auxiliaries.  Auxiliaries whose natural magnitude is far from one get
    their expansion value as solver scale."""

    def aux_scale(arr) -> np.ndarray:
        a = np.abs(np.asarray(arr, dtype=float)).reshape(-1)
        return np.maximum(a, 1e-3)

    for i in range(gch.n_groups):
        K = gch.h[i].shape[0]
        L = gch.g[i].shape[0]
        for k in range(K):
            space.add_complex(("w", i, k), gch.n_tx)
        if K:
            space.add_complex(("V", i), gch.n_tx * gch.n_tx)
        if L:
            space.add_real(("rho", i), L)
    if params.alpha_fixed is None:
        space.add_real(("alpha",), gch.n_groups)
    space.add_real(("eta",), 1)
    if params.ul_bound == "strong" and ul_rate_constrained:
        for i in range(gch.n_groups):
            su = aux_scale(exp.gamma_ul[i]) if exp is not None else None
            space.add_real(("uGam", i), gch.g[i].shape[0], scale=su)
    if include_eves and gch.n_eves:
        pt = exp.pt if exp is not None else None
        for i in range(gch.n_groups):
            space.add_real(("GammaD", i), gch.h[i].shape[0])
        for i in range(gch.n_groups):
            space.add_real(("GammaU", i), gch.g[i].shape[0])
        for m in range(gch.n_eves):
            for i in range(gch.n_groups):
                if mode == "EWCI":
                    sd = aux_scale(pt.mu_dl[i][m]) if pt is not None else None
                    su = aux_scale(pt.mu_ul[i][m]) if pt is not None else None
                    space.add_real(("mu", m, i), gch.h[i].shape[0], scale=sd)
                    space.add_real(("mut", m, i), gch.g[i].shape[0], scale=su)
                elif mode == "WCS":
                    sd = aux_scale(pt.t_dl[i][m]) if pt is not None else None
                    su = aux_scale(pt.t_ul[i][m]) if pt is not None else None
                    space.add_real(("t", m, i), gch.h[i].shape[0], scale=sd)
                    space.add_real(("tt", m, i), gch.g[i].shape[0], scale=su)
        if mode == "SCSI":
            for i in range(gch.n_groups):
                sd = aux_scale(pt.beta_dl[i]) if pt is not None else None
                su = aux_scale(pt.beta_ul[i]) if pt is not None else None
                space.add_real(("betaD", i), gch.h[i].shape[0], scale=sd)
                space.add_real(("betaU", i), gch.g[i].shape[0], scale=su)


def assemble_sketches(space: VarSpace, exp: ExpansionPoint, params: ProblemParams,
                      options: AssemblyOptions) -> list[Sketch]:
    b = SketchBuilder(space, exp, params)
    gch = exp.gch
    for i in range(gch.n_groups):
        for k in range(gch.h[i].shape[0]):
            b.dl_user(i, k, options.dl_rhs)
        for ell in range(gch.g[i].shape[0]):
            b.ul_user(i, ell, options.ul_rhs)
    if options.include_eves and gch.n_eves:
        for m in range(gch.n_eves):
            for i in range(gch.n_groups):
                if params.mode == "EWCI":
                    for k in range(gch.h[i].shape[0]):
                        b.ewci_dl(m, i, k)
                    for ell in range(gch.g[i].shape[0]):
                        b.ewci_ul(m, i, ell)
                elif params.mode == "WCS":
                    if gch.h[i].shape[0]:    # AN (and hence Sigma) exists only with DL users
                        b.wcs_trust(m, i)
                    for k in range(gch.h[i].shape[0]):
                        b.wcs_dl(m, i, k)
                    for ell in range(gch.g[i].shape[0]):
                        b.wcs_ul(m, i, ell)
        if params.mode == "SCSI":
            for i in range(gch.n_groups):
                for k in range(gch.h[i].shape[0]):
                    b.scsi_dl(i, k)
                for ell in range(gch.g[i].shape[0]):
                    b.scsi_ul(i, ell)
    b.power()
    b.fractional_time()
    return b.sketches
