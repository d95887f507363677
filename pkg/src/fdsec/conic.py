"""Real-valued conic-program intermediate representation.

A ConicProgram is `maximize c.z  s.t.  b_j + A_j z in K_j` over blocks with
cones in {nonnegative, second-order, rotated second-order, PSD}.  The
translator turns constraint sketches into blocks, introducing one slack
variable per non-affine term of each sum inequality; complex PSD
requirements become real symmetric embeddings of doubled size.

Cone row layouts:
  soc    rows = (s, u)       with  ||u|| <= s
  rsoc   rows = (s, q, u)    with  ||u||^2 <= 2 s q,  s, q >= 0
  psd    rows = vec(S) column-major (n*n rows), S symmetric PSD
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import sparse

from fdsec.approx import (
    AssemblyOptions,
    ExpansionPoint,
    ProblemParams,
    PsdLmi,
    Sketch,
    SumLe,
    TermAffine,
    TermHyperbolic,
    TermQuad,
    TermQuadOverAffine,
    assemble_sketches,
    declare_variables,
)
from fdsec.exprs import RExpr, VarSpace
from fdsec.rates import DesignPoint
from fdsec.scenario import GroupedChannels


@dataclasses.dataclass(frozen=True)
class ConeBlock:
    kind: str                   # nonneg | soc | rsoc | psd
    A: sparse.csr_matrix        # (dim, n)
    b: np.ndarray
    psd_n: int | None = None
    labels: tuple = ()

    @property
    def dim(self) -> int:
        return self.b.size

    def values(self, z: np.ndarray) -> np.ndarray:
        return self.b + self.A @ z


@dataclasses.dataclass(frozen=True)
class ConicProgram:
    space: VarSpace
    c: np.ndarray               # maximize c.z
    obj_offset: float
    blocks: tuple[ConeBlock, ...]
    slack_terms: tuple[tuple[tuple, object], ...]   # (slack block key, term)
    n_sketches: int
    family_count: int           # constraint families, domain guards excluded

    @property
    def n_vars(self) -> int:
        return self.space.n

    def objective_value(self, z: np.ndarray) -> float:
        return float(self.c @ z) + self.obj_offset

    def encode_point(self, vals: dict) -> np.ndarray:
        """Embed primary-variable values, computing each slack as its term value."""
        full = dict(vals)
        for key, term in self.slack_terms:
            full[key] = np.array([term.value(vals)])
        return self.space.assemble(full)

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(f"vars {self.n_vars}\nobjective {np.array2string(self.c, threshold=10**9)}\n")
            for blk in self.blocks:
                fh.write(f"block {blk.kind} dim {blk.dim} psd_n {blk.psd_n}\n")
                coo = blk.A.tocoo()
                for r, c_, v in zip(coo.row, coo.col, coo.data):
                    fh.write(f"  A {r} {c_} {v!r}\n")
                for r, v in enumerate(blk.b):
                    if v:
                        fh.write(f"  b {r} {v!r}\n")


def _normalize_block(a: sparse.csr_matrix, b: np.ndarray):
    """Scale a whole cone block by a positive scalar (cone-invariant) so its
    largest entry is O(1); prunes coefficient dust far below the block scale."""
    scale = max(float(np.abs(a.data).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-300)
    a = a / scale
    a.data[np.abs(a.data) < 1e-14] = 0.0
    a.eliminate_zeros()
    return a.tocsr(), b / scale


def _normalize_rsoc(a: sparse.csr_matrix, b: np.ndarray, z_ref: np.ndarray | None):
    """Two-parameter rotated-cone normalization: (s, q, u) -> (s/s0, q/q0,
    u/sqrt(s0 q0)) keeps membership and makes every row O(1) at the
    reference point, removing intra-cone scale disparity."""
    if z_ref is None:
        return _normalize_block(a, b)
    v = b + a @ z_ref
    coef_max = max(float(np.abs(a.data).max(initial=0.0)), 1e-300)
    floor = max(1e-9 * coef_max, 1e-12)
    s0 = max(abs(float(v[0])), floor)
    q0 = max(abs(float(v[1])), floor)
    d = np.full(b.size, 1.0 / math.sqrt(s0 * q0))
    d[0] = 1.0 / s0
    d[1] = 1.0 / q0
    dm = sparse.diags(d)
    a = (dm @ a).tocsr()
    a.data[np.abs(a.data) < 1e-14 * max(float(np.abs(a.data).max(initial=0.0)), 1.0)] = 0.0
    a.eliminate_zeros()
    return a, d * b


def _normalize_psd(a: sparse.csr_matrix, b: np.ndarray, z_ref: np.ndarray | None):
    if z_ref is None:
        return _normalize_block(a, b)
    v = b + a @ z_ref
    coef_max = max(float(np.abs(a.data).max(initial=0.0)), 1e-300)
    scale = max(float(np.abs(v).max(initial=0.0)), 1e-9 * coef_max, 1e-12)
    a = a / scale
    a.data[np.abs(a.data) < 1e-14 * max(float(np.abs(a.data).max(initial=0.0)), 1.0)] = 0.0
    a.eliminate_zeros()
    return a.tocsr(), b / scale


def _normalize_rows(a: sparse.csr_matrix, b: np.ndarray):
    """Per-row positive scaling for nonnegativity rows."""
    a = a.tocsr()
    row_max = np.zeros(b.size)
    for r in range(b.size):
        seg = a.data[a.indptr[r]:a.indptr[r + 1]]
        row_max[r] = max(float(np.abs(seg).max(initial=0.0)), abs(float(b[r])), 1e-300)
    d = sparse.diags(1.0 / row_max)
    a = (d @ a).tocsr()
    a.data[np.abs(a.data) < 1e-14] = 0.0
    a.eliminate_zeros()
    return a, b / row_max


class _Assembler:
    def __init__(self, space: VarSpace):
        self.space = space
        self.rows: list[float] = []
        self._r: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self.row0 = 0

    def add_expr(self, e: RExpr) -> None:
        """Emit expression rows, converting physical coefficients into the
        scaled column units of the solver vector."""
        off = self.space.offsets()
        for k, mat in e.coef.items():
            base = off[k]
            scale = self.space.scale_of(k)
            rr, cc = np.nonzero(mat)
            if rr.size:
                self._r.append(rr + self.row0)
                self._c.append(cc + base)
                self._v.append(mat[rr, cc] * scale[cc])
        self.rows.extend(float(x) for x in e.const)
        self.row0 += e.n_out

    def add_dense(self, dense: np.ndarray, const: np.ndarray) -> None:
        """Rows already mapped to scaled global columns."""
        rr, cc = np.nonzero(dense)
        if rr.size:
            self._r.append(rr + self.row0)
            self._c.append(cc)
            self._v.append(dense[rr, cc])
        self.rows.extend(float(x) for x in const)
        self.row0 += dense.shape[0]

    def add_const_row(self, const: float) -> None:
        self.rows.append(const)
        self.row0 += 1

    def build(self, n: int) -> tuple[sparse.csr_matrix, np.ndarray]:
        if self._r:
            r = np.concatenate(self._r)
            c = np.concatenate(self._c)
            v = np.concatenate(self._v)
            a = sparse.csr_matrix((v, (r, c)), shape=(self.row0, n))
        else:
            a = sparse.csr_matrix((self.row0, n))
        return a, np.asarray(self.rows)


def _expr_dense(space: VarSpace, e) -> tuple[np.ndarray, np.ndarray]:
    """Materialize an expression over the full scaled column space."""
    off = space.offsets()
    out = np.zeros((e.n_out, space.n), dtype=e.const.dtype)
    for k, mat in e.coef.items():
        scale = space.scale_of(k)
        out[:, off[k]:off[k] + mat.shape[1]] = mat * scale[None, :]
    return out, e.const


def translate(space: VarSpace, sketches: list[Sketch], objective: RExpr,
              obj_offset: float = 0.0, ref_vals: dict | None = None) -> ConicProgram:
    """Lower sketches into cone blocks over the (extended) variable space.

    When reference values (typically the expansion point) are supplied,
    each slack variable is scaled to its term's reference magnitude so the
    solver sees unit-order variables.
    """
    slack_terms: list[tuple[tuple, object]] = []
    cone_specs: list[tuple[str, object, tuple]] = []    # deferred cone emissions
    nonneg_exprs: list[tuple[RExpr, tuple]] = []
    n_slack = sum(1 for k in space.keys if k and k[0] == "slack")
    family = 0
    for sk in sketches:
        if isinstance(sk, PsdLmi):
            cone_specs.append(("psd", sk, sk.label))
            continue
        if not sk.domain:
            family += 1
        lin = RExpr.constant(0.0)
        cone_terms = []
        for term in sk.terms:
            if isinstance(term, TermAffine):
                lin = lin + term.expr
            else:
                cone_terms.append(term)
        if not cone_terms:
            nonneg_exprs.append((lin * -1.0, sk.label))
            continue
        # all terms but one get an epigraph slack; the largest-magnitude
        # term absorbs the affine part directly so the folded row's scale
        # matches its cone (no always-binding linear row, no microscopic
        # cone against large coefficients)
        if ref_vals is not None and len(cone_terms) > 1:
            mags = [abs(t.value(ref_vals)) for t in cone_terms]
            fold_at = int(np.argmax(mags))
        else:
            fold_at = len(cone_terms) - 1
        folded = cone_terms[fold_at]
        for term in cone_terms[:fold_at] + cone_terms[fold_at + 1:]:
            key = ("slack", n_slack)
            n_slack += 1
            scale = 1.0
            if ref_vals is not None:
                scale = max(1e-3, abs(term.value(ref_vals)))
            space.add_real(key, 1, primary=False, scale=scale)
            slack_terms.append((key, term))
            lin = lin + space.rvar(key)[0]
            cone_specs.append(("term", (term, space.rvar(key)[0]), sk.label))
        cone_specs.append(("term", (folded, lin * -1.0), sk.label))

    blocks: list[ConeBlock] = []
    n = space.n     # final count including slacks

    z_ref = None
    if ref_vals is not None:
        full = dict(ref_vals)
        for key, term in slack_terms:
            full[key] = np.array([term.value(ref_vals)])
        z_ref = space.assemble(full)

    asm = _Assembler(space)
    labels = []
    for e, lab in nonneg_exprs:
        asm.add_expr(e)
        labels.append(lab)
    a, b = asm.build(n)
    a, b = _normalize_rows(a, b)
    blocks.append(ConeBlock("nonneg", a, b, labels=tuple(labels)))

    for kind, payload, label in cone_specs:
        if kind == "psd":
            sk: PsdLmi = payload
            blocks.append(_psd_block(space, sk, n, z_ref))
            continue
        term, s_expr = payload
        asm = _Assembler(space)
        if isinstance(term, TermQuad):
            asm.add_expr(s_expr)
            asm.add_const_row(0.5)
            for f in term.forms:
                asm.add_expr(f)
        elif isinstance(term, TermQuadOverAffine):
            asm.add_expr(s_expr)
            asm.add_expr(term.theta * 0.5)
            for f in term.forms:
                asm.add_expr(f)
        elif isinstance(term, TermHyperbolic):
            asm.add_expr(s_expr)
            asm.add_expr(term.theta * 0.5)
            asm.add_const_row(math.sqrt(term.c))
        else:
            raise TypeError(f"unknown term {term!r}")
        a, b = asm.build(n)
        a, b = _normalize_rsoc(a, b, z_ref)
        blocks.append(ConeBlock("rsoc", a, b, labels=(label,)))

    asm = _Assembler(space)
    asm.add_expr(objective)
    a_obj, b_obj = asm.build(n)
    c = np.asarray(a_obj.todense()).reshape(-1)
    return ConicProgram(
        space=space, c=c, obj_offset=obj_offset + float(b_obj[0]),
        blocks=tuple(blocks), slack_terms=tuple(slack_terms),
        n_sketches=len(sketches), family_count=family,
    )


def _psd_block(space: VarSpace, sk: PsdLmi, n: int, z_ref: np.ndarray | None) -> ConeBlock:
    """Real symmetric embedding [[Re M, -Im M], [Im M, Re M]] of the complex
    Hermitian affine matrix, with explicit symmetrization."""
    m = sk.n
    dim = 2 * m
    cd, cc = _expr_dense(space, sk.mat)
    re_d, re_c = cd.real, cc.real
    im_d, im_c = cd.imag, cc.imag

    def idx(r: int, c: int) -> int:
        return r + c * m

    rows_d = np.zeros((dim * dim, n))
    rows_c = np.zeros(dim * dim)
    for c2 in range(dim):
        for r2 in range(dim):
            acc_d = np.zeros(n)
            acc_c = 0.0
            for (rr, ccol) in ((r2, c2), (c2, r2)):
                if rr < m and ccol < m:
                    acc_d += 0.5 * re_d[idx(rr, ccol)]
                    acc_c += 0.5 * re_c[idx(rr, ccol)]
                elif rr >= m and ccol >= m:
                    acc_d += 0.5 * re_d[idx(rr - m, ccol - m)]
                    acc_c += 0.5 * re_c[idx(rr - m, ccol - m)]
                elif rr >= m and ccol < m:
                    acc_d += 0.5 * im_d[idx(rr - m, ccol)]
                    acc_c += 0.5 * im_c[idx(rr - m, ccol)]
                else:
                    acc_d -= 0.5 * im_d[idx(rr, ccol - m)]
                    acc_c -= 0.5 * im_c[idx(rr, ccol - m)]
            pos = r2 + c2 * dim
            rows_d[pos] = acc_d
            rows_c[pos] = acc_c
    asm = _Assembler(space)
    asm.add_dense(rows_d, rows_c)
    a, b = asm.build(n)
    a, b = _normalize_psd(a, b, z_ref)
    return ConeBlock("psd", a, b, psd_n=dim, labels=(sk.label,))


# ---------------------------------------------------------------------------
# Point encoding and subproblem builders
# ---------------------------------------------------------------------------


def point_values(gch: GroupedChannels, pt: DesignPoint, params: ProblemParams,
                 mode: str, include_eves: bool) -> dict:
    """Primary-variable slot values for a design point (layout-agnostic)."""
    vals: dict = {}
    for i in range(gch.n_groups):
        K = gch.h[i].shape[0]
        L = gch.g[i].shape[0]
        for k in range(K):
            vals[("w", i, k)] = VarSpace.encode_complex(pt.w[i][k])
        if K:
            vals[("V", i)] = VarSpace.encode_complex(pt.V[i])
        if L:
            vals[("rho", i)] = np.asarray(pt.rho[i], dtype=float)
    if params.alpha_fixed is None:
        vals[("alpha",)] = np.array([1.0 / t for t in pt.tau])
    vals[("eta",)] = np.array([pt.eta if pt.eta is not None else 0.0])
    if include_eves and gch.n_eves:
        for i in range(gch.n_groups):
            if pt.gamma_dl is not None and gch.h[i].shape[0]:
                vals[("GammaD", i)] = np.asarray(pt.gamma_dl[i], dtype=float)
            if pt.gamma_ul is not None and gch.g[i].shape[0]:
                vals[("GammaU", i)] = np.asarray(pt.gamma_ul[i], dtype=float)
        for m in range(gch.n_eves):
            for i in range(gch.n_groups):
                if mode == "EWCI" and pt.mu_dl is not None:
                    if gch.h[i].shape[0]:
                        vals[("mu", m, i)] = np.asarray(pt.mu_dl[i][m], dtype=float)
                    if gch.g[i].shape[0]:
                        vals[("mut", m, i)] = np.asarray(pt.mu_ul[i][m], dtype=float)
                elif mode == "WCS" and pt.t_dl is not None:
                    if gch.h[i].shape[0]:
                        vals[("t", m, i)] = np.asarray(pt.t_dl[i][m], dtype=float)
                    if gch.g[i].shape[0]:
                        vals[("tt", m, i)] = np.asarray(pt.t_ul[i][m], dtype=float)
        if mode == "SCSI" and pt.beta_dl is not None:
            for i in range(gch.n_groups):
                if gch.h[i].shape[0]:
                    vals[("betaD", i)] = np.asarray(pt.beta_dl[i], dtype=float)
                if gch.g[i].shape[0]:
                    vals[("betaU", i)] = np.asarray(pt.beta_ul[i], dtype=float)
    return vals


def extract_point(space: VarSpace, z: np.ndarray, gch: GroupedChannels,
                  params: ProblemParams, mode: str, include_eves: bool) -> DesignPoint:
    """Decode a conic solution vector back into a DesignPoint."""
    vals = space.split(z)
    nt = gch.n_tx
    w, v, rho = [], [], []
    for i in range(gch.n_groups):
        K = gch.h[i].shape[0]
        L = gch.g[i].shape[0]
        w.append(np.array([VarSpace.decode_complex(vals[("w", i, k)], (nt,)) for k in range(K)])
                 if K else np.zeros((0, nt), dtype=complex))
        v.append(VarSpace.decode_complex(vals[("V", i)], (nt, nt)) if K
                 else np.zeros((nt, nt), dtype=complex))
        rho.append(np.maximum(vals[("rho", i)], 0.0) if L else np.zeros(0))
    if params.alpha_fixed is None:
        alpha = np.maximum(vals[("alpha",)], 1.0 + params.delta_alpha / 2)
        tau = tuple(1.0 / a for a in alpha)
    else:
        tau = tuple(1.0 / a for a in params.alpha_fixed)
    eta = float(vals[("eta",)][0])
    kw: dict = {}
    if include_eves and gch.n_eves:
        M = gch.n_eves
        if ("GammaD", 0) in space or any(("GammaD", i) in space for i in range(gch.n_groups)):
            kw["gamma_dl"] = tuple(
                vals.get(("GammaD", i), np.zeros(gch.h[i].shape[0])) for i in range(gch.n_groups))
            kw["gamma_ul"] = tuple(
                vals.get(("GammaU", i), np.zeros(gch.g[i].shape[0])) for i in range(gch.n_groups))
        if mode == "EWCI":
            kw["mu_dl"] = tuple(
                np.stack([vals[("mu", m, i)] for m in range(M)]) if gch.h[i].shape[0]
                else np.zeros((M, 0)) for i in range(gch.n_groups))
            kw["mu_ul"] = tuple(
                np.stack([vals[("mut", m, i)] for m in range(M)]) if gch.g[i].shape[0]
                else np.zeros((M, 0)) for i in range(gch.n_groups))
        elif mode == "WCS":
            kw["t_dl"] = tuple(
                np.stack([vals[("t", m, i)] for m in range(M)]) if gch.h[i].shape[0]
                else np.zeros((M, 0)) for i in range(gch.n_groups))
            kw["t_ul"] = tuple(
                np.stack([vals[("tt", m, i)] for m in range(M)]) if gch.g[i].shape[0]
                else np.zeros((M, 0)) for i in range(gch.n_groups))
        elif mode == "SCSI":
            kw["beta_dl"] = tuple(
                vals.get(("betaD", i), np.zeros(0)) for i in range(gch.n_groups))
            kw["beta_ul"] = tuple(
                vals.get(("betaU", i), np.zeros(0)) for i in range(gch.n_groups))
    return DesignPoint(w=tuple(w), V=tuple(v), rho=tuple(rho), tau=tau, eta=eta, **kw)


def expansion_values(exp: ExpansionPoint, params: ProblemParams, mode: str,
                     include_eves: bool, eta: float = 0.0) -> dict:
    """Complete primary-variable values at the expansion point (including
    the uplink SINR epigraphs), usable for slack scaling and feasibility
    plug-in checks."""
    vals = point_values(exp.gch, exp.pt, params, mode, include_eves)
    vals[("eta",)] = np.array([eta])
    if params.ul_bound == "strong":
        for i in range(exp.gch.n_groups):
            if exp.gch.g[i].shape[0]:
                vals[("uGam", i)] = np.asarray(exp.gamma_ul[i], dtype=float)
    return vals


def build_subproblem(mode: str, exp: ExpansionPoint, params: ProblemParams,
                     options: AssemblyOptions) -> ConicProgram:
    """One inner convex program at the current expansion point."""
    space = VarSpace()
    declare_variables(space, exp.gch, mode, params, options.include_eves, exp=exp,
                      ul_rate_constrained=options.ul_rhs is not None)
    sketches = assemble_sketches(space, exp, params, options)
    objective = space.rvar(("eta",)) * 1.0
    ref = expansion_values(exp, params, mode, options.include_eves)
    return translate(space, sketches, objective[0], ref_vals=ref)


def build_feasibility_program(exp: ExpansionPoint, params: ProblemParams,
                              dl_rhs, ul_rhs, eta_bar_min: float = 0.0) -> ConicProgram:
    """Initialization program: legitimate-user and power sketches only,
    objective eta - eta_bar_min."""
    space = VarSpace()
    declare_variables(space, exp.gch, params.mode, params, include_eves=False, exp=exp,
                      ul_rate_constrained=ul_rhs is not None)
    options = AssemblyOptions(include_eves=False, dl_rhs=dl_rhs, ul_rhs=ul_rhs)
    sketches = assemble_sketches(space, exp, params, options)
    objective = space.rvar(("eta",)) * 1.0
    ref = expansion_values(exp, params, params.mode, False)
    return translate(space, sketches, objective[0], obj_offset=-eta_bar_min, ref_vals=ref)
