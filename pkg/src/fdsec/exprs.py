"""Affine expressions over named real/complex variable blocks.

Every optimization variable lives in a named block; a complex block of
dimension d occupies 2d real slots ([Re; Im]).  RExpr/CExpr are affine
maps from the stacked real variables into R^n or C^n, stored as dense
per-block coefficient matrices (blocks are small).  These are the payloads
of constraint sketches and the rows of the conic translation.
"""

from __future__ import annotations

import dataclasses

import numpy as np


@dataclasses.dataclass(frozen=True)
class BlockInfo:
    key: tuple
    size: int            # real slots
    cdim: int | None     # complex dimension if the block is complex
    primary: bool = True
    scale: np.ndarray | None = None     # physical value = scale * solver slot


class VarSpace:
    """Ordered registry of variable blocks with deterministic offsets.

    Blocks may carry a positive per-slot scale: the solver works on unit-
    order slots while all expressions stay in physical units.
    """

    def __init__(self):
        self._blocks: dict[tuple, BlockInfo] = {}
        self._order: list[tuple] = []
        self._offsets: dict[tuple, int] | None = None
        self._n = 0

    def add_real(self, key: tuple, n: int, primary: bool = True, scale=None) -> None:
        if n <= 0:
            return
        if key in self._blocks:
            raise KeyError(f"duplicate block {key}")
        s = None if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), (n,)).copy()
        self._blocks[key] = BlockInfo(key, n, None, primary, s)
        self._order.append(key)
        self._offsets = None

    def add_complex(self, key: tuple, cdim: int, primary: bool = True, scale=None) -> None:
        if cdim <= 0:
            return
        if key in self._blocks:
            raise KeyError(f"duplicate block {key}")
        s = None
        if scale is not None:
            per = np.broadcast_to(np.asarray(scale, dtype=float), (cdim,))
            s = np.concatenate([per, per])
        self._blocks[key] = BlockInfo(key, 2 * cdim, cdim, primary, s)
        self._order.append(key)
        self._offsets = None

    def scale_of(self, key: tuple) -> np.ndarray:
        b = self._blocks[key]
        return b.scale if b.scale is not None else np.ones(b.size)

    def __contains__(self, key: tuple) -> bool:
        return key in self._blocks

    def info(self, key: tuple) -> BlockInfo:
        return self._blocks[key]

    @property
    def keys(self) -> list[tuple]:
        return list(self._order)

    def offsets(self) -> dict[tuple, int]:
        if self._offsets is None:
            off, pos = {}, 0
            for key in self._order:
                off[key] = pos
                pos += self._blocks[key].size
            self._offsets = off
            self._n = pos
        return self._offsets

    @property
    def n(self) -> int:
        self.offsets()
        return self._n

    def count_entity_vars(self) -> int:
        """Primary variables counted with complex entities as one each (the
        tally used in interior-point complexity estimates)."""
        total = 0
        for key in self._order:
            b = self._blocks[key]
            if not b.primary:
                continue
            total += b.cdim if b.cdim is not None else b.size
        return total

    def count_real_primary(self) -> int:
        return sum(b.size for b in self._blocks.values() if b.primary)

    # ---- expression constructors -------------------------------------

    def rvar(self, key: tuple) -> "RExpr":
        """Identity expression in physical units (scaling is applied only at
        the translation and encode/decode boundaries)."""
        b = self._blocks[key]
        if b.cdim is not None:
            raise TypeError(f"{key} is complex")
        return RExpr({key: np.eye(b.size)}, np.zeros(b.size))

    def cvar(self, key: tuple) -> "CExpr":
        b = self._blocks[key]
        if b.cdim is None:
            raise TypeError(f"{key} is real")
        d = b.cdim
        coef = np.hstack([np.eye(d, dtype=complex), 1j * np.eye(d, dtype=complex)])
        return CExpr({key: coef}, np.zeros(d, dtype=complex))

    # ---- point encoding ----------------------------------------------

    @staticmethod
    def encode_complex(v: np.ndarray) -> np.ndarray:
        flat = np.asarray(v, dtype=complex).reshape(-1, order="F")
        return np.concatenate([flat.real, flat.imag])

    @staticmethod
    def decode_complex(slots: np.ndarray, shape) -> np.ndarray:
        d = slots.size // 2
        flat = slots[:d] + 1j * slots[d:]
        return flat.reshape(shape, order="F")

    def assemble(self, vals: dict) -> np.ndarray:
        """Physical per-block values into one scaled solver vector."""
        off = self.offsets()
        z = np.zeros(self.n)
        for key, arr in vals.items():
            b = self._blocks[key]
            a = np.asarray(arr, dtype=float).reshape(-1)
            if a.size != b.size:
                raise ValueError(f"block {key}: expected {b.size} slots, got {a.size}")
            z[off[key]:off[key] + b.size] = a if b.scale is None else a / b.scale
        return z

    def split(self, z: np.ndarray) -> dict:
        """Scaled solver vector back to physical per-block values."""
        off = self.offsets()
        out = {}
        for key in self._order:
            b = self._blocks[key]
            seg = z[off[key]:off[key] + b.size].copy()
            out[key] = seg if b.scale is None else seg * b.scale
        return out


class RExpr:
    """Real affine vector expression: value = const + sum_b coef[b] @ z_b."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: dict, const: np.ndarray):
        self.coef = coef
        self.const = np.atleast_1d(np.asarray(const, dtype=float))

    @property
    def n_out(self) -> int:
        return self.const.size

    @staticmethod
    def constant(c) -> "RExpr":
        return RExpr({}, np.atleast_1d(np.asarray(c, dtype=float)))

    def __add__(self, other):
        if isinstance(other, RExpr):
            coef = {k: v.copy() for k, v in self.coef.items()}
            for k, v in other.coef.items():
                coef[k] = coef[k] + v if k in coef else v
            return RExpr(coef, self.const + other.const)
        return RExpr(self.coef, self.const + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, RExpr):
            return self + (other * -1.0)
        return RExpr(self.coef, self.const - other)

    def __rsub__(self, other):
        return (self * -1.0) + other

    def __mul__(self, s: float):
        return RExpr({k: v * s for k, v in self.coef.items()}, self.const * s)

    __rmul__ = __mul__

    def __getitem__(self, idx) -> "RExpr":
        sel = [idx] if isinstance(idx, int) else idx
        return RExpr({k: v[sel, :] for k, v in self.coef.items()}, self.const[sel])

    def matmul(self, a: np.ndarray) -> "RExpr":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return RExpr({k: a @ v for k, v in self.coef.items()}, a @ self.const)

    def value(self, vals: dict) -> np.ndarray:
        out = self.const.copy()
        for k, v in self.coef.items():
            out = out + v @ np.asarray(vals[k], dtype=float).reshape(-1)
        return out


class CExpr:
    """Complex affine vector expression over real slots."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: dict, const: np.ndarray):
        self.coef = coef
        self.const = np.atleast_1d(np.asarray(const, dtype=complex))

    @property
    def n_out(self) -> int:
        return self.const.size

    @property
    def re(self) -> RExpr:
        return RExpr({k: v.real.copy() for k, v in self.coef.items()}, self.const.real.copy())

    @property
    def im(self) -> RExpr:
        return RExpr({k: v.imag.copy() for k, v in self.coef.items()}, self.const.imag.copy())

    def conj(self) -> "CExpr":
        return CExpr({k: v.conj() for k, v in self.coef.items()}, self.const.conj())

    def lmul(self, a: np.ndarray) -> "CExpr":
        """Left-multiply by a constant complex matrix."""
        a = np.atleast_2d(np.asarray(a, dtype=complex))
        return CExpr({k: a @ v for k, v in self.coef.items()}, a @ self.const)

    def __add__(self, other):
        if isinstance(other, CExpr):
            coef = {k: v.copy() for k, v in self.coef.items()}
            for k, v in other.coef.items():
                coef[k] = coef[k] + v if k in coef else v
            return CExpr(coef, self.const + other.const)
        return CExpr(self.coef, self.const + other)

    def __mul__(self, s):
        return CExpr({k: v * s for k, v in self.coef.items()}, self.const * s)

    __rmul__ = __mul__

    def __getitem__(self, idx) -> "CExpr":
        sel = [idx] if isinstance(idx, int) else idx
        return CExpr({k: v[sel, :] for k, v in self.coef.items()}, self.const[sel])

    def value(self, vals: dict) -> np.ndarray:
        out = self.const.astype(complex).copy()
        for k, v in self.coef.items():
            out = out + v @ np.asarray(vals[k], dtype=float).reshape(-1)
        return out


# ---- helpers for matrix-valued complex blocks -----------------------------

def mat_lmul(space: VarSpace, key: tuple, shape: tuple[int, int], a: np.ndarray) -> CExpr:
    """vec(A @ M) for the complex matrix block M of the given shape."""
    p, q = shape
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    big = np.kron(np.eye(q, dtype=complex), a)
    return space.cvar(key).lmul(big)


def mat_adj_vec(space: VarSpace, key: tuple, shape: tuple[int, int], h: np.ndarray) -> CExpr:
    """M^H h as a q-vector expression for the (p, q) matrix block M."""
    p, q = shape
    h = np.asarray(h, dtype=complex).reshape(1, p)
    return mat_lmul(space, key, shape, h.conj()).conj()


def trace_adj(space: VarSpace, key: tuple, shape: tuple[int, int], a: np.ndarray) -> CExpr:
    """Tr(A^H M) for the matrix block M; affine with coefficient vec(A)^H."""
    vec_a = np.asarray(a, dtype=complex).reshape(1, -1, order="F")
    return space.cvar(key).lmul(vec_a.conj())
