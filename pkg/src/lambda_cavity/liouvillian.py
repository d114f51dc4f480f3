"""Matrix-free right-hand side of the element-wise master equation.

Time is measured in units of hbar/g and the loss rate ``kappa`` in units of
g/hbar. The interaction-picture generator is

    d rho / dt = i [H, rho] + kappa * sum_j (a_j rho a_j^+ - (a_j^+ a_j rho + rho a_j^+ a_j) / 2)

with H = a_1^+ s_13 + a_1 s_31 + a_2^+ s_23 + a_2 s_32. Written per element
this is eight Hamiltonian stencil terms (four acting on the row index, four
on the column index) and three loss terms. Reads outside the truncated
basis contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .density_matrix import DensityMatrix
from .errors import DomainError


def _always(n):
    return True


@dataclass(frozen=True)
class StencilTerm:
    """One source term of the element-wise equation of motion.

    ``row_shift``/``col_shift`` are (dn, dk, dm) offsets from the target
    element to the element that is read. ``coefficient`` is evaluated on the
    target indices (k, m, k', m'); ``row_gate``/``col_gate`` suppress target
    levels (the dipole-forbidden 1 <-> 2 transition).
    """

    name: str
    row_shift: tuple[int, int, int]
    col_shift: tuple[int, int, int]
    coefficient: Callable
    row_gate: Callable[[int], bool] = _always
    col_gate: Callable[[int], bool] = _always
    lossy: bool = False


STENCIL: tuple[StencilTerm, ...] = (
    # field 1 couples 1 <-> 3
    StencilTerm("a1dag.s13 rho", (+2, -1, 0), (0, 0, 0), lambda k, m, kp, mp: 1j * np.sqrt(k)),
    StencilTerm("a1.s31 rho", (-2, +1, 0), (0, 0, 0), lambda k, m, kp, mp: 1j * np.sqrt(k + 1)),
    StencilTerm("rho a1dag.s13", (0, 0, 0), (+2, -1, 0), lambda k, m, kp, mp: -1j * np.sqrt(kp)),
    StencilTerm("rho a1.s31", (0, 0, 0), (-2, +1, 0), lambda k, m, kp, mp: -1j * np.sqrt(kp + 1)),
    # field 2 couples 2 <-> 3; level 1 must not be reached through it
    StencilTerm("a2dag.s23 rho", (+1, 0, -1), (0, 0, 0), lambda k, m, kp, mp: 1j * np.sqrt(m),
                row_gate=lambda n: n + 1 != 2),
    StencilTerm("a2.s32 rho", (-1, 0, +1), (0, 0, 0), lambda k, m, kp, mp: 1j * np.sqrt(m + 1),
                row_gate=lambda n: n - 1 != 1),
    StencilTerm("rho a2dag.s23", (0, 0, 0), (+1, 0, -1), lambda k, m, kp, mp: -1j * np.sqrt(mp),
                col_gate=lambda n: n + 1 != 2),
    StencilTerm("rho a2.s32", (0, 0, 0), (-1, 0, +1), lambda k, m, kp, mp: -1j * np.sqrt(mp + 1),
                col_gate=lambda n: n - 1 != 1),
    # photon loss
    StencilTerm("a1 rho a1dag", (0, +1, 0), (0, +1, 0),
                lambda k, m, kp, mp: np.sqrt((k + 1) * (kp + 1)), lossy=True),
    StencilTerm("a2 rho a2dag", (0, 0, +1), (0, 0, +1),
                lambda k, m, kp, mp: np.sqrt((m + 1) * (mp + 1)), lossy=True),
    StencilTerm("anticommutator", (0, 0, 0), (0, 0, 0),
                lambda k, m, kp, mp: -0.5 * (k + kp + m + mp), lossy=True),
)


@dataclass(frozen=True)
class _CompiledOp:
    target: tuple
    source: tuple
    coef: np.ndarray
    lossy: bool


def _level_slices(shift: int, gate) -> tuple[slice, slice] | None:
    levels = [n for n in (1, 2, 3) if 1 <= n + shift <= 3 and gate(n)]
    if not levels:
        return None
    lo, hi = levels[0], levels[-1]
    if levels != list(range(lo, hi + 1)):
        raise AssertionError("stencil gate produced a non-contiguous level set")
    return slice(lo - 1, hi), slice(lo - 1 + shift, hi + shift)


def _field_slices(shift: int, size: int) -> tuple[slice, slice, np.ndarray]:
    lo, hi = max(0, -shift), size - max(0, shift)
    return slice(lo, hi), slice(lo + shift, hi + shift), np.arange(lo, hi)


def compile_stencil(kmax: int, mmax: int) -> list[_CompiledOp]:
    """Resolve every stencil term to array slices and coefficient blocks."""
    K, M = kmax + 1, mmax + 1
    ops = []
    for term in STENCIL:
        rl = _level_slices(term.row_shift[0], term.row_gate)
        cl = _level_slices(term.col_shift[0], term.col_gate)
        if rl is None or cl is None:
            continue
        tk, sk, k = _field_slices(term.row_shift[1], K)
        tm, sm, m = _field_slices(term.row_shift[2], M)
        tkp, skp, kp = _field_slices(term.col_shift[1], K)
        tmp, smp, mp = _field_slices(term.col_shift[2], M)
        if min(k.size, m.size, kp.size, mp.size) == 0:
            continue
        grid = np.ix_(k, m, kp, mp)
        coef = np.broadcast_to(term.coefficient(*grid), (k.size, m.size, kp.size, mp.size))
        coef = np.ascontiguousarray(coef, dtype=complex)[None, :, :, None, :, :]
        ops.append(_CompiledOp(
            target=(rl[0], tk, tm, cl[0], tkp, tmp),
            source=(rl[1], sk, sm, cl[1], skp, smp),
            coef=coef,
            lossy=term.lossy,
        ))
    return ops


@lru_cache(maxsize=32)
def _compiled(kmax: int, mmax: int):
    return tuple(compile_stencil(kmax, mmax))


class Liouvillian:
    """The generator for fixed truncation and loss rate, ready to apply."""

    def __init__(self, kmax: int, mmax: int, kappa: float):
        if kappa < 0:
            raise DomainError("kappa must be >= 0")
        self.kmax, self.mmax, self.kappa = kmax, mmax, float(kappa)
        self._ops = [
            (op.target, op.source, op.coef * self.kappa if op.lossy else op.coef)
            for op in _compiled(kmax, mmax)
            if not (op.lossy and self.kappa == 0.0)
        ]
        self._shape = (3, kmax + 1, mmax + 1) * 2

    def apply_array(self, rho: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Derivative of a D x D array; ``out`` is overwritten if given."""
        r6 = rho.reshape(self._shape)
        if out is None:
            out = np.zeros_like(rho)
        else:
            out[...] = 0
        o6 = out.reshape(self._shape)
        for tgt, src, coef in self._ops:
            o6[tgt] += coef * r6[src]
        return out

    def __call__(self, dm: DensityMatrix) -> DensityMatrix:
        if (dm.kmax, dm.mmax) != (self.kmax, self.mmax):
            raise DomainError("density matrix truncation does not match the Liouvillian")
        return DensityMatrix(self.apply_array(dm.data), dm.kmax, dm.mmax)


def apply_liouvillian(dm: DensityMatrix, kappa: float) -> DensityMatrix:
    """Time derivative d rho / dt of ``dm`` at loss rate ``kappa``."""
    return Liouvillian(dm.kmax, dm.mmax, kappa)(dm)


# ---------------------------------------------------------------------------
# non-interacting elements


@dataclass(frozen=True)
class Level1:
    """The element p_{1,0,m;1,0,m}."""
    m: int


@dataclass(frozen=True)
class Level2:
    """The element p_{2,k,0;2,k,0}."""
    k: int


def nie_rhs(dm: DensityMatrix, kappa: float, which: Union[Level1, Level2]) -> float:
    """Derivative of a population-carrying non-interacting element.

    Only loss terms survive: an interacting source one photon up in the
    other field, a non-interacting source one photon up in the same field,
    and the decay of the element itself.
    """
    t = dm.tensor
    if isinstance(which, Level1):
        m = which.m
        if not 0 <= m <= dm.mmax:
            raise DomainError(f"m={m} outside 0..{dm.mmax}")
        ie = t[0, 1, m, 0, 1, m] if dm.kmax >= 1 else 0.0
        nie = t[0, 0, m + 1, 0, 0, m + 1] * (m + 1) if m < dm.mmax else 0.0
        self_ = t[0, 0, m, 0, 0, m] * m
    elif isinstance(which, Level2):
        k = which.k
        if not 0 <= k <= dm.kmax:
            raise DomainError(f"k={k} outside 0..{dm.kmax}")
        ie = t[1, k, 1, 1, k, 1] if dm.mmax >= 1 else 0.0
        nie = t[1, k + 1, 0, 1, k + 1, 0] * (k + 1) if k < dm.kmax else 0.0
        self_ = t[1, k, 0, 1, k, 0] * k
    else:
        raise TypeError(f"expected Level1 or Level2, got {which!r}")
    # same association order as the compiled stencil
    total = 0.0 + kappa * ie
    total = total + kappa * nie
    total = total + (-kappa) * self_
    return float(np.real(total))
