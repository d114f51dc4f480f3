"""Block representation of the population-carrying part of the density matrix.

The coupling Hamiltonian only connects the three states

    |1, A, B>,  |3, A-1, B>,  |2, A-1, B+1>

so every basis state belongs to exactly one such manifold (A, B). Photon
loss moves whole manifolds to (A-1, B) or (A, B-1), hence elements whose row
and column lie in the same manifold form a closed set under the generator.
That set contains every diagonal element, so populations, photon numbers
and diagonal element traces can be evolved using one 3 x 3 block per
manifold instead of the full D x D matrix; the result agrees with the
dense stencil to roundoff.

Member order inside a block is (level 1, level 3, level 2).
"""

from __future__ import annotations

import numpy as np

from .density_matrix import BasisIndex, DensityMatrix, dimension, flat_index
from .errors import DomainError
from .fock_states import AmplitudeVector

# electronic level of each block member and its (k, m) offset from (A, B)
MEMBER_LEVEL = (1, 3, 2)
_DK = np.array([0, -1, -1])
_DM = np.array([0, 0, 1])


class ManifoldLayout:
    """Index bookkeeping for manifolds A = 0..kmax+1, B = -1..mmax."""

    def __init__(self, kmax: int, mmax: int):
        self.kmax, self.mmax = kmax, mmax
        self.shape = (kmax + 2, mmax + 2)
        A = np.arange(kmax + 2)[:, None, None]
        B = np.arange(-1, mmax + 1)[None, :, None]
        self.k = A + _DK
        self.m = B + _DM
        self.valid = (self.k >= 0) & (self.k <= kmax) & (self.m >= 0) & (self.m <= mmax)
        flat = ((np.array(MEMBER_LEVEL) - 1) * (kmax + 1) + self.k) * (mmax + 1) + self.m
        self.flat = np.where(self.valid, flat, -1)
        self.pair_valid = self.valid[..., :, None] & self.valid[..., None, :]

    def locate(self, idx: BasisIndex) -> tuple[int, int, int]:
        """(a, b, member) of a basis state."""
        n, k, m = BasisIndex(*idx)
        flat_index(BasisIndex(n, k, m), self.kmax, self.mmax)
        if n == 1:
            return k, m + 1, 0
        if n == 3:
            return k + 1, m + 1, 1
        return k + 1, m, 2

    def same_manifold(self, row: BasisIndex, col: BasisIndex) -> bool:
        return self.locate(row)[:2] == self.locate(col)[:2]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape + (3, 3), dtype=complex)

    def initial(self, psi1: AmplitudeVector, psi2: AmplitudeVector) -> np.ndarray:
        """Blocks of the ground-state product input (level 1 diagonal only)."""
        if psi1.support_max > self.kmax or psi2.support_max > self.mmax:
            raise DomainError("truncation bounds cut into the support of the initial fields")
        blocks = self.zeros()
        p1 = psi1.probabilities[: self.kmax + 1]
        p2 = psi2.probabilities[: self.mmax + 1]
        blocks[: p1.size, 1: p2.size + 1, 0, 0] = np.outer(p1, p2)
        return blocks

    def from_dense(self, dm: DensityMatrix) -> np.ndarray:
        if (dm.kmax, dm.mmax) != (self.kmax, self.mmax):
            raise DomainError("truncation mismatch")
        f = np.where(self.valid, self.flat, 0)
        blocks = dm.data[f[..., :, None], f[..., None, :]]
        return np.where(self.pair_valid, blocks, 0)

    def to_dense(self, blocks: np.ndarray) -> DensityMatrix:
        D = dimension(self.kmax, self.mmax)
        data = np.zeros((D, D), dtype=complex)
        rows = np.broadcast_to(self.flat[..., :, None], blocks.shape)[self.pair_valid]
        cols = np.broadcast_to(self.flat[..., None, :], blocks.shape)[self.pair_valid]
        data[rows, cols] = blocks[self.pair_valid]
        return DensityMatrix(data, self.kmax, self.mmax)

    def diagonal(self, blocks: np.ndarray) -> np.ndarray:
        return np.diagonal(blocks, axis1=-2, axis2=-1)

    def populations(self, blocks: np.ndarray) -> tuple[float, float, float]:
        d = self.diagonal(blocks).real.sum(axis=(0, 1))
        return float(d[0]), float(d[2]), float(d[1])

    def photon_numbers(self, blocks: np.ndarray) -> tuple[float, float]:
        d = self.diagonal(blocks).real * self.valid
        return float((self.k * d).sum()), float((self.m * d).sum())


class SectorLiouvillian:
    """Generator restricted to same-manifold elements."""

    def __init__(self, layout: ManifoldLayout, kappa: float):
        if kappa < 0:
            raise DomainError("kappa must be >= 0")
        self.layout, self.kappa = layout, float(kappa)
        L = layout
        v = L.valid
        A = np.arange(L.shape[0])[:, None]
        B = np.arange(-1, L.mmax + 1)[None, :]
        h = np.zeros(L.shape + (3, 3))
        h[..., 0, 1] = h[..., 1, 0] = np.sqrt(np.maximum(A, 0)) * (v[..., 0] & v[..., 1])
        h[..., 1, 2] = h[..., 2, 1] = np.sqrt(np.maximum(B + 1, 0)) * (v[..., 1] & v[..., 2])
        self._ih = 1j * h
        pv = L.pair_valid
        k, m = np.maximum(L.k, 0), np.maximum(L.m, 0)
        self._gain_k = kappa * np.sqrt((k[..., :, None] + 1) * (k[..., None, :] + 1)) * pv
        self._gain_m = kappa * np.sqrt((m[..., :, None] + 1) * (m[..., None, :] + 1)) * pv
        n = k + m
        self._decay = kappa * -0.5 * (n[..., :, None] + n[..., None, :]) * pv

    def __call__(self, blocks: np.ndarray) -> np.ndarray:
        out = self._ih @ blocks - blocks @ self._ih
        if self.kappa:
            out += self._decay * blocks
            out[:-1] += self._gain_k[:-1] * blocks[1:]
            out[:, :-1] += self._gain_m[:, :-1] * blocks[:, 1:]
        return out


# ---------------------------------------------------------------------------
# compiled RK4 step for long runs

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


TINY = 1e-200


def _make_kernel():
    # block arrays are handled as flat buffers: block p = a * nb + b occupies
    # p*9 .. p*9+8 in row-major (i, j) order
    @numba.njit(cache=True)
    def rhs(x, out, g, f, gk, gm, dec, na, nb):
        n = na * nb
        for p in range(n):
            o = p * 9
            ga = g[p]
            fa = f[p]
            for j in range(3):
                # rows of h x with h01 = h10 = g, h12 = h21 = f
                out[o + j] = ga * x[o + 3 + j]
                out[o + 3 + j] = ga * x[o + j] + fa * x[o + 6 + j]
                out[o + 6 + j] = fa * x[o + 3 + j]
            for i in range(3):
                r = o + 3 * i
                c0 = x[r + 1] * ga
                c1 = x[r] * ga + x[r + 2] * fa
                c2 = x[r + 1] * fa
                out[r] = 1j * (out[r] - c0)
                out[r + 1] = 1j * (out[r + 1] - c1)
                out[r + 2] = 1j * (out[r + 2] - c2)
            has_k = p + nb < n
            has_m = (p % nb) + 1 < nb
            for e in range(o, o + 9):
                v = out[e] + dec[e] * x[e]
                if has_k:
                    v += gk[e] * x[e + 9 * nb]
                if has_m:
                    v += gm[e] * x[e + 9]
                out[e] = v

    @numba.njit(cache=True)
    def step(x, dt, g, f, gk, gm, dec, na, nb, k1, k2, k3, k4, tmp):
        N = x.size
        rhs(x, k1, g, f, gk, gm, dec, na, nb)
        for e in range(N):
            tmp[e] = x[e] + 0.5 * dt * k1[e]
        rhs(tmp, k2, g, f, gk, gm, dec, na, nb)
        for e in range(N):
            tmp[e] = x[e] + 0.5 * dt * k2[e]
        rhs(tmp, k3, g, f, gk, gm, dec, na, nb)
        for e in range(N):
            tmp[e] = x[e] + dt * k3[e]
        rhs(tmp, k4, g, f, gk, gm, dec, na, nb)
        for e in range(N):
            tmp[e] = x[e] + (dt / 6.0) * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e])
        # re-Hermitize each block, returning the largest defect seen
        defect = 0.0
        for p in range(na * nb):
            o = p * 9
            for i in range(3):
                for j in range(i, 3):
                    u = tmp[o + 3 * i + j]
                    w = tmp[o + 3 * j + i]
                    d = abs(u - w.conjugate())
                    # NaN compares false, so once seen it sticks
                    if not (d <= defect) and defect == defect:
                        defect = d
                    avg = 0.5 * (u + w.conjugate())
                    # flush values that would decay into subnormals, which
                    # are orders of magnitude slower to compute with
                    re, im = avg.real, avg.imag
                    if abs(re) < TINY:
                        re = 0.0
                    if abs(im) < TINY:
                        im = 0.0
                    avg = complex(re, im)
                    x[o + 3 * i + j] = avg
                    x[o + 3 * j + i] = avg.conjugate()
        return defect

    return step


_kernel = _make_kernel() if numba is not None else None


class CompiledSectorStepper:
    """In-place RK4 step on block arrays, compiled with numba."""

    def __init__(self, gen: SectorLiouvillian):
        if _kernel is None:  # pragma: no cover
            raise ImportError("numba is required for the compiled sector stepper")
        self._na, self._nb = gen.layout.shape
        flat = lambda a: np.ascontiguousarray(a).ravel()  # noqa: E731
        self._g = flat(gen._ih[..., 0, 1].imag)
        self._f = flat(gen._ih[..., 1, 2].imag)
        self._gk = flat(gen._gain_k)
        self._gm = flat(gen._gain_m)
        self._dec = flat(gen._decay)
        size = self._na * self._nb * 9
        self._work = [np.zeros(size, dtype=complex) for _ in range(5)]

    def __call__(self, x: np.ndarray, dt: float) -> float:
        """Advance ``x`` (C-contiguous) in place; returns the pre-symmetrization defect."""
        v = x.reshape(-1)
        if not np.shares_memory(v, x):  # pragma: no cover
            raise ValueError("block array must be contiguous")
        return _kernel(v, dt, self._g, self._f, self._gk, self._gm, self._dec,
                       self._na, self._nb, *self._work)
