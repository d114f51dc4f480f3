"""Density matrix over the product basis |n, k, m>.

n is the electronic level (1, 2, 3), k the photon number of field 1 (which
drives 1 <-> 3) and m the photon number of field 2 (which drives 2 <-> 3).
Rows and columns use the flat index ((n - 1)(kmax + 1) + k)(mmax + 1) + m.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DomainError, IntegrityError
from .fock_states import AmplitudeVector

EPS_HERM = 1e-10
EPS_POS = 1e-8

SNAPSHOT_MAGIC = b"LCDM"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class BasisIndex(NamedTuple):
    n: int
    k: int
    m: int

    def __str__(self):
        return f"{self.n},{self.k},{self.m}"


def dimension(kmax: int, mmax: int) -> int:
    return 3 * (kmax + 1) * (mmax + 1)


def flat_index(idx: BasisIndex, kmax: int, mmax: int) -> int:
    n, k, m = idx
    if not (1 <= n <= 3 and 0 <= k <= kmax and 0 <= m <= mmax):
        raise DomainError(f"basis index {tuple(idx)} outside (1..3, 0..{kmax}, 0..{mmax})")
    return ((n - 1) * (kmax + 1) + k) * (mmax + 1) + m


def basis_index(flat: int, kmax: int, mmax: int) -> BasisIndex:
    if not 0 <= flat < dimension(kmax, mmax):
        raise DomainError(f"flat index {flat} out of range")
    rest, m = divmod(flat, mmax + 1)
    level, k = divmod(rest, kmax + 1)
    return BasisIndex(level + 1, k, m)


@dataclass
class DensityMatrix:
    """Dense D x D complex matrix with its truncation bounds."""

    data: np.ndarray
    kmax: int
    mmax: int

    def __post_init__(self):
        D = dimension(self.kmax, self.mmax)
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (D, D):
            raise DomainError(f"data shape {self.data.shape} does not match D={D}")

    @classmethod
    def zeros(cls, kmax: int, mmax: int) -> "DensityMatrix":
        D = dimension(kmax, mmax)
        return cls(np.zeros((D, D), dtype=complex), kmax, mmax)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def tensor(self) -> np.ndarray:
        """View with axes (n, k, m, n', k', m'); levels are 0-based here."""
        K, M = self.kmax + 1, self.mmax + 1
        return self.data.reshape(3, K, M, 3, K, M)

    def __getitem__(self, pair):
        row, col = pair
        return self.data[flat_index(BasisIndex(*row), self.kmax, self.mmax),
                         flat_index(BasisIndex(*col), self.kmax, self.mmax)]

    def __setitem__(self, pair, value):
        row, col = pair
        self.data[flat_index(BasisIndex(*row), self.kmax, self.mmax),
                  flat_index(BasisIndex(*col), self.kmax, self.mmax)] = value

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.data.copy(), self.kmax, self.mmax)

    def embed(self, kmax: int, mmax: int) -> "DensityMatrix":
        """Copy into a larger truncation, padding with zeros."""
        if kmax < self.kmax or mmax < self.mmax:
            raise DomainError("embed target must not be smaller than the source")
        out = DensityMatrix.zeros(kmax, mmax)
        K, M = self.kmax + 1, self.mmax + 1
        out.tensor[:, :K, :M, :, :K, :M] = self.tensor
        return out


def initial_density_matrix(psi1: AmplitudeVector, psi2: AmplitudeVector,
                           kmax: int | None = None, mmax: int | None = None) -> DensityMatrix:
    """Ground-state electron times the product of the two field states.

    The optional bounds let the matrix be wider than the amplitude vectors
    (extra Fock numbers start empty); they may not cut into the support.
    """
    kmax = psi1.kmax if kmax is None else kmax
    mmax = psi2.kmax if mmax is None else mmax
    c1 = np.zeros(kmax + 1, dtype=complex)
    c2 = np.zeros(mmax + 1, dtype=complex)
    if psi1.support_max > kmax or psi2.support_max > mmax:
        raise DomainError("truncation bounds cut into the support of the initial fields")
    n1, n2 = min(kmax, psi1.kmax), min(mmax, psi2.kmax)
    c1[: n1 + 1] = psi1.amps[: n1 + 1]
    c2[: n2 + 1] = psi2.amps[: n2 + 1]
    psi = np.zeros((3, kmax + 1, mmax + 1), dtype=complex)
    psi[0] = np.outer(c1, c2)
    v = psi.ravel()
    return DensityMatrix(np.outer(v, v.conj()), kmax, mmax)


def _level_diagonal(dm: DensityMatrix) -> np.ndarray:
    return np.diagonal(dm.data).reshape(3, dm.kmax + 1, dm.mmax + 1)


def populations(dm: DensityMatrix, eps_herm: float = EPS_HERM) -> tuple[float, float, float]:
    """Electronic level populations (O1, O2, O3)."""
    diag = _level_diagonal(dm)
    worst = float(np.max(np.abs(diag.imag))) if diag.size else 0.0
    if worst >= eps_herm:
        raise IntegrityError(f"diagonal has imaginary part {worst:.3e} >= {eps_herm:.1e}")
    o = diag.real.sum(axis=(1, 2))
    return float(o[0]), float(o[1]), float(o[2])


def trace(dm: DensityMatrix) -> float:
    return float(np.trace(dm.data).real)


def purity(dm: DensityMatrix) -> float:
    return float(np.vdot(dm.data, dm.data).real)


def hermiticity_defect(dm: DensityMatrix) -> float:
    return float(np.max(np.abs(dm.data - dm.data.conj().T)))


def photon_numbers(dm: DensityMatrix) -> tuple[float, float]:
    """Mean photon numbers <n1>, <n2>."""
    diag = _level_diagonal(dm).real
    k = np.arange(dm.kmax + 1)[:, None]
    m = np.arange(dm.mmax + 1)[None, :]
    p = diag.sum(axis=0)
    return float((k * p).sum()), float((m * p).sum())


# ---------------------------------------------------------------------------
# element classification


class ElementClass(enum.Enum):
    IE = "IE"
    NIE = "NIE"


def _side_interacts(idx: BasisIndex, kmax: int, mmax: int) -> bool:
    # one side of an element feels the lossless coupling iff some Hamiltonian
    # stencil term reaches an in-range neighbour with a nonzero coefficient
    n, k, m = idx
    if n == 1:
        return k >= 1
    if n == 2:
        return m >= 1
    return k < kmax or m < mmax


def classify_element(row: BasisIndex, col: BasisIndex, kmax: int, mmax: int) -> ElementClass:
    """IE / NIE classification of p_{row; col} within the given truncation.

    An element is non-interacting when its lossless time derivative vanishes
    for every density matrix. Row and column terms reference distinct
    elements, so this holds iff neither side couples.
    """
    row, col = BasisIndex(*row), BasisIndex(*col)
    flat_index(row, kmax, mmax)
    flat_index(col, kmax, mmax)
    if _side_interacts(row, kmax, mmax) or _side_interacts(col, kmax, mmax):
        return ElementClass.IE
    return ElementClass.NIE


def parse_element(text: str) -> tuple[BasisIndex, BasisIndex]:
    """Parse ``n,k,m;n',k',m'`` into a (row, col) pair."""
    try:
        left, right = text.split(";")
        row = BasisIndex(*(int(x) for x in left.split(",")))
        col = BasisIndex(*(int(x) for x in right.split(",")))
    except (ValueError, TypeError):
        raise DomainError(f"malformed element {text!r}; expected n,k,m;n',k',m'") from None
    return row, col


def format_element(pair) -> str:
    row, col = pair
    return f"{BasisIndex(*row)};{BasisIndex(*col)}"


# ---------------------------------------------------------------------------
# binary snapshots


def write_snapshot(dm: DensityMatrix, path) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, dm.kmax, dm.mmax))
        fh.write(np.ascontiguousarray(dm.data, dtype="<c16").tobytes())
    return path


def read_snapshot(path) -> DensityMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise IntegrityError(f"{path}: truncated snapshot header")
    magic, version, kmax, mmax = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise IntegrityError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise IntegrityError(f"{path}: unsupported snapshot version {version}")
    D = dimension(kmax, mmax)
    body = raw[_HEADER.size:]
    if len(body) != 16 * D * D:
        raise IntegrityError(f"{path}: expected {16 * D * D} payload bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<c16").astype(complex).reshape(D, D)
    return DensityMatrix(data, kmax, mmax)
