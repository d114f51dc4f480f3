"""Independent reference computations for small instances.

Everything here is assembled from explicit operator matrices (Kronecker
products of ladder and transition operators) and never touches the stencil,
so it can check the matrix-free kernel and the integrator.
"""

import numpy as np
from scipy.linalg import expm

from .density_matrix import DensityMatrix, dimension


def ladder(n_max: int) -> np.ndarray:
    """Truncated annihilation operator on Fock numbers 0..n_max."""
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)


def transition(i: int, j: int) -> np.ndarray:
    s = np.zeros((3, 3))
    s[i - 1, j - 1] = 1.0
    return s


def operators(kmax: int, mmax: int):
    """(H, a1, a2) on the product space electron x field 1 x field 2."""
    I3, IK, IM = np.eye(3), np.eye(kmax + 1), np.eye(mmax + 1)
    a1 = np.kron(I3, np.kron(ladder(kmax), IM))
    a2 = np.kron(I3, np.kron(IK, ladder(mmax)))
    s = {(i, j): np.kron(transition(i, j), np.kron(IK, IM)) for i in (1, 2, 3) for j in (1, 2, 3)}
    H = (a1.T @ s[1, 3] + a1 @ s[3, 1]) + (a2.T @ s[2, 3] + a2 @ s[3, 2])
    return H, a1, a2


def dense_superoperator(kmax: int, mmax: int, kappa: float) -> np.ndarray:
    """Matrix S with vec(d rho/dt) = S vec(rho), row-major vec.

    d rho/dt = i [H, rho] + kappa sum_j (a_j rho a_j^+ - (a_j^+ a_j rho + rho a_j^+ a_j)/2)
    and vec(A rho B) = kron(A, B^T) vec(rho) for row-major flattening.
    """
    H, a1, a2 = operators(kmax, mmax)
    D = dimension(kmax, mmax)
    I = np.eye(D)
    S = 1j * (np.kron(H, I) - np.kron(I, H.T))
    for a in (a1, a2):
        n = a.conj().T @ a
        S = S + kappa * (np.kron(a, a.conj()) - 0.5 * (np.kron(n, I) + np.kron(I, n.T)))
    return S


def expm_evolve(dm: DensityMatrix, kappa: float, t: float) -> DensityMatrix:
    S = dense_superoperator(dm.kmax, dm.mmax, kappa)
    v = expm(S * t) @ dm.data.ravel()
    return DensityMatrix(v.reshape(dm.data.shape), dm.kmax, dm.mmax)


def three_state_populations(t, k: int = 1, m: int = 0):
    """Lossless (O1, O2, O3) starting from |1, k, m> by diagonalization.

    The dynamics stays in span{|1,k,m>, |3,k-1,m>, |2,k-1,m+1>} with
    couplings sqrt(k) and sqrt(m+1).
    """
    h = np.array([[0.0, np.sqrt(k), 0.0],
                  [np.sqrt(k), 0.0, np.sqrt(m + 1)],
                  [0.0, np.sqrt(m + 1), 0.0]])
    w, V = np.linalg.eigh(h)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    # d rho/dt = i[H, rho]  =>  psi(t) = exp(iHt) psi(0)
    c0 = V.T @ np.array([1.0, 0.0, 0.0])
    psi = (V[None, :, :] * np.exp(1j * np.outer(t, w))[:, None, :]) @ c0
    p = np.abs(psi) ** 2
    return p[:, 0], p[:, 2], p[:, 1]


def single_photon_lossless(t):
    """Closed forms for |1,1,0>: O2 = sin^4(t/sqrt 2), O3 = sin^2(sqrt 2 t)/2."""
    t = np.asarray(t, dtype=float)
    o2 = np.sin(t / np.sqrt(2)) ** 4
    o3 = 0.5 * np.sin(np.sqrt(2) * t) ** 2
    return 1.0 - o2 - o3, o2, o3
