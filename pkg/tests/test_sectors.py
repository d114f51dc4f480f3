import math

import numpy as np
import pytest

from lambda_cavity.density_matrix import (
    BasisIndex,
    DensityMatrix,
    dimension,
    initial_density_matrix,
    photon_numbers,
    populations,
)
from lambda_cavity.errors import DomainError
from lambda_cavity.fock_states import coherent_amplitudes, fock_amplitudes
from lambda_cavity.integrator import _rk4
from lambda_cavity.liouvillian import Liouvillian
from lambda_cavity.sectors import CompiledSectorStepper, ManifoldLayout, SectorLiouvillian


def random_dm(kmax, mmax, seed):
    rng = np.random.default_rng(seed)
    D = dimension(kmax, mmax)
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return DensityMatrix(a @ a.conj().T / np.trace(a @ a.conj().T).real, kmax, mmax)


def test_every_state_in_one_manifold():
    L = ManifoldLayout(3, 2)
    flats = L.flat[L.valid]
    assert sorted(flats.tolist()) == list(range(dimension(3, 2)))


def test_locate_members():
    L = ManifoldLayout(3, 2)
    a, b = 2, 1
    assert L.locate(BasisIndex(1, a, b))[:2] == L.locate(BasisIndex(3, a - 1, b))[:2]
    assert L.locate(BasisIndex(1, a, b))[:2] == L.locate(BasisIndex(2, a - 1, b + 1))[:2]
    assert not L.same_manifold(BasisIndex(1, 1, 0), BasisIndex(1, 0, 0))
    with pytest.raises(DomainError):
        L.locate(BasisIndex(1, 9, 0))


def test_dense_round_trip_and_observables():
    dm = random_dm(3, 2, 0)
    L = ManifoldLayout(3, 2)
    blocks = L.from_dense(dm)
    assert L.populations(blocks) == pytest.approx(populations(dm), abs=1e-15)
    assert L.photon_numbers(blocks) == pytest.approx(photon_numbers(dm), abs=1e-14)
    back = L.to_dense(blocks)
    # same-manifold elements survive, everything else is dropped
    np.testing.assert_array_equal(L.from_dense(back), blocks)
    np.testing.assert_array_equal(np.diagonal(back.data), np.diagonal(dm.data))


def test_initial_blocks_match_dense():
    psi1 = coherent_amplitudes(1.2, kmax=9, eps=1e-3)
    psi2 = fock_amplitudes(1)
    L = ManifoldLayout(9, 2)
    dense = initial_density_matrix(psi1, psi2, 9, 2)
    np.testing.assert_allclose(L.initial(psi1, psi2), L.from_dense(dense), atol=1e-16)


@pytest.mark.parametrize("kappa", [0.0, 0.35, 2.0])
def test_generator_is_restriction_of_stencil(kappa):
    dm = random_dm(4, 3, 1)
    L = ManifoldLayout(4, 3)
    full = Liouvillian(4, 3, kappa).apply_array(dm.data)
    sector = SectorLiouvillian(L, kappa)(L.from_dense(dm))
    ref = L.from_dense(DensityMatrix(full, 4, 3))
    assert np.max(np.abs(sector - ref)) < 1e-13


def test_same_manifold_set_is_closed():
    # the stencil applied to a block-supported matrix stays block-supported
    L = ManifoldLayout(3, 3)
    dm = L.to_dense(L.from_dense(random_dm(3, 3, 2)))
    out = DensityMatrix(Liouvillian(3, 3, 0.8).apply_array(dm.data), 3, 3)
    leaked = out.data.copy()
    leaked[np.abs(L.to_dense(L.from_dense(out)).data) > 0] = 0
    assert np.max(np.abs(leaked)) < 1e-14


def test_compiled_step_matches_numpy():
    L = ManifoldLayout(6, 2)
    gen = SectorLiouvillian(L, 0.45)
    x = L.from_dense(random_dm(6, 2, 3))
    ref = _rk4(gen, x, 0.01)
    ref = 0.5 * (ref + ref.conj().swapaxes(-1, -2))
    y = x.copy()
    defect = CompiledSectorStepper(gen)(y, 0.01)
    assert defect < 1e-15
    assert np.max(np.abs(y - ref)) < 1e-15


def test_compiled_reports_nan():
    L = ManifoldLayout(2, 1)
    gen = SectorLiouvillian(L, 0.1)
    x = L.zeros()
    x[1, 1, 0, 0] = math.nan
    d = CompiledSectorStepper(gen)(x, 0.01)
    assert math.isnan(d)
