import math

import numpy as np
import pytest

from lambda_cavity.density_matrix import (
    BasisIndex,
    DensityMatrix,
    ElementClass,
    basis_index,
    classify_element,
    dimension,
    flat_index,
    format_element,
    hermiticity_defect,
    initial_density_matrix,
    parse_element,
    photon_numbers,
    populations,
    purity,
    read_snapshot,
    trace,
    write_snapshot,
)
from lambda_cavity.errors import DomainError, IntegrityError
from lambda_cavity.fock_states import coherent_amplitudes, fock_amplitudes
from lambda_cavity.oracle import dense_superoperator

B = BasisIndex


def test_flat_index_bijection():
    kmax, mmax = 3, 2
    D = dimension(kmax, mmax)
    seen = set()
    for n in (1, 2, 3):
        for k in range(kmax + 1):
            for m in range(mmax + 1):
                f = flat_index(B(n, k, m), kmax, mmax)
                assert basis_index(f, kmax, mmax) == (n, k, m)
                seen.add(f)
    assert seen == set(range(D))
    with pytest.raises(DomainError):
        flat_index(B(4, 0, 0), kmax, mmax)
    with pytest.raises(DomainError):
        flat_index(B(1, 4, 0), kmax, mmax)


def test_initial_vacuum_and_single_photon():
    vac = fock_amplitudes(0)
    dm = initial_density_matrix(vac, vac)
    assert np.count_nonzero(dm.data) == 1 and dm[B(1, 0, 0), B(1, 0, 0)] == 1
    dm = initial_density_matrix(fock_amplitudes(1), vac, kmax=1, mmax=1)
    assert np.count_nonzero(dm.data) == 1 and dm[B(1, 1, 0), B(1, 1, 0)] == 1


def test_initial_coherent_properties():
    psi = coherent_amplitudes(math.sqrt(10))
    dm = initial_density_matrix(psi, fock_amplitudes(0), mmax=1)
    tr = trace(dm)
    assert abs(tr - psi.norm) < 1e-14 and tr >= 1 - 2e-6
    assert np.linalg.matrix_rank(dm.data, tol=1e-12) == 1
    assert abs(purity(dm) - tr**2) < 1e-13
    assert hermiticity_defect(dm) == 0
    o = populations(dm)
    assert o[1] == o[2] == 0 and abs(o[0] - tr) < 1e-14
    # only level-1 rows and columns are populated
    t = dm.tensor
    assert not np.any(t[1:]) and not np.any(t[:, :, :, 1:])
    n1, n2 = photon_numbers(dm)
    assert abs(n1 - 10) < 1e-4 and n2 == 0
    assert np.min(np.linalg.eigvalsh(dm.data)) > -1e-14


def test_initial_rejects_cut_support():
    with pytest.raises(DomainError):
        initial_density_matrix(fock_amplitudes(3), fock_amplitudes(0), kmax=2)


def test_populations_single_entry():
    dm = DensityMatrix.zeros(3, 1)
    dm[B(2, 3, 0), B(2, 3, 0)] = 1
    assert populations(dm) == (0, 1, 0)


def test_populations_integrity_error():
    dm = DensityMatrix.zeros(1, 1)
    dm[B(1, 0, 0), B(1, 0, 0)] = 1 + 1e-6j
    with pytest.raises(IntegrityError):
        populations(dm)


def test_population_sum_equals_trace():
    rng = np.random.default_rng(3)
    D = dimension(2, 2)
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    dm = DensityMatrix(a @ a.conj().T / D, 2, 2)
    assert sum(populations(dm)) == pytest.approx(trace(dm), abs=1e-14)


def test_purity_decreases_under_loss():
    # small brute-force instance: exact propagator of a lossy evolution
    from scipy.linalg import expm

    dm = initial_density_matrix(coherent_amplitudes(0.8, kmax=2, eps=1.0), fock_amplitudes(1), kmax=2, mmax=2)
    S = dense_superoperator(2, 2, 0.4)
    rho = (expm(3.0 * S) @ dm.data.ravel()).reshape(dm.data.shape)
    out = DensityMatrix(rho, 2, 2)
    assert purity(out) <= trace(out) ** 2 + 1e-12
    assert purity(out) < 0.99 * trace(out) ** 2


def test_embed_and_tensor():
    dm = initial_density_matrix(fock_amplitudes(1), fock_amplitudes(0), kmax=1, mmax=1)
    big = dm.embed(3, 2)
    assert big[B(1, 1, 0), B(1, 1, 0)] == 1 and trace(big) == 1
    assert big.tensor.shape == (3, 4, 3, 3, 4, 3)
    with pytest.raises(DomainError):
        big.embed(1, 1)


def test_classifier_examples():
    K = M = 5
    assert classify_element(B(1, 0, 3), B(1, 0, 3), K, M) is ElementClass.NIE
    assert classify_element(B(2, 4, 0), B(2, 4, 0), K, M) is ElementClass.NIE
    assert classify_element(B(1, 0, 2), B(2, 3, 0), K, M) is ElementClass.NIE
    for k in range(K + 1):
        for m in range(M + 1):
            if k < K or m < M:
                assert classify_element(B(3, k, m), B(3, k, m), K, M) is ElementClass.IE
    assert classify_element(B(1, 1, 0), B(1, 1, 0), K, M) is ElementClass.IE


def test_classifier_matches_brute_force():
    # an element is non-interacting iff its row of the lossless superoperator,
    # built from operator matrices, has no nonzero entry
    K = M = 3
    D = dimension(K, M)
    S = dense_superoperator(K, M, 0.0)
    nz = np.any(S != 0, axis=1).reshape(D, D)
    for r in range(D):
        for c in range(D):
            cls = classify_element(basis_index(r, K, M), basis_index(c, K, M), K, M)
            assert (cls is ElementClass.IE) == nz[r, c], (r, c)


def test_element_grammar():
    pair = parse_element("3,0,0;1,1,0")
    assert pair == (B(3, 0, 0), B(1, 1, 0))
    assert format_element(pair) == "3,0,0;1,1,0"
    with pytest.raises(DomainError):
        parse_element("1,0;1,0,0")


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    D = dimension(2, 1)
    dm = DensityMatrix(rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D)), 2, 1)
    p = write_snapshot(dm, tmp_path / "x.lcdm")
    raw = p.read_bytes()
    assert raw[:4] == b"LCDM" and len(raw) == 16 + 16 * D * D
    # header: version, kmax, mmax as little-endian u32; then flat row-major c16
    assert raw[4:16] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + (1).to_bytes(4, "little")
    assert np.frombuffer(raw[16:32], dtype="<f8").tolist() == [dm.data[0, 0].real, dm.data[0, 0].imag]
    back = read_snapshot(p)
    assert (back.kmax, back.mmax) == (2, 1)
    np.testing.assert_array_equal(back.data, dm.data)


def test_snapshot_corruption(tmp_path):
    p = tmp_path / "bad.lcdm"
    p.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(IntegrityError):
        read_snapshot(p)
    dm = DensityMatrix.zeros(1, 1)
    good = write_snapshot(dm, tmp_path / "g.lcdm").read_bytes()
    p.write_bytes(good[:-8])
    with pytest.raises(IntegrityError):
        read_snapshot(p)
