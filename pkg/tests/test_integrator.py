import math

import numpy as np
import pytest

from lambda_cavity.density_matrix import (
    BasisIndex,
    DensityMatrix,
    initial_density_matrix,
    populations,
)
from lambda_cavity.errors import ConfigError, DivergenceError, DomainError
from lambda_cavity.fock_states import Coherent, Fock, coherent_amplitudes, fock_amplitudes
from lambda_cavity.integrator import (
    SimulationConfig,
    default_t_max,
    detect_steady_state,
    evolve,
    propagate,
    rk4_step,
    stability_product,
)
from lambda_cavity.oracle import expm_evolve, single_photon_lossless, three_state_populations

B = BasisIndex


def small_initial():
    psi1 = coherent_amplitudes(0.9, kmax=2, eps=1.0)
    psi1 = type(psi1)(psi1.amps / np.linalg.norm(psi1.amps))
    return initial_density_matrix(psi1, fock_amplitudes(1), kmax=2, mmax=2)


def test_config_defaults_and_truncation():
    cfg = SimulationConfig(kappa=0.3, field1=Coherent(math.sqrt(10)))
    assert cfg.step == 0.005
    assert cfg.dm_mmax == 1 and cfg.dm_kmax == cfg.psi1.kmax
    assert cfg.horizon == default_t_max(0.3) == max(200, 50 / 0.3)
    assert SimulationConfig(kappa=0.0).horizon == 200


def test_config_auto_dt_respects_bound():
    cfg = SimulationConfig(kappa=5.0, field1=Fock(30))
    assert stability_product(cfg.step, 5.0, cfg.dm_kmax, cfg.dm_mmax) <= 0.5 + 1e-15
    assert cfg.step < 0.005


def test_config_rejects_unstable_dt():
    with pytest.raises(ConfigError, match="stability bound"):
        SimulationConfig(kappa=2.0, field1=Fock(10), dt=0.05)


@pytest.mark.parametrize("kw", [dict(kappa=-1), dict(kappa=math.nan), dict(kappa=0.1, engine="gpu"),
                                dict(kappa=0.1, record_every=0), dict(kappa=0.1, t_max=-1),
                                dict(kappa=0.1, kmax=0), dict(kappa=0.1, dt=0.0),
                                dict(kappa=0.1, watch=((B(1, 5, 0), B(1, 0, 0)),))])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        SimulationConfig(**kw)


def test_rk4_ground_state_fixed_point():
    vac = fock_amplitudes(0)
    dm = initial_density_matrix(vac, vac, kmax=1, mmax=1)
    out = rk4_step(dm, 0.01, 0.7)
    np.testing.assert_array_equal(out.data, dm.data)


def test_rk4_single_step_excitation():
    dm = initial_density_matrix(fock_amplitudes(1), fock_amplitudes(0), kmax=1, mmax=1)
    dt = 1e-3
    out = rk4_step(dm, dt, 0.0)
    o3 = populations(out)[2]
    assert o3 == pytest.approx(dt * dt, rel=1e-5)
    assert abs(o3 - three_state_populations(dt)[2][0]) < 1e-15


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_rk4_divergence():
    dm = DensityMatrix.zeros(1, 1)
    dm.data[0, 0] = np.inf
    with pytest.raises(DivergenceError):
        rk4_step(dm, 0.01, 0.1)
    with pytest.raises(DomainError):
        rk4_step(DensityMatrix.zeros(4, 4), 0.4, 1.0)


def test_rk4_convergence_order():
    dm = small_initial()
    T, kappa = 2.0, 0.4
    exact = expm_evolve(dm, kappa, T).data
    errs = [np.max(np.abs(propagate(dm, T, kappa, dt).data - exact)) for dt in (0.02, 0.01, 0.005)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 3.7, (errs, orders)


def test_propagate_lands_on_time():
    dm = small_initial()
    out = propagate(dm, 0.0123, 0.2, dt=0.005)
    ref = expm_evolve(dm, 0.2, 0.0123)
    assert np.max(np.abs(out.data - ref.data)) < 1e-11
    with pytest.raises(DomainError):
        propagate(dm, -1, 0.2)


@pytest.mark.parametrize("engine", ["dense", "sector"])
def test_lossless_single_photon(engine):
    cfg = SimulationConfig(kappa=0.0, t_max=50.0, record_every=1, engine=engine)
    tr = evolve(cfg)
    o1, o2, o3 = single_photon_lossless(tr.t)
    assert np.max(np.abs(tr.O2 - o2)) < 1e-6
    assert np.max(np.abs(tr.O3 - o3)) < 1e-6
    assert np.max(np.abs(tr.trace - 1.0)) < 1e-9
    np.testing.assert_allclose(tr.O1 + tr.O2 + tr.O3, tr.trace, atol=1e-12)
    assert np.all(np.diff(tr.t) > 0)
    assert tr.max_herm_defect < 1e-10


def test_single_photon_closed_form_equals_diagonalization():
    t = np.linspace(0, 20, 401)
    a = three_state_populations(t)
    b = single_photon_lossless(t)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-13)


def test_engines_agree():
    cfg = SimulationConfig(kappa=0.4, field1=Coherent(1.5), field2=Fock(1), t_max=6.0, record_every=20,
                           watch=((B(2, 0, 0), B(2, 0, 0)), (B(1, 1, 0), B(3, 0, 0))))
    dense = evolve(cfg)
    sector = evolve(cfg.with_(engine="sector"))
    for name in ("O1", "O2", "O3", "trace", "n1", "n2"):
        np.testing.assert_allclose(getattr(dense, name), getattr(sector, name), atol=1e-13)
    for pair in cfg.watch:
        np.testing.assert_allclose(dense.element(*pair), sector.element(*pair), atol=1e-13)


def test_sector_rejects_cross_manifold_watch():
    cfg = SimulationConfig(kappa=0.2, engine="sector", t_max=1.0, watch=((B(1, 1, 0), B(1, 0, 0)),))
    with pytest.raises(ConfigError, match="dense"):
        evolve(cfg)


def test_lossy_trace_and_bounds():
    cfg = SimulationConfig(kappa=0.3, field1=Coherent(math.sqrt(3)), t_max=30.0, engine="sector")
    tr = evolve(cfg)
    assert tr.trace.min() >= cfg.initial_trace - 1e-4
    for o in (tr.O1, tr.O2, tr.O3):
        assert o.min() >= -1e-8 and o.max() <= 1 + 1e-8
    assert tr.n1[-1] < tr.n1[0]


def test_evolve_from_initial_dm():
    dm = initial_density_matrix(fock_amplitudes(1), fock_amplitudes(0), kmax=1, mmax=1)
    cfg = SimulationConfig(kappa=0.0, t_max=math.pi / math.sqrt(2), dt=math.pi / math.sqrt(2) / 1000,
                           record_every=1000)
    tr = evolve(cfg, initial=dm, keep_final=True)
    assert abs(tr.O2[-1] - 1) < 1e-9
    assert abs(tr.final[B(2, 0, 1), B(2, 0, 1)] - 1) < 1e-9


def test_steady_rejects_lossless():
    with pytest.raises(DomainError, match="no steady state"):
        detect_steady_state(SimulationConfig(kappa=0.0))


@pytest.mark.parametrize("kappa", [0.1, 0.7])
def test_single_photon_steady(kappa):
    res = detect_steady_state(SimulationConfig(kappa=kappa, engine="sector"))
    assert res.converged
    assert abs(res.O1_st + res.O2_st - 1) < 1e-4
    assert res.O3 < 1e-8 and res.residual_photon < 1e-6 and res.residual_drift < 1e-8
    if kappa == 0.1:
        assert abs(res.O1_st - 0.5012) < 0.02


def test_steady_two_photon_ordering():
    res = detect_steady_state(SimulationConfig(kappa=0.1, field1=Fock(2), engine="sector"))
    assert res.converged and res.O2_st > res.O1_st


def test_non_convergence_is_reported():
    res = detect_steady_state(SimulationConfig(kappa=0.05, t_max=5.0, engine="sector"))
    assert not res.converged
    assert res.t_converged == pytest.approx(5.0)


def test_determinism():
    cfg = SimulationConfig(kappa=0.2, field1=Coherent(1.1), t_max=5.0)
    a, b = evolve(cfg), evolve(cfg)
    assert a.samples == b.samples
