import pytest

from lambda_cavity.errors import ConfigError
from lambda_cavity.fock_states import Coherent, Fock
from lambda_cavity.integrator import SimulationConfig
from lambda_cavity.sweep import DEFAULT_GRID, SweepSpec, log_grid, run_sweep


def test_default_grid():
    assert len(DEFAULT_GRID) == 40
    assert DEFAULT_GRID[0] == pytest.approx(0.05) and DEFAULT_GRID[-1] == pytest.approx(5.0)
    assert all(b > a for a, b in zip(DEFAULT_GRID, DEFAULT_GRID[1:]))


@pytest.mark.parametrize("grid", [[], [0.1, 0.0], [0.2, 0.1], [0.1, 0.1], [-1, 1]])
def test_spec_validation(grid):
    with pytest.raises(ConfigError):
        SweepSpec(kappa_grid=grid, field1_variants=[Fock(1)])


def test_spec_needs_variants():
    with pytest.raises(ConfigError):
        SweepSpec(kappa_grid=[0.1], field1_variants=[])
    with pytest.raises(ConfigError):
        log_grid(1, 0.5, 4)


def test_points_do_not_share_state():
    spec = SweepSpec([0.2, 1.0], [Fock(1), Coherent(0.5)])
    pts = list(spec.points())
    assert [k for k, _ in pts] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    cfgs = [c for _, c in pts]
    assert cfgs[0].kappa == 0.2 and cfgs[1].kappa == 1.0
    assert cfgs[0].horizon == max(200, 50 / 0.2) and cfgs[1].horizon == 200
    assert cfgs[2].field1 == Coherent(0.5)


@pytest.fixture(scope="module")
def small_table():
    spec = SweepSpec([0.3, 1.0, 3.0], [Fock(1), Fock(2)])
    return spec, run_sweep(spec)


def test_rows_and_order(small_table):
    spec, table = small_table
    assert len(table) == 6
    assert [r.field1 for r in table.rows] == ["fock:n=1"] * 3 + ["fock:n=2"] * 3
    assert [r.kappa for r in table.rows] == [0.3, 1.0, 3.0] * 2
    for r in table.rows:
        assert r.converged
        assert 1 - 1e-4 <= r.O1_st + r.O2_st <= 1 + 1e-12


def test_parallel_matches_serial(small_table):
    spec, table = small_table
    assert run_sweep(spec, workers=2).rows == table.rows


def test_grid_independence(small_table):
    spec, table = small_table
    single = run_sweep(SweepSpec([1.0], [Fock(2)]))
    assert single.rows[0] == table.variant("fock:n=2")[1]


def test_non_convergence_recorded():
    base = SimulationConfig(kappa=0.1, engine="sector", t_max=2.0)
    table = run_sweep(SweepSpec([0.1, 0.2], [Fock(1)], base=base))
    assert len(table) == 2 and not any(r.converged for r in table.rows)


def test_high_kappa_trend(small_table):
    _, table = small_table
    for label in ("fock:n=1", "fock:n=2"):
        o2 = table.column(label, "O2_st")
        assert o2[-1] < o2[0]
