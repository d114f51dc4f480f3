"""Fixed-step RK4 time evolution and steady-state detection."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .density_matrix import (
    EPS_HERM,
    BasisIndex,
    DensityMatrix,
    flat_index,
    format_element,
    initial_density_matrix,
)
from .errors import ConfigError, DivergenceError, DomainError, IntegrityError, TruncationError
from .fock_states import EPS_TRUNC, AmplitudeVector, FieldSpec, Fock
from .liouvillian import Liouvillian
from .sectors import CompiledSectorStepper, ManifoldLayout, SectorLiouvillian

log = logging.getLogger(__name__)

DEFAULT_DT = 0.005
STABILITY_BOUND = 0.5
ENGINES = ("dense", "sector")


def stability_product(dt: float, kappa: float, kmax: int, mmax: int) -> float:
    return dt * max(1.0, kappa * (kmax + mmax))


def default_t_max(kappa: float) -> float:
    return max(200.0, 50.0 / kappa) if kappa > 0 else 200.0


@dataclass
class SimulationConfig:
    """Parameters of one run; time and loss rate in coupling units.

    ``kmax``/``mmax`` bound the density matrix. Left as ``None`` they are
    set to the smallest values that hold every reachable state: field-1
    photons never exceed the initial support, field-2 photons exceed theirs
    by at most one. ``dt=None`` means 0.005, reduced when needed to satisfy
    the stability bound.
    """

    kappa: float
    field1: FieldSpec = field(default_factory=lambda: Fock(1))
    field2: FieldSpec = field(default_factory=lambda: Fock(0))
    dt: Optional[float] = None
    t_max: Optional[float] = None
    record_every: int = 10
    steady_tol_pop: float = 1e-8
    steady_tol_photon: float = 1e-6
    kmax: Optional[int] = None
    mmax: Optional[int] = None
    engine: str = "dense"
    watch: tuple = ()
    leak_budget: float = 1e-4
    eps_trunc: float = EPS_TRUNC

    def __post_init__(self):
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ConfigError(f"kappa must be a finite non-negative number, got {self.kappa}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.t_max is not None and self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        self.watch = tuple((BasisIndex(*r), BasisIndex(*c)) for r, c in self.watch)
        try:
            self.psi1: AmplitudeVector = self.field1.amplitudes(self.eps_trunc)
            self.psi2: AmplitudeVector = self.field2.amplitudes(self.eps_trunc)
        except (TruncationError, DomainError) as exc:
            raise ConfigError(str(exc)) from exc
        need_k, need_m = self.psi1.support_max, self.psi2.support_max + 1
        self.dm_kmax = need_k if self.kmax is None else self.kmax
        self.dm_mmax = need_m if self.mmax is None else self.mmax
        if self.dm_kmax < need_k or self.dm_mmax < need_m:
            raise ConfigError(
                f"truncation kmax={self.dm_kmax}, mmax={self.dm_mmax} too small; "
                f"the initial fields need kmax >= {need_k}, mmax >= {need_m}"
            )
        if self.dt is None:
            span = max(1.0, self.kappa * (self.dm_kmax + self.dm_mmax))
            self.step = min(DEFAULT_DT, STABILITY_BOUND / span)
        else:
            if not self.dt > 0:
                raise ConfigError("dt must be positive")
            self.step = float(self.dt)
        prod = stability_product(self.step, self.kappa, self.dm_kmax, self.dm_mmax)
        if prod > STABILITY_BOUND + 1e-12:
            limit = STABILITY_BOUND / max(1.0, self.kappa * (self.dm_kmax + self.dm_mmax))
            raise ConfigError(
                f"dt={self.step} violates the stability bound dt*max(1, kappa*(kmax+mmax)) "
                f"<= {STABILITY_BOUND} (value {prod:.3g}); use dt <= {limit:.3g}"
            )
        for row, col in self.watch:
            try:
                flat_index(row, self.dm_kmax, self.dm_mmax)
                flat_index(col, self.dm_kmax, self.dm_mmax)
            except DomainError as exc:
                raise ConfigError(f"watch element {format_element((row, col))}: {exc}") from None

    @property
    def horizon(self) -> float:
        return default_t_max(self.kappa) if self.t_max is None else float(self.t_max)

    @property
    def initial_trace(self) -> float:
        return self.psi1.norm * self.psi2.norm

    def to_dict(self) -> dict:
        d = {
            "kappa": self.kappa,
            "field1": str(self.field1),
            "field2": str(self.field2),
            "dt": self.dt,
            "tmax": self.t_max,
            "record_every": self.record_every,
            "steady_tol_pop": self.steady_tol_pop,
            "steady_tol_photon": self.steady_tol_photon,
            "kmax": self.kmax,
            "mmax": self.mmax,
            "engine": self.engine,
            "watch_elements": [format_element(p) for p in self.watch],
            "leak_budget": self.leak_budget,
            "eps_trunc": self.eps_trunc,
        }
        return d

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)


@dataclass
class PopulationTrace:
    """Sampled observables of one evolution.

    Population columns are recorded every ``record_every`` steps; watched
    elements are recorded every step on ``watch_t``.
    """

    t: np.ndarray
    O1: np.ndarray
    O2: np.ndarray
    O3: np.ndarray
    trace: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    watch_t: np.ndarray
    watch: dict
    max_herm_defect: float
    steps: int
    final: Optional[DensityMatrix] = None

    def __len__(self):
        return self.t.size

    @property
    def samples(self):
        return list(zip(*(getattr(self, c).tolist() for c in TRACE_COLUMNS)))

    def element(self, row, col) -> np.ndarray:
        return self.watch[(BasisIndex(*row), BasisIndex(*col))]


GROUND_1 = BasisIndex(1, 0, 0)
GROUND_2 = BasisIndex(2, 0, 0)
TRACE_COLUMNS = ("t", "O1", "O2", "O3", "trace", "n1", "n2")


@dataclass
class SteadyStateResult:
    O1_st: float
    O2_st: float
    t_converged: float
    residual_photon: float
    residual_drift: float
    converged: bool
    O3: float = float("nan")
    trace: float = float("nan")
    run: Optional[PopulationTrace] = field(default=None, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("run")
        return d


# ---------------------------------------------------------------------------
# stepping


def _rk4(f, x, dt):
    k1 = f(x)
    k2 = f(x + (0.5 * dt) * k1)
    k3 = f(x + (0.5 * dt) * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _finish_step(y, adjoint, step):
    """Re-Hermitize ``y`` after checking its defect; returns (y, defect)."""
    yh = adjoint(y)
    defect = float(np.max(np.abs(y - yh)))
    if not math.isfinite(defect) or not np.isfinite(y.flat[0]):
        raise DivergenceError(f"non-finite density matrix at step {step}", step=step)
    if defect >= EPS_HERM:
        raise IntegrityError(f"Hermiticity defect {defect:.3e} at step {step} exceeds {EPS_HERM:.0e}")
    return 0.5 * (y + yh), defect


def rk4_step(dm: DensityMatrix, dt: float, kappa: float, step: int = 0) -> DensityMatrix:
    """One classical RK4 step of the full density matrix."""
    if stability_product(dt, kappa, dm.kmax, dm.mmax) > STABILITY_BOUND + 1e-12:
        raise DomainError("dt violates the stability bound")
    L = Liouvillian(dm.kmax, dm.mmax, kappa)
    y = _rk4(L.apply_array, dm.data, dt)
    y, _ = _finish_step(y, lambda a: a.conj().T, step)
    return DensityMatrix(y, dm.kmax, dm.mmax)


class DenseEngine:
    """Full density matrix driven by the stencil Liouvillian."""

    name = "dense"

    def __init__(self, kmax, mmax, kappa):
        self.kmax, self.mmax = kmax, mmax
        self.L = Liouvillian(kmax, mmax, kappa)

    def initial(self, psi1, psi2):
        return initial_density_matrix(psi1, psi2, self.kmax, self.mmax).data

    def from_dm(self, dm: DensityMatrix):
        return dm.data.copy()

    def step(self, x, dt, step):
        return _finish_step(_rk4(self.L.apply_array, x, dt), lambda a: a.conj().T, step)

    def observables(self, x):
        diag = np.diagonal(x).real.reshape(3, self.kmax + 1, self.mmax + 1)
        o = diag.sum(axis=(1, 2))
        p = diag.sum(axis=0)
        n1 = float(np.arange(self.kmax + 1) @ p.sum(axis=1))
        n2 = float(np.arange(self.mmax + 1) @ p.sum(axis=0))
        return float(o[0]), float(o[1]), float(o[2]), float(o.sum()), n1, n2

    def element_getter(self, row, col):
        r = flat_index(row, self.kmax, self.mmax)
        c = flat_index(col, self.kmax, self.mmax)
        return lambda x: x[r, c]

    def to_dm(self, x):
        return DensityMatrix(x, self.kmax, self.mmax)


class SectorEngine:
    """Same-manifold blocks only; see :mod:`lambda_cavity.sectors`."""

    name = "sector"

    def __init__(self, kmax, mmax, kappa, compiled=True):
        self.layout = ManifoldLayout(kmax, mmax)
        self.L = SectorLiouvillian(self.layout, kappa)
        self._stepper = CompiledSectorStepper(self.L) if compiled else None

    def initial(self, psi1, psi2):
        return self.layout.initial(psi1, psi2)

    def from_dm(self, dm: DensityMatrix):
        return self.layout.from_dense(dm)

    def step(self, x, dt, step):
        if self._stepper is None:
            return _finish_step(_rk4(self.L, x, dt), lambda a: a.conj().swapaxes(-1, -2), step)
        # the compiled kernel updates x in place
        defect = self._stepper(x, dt)
        if not math.isfinite(defect) or not np.isfinite(x.flat[0]):
            raise DivergenceError(f"non-finite density matrix at step {step}", step=step)
        if defect >= EPS_HERM:
            raise IntegrityError(f"Hermiticity defect {defect:.3e} at step {step} exceeds {EPS_HERM:.0e}")
        return x, defect

    def observables(self, x):
        o1, o2, o3 = self.layout.populations(x)
        n1, n2 = self.layout.photon_numbers(x)
        return o1, o2, o3, o1 + o2 + o3, n1, n2

    def element_getter(self, row, col):
        if not self.layout.same_manifold(row, col):
            raise ConfigError(
                f"element {format_element((row, col))} couples different excitation manifolds "
                "and is not tracked by the sector engine; use engine='dense'"
            )
        a, b, i = self.layout.locate(row)
        j = self.layout.locate(col)[2]
        return lambda x: x[a, b, i, j]

    def to_dm(self, x):
        return self.layout.to_dense(x)


def make_engine(config: SimulationConfig):
    cls = DenseEngine if config.engine == "dense" else SectorEngine
    return cls(config.dm_kmax, config.dm_mmax, config.kappa)


# ---------------------------------------------------------------------------
# evolution


class _SteadyDetector:
    def __init__(self, config: SimulationConfig):
        self.cfg = config
        self.window = 10.0 / config.kappa
        self.t_hist = []
        self.o_hist = []
        self.lag = 0
        self.drift = float("inf")
        self.photon = float("inf")

    def update(self, t, obs) -> bool:
        o1, o2, o3, _, n1, n2 = obs
        self.t_hist.append(t)
        self.o_hist.append((o1, o2, o3))
        # advance the pointer to the newest sample at least one window old
        while self.lag + 1 < len(self.t_hist) and self.t_hist[self.lag + 1] <= t - self.window + 1e-9:
            self.lag += 1
        self.photon = n1 + n2
        if self.t_hist[self.lag] > t - self.window + 1e-9:
            return False
        span = t - self.t_hist[self.lag]
        old = self.o_hist[self.lag]
        self.drift = max(abs(o1 - old[0]), abs(o2 - old[1]), abs(o3 - old[2])) / span
        cfg = self.cfg
        return (self.photon < cfg.steady_tol_photon and self.drift < cfg.steady_tol_pop
                and o3 < cfg.steady_tol_pop)


def _integrate(config: SimulationConfig, detector=None, initial: Optional[DensityMatrix] = None,
               keep_final=False):
    engine = make_engine(config)
    if initial is None:
        x = engine.initial(config.psi1, config.psi2)
    else:
        x = engine.from_dm(initial)
    dt = config.step
    n_steps = int(math.ceil(config.horizon / dt - 1e-9))
    getters = [engine.element_getter(r, c) for r, c in config.watch]
    watch = [np.empty(n_steps + 1, dtype=complex) for _ in getters]
    rows = []
    max_defect = 0.0
    stopped = False
    last = 0
    for step in range(n_steps + 1):
        t = step * dt
        for g, buf in zip(getters, watch):
            buf[step] = g(x)
        if step % config.record_every == 0 or step == n_steps:
            obs = engine.observables(x)
            rows.append((t,) + obs)
            if detector is not None and detector.update(t, obs):
                stopped = True
        last = step
        if stopped or step == n_steps:
            break
        x, defect = engine.step(x, dt, step + 1)
        max_defect = max(max_defect, defect)
    cols = np.array(rows, dtype=float).reshape(-1, 7)
    trace = PopulationTrace(
        *(cols[:, i].copy() for i in range(7)),
        watch_t=np.arange(last + 1) * dt,
        watch={p: buf[: last + 1] for p, buf in zip(config.watch, watch)},
        max_herm_defect=max_defect,
        steps=last,
        final=engine.to_dm(x) if keep_final else None,
    )
    return trace, stopped, engine, x


def evolve(config: SimulationConfig, initial: Optional[DensityMatrix] = None,
           keep_final: bool = False) -> PopulationTrace:
    """Integrate from t = 0 to the configured horizon."""
    trace, *_ = _integrate(config, initial=initial, keep_final=keep_final)
    return trace


def propagate(dm: DensityMatrix, t: float, kappa: float, dt: float = DEFAULT_DT) -> DensityMatrix:
    """Advance a full density matrix to exactly time ``t``.

    Uses the smallest number of equal steps not longer than ``dt``.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    n = int(math.ceil(t / dt - 1e-12))
    if n == 0:
        return dm.copy()
    h = t / n
    if stability_product(h, kappa, dm.kmax, dm.mmax) > STABILITY_BOUND + 1e-12:
        raise DomainError("dt violates the stability bound")
    engine = DenseEngine(dm.kmax, dm.mmax, kappa)
    x = dm.data.copy()
    for i in range(n):
        x, _ = engine.step(x, h, i + 1)
    return DensityMatrix(x, dm.kmax, dm.mmax)


def detect_steady_state(config: SimulationConfig, keep_final: bool = False) -> SteadyStateResult:
    """Evolve until photons are gone and populations have stopped drifting.

    Steadiness requires, at a recorded sample, total mean photon number below
    ``steady_tol_photon`` and both the level-3 population and the population
    drift rate over the trailing window 10/kappa below ``steady_tol_pop``.
    If the horizon is reached first the result has ``converged=False``.
    """
    if config.kappa <= 0:
        raise DomainError("kappa = 0 has no steady state: without losses the populations oscillate forever")
    det = _SteadyDetector(config)
    run, converged, engine, x = _integrate(config, detector=det, keep_final=keep_final)
    o1_st = float(engine.element_getter(GROUND_1, GROUND_1)(x).real)
    o2_st = float(engine.element_getter(GROUND_2, GROUND_2)(x).real)
    if not converged:
        log.warning("no steady state by t=%.1f (photons %.2e, drift %.2e)", run.t[-1], det.photon, det.drift)
    return SteadyStateResult(
        O1_st=o1_st,
        O2_st=o2_st,
        t_converged=float(run.t[-1]),
        residual_photon=float(det.photon),
        residual_drift=float(det.drift),
        converged=converged,
        O3=float(run.O3[-1]),
        trace=float(run.trace[-1]),
        run=run,
    )
