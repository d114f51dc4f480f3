"""Steady states over a grid of loss rates and input fields."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .fock_states import FieldSpec, Fock, field_label
from .integrator import SimulationConfig, detect_steady_state

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("field1", "kappa", "O1_st", "O2_st", "converged", "t_converged")


def log_grid(lo: float, hi: float, n: int) -> tuple[float, ...]:
    if not (0 < lo < hi) or n < 2:
        raise ConfigError("log grid needs 0 < lo < hi and at least two points")
    return tuple(float(x) for x in np.geomspace(lo, hi, n))


DEFAULT_GRID = log_grid(0.05, 5.0, 40)


@dataclass
class SweepSpec:
    kappa_grid: Sequence[float]
    field1_variants: Sequence[FieldSpec]
    field2: FieldSpec = field(default_factory=lambda: Fock(0))
    base: Optional[SimulationConfig] = None

    def __post_init__(self):
        self.kappa_grid = tuple(float(k) for k in self.kappa_grid)
        self.field1_variants = tuple(self.field1_variants)
        if not self.kappa_grid:
            raise ConfigError("empty kappa grid")
        if any(k <= 0 for k in self.kappa_grid):
            raise ConfigError("every kappa in a sweep must be > 0 (no steady state without losses)")
        if any(b <= a for a, b in zip(self.kappa_grid, self.kappa_grid[1:])):
            raise ConfigError("kappa grid must be strictly increasing")
        if not self.field1_variants:
            raise ConfigError("no field-1 variants given")
        if self.base is None:
            self.base = SimulationConfig(kappa=self.kappa_grid[0], field2=self.field2, engine="sector")

    def point(self, variant: FieldSpec, kappa: float) -> SimulationConfig:
        # t_max is left to the per-kappa default unless the template fixes it
        return self.base.with_(kappa=kappa, field1=variant, field2=self.field2)

    def points(self):
        for vi, variant in enumerate(self.field1_variants):
            for ki, kappa in enumerate(self.kappa_grid):
                yield (vi, ki), self.point(variant, kappa)


@dataclass(frozen=True)
class SweepRow:
    field1: str
    kappa: float
    O1_st: float
    O2_st: float
    converged: bool
    t_converged: float


@dataclass
class SweepTable:
    rows: list

    def __len__(self):
        return len(self.rows)

    def variant(self, label: str) -> list:
        return [r for r in self.rows if r.field1 == label]

    def column(self, label: str, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.variant(label)])


def _run_point(config: SimulationConfig) -> SweepRow:
    res = detect_steady_state(config)
    if not res.converged:
        log.warning("%s at kappa=%g did not converge by t=%g", config.field1, config.kappa, res.t_converged)
    return SweepRow(field_label(config.field1), config.kappa, res.O1_st, res.O2_st,
                    res.converged, res.t_converged)


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepTable:
    """One independent steady-state run per (variant, kappa).

    Rows are ordered by variant, then kappa, whatever the execution order.
    Non-converged points are kept with ``converged=False``.
    """
    keys, configs = zip(*spec.points())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, configs))
    else:
        results = []
        for cfg in configs:
            results.append(_run_point(cfg))
            log.info("%s kappa=%g -> O2_st=%.6f", results[-1].field1, cfg.kappa, results[-1].O2_st)
    ordered = [row for _, row in sorted(zip(keys, results), key=lambda kr: kr[0])]
    return SweepTable(ordered)
