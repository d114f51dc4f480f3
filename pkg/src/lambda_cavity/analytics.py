"""Closed-form steady-state approximations and quadrature extraction.

The fitted expressions for the single- and two-photon inputs are only
accurate for small loss rates; comparisons against simulation use loose
tolerances, while comparisons between two routes to the same fitted
expression (closed form versus numerical integration) use tight ones.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .density_matrix import BasisIndex
from .errors import AnalyticValidityWarning, ConvergenceError, DomainError
from .integrator import SimulationConfig, detect_steady_state

PN_VALIDITY_LIMIT = 1.5

P110 = (BasisIndex(1, 1, 0), BasisIndex(1, 1, 0))
P201 = (BasisIndex(2, 0, 1), BasisIndex(2, 0, 1))
P210 = (BasisIndex(2, 1, 0), BasisIndex(2, 1, 0))


def _require_positive(kappa):
    if not kappa > 0:
        raise DomainError(f"kappa must be > 0 (no steady state without losses), got {kappa}")


def single_photon_steady_states(kappa: float) -> tuple[float, float]:
    """(O1_st, O2_st) for a one-photon field 1 and vacuum field 2."""
    _require_positive(kappa)
    k2 = kappa * kappa
    shift = 2.0 * k2 / (16.0 + 4.5 * k2) - 0.5 * k2 / (64.0 + 2.0 * k2)
    return 0.5 + shift, 0.5 - shift


def two_photon_p211(t, kappa: float):
    """Approximate p_{2,1,1;2,1,1}(t) for a two-photon field 1 and vacuum field 2."""
    if kappa < 0:
        raise DomainError("kappa must be >= 0")
    t = np.asarray(t, dtype=float)
    w = math.sqrt(3.0)
    bracket = np.cos(w * t) * np.exp(-0.75 * kappa * t) - np.exp(-kappa * t)
    osc = (np.sin(w * t) * np.exp(-1.75 * kappa * t)
           - 0.5 * np.sin(2 * w * t) * np.exp(-1.5 * kappa * t))
    out = (2.0 / 9.0) * bracket**2 + kappa / (9.0 * w) * osc
    return float(out) if out.ndim == 0 else out


def two_photon_pN_closed_form(kappa: float) -> float:
    """Fitted p_N(kappa); warns beyond the range where it tracks simulation."""
    _require_positive(kappa)
    if kappa > PN_VALIDITY_LIMIT:
        warnings.warn(
            f"p_N closed form drifts from simulation for kappa > {PN_VALIDITY_LIMIT} (got {kappa})",
            AnalyticValidityWarning,
            stacklevel=2,
        )
    k2 = kappa * kappa
    return (960.0 + 32.0 * k2 - 7.75 * k2 * k2) / (27.0 * (1.5 * k2 + 8.0) * (24.5 * k2 + 24.0))


def pN_from_p211_double_integral(kappa: float, tol: float = 1e-9, h0: float = 0.02,
                                 max_refinements: int = 6) -> float:
    """kappa^2 int_0^inf dt e^{-kappa t} int_0^t dt' e^{kappa t'} p211(t').

    Nested cumulative Simpson rules on a uniform grid up to the time where
    the outer integrand has decayed by 1e-13; the grid is halved until two
    successive results agree within ``tol``.
    """
    _require_positive(kappa)
    T = 30.0 / kappa
    prev = None
    change = math.inf
    h = h0
    for _ in range(max_refinements + 1):
        n = int(math.ceil(T / h))
        n += n % 2  # Simpson wants an even number of intervals
        t = np.linspace(0.0, T, n + 1)
        inner = cumulative_simpson(np.exp(kappa * t) * two_photon_p211(t, kappa), x=t, initial=0.0)
        value = kappa * kappa * simpson(np.exp(-kappa * t) * inner, x=t)
        if prev is not None:
            change = abs(value - prev)
            if change < tol:
                return float(value)
        prev = value
        h /= 2
    raise ConvergenceError(
        f"double integral did not converge to {tol:.0e} (last change {change:.2e})",
        achieved=change,
    )


def integrate_trace(y: np.ndarray, h: float) -> tuple[float, float]:
    """Trapezoid integral of uniformly sampled ``y`` with a Richardson correction.

    Returns (value, error estimate).
    """
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        return float(np.trapezoid(y, dx=h)) if y.size > 1 else 0.0, 0.0
    # the last interval is handled separately if the sample count is even
    n_even = y.size - 1 - ((y.size - 1) % 2)
    head = y[: n_even + 1]
    fine = np.trapezoid(head, dx=h)
    coarse = np.trapezoid(head[::2], dx=2 * h)
    tail = np.trapezoid(y[n_even:], dx=h)
    value = fine + (fine - coarse) / 3.0 + tail
    return float(value), float(abs(fine - coarse) / 3.0)


@dataclass
class TwoPhotonSplit:
    p_N: float
    p_I: float
    kappa: float
    O1_st: float
    O2_st: float
    O1_quadrature: float
    quadrature_error: float
    t_converged: float


def extract_pN_pI(config: SimulationConfig) -> TwoPhotonSplit:
    """Split O2_st into its non-interacting (p_N) and interacting (p_I) sources.

    The three source elements are added to the watch list if missing; the
    evolution must reach a steady state.
    """
    _require_positive(config.kappa)
    watch = tuple(config.watch)
    for pair in (P110, P201, P210):
        if pair not in watch:
            watch += (pair,)
    cfg = config.with_(watch=watch)
    res = detect_steady_state(cfg)
    if not res.converged:
        raise ConvergenceError(
            f"no steady state by t={res.t_converged:.1f}; p_N/p_I need the full decay",
            achieved=res.residual_photon,
        )
    run = res.run
    h = cfg.step
    parts = {}
    err = 0.0
    for name, pair in (("pN", P210), ("pI", P201), ("O1", P110)):
        val, e = integrate_trace(run.element(*pair).real, h)
        parts[name] = cfg.kappa * val
        err = max(err, cfg.kappa * e)
    return TwoPhotonSplit(
        p_N=parts["pN"],
        p_I=parts["pI"],
        kappa=cfg.kappa,
        O1_st=res.O1_st,
        O2_st=res.O2_st,
        O1_quadrature=parts["O1"],
        quadrature_error=err,
        t_converged=res.t_converged,
    )
