"""Command-line front end: ``lambda-cavity {evolve,steady,sweep,validate}``.

Settings resolve as flags over ``--config`` file over defaults. Outputs go
to ``--out`` (default ``./out``): CSV tables, ``summary.json``,
``manifest.json`` and a generated plot script.

Exit codes: 0 success, 1 validation check failed, 2 configuration error,
3 numerical divergence or integrity failure, 4 no steady state reached.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .density_matrix import parse_element, write_snapshot
from .errors import ConfigError, ConvergenceError, DivergenceError, DomainError, IntegrityError
from .integrator import SimulationConfig, detect_steady_state, evolve
from .io import (
    RunManifest,
    config_from_dict,
    emit_plot_script,
    write_elements_csv,
    write_summary_json,
    write_sweep_csv,
    write_trace_csv,
)
from .sectors import ManifoldLayout
from .sweep import DEFAULT_GRID, SweepSpec, log_grid, run_sweep

log = logging.getLogger("lambda_cavity")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DIVERGED, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4

DEFAULTS = {
    "kappa": 0.1,
    "field1": "fock:n=1",
    "field2": "fock:n=0",
    "dt": None,
    "tmax": None,
    "record_every": 10,
    "kmax": None,
    "mmax": None,
    "engine": "auto",
    "watch_elements": [],
    "steady_tol_pop": 1e-8,
    "steady_tol_photon": 1e-6,
    "leak_budget": 1e-4,
    "eps_trunc": 1e-6,
}
SWEEP_DEFAULTS = {
    "kappa_grid": list(DEFAULT_GRID),
    "variants": ["fock:n=10", "coherent:alpha=3.1622776601683795", "squeezed:r=1.868551121099462"],
    "workers": 1,
}

# flag dest -> config key
_FLAG_KEYS = {
    "kappa": "kappa", "field1": "field1", "field2": "field2", "dt": "dt", "tmax": "tmax",
    "record_every": "record_every", "kmax": "kmax", "mmax": "mmax", "engine": "engine",
    "watch_elements": "watch_elements",
}


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _watch_list(text):
    # "n,k,m;n',k',m'" items separated by spaces or '|'
    items = [s for s in text.replace("|", " ").split() if s]
    for s in items:
        try:
            parse_element(s)
        except DomainError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return items


def _grid(text):
    """``lo:hi:n`` for a log grid, or a comma-separated list."""
    try:
        if text.count(":") == 2:
            lo, hi, n = text.split(":")
            return list(log_grid(float(lo), float(hi), int(n)))
        return [float(s) for s in text.split(",") if s.strip()]
    except (ValueError, ConfigError) as exc:
        raise argparse.ArgumentTypeError(f"bad kappa grid {text!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lambda-cavity",
        description="Lambda-type three-level system in two lossy cavity modes.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with keys named like the flags")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--field1", help="field-1 state, e.g. coherent:alpha=3.16228")
    common.add_argument("--field2", help="field-2 state, e.g. fock:n=0")
    common.add_argument("--kappa", type=float, help="loss rate in coupling units")
    common.add_argument("--dt", type=float, help="RK4 step")
    common.add_argument("--tmax", type=float, help="integration horizon")
    common.add_argument("--kmax", type=int, help="field-1 Fock cutoff of the density matrix")
    common.add_argument("--mmax", type=int, help="field-2 Fock cutoff of the density matrix")
    common.add_argument("--engine", choices=("auto", "dense", "sector"))
    common.add_argument("--record-every", dest="record_every", type=_positive_int)
    common.add_argument("--watch-elements", dest="watch_elements", type=_watch_list,
                        help="elements 'n,k,m;n2,k2,m2' separated by spaces or |")
    common.add_argument("-v", "--verbose", action="store_true")

    ev = sub.add_parser("evolve", parents=[common], help="time evolution to --tmax")
    ev.add_argument("--snapshot", action="store_true", help="also write the final density matrix")
    sub.add_parser("steady", parents=[common], help="evolve until a steady state is detected")
    sw = sub.add_parser("sweep", parents=[common], help="steady states over a kappa grid")
    sw.add_argument("--kappa-grid", dest="kappa_grid", type=_grid,
                    help="lo:hi:n (log spaced) or comma-separated values")
    sw.add_argument("--variant", dest="variants", action="append", help="field-1 variant (repeatable)")
    sw.add_argument("--workers", type=_positive_int)
    va = sub.add_parser("validate", help="analytic cross-checks and invariants")
    va.add_argument("--quick", action="store_true", help="skip the slower steady-state check")
    return p


def _load_file(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    # an emitted manifest can be fed back in directly
    if "config" in doc and "command" in doc:
        doc = dict(doc["config"])
        base = doc.pop("base", None)
        if base:
            doc = {**base, **doc}
    return doc


def _resolve_engine(d: dict) -> str:
    engine = d.get("engine") or "auto"
    if engine != "auto":
        return engine
    for s in d.get("watch_elements") or []:
        row, col = parse_element(s)
        if _manifold(row) != _manifold(col):
            return "dense"
    return "sector"


def _manifold(idx):
    # the manifold label does not depend on the cutoffs
    return ManifoldLayout(idx.k + 1, idx.m + 1).locate(idx)[:2]


def parse_config(args: argparse.Namespace) -> RunManifest:
    """Resolve flags over file over defaults into a manifest."""
    file_doc = _load_file(getattr(args, "config", None))
    d = dict(DEFAULTS)
    sweep_keys = set(SWEEP_DEFAULTS) | {"field2"}
    for k, v in file_doc.items():
        if k not in DEFAULTS and k not in SWEEP_DEFAULTS:
            raise ConfigError(f"unknown key {k!r} in config file")
        d[k] = v
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            d[key] = v
    d["engine"] = _resolve_engine(d)
    command = args.command

    if command == "sweep":
        s = {k: d.get(k, v) for k, v in SWEEP_DEFAULTS.items()}
        for k in SWEEP_DEFAULTS:
            v = getattr(args, k, None)
            if v is not None:
                s[k] = v
        base = {k: d[k] for k in DEFAULTS if k not in sweep_keys}
        base["field2"] = d["field2"]
        base["kappa"] = s["kappa_grid"][0] if s["kappa_grid"] else d["kappa"]
        try:
            base_cfg = config_from_dict(base)
            spec = SweepSpec(
                kappa_grid=s["kappa_grid"],
                field1_variants=[_parse_field(v) for v in s["variants"]],
                field2=base_cfg.field2,
                base=base_cfg,
            )
            # resolve every point now so bound violations surface before any run
            for _, cfg in spec.points():
                pass
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        return RunManifest.for_sweep(spec, workers=int(s["workers"]))

    cfg_dict = {k: d[k] for k in DEFAULTS}
    if command == "steady" and not float(cfg_dict["kappa"]) > 0:
        raise ConfigError(
            f"steady needs kappa > 0 (got {cfg_dict['kappa']}): without losses there is no "
            "steady state, the populations keep oscillating"
        )
    cfg = config_from_dict(cfg_dict)
    return RunManifest.for_config(command, cfg)


def _parse_field(text):
    from .fock_states import parse_field_spec
    return parse_field_spec(text)


def _stamp():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _run_single(manifest: RunManifest, out: Path, snapshot=False) -> int:
    cfg: SimulationConfig = manifest.resolve()
    code = EXIT_OK
    if manifest.command == "evolve":
        if snapshot and cfg.engine != "dense":
            raise ConfigError("--snapshot needs the full density matrix; add --engine dense")
        result = trace = evolve(cfg, keep_final=snapshot)
        print(f"evolved to t={trace.t[-1]:g}: O1={trace.O1[-1]:.6f} O2={trace.O2[-1]:.6f} "
              f"O3={trace.O3[-1]:.6f} trace={trace.trace[-1]:.8f}")
    else:
        result = detect_steady_state(cfg)
        trace = result.run
        state = "steady" if result.converged else "NOT converged"
        print(f"{state} at t={result.t_converged:g}: O1_st={result.O1_st:.6f} O2_st={result.O2_st:.6f}")
        if not result.converged:
            code = EXIT_NOT_CONVERGED
    leak = abs(cfg.initial_trace - float(trace.trace.min()))
    if leak > cfg.leak_budget:
        log.warning("trace leakage %.2e exceeds budget %.0e; raise the Fock cutoffs", leak, cfg.leak_budget)
    outputs = {"trace": write_trace_csv(trace, out / "trace.csv").name}
    if trace.watch:
        outputs["elements"] = write_elements_csv(trace, out / "elements.csv").name
    if snapshot:
        outputs["snapshot"] = write_snapshot(trace.final, out / "final.lcdm").name
    outputs["summary"] = write_summary_json(result, manifest, out / "summary.json").name
    outputs["plot"] = emit_plot_script(out, trace_csv="trace.csv")[0].name
    manifest.outputs = outputs
    return code


def _run_sweep(manifest: RunManifest, out: Path) -> int:
    spec = manifest.resolve()
    table = run_sweep(spec, workers=int(manifest.config.get("workers", 1)))
    outputs = {"sweep": write_sweep_csv(table, out / "sweep.csv").name}
    outputs["summary"] = write_summary_json(table, manifest, out / "summary.json").name
    outputs["plot"] = emit_plot_script(out, sweep_csv="sweep.csv")[0].name
    manifest.outputs = outputs
    bad = [r for r in table.rows if not r.converged]
    for r in table.rows:
        print(f"{r.field1:45s} kappa={r.kappa:<10.5g} O2_st={r.O2_st:.6f}{'' if r.converged else '  (not converged)'}")
    return EXIT_NOT_CONVERGED if bad else EXIT_OK


def run_validate(quick: bool = False) -> int:
    """Fast analytic and structural checks; prints one line per check."""
    from . import oracle
    from .analytics import pN_from_p211_double_integral, single_photon_steady_states, two_photon_pN_closed_form
    from .density_matrix import BasisIndex, DensityMatrix, classify_element, ElementClass
    from .liouvillian import Liouvillian

    checks = []
    rng = np.random.default_rng(0)
    D = 27
    x = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    x = x + x.conj().T
    S = oracle.dense_superoperator(2, 2, 0.7)
    dev = np.max(np.abs(Liouvillian(2, 2, 0.7).apply_array(x) - (S @ x.ravel()).reshape(D, D)))
    checks.append(("stencil equals dense superoperator (D=27)", dev <= 1e-12, f"{dev:.1e}"))

    tr = evolve(SimulationConfig(kappa=0.0, t_max=math.pi / math.sqrt(2), dt=math.pi / math.sqrt(2) / 888,
                                 record_every=888))
    err = abs(tr.O2[-1] - 1.0)
    checks.append(("lossless single-photon transfer O2(pi/sqrt2) = 1", err <= 1e-6, f"{err:.1e}"))

    worst = max(abs(pN_from_p211_double_integral(k) - two_photon_pN_closed_form(k)) for k in (0.25, 0.5, 1.0))
    checks.append(("p_N closed form equals double integral of p211", worst <= 1e-4, f"{worst:.1e}"))

    mism = 0
    K = M = 3
    for n in (1, 2, 3):
        for k in range(K + 1):
            for m in range(M + 1):
                dm = DensityMatrix.zeros(K, M)
                dm[BasisIndex(n, k, m), BasisIndex(n, k, m)] = 1.0
                deriv = Liouvillian(K, M, 0.0).apply_array(dm.data)
                nie = not np.any(deriv)
                cls = classify_element(BasisIndex(n, k, m), BasisIndex(n, k, m), K, M)
                mism += nie != (cls is ElementClass.NIE)
    checks.append(("diagonal NIE classification at kmax=mmax=3", mism == 0, f"{mism} mismatches"))

    if not quick:
        res = detect_steady_state(SimulationConfig(kappa=0.5, engine="sector"))
        o1 = single_photon_steady_states(0.5)[0]
        ok = res.converged and abs(res.O1_st - o1) <= 0.02
        checks.append(("single-photon O1_st at kappa=0.5 vs closed form", ok, f"{res.O1_st:.5f} vs {o1:.5f}"))

    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_FAILED


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        doc = {"defaults": DEFAULTS, "sweep_defaults": SWEEP_DEFAULTS, "version": __version__}
        print(json.dumps(doc, indent=2, sort_keys=True))
        return EXIT_OK
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        if args.command == "validate":
            return run_validate(args.quick)
        manifest = parse_config(args)
        out = args.out
        manifest.started = _stamp()
        t0 = time.perf_counter()
        if args.command == "sweep":
            code = _run_sweep(manifest, out)
        else:
            code = _run_single(manifest, out, snapshot=getattr(args, "snapshot", False))
        manifest.wall_seconds = round(time.perf_counter() - t0, 3)
        manifest.finished = _stamp()
        manifest.write(out / "manifest.json")
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, IntegrityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
