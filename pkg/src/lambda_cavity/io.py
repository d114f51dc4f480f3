"""CSV/JSON writers, run manifests and generated plot scripts.

Floats are written with ``repr``, the shortest decimal that parses back to
the same double, so tables round-trip exactly and identical runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import __version__
from .density_matrix import format_element, parse_element
from .errors import ConfigError
from .fock_states import parse_field_spec
from .integrator import TRACE_COLUMNS, PopulationTrace, SimulationConfig, SteadyStateResult
from .sweep import SWEEP_COLUMNS, SweepRow, SweepSpec, SweepTable

PathLike = Union[str, Path]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return repr(float(x))


def _open_for_write(path: PathLike):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path, open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_trace_csv(trace: PopulationTrace, path: PathLike) -> Path:
    path, fh = _open_for_write(path)
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace.samples:
            w.writerow([fmt(v) for v in row])
    return path


def read_trace_csv(path: PathLike) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ConfigError(f"{path}: not a trace CSV (header {rows[:1]})")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return {name: data[:, i] for i, name in enumerate(TRACE_COLUMNS)}


def write_elements_csv(trace: PopulationTrace, path: PathLike) -> Path:
    """Watched elements per step: t, then Re/Im columns for each element."""
    path, fh = _open_for_write(path)
    pairs = list(trace.watch)
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["t"]
        for p in pairs:
            label = format_element(p)
            header += [f"re({label})", f"im({label})"]
        w.writerow(header)
        cols = [trace.watch[p] for p in pairs]
        for i, t in enumerate(trace.watch_t):
            row = [fmt(t)]
            for c in cols:
                row += [fmt(c[i].real), fmt(c[i].imag)]
            w.writerow(row)
    return path


def write_sweep_csv(table: SweepTable, path: PathLike) -> Path:
    # field labels contain commas, so csv quoting is required
    path, fh = _open_for_write(path)
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in table.rows:
            w.writerow([r.field1, fmt(r.kappa), fmt(r.O1_st), fmt(r.O2_st), fmt(r.converged), fmt(r.t_converged)])
    return path


def read_sweep_csv(path: PathLike) -> SweepTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SWEEP_COLUMNS:
        raise ConfigError(f"{path}: not a sweep CSV")
    out = []
    for r in rows[1:]:
        out.append(SweepRow(r[0], float(r[1]), float(r[2]), float(r[3]), r[4] == "true", float(r[5])))
    return SweepTable(out)


# ---------------------------------------------------------------------------
# configuration documents


def config_from_dict(d: dict) -> SimulationConfig:
    """Inverse of :meth:`SimulationConfig.to_dict`."""
    known = {"kappa", "field1", "field2", "dt", "tmax", "record_every", "steady_tol_pop",
             "steady_tol_photon", "kmax", "mmax", "engine", "watch_elements", "leak_budget", "eps_trunc"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
    if "kappa" not in d:
        raise ConfigError("configuration needs 'kappa'")
    kw = dict(kappa=float(d["kappa"]))
    for key in ("field1", "field2"):
        if d.get(key) is not None:
            kw[key] = parse_field_spec(d[key])
    if d.get("dt") is not None:
        kw["dt"] = float(d["dt"])
    if d.get("tmax") is not None:
        kw["t_max"] = float(d["tmax"])
    for key in ("kmax", "mmax", "record_every"):
        if d.get(key) is not None:
            kw[key] = int(d[key])
    for key in ("steady_tol_pop", "steady_tol_photon", "leak_budget", "eps_trunc"):
        if d.get(key) is not None:
            kw[key] = float(d[key])
    if d.get("engine") is not None:
        kw["engine"] = d["engine"]
    if d.get("watch_elements"):
        kw["watch"] = tuple(parse_element(s) for s in d["watch_elements"])
    return SimulationConfig(**kw)


def sweep_to_dict(spec: SweepSpec) -> dict:
    return {
        "kappa_grid": list(spec.kappa_grid),
        "variants": [str(v) for v in spec.field1_variants],
        "field2": str(spec.field2),
        "base": spec.base.to_dict(),
    }


def sweep_from_dict(d: dict) -> SweepSpec:
    missing = {"kappa_grid", "variants"} - set(d)
    if missing:
        raise ConfigError(f"sweep configuration is missing {sorted(missing)}")
    field2 = parse_field_spec(d.get("field2", "fock:n=0"))
    base = config_from_dict(d["base"]) if d.get("base") else None
    return SweepSpec(
        kappa_grid=[float(k) for k in d["kappa_grid"]],
        field1_variants=[parse_field_spec(v) for v in d["variants"]],
        field2=field2,
        base=base,
    )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


@dataclass
class RunManifest:
    """Resolved configuration of one run plus provenance.

    ``config`` holds either a simulation config dict or a sweep dict,
    depending on ``command``. The hash covers command and config only, so
    it identifies what was computed, not when.
    """

    command: str
    config: dict
    version: str = __version__
    started: Optional[str] = None
    finished: Optional[str] = None
    wall_seconds: Optional[float] = None
    outputs: dict = field(default_factory=dict)

    @classmethod
    def for_config(cls, command: str, cfg: SimulationConfig) -> "RunManifest":
        return cls(command, cfg.to_dict())

    @classmethod
    def for_sweep(cls, spec: SweepSpec, workers: int = 1) -> "RunManifest":
        d = sweep_to_dict(spec)
        d["workers"] = workers
        return cls("sweep", d)

    @property
    def hash(self) -> str:
        blob = canonical_json({"command": self.command, "config": self.config, "version": self.version})
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolve(self):
        """Rebuild the SimulationConfig or SweepSpec this manifest describes."""
        if self.command == "sweep":
            d = dict(self.config)
            d.pop("workers", None)
            return sweep_from_dict(d)
        return config_from_dict(self.config)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "manifest_hash": self.hash,
            "started": self.started,
            "finished": self.finished,
            "wall_seconds": self.wall_seconds,
            "outputs": self.outputs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"manifest is not valid JSON: {exc}") from exc
        d.pop("manifest_hash", None)
        return cls(**d)

    def write(self, path: PathLike) -> Path:
        path, fh = _open_for_write(path)
        with fh:
            fh.write(self.to_json())
        return path


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_summary_json(result, manifest: RunManifest, path: PathLike) -> Path:
    """Results plus the manifest hash; contains no timing so reruns match byte for byte."""
    if isinstance(result, SteadyStateResult):
        body = result.summary()
    elif isinstance(result, PopulationTrace):
        body = {
            "samples": len(result),
            "steps": result.steps,
            "final": dict(zip(TRACE_COLUMNS, result.samples[-1])),
            "max_herm_defect": result.max_herm_defect,
            "min_trace": float(result.trace.min()),
        }
    elif isinstance(result, SweepTable):
        body = {
            "rows": len(result),
            "converged": sum(r.converged for r in result.rows),
            "max_complement_gap": max(abs(1.0 - r.O1_st - r.O2_st) for r in result.rows),
        }
    else:
        body = dict(result)
    doc = {"command": manifest.command, "manifest_hash": manifest.hash, "result": _jsonable(body)}
    path, fh = _open_for_write(path)
    with fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# plot scripts

_TRACE_SCRIPT = '''\
"""Populations against time from {csv_name}."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / {csv_name!r}, newline="") as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]

fig, ax = plt.subplots(figsize=(6, 4))
for name, label in (("O1", "$O_1$"), ("O2", "$O_2$"), ("O3", "$O_3$")):
    ax.plot(t, [float(r[name]) for r in rows], label=label)
ax.set_xlabel(r"$\\tilde t$")
ax.set_ylabel("population")
ax.set_ylim(0, 1)
ax.legend()
fig.tight_layout()
fig.savefig(here / {png_name!r}, dpi=150)
'''

_SWEEP_SCRIPT = '''\
"""Steady-state O2 against loss rate per input field, from {csv_name}."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
series = defaultdict(list)
with open(here / {csv_name!r}, newline="") as fh:
    for r in csv.DictReader(fh):
        series[r["field1"]].append((float(r["kappa"]), float(r["O2_st"])))

fig, ax = plt.subplots(figsize=(6, 4))
inset = ax.inset_axes([0.55, 0.5, 0.4, 0.42])
lo, hi = {zoom!r}
for label, pts in series.items():
    pts.sort()
    k = [p[0] for p in pts]
    o2 = [p[1] for p in pts]
    ax.plot(k, o2, marker=".", label=label)
    zk = [a for a in k if lo <= a <= hi]
    inset.plot(zk, [b for a, b in pts if lo <= a <= hi], marker=".")
ax.set_xscale("log")
inset.set_xscale("log")
inset.set_title("intermediate loss", fontsize=8)
ax.set_xlabel(r"$\\tilde\\kappa$")
ax.set_ylabel(r"$O_{{2,\\mathrm{{st}}}}$")
ax.legend(fontsize=7, loc="lower left")
fig.tight_layout()
fig.savefig(here / {png_name!r}, dpi=150)
'''


def _require(path: Path):
    if not path.is_file():
        raise FileNotFoundError(f"plot script needs {path}, which does not exist")


def emit_plot_script(out_dir: PathLike, trace_csv: Optional[str] = None,
                     sweep_csv: Optional[str] = None, zoom=(0.4, 2.5)) -> list[Path]:
    """Write standalone matplotlib scripts that read only the given CSV files.

    CSV names are relative to ``out_dir``; the scripts are written there too.
    """
    out = Path(out_dir)
    written = []
    if trace_csv is None and sweep_csv is None:
        raise ConfigError("nothing to plot: give a trace CSV, a sweep CSV or both")
    if trace_csv is not None:
        _require(out / trace_csv)
        p = out / "plot_trace.py"
        p.write_text(_TRACE_SCRIPT.format(csv_name=trace_csv, png_name="populations.png"))
        written.append(p)
    if sweep_csv is not None:
        _require(out / sweep_csv)
        p = out / "plot_sweep.py"
        p.write_text(_SWEEP_SCRIPT.format(csv_name=sweep_csv, png_name="steady_states.png",
                                          zoom=tuple(float(z) for z in zoom)))
        written.append(p)
    return written
