"""Truncated single-mode light states in the Fock basis.

Amplitudes are produced by multiplicative recurrences so that no factorial
is ever evaluated; this keeps large truncations (k of a few hundred, needed
for squeezed vacuum) free of overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DomainError, TruncationError

EPS_TRUNC = 1e-6
# roundoff allowance when checking that the norm deficit is non-negative
_NORM_SLACK = 1e-12
_KMAX_CAP = 100_000


@dataclass(frozen=True)
class AmplitudeVector:
    """Fock amplitudes c_0..c_kmax of one field mode."""

    amps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex)
        if a.ndim != 1 or a.size == 0:
            raise DomainError("amplitude vector must be a non-empty 1-d sequence")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @property
    def kmax(self) -> int:
        return self.amps.size - 1

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    @property
    def norm(self) -> float:
        return float(self.probabilities.sum())

    @property
    def deficit(self) -> float:
        """Probability weight lost to truncation, 1 - sum |c_k|^2."""
        return 1.0 - self.norm

    @property
    def support_max(self) -> int:
        """Largest Fock number carrying a nonzero amplitude."""
        nz = np.flatnonzero(self.amps)
        return int(nz[-1]) if nz.size else 0

    def __len__(self):
        return self.amps.size


def mean_photon_number(v: AmplitudeVector) -> float:
    """Sum of k |c_k|^2 over the truncated expansion."""
    k = np.arange(v.amps.size)
    return float(np.dot(k, v.probabilities))


def default_kmax(mean: float) -> int:
    """Heuristic cutoff ceil(<n> + 5 sqrt(<n> + 1))."""
    return int(math.ceil(mean + 5.0 * math.sqrt(mean + 1.0)))


def _check_deficit(amps: np.ndarray, eps: float, what: str, required: int):
    deficit = 1.0 - float(np.sum(np.abs(amps) ** 2))
    if deficit < -_NORM_SLACK:
        raise DomainError(f"{what}: amplitudes are over-normalized (deficit {deficit:.3e})")
    if deficit > eps:
        raise TruncationError(
            f"{what}: norm deficit {deficit:.3e} at kmax={amps.size - 1} exceeds "
            f"tolerance {eps:.1e}; need kmax >= {required}",
            required_kmax=required,
        )


def _coherent_series(alpha: complex, kmax: int) -> np.ndarray:
    c = np.empty(kmax + 1, dtype=complex)
    c[0] = math.exp(-abs(alpha) ** 2 / 2.0)
    for k in range(kmax):
        c[k + 1] = c[k] * alpha / math.sqrt(k + 1)
    return c


def _coherent_required_kmax(alpha: complex, eps: float) -> int:
    ck = complex(math.exp(-abs(alpha) ** 2 / 2.0))
    total = abs(ck) ** 2
    k = 0
    while 1.0 - total > eps:
        if k >= _KMAX_CAP:
            raise TruncationError(f"coherent state alpha={alpha} needs kmax > {_KMAX_CAP}")
        ck *= alpha / math.sqrt(k + 1)
        total += abs(ck) ** 2
        k += 1
    return k


def coherent_amplitudes(alpha: complex, kmax: Optional[int] = None, eps: float = EPS_TRUNC) -> AmplitudeVector:
    """Coherent state |alpha>, c_k = exp(-|alpha|^2/2) alpha^k / sqrt(k!).

    With ``kmax=None`` the cutoff is the larger of :func:`default_kmax` and
    the smallest cutoff whose norm deficit is below ``eps``.
    """
    alpha = complex(alpha)
    if kmax is None:
        kmax = max(default_kmax(abs(alpha) ** 2), _coherent_required_kmax(alpha, eps))
    if kmax < 0:
        raise DomainError("kmax must be non-negative")
    amps = _coherent_series(alpha, kmax)
    if 1.0 - np.sum(np.abs(amps) ** 2) > eps:
        _check_deficit(amps, eps, f"coherent(alpha={alpha})", _coherent_required_kmax(alpha, eps))
    return AmplitudeVector(amps)


def _squeezed_series(r: float, theta: float, mmax: int) -> np.ndarray:
    """Amplitudes on |0>, |2>, ..., |2 mmax>."""
    s = np.empty(mmax + 1, dtype=complex)
    s[0] = 1.0 / math.sqrt(math.cosh(r))
    ratio = -np.exp(1j * theta) * math.tanh(r)
    for m in range(1, mmax + 1):
        s[m] = s[m - 1] * ratio * math.sqrt((2 * m - 1) / (2 * m))
    return s


def _squeezed_required_kmax(r: float, eps: float) -> int:
    t2 = math.tanh(r) ** 2
    p = 1.0 / math.cosh(r)
    total = p
    m = 0
    while 1.0 - total > eps:
        if 2 * m >= _KMAX_CAP:
            raise TruncationError(f"squeezed vacuum r={r} needs kmax > {_KMAX_CAP}")
        m += 1
        p *= t2 * (2 * m - 1) / (2 * m)
        total += p
    return 2 * m


def squeezed_vacuum_amplitudes(
    r: float, theta: float = 0.0, kmax: Optional[int] = None, eps: float = EPS_TRUNC
) -> AmplitudeVector:
    """Squeezed vacuum with xi = r exp(i theta).

    The amplitude on |2m> is
    (-1)^m sqrt((2m)!)/(2^m m!) exp(i m theta) tanh(r)^m / sqrt(cosh r);
    odd Fock numbers carry exactly zero.
    """
    if r < 0:
        raise DomainError("squeezing parameter r must be >= 0")
    if kmax is None:
        kmax = max(default_kmax(math.sinh(r) ** 2), _squeezed_required_kmax(r, eps))
    if kmax < 0:
        raise DomainError("kmax must be non-negative")
    amps = np.zeros(kmax + 1, dtype=complex)
    amps[0::2] = _squeezed_series(r, theta, kmax // 2)
    if 1.0 - np.sum(np.abs(amps) ** 2) > eps:
        _check_deficit(amps, eps, f"squeezed(r={r})", _squeezed_required_kmax(r, eps))
    return AmplitudeVector(amps)


def fock_amplitudes(n: int, kmax: Optional[int] = None) -> AmplitudeVector:
    """Number state |n>: c_k = delta_{n,k}."""
    if n < 0:
        raise DomainError("Fock number must be non-negative")
    if kmax is None:
        kmax = max(n, default_kmax(n))
    if n > kmax:
        raise DomainError(f"Fock number n={n} exceeds truncation kmax={kmax}")
    amps = np.zeros(kmax + 1, dtype=complex)
    amps[n] = 1.0
    return AmplitudeVector(amps)


# ---------------------------------------------------------------------------
# Field specifications


def _format_complex(z: complex) -> str:
    if z.imag == 0:
        return repr(float(z.real))
    sign = "-" if z.imag < 0 else "+"
    return f"{float(z.real)!r}{sign}{abs(float(z.imag))!r}i"


def _parse_complex(text: str) -> complex:
    t = text.strip().replace(" ", "")
    if t.endswith("i"):
        t = t[:-1] + "j"
    try:
        return complex(t)
    except ValueError:
        raise ConfigError(f"cannot parse complex number {text!r}") from None


def _kmax_suffix(kmax):
    return "" if kmax is None else f",kmax={kmax}"


@dataclass(frozen=True)
class Coherent:
    alpha: complex
    kmax: Optional[int] = None

    @property
    def mean(self) -> float:
        return abs(self.alpha) ** 2

    def amplitudes(self, eps: float = EPS_TRUNC) -> AmplitudeVector:
        return coherent_amplitudes(self.alpha, self.kmax, eps)

    def __str__(self):
        return f"coherent:alpha={_format_complex(complex(self.alpha))}{_kmax_suffix(self.kmax)}"


@dataclass(frozen=True)
class SqueezedVacuum:
    r: float
    theta: float = 0.0
    kmax: Optional[int] = None

    def __post_init__(self):
        if self.r < 0:
            raise DomainError("squeezing parameter r must be >= 0")

    @property
    def mean(self) -> float:
        return math.sinh(self.r) ** 2

    def amplitudes(self, eps: float = EPS_TRUNC) -> AmplitudeVector:
        return squeezed_vacuum_amplitudes(self.r, self.theta, self.kmax, eps)

    def __str__(self):
        return f"squeezed:r={float(self.r)!r},theta={float(self.theta)!r}{_kmax_suffix(self.kmax)}"


@dataclass(frozen=True)
class Fock:
    n: int
    kmax: Optional[int] = None

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("Fock number must be non-negative")
        if self.kmax is not None and self.n > self.kmax:
            raise DomainError(f"Fock number n={self.n} exceeds truncation kmax={self.kmax}")

    @property
    def mean(self) -> float:
        return float(self.n)

    def amplitudes(self, eps: float = EPS_TRUNC) -> AmplitudeVector:
        return fock_amplitudes(self.n, self.kmax)

    def __str__(self):
        return f"fock:n={self.n}{_kmax_suffix(self.kmax)}"


@dataclass(frozen=True)
class Custom:
    """User-supplied amplitude list, optionally remembered by source file."""

    amps: tuple
    path: Optional[str] = field(default=None, compare=False)
    kmax: Optional[int] = None

    @classmethod
    def from_file(cls, path: Union[str, Path], kmax: Optional[int] = None) -> "Custom":
        amps = []
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read amplitude file {path}: {exc}") from None
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                re_ = float(parts[0])
                im = float(parts[1]) if len(parts) > 1 else 0.0
            except (ValueError, IndexError):
                raise ConfigError(f"{path}:{lineno}: expected 're im', got {line!r}") from None
            amps.append(complex(re_, im))
        if not amps:
            raise ConfigError(f"{path}: no amplitudes found")
        return cls(tuple(amps), str(path), kmax)

    @property
    def mean(self) -> float:
        return mean_photon_number(AmplitudeVector(np.array(self.amps)))

    def amplitudes(self, eps: float = EPS_TRUNC) -> AmplitudeVector:
        a = np.array(self.amps, dtype=complex)
        if self.kmax is not None:
            if np.any(a[self.kmax + 1:] != 0):
                raise TruncationError(f"custom amplitudes have support beyond kmax={self.kmax}")
            a = np.concatenate([a, np.zeros(max(0, self.kmax + 1 - a.size))])[: self.kmax + 1]
        _check_deficit(a, eps, "custom state", a.size - 1)
        return AmplitudeVector(a)

    def __str__(self):
        if self.path is None:
            raise ConfigError("custom field without a source file has no textual form")
        return f"custom:file={self.path}{_kmax_suffix(self.kmax)}"


FieldSpec = Union[Coherent, SqueezedVacuum, Fock, Custom]


def parse_field_spec(text: str) -> FieldSpec:
    """Parse ``kind:key=value,...`` into a field specification.

    Accepted forms: ``coherent:alpha=<re>[+<im>i]``, ``squeezed:r=<x>,theta=<x>``,
    ``fock:n=<int>``, ``custom:file=<path>``; each may carry ``,kmax=<int>``.
    """
    if ":" not in text:
        raise ConfigError(f"malformed field spec {text!r}: expected kind:key=value")
    kind, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"malformed field spec {text!r}: {item!r} is not key=value")
        params[key.strip()] = value.strip()

    def pop_int(key, default=None):
        if key not in params:
            return default
        try:
            return int(params.pop(key))
        except ValueError:
            raise ConfigError(f"{key} must be an integer in {text!r}") from None

    def pop_float(key, default=None):
        if key not in params:
            return default
        try:
            return float(params.pop(key))
        except ValueError:
            raise ConfigError(f"{key} must be a real number in {text!r}") from None

    kmax = pop_int("kmax")
    kind = kind.lower()
    try:
        if kind == "coherent":
            if "alpha" not in params:
                raise ConfigError(f"coherent field needs alpha: {text!r}")
            spec = Coherent(_parse_complex(params.pop("alpha")), kmax)
        elif kind == "squeezed":
            r = pop_float("r")
            if r is None:
                raise ConfigError(f"squeezed field needs r: {text!r}")
            spec = SqueezedVacuum(r, pop_float("theta", 0.0), kmax)
        elif kind == "fock":
            n = pop_int("n")
            if n is None:
                raise ConfigError(f"fock field needs n: {text!r}")
            spec = Fock(n, kmax)
        elif kind == "custom":
            if "file" not in params:
                raise ConfigError(f"custom field needs file: {text!r}")
            spec = Custom.from_file(params.pop("file"), kmax)
        else:
            raise ConfigError(f"unknown field kind {kind!r} (coherent, squeezed, fock, custom)")
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if params:
        raise ConfigError(f"unexpected keys {sorted(params)} in field spec {text!r}")
    return spec


def field_label(spec: FieldSpec) -> str:
    return str(spec) if not isinstance(spec, Custom) or spec.path else "custom"
