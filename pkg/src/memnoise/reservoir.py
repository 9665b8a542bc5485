"""Spectral densities, memory kernels and thermal structure of reservoirs.

Fourier convention: the reservoir autocorrelation is

    C(t) = <B(t) B> = integral R(omega) exp(-i omega t) d omega,

so a zero-temperature bath has R supported on omega >= 0 and a positive
frequency omega is energy handed from the system to the bath.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

VARIANTS = ("vacuum_cubic", "lorentzian", "white", "tabulated")


class ReservoirError(ValueError):
    """Raised for ill-formed reservoir models or unsupported queries."""


@dataclass(frozen=True, eq=False)
class ReservoirModel:
    """Parametric spectral density R(omega).

    Use the classmethod constructors. ``mixing`` is an optional constant
    PSD matrix M with R_ab(omega) = M_ab R(omega); without it the coupling
    channels see independent, identical reservoirs.
    """

    kind: str
    params: dict = field(default_factory=dict)
    mixing: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ReservoirError(f"unknown reservoir variant {self.kind!r}")
        if self.mixing is not None:
            m = np.asarray(self.mixing, dtype=complex)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ReservoirError("mixing matrix must be square")
            object.__setattr__(self, "mixing", m)

    # -- constructors -----------------------------------------------------
    @classmethod
    def vacuum_cubic(cls, R0: float = 1.0, temperature: float = 0.0,
                     cutoff: float | None = None, mixing=None) -> "ReservoirModel":
        if R0 < 0 or temperature < 0:
            raise ReservoirError("R0 and temperature must be nonnegative")
        if cutoff is not None and cutoff <= 0:
            raise ReservoirError("cutoff must be positive")
        return cls("vacuum_cubic", {"R0": float(R0), "T": float(temperature),
                                    "cutoff": cutoff}, mixing)

    @classmethod
    def lorentzian(cls, D: float, tau_c: float, mixing=None) -> "ReservoirModel":
        if D < 0 or tau_c <= 0:
            raise ReservoirError("need D >= 0 and tau_c > 0")
        return cls("lorentzian", {"D": float(D), "tau_c": float(tau_c)}, mixing)

    @classmethod
    def white(cls, level: float, mixing=None) -> "ReservoirModel":
        """Memoryless reservoir with kernel level * delta(t)."""
        if level < 0:
            raise ReservoirError("white-noise level must be nonnegative")
        return cls("white", {"level": float(level)}, mixing)

    @classmethod
    def tabulated(cls, omega, values, low_frequency_exponent: float | None = None,
                  mixing=None) -> "ReservoirModel":
        """Piecewise-linear density on a grid.

        ``low_frequency_exponent`` p declares R ~ |omega|^p near zero; it is
        needed only for the admissibility test of the minimal model.
        """
        omega = np.asarray(omega, dtype=float)
        values = np.asarray(values, dtype=float)
        if omega.ndim != 1 or omega.shape != values.shape or omega.size < 2:
            raise ReservoirError("tabulated density needs matching 1-d grids")
        if np.any(np.diff(omega) <= 0):
            raise ReservoirError("tabulated frequencies must increase strictly")
        if np.any(values < 0):
            raise ReservoirError("spectral density must be nonnegative")
        omega.setflags(write=False)
        values.setflags(write=False)
        return cls("tabulated", {"omega": omega, "values": values,
                                 "p": low_frequency_exponent}, mixing)

    # -- properties -------------------------------------------------------
    @property
    def temperature(self) -> float:
        return self.params.get("T", 0.0)

    @property
    def is_thermal(self) -> bool:
        return self.kind == "vacuum_cubic" and self.temperature > 0

    @property
    def diagonal_only(self) -> bool:
        return self.mixing is None or np.allclose(self.mixing, np.diag(np.diag(self.mixing)))

    def support(self) -> tuple[float, float]:
        """Closed interval outside of which R vanishes."""
        if self.kind == "vacuum_cubic" and not self.is_thermal:
            return (0.0, math.inf)
        if self.kind == "tabulated":
            om = self.params["omega"]
            return (float(om[0]), float(om[-1]))
        return (-math.inf, math.inf)

    def scale(self) -> float:
        """A frequency beyond which the density is negligible, or inf."""
        if self.kind == "vacuum_cubic":
            c = self.params["cutoff"]
            return math.inf if c is None else 40.0 * c
        if self.kind == "tabulated":
            om = self.params["omega"]
            return float(max(abs(om[0]), abs(om[-1])))
        return math.inf

    def mixing_matrix(self, n_channels: int) -> np.ndarray:
        if self.mixing is None:
            return np.eye(n_channels, dtype=complex)
        if self.mixing.shape != (n_channels, n_channels):
            raise ReservoirError(
                f"mixing matrix is {self.mixing.shape}, expected {n_channels} channels")
        return self.mixing

    def __call__(self, omega):
        return spectral_density(self, omega)


def _bose(x):
    # 1 / (e^x - 1) without overflow
    with np.errstate(over="ignore", divide="ignore"):
        return 1.0 / np.expm1(x)


def spectral_density(m: ReservoirModel, omega):
    """R(omega) for the model; vectorised over omega."""
    w = np.asarray(omega, dtype=float)
    p = m.params
    if m.kind == "vacuum_cubic":
        R0, T, cut = p["R0"], p["T"], p["cutoff"]
        a = np.abs(w)
        if T == 0:
            out = np.where(w >= 0, R0 * a ** 3, 0.0)
        else:
            n = np.where(a > 0, _bose(np.where(a > 0, a, 1.0) / T), 0.0)
            # a^3 n(a) -> a^2 T as a -> 0, so the a = 0 entry is 0
            out = np.where(w > 0, R0 * a ** 3 * (1 + n), R0 * a ** 3 * n)
            out = np.where(a == 0, 0.0, out)
        if cut is not None:
            out = out * np.exp(-a / cut)
        return out
    if m.kind == "lorentzian":
        return p["D"] / (w ** 2 + p["tau_c"] ** -2)
    if m.kind == "white":
        return np.full_like(w, p["level"] / (2 * math.pi))
    om, vals = p["omega"], p["values"]
    if np.any(w < om[0] - 1e-12) or np.any(w > om[-1] + 1e-12):
        raise ReservoirError(
            f"frequency outside tabulated grid [{om[0]}, {om[-1]}]")
    return np.interp(w, om, vals)


def kms_ratio(m: ReservoirModel, omega: float) -> float:
    """R(-omega) / R(omega); equals exp(-omega / T) for a thermal bath."""
    if omega == 0:
        return 1.0
    if m.kind != "vacuum_cubic":
        raise ReservoirError("KMS ratio is defined for the thermal variant only")
    if m.temperature == 0:
        raise ZeroDivisionError("KMS ratio at T = 0 divides by a vanishing density")
    num = float(spectral_density(m, -omega))
    den = float(spectral_density(m, omega))
    if den == 0:
        raise ZeroDivisionError("R(omega) vanishes")
    return num / den


def load_tabulated(path, low_frequency_exponent: float | None = None) -> ReservoirModel:
    """Two-column text file (omega, R) with '#' comments."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ReservoirError(f"{path}: expected two columns, got {data.shape[1]}")
    return ReservoirModel.tabulated(data[:, 0], data[:, 1], low_frequency_exponent)


# --------------------------------------------------------------------------
# memory kernels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaFunction:
    """Symbolic kernel weight * delta(t); never evaluated pointwise."""

    weight: float


@dataclass(frozen=True, eq=False)
class MemoryKernel:
    """Time-domain reservoir autocorrelation C(t).

    ``kind`` is 'delta', 'analytic' or 'numeric'. Analytic kernels may carry
    first and second antiderivatives, which make interval integrals exact.
    """

    kind: str
    weight: float = 0.0
    func: Callable | None = None
    antiderivative: Callable | None = None
    second_antiderivative: Callable | None = None
    epsilon: float = 0.0
    model: ReservoirModel | None = None

    def __call__(self, t):
        if self.kind == "delta":
            raise ReservoirError("delta kernel has no pointwise values")
        return self.func(np.asarray(t, dtype=float))

    def integral(self, a: float, b: float) -> complex:
        """Integral of C over [a, b]."""
        if self.kind == "delta":
            # endpoint at 0 carries half the weight
            lo, hi = min(a, b), max(a, b)
            sgn = 1.0 if b >= a else -1.0
            if lo < 0 < hi:
                return sgn * self.weight
            if lo == 0 or hi == 0:
                return sgn * self.weight / 2 if lo != hi else 0.0
            return 0.0
        if self.antiderivative is not None:
            return complex(self.antiderivative(b) - self.antiderivative(a))
        return complex_quad(self.func, a, b, singular=[0.0], scale=self.epsilon)

    def double_integral(self, a: float, b: float, c: float, d: float) -> complex:
        """Integral over u in [a, b], w in [c, d] of C(w - u)."""
        if self.kind == "delta":
            return self.weight * max(0.0, min(b, d) - max(a, c))
        G = self.second_antiderivative
        if G is not None:
            return complex(G(d - a) - G(d - b) - G(c - a) + G(c - b))
        return _tent_quadrature(self.func, a, b, c, d, self.epsilon)


def _tent_quadrature(C, a, b, c, d, eps):
    # integral of C(w - u) over the rectangle reduces to a 1-d integral of C(x)
    # against the overlap length of [a, b] + x and [c, d]
    lo, hi = c - b, d - a

    def overlap(x):
        return np.clip(np.minimum(b, d - x) - np.maximum(a, c - x), 0.0, None)

    pts = sorted({c - a, d - b, c - b, d - a, 0.0})
    pts = [p for p in pts if lo <= p <= hi]
    return complex_quad(lambda x: C(x) * overlap(x), lo, hi, singular=pts, scale=eps)


def graded_nodes(a: float, b: float, singular=(), scale: float = 0.0,
                 order: int = 16, panels_per_decade: int = 2,
                 max_panel: float | None = None):
    """Gauss-Legendre nodes/weights on [a, b] with panels graded geometrically
    toward the points in ``singular`` down to size ``scale``, and no panel
    longer than ``max_panel``."""
    if b <= a:
        return np.zeros(0), np.zeros(0)
    edges = {a, b}
    span = b - a
    h_min = scale if scale > 0 else span * 1e-6
    for s in singular:
        if not (a <= s <= b):
            continue
        edges.add(s)
        h = h_min
        while h < span:
            for e in (s - h, s + h):
                if a < e < b:
                    edges.add(e)
            h *= 10 ** (1.0 / panels_per_decade)
    if max_panel is not None and max_panel < span:
        k = int(math.ceil(span / max_panel))
        edges.update(np.linspace(a, b, k + 1).tolist())
    edges = np.array(sorted(edges))
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def complex_quad(f, a, b, singular=(), scale=0.0, order=16):
    nodes, weights = graded_nodes(a, b, singular, scale, order)
    # refine once and compare; graded Gauss-Legendre converges fast on smooth panels
    val = np.sum(weights * f(nodes))
    nodes2, weights2 = graded_nodes(a, b, singular, scale, 2 * order, panels_per_decade=4)
    val2 = np.sum(weights2 * f(nodes2))
    if abs(val2 - val) > 1e-6 * max(abs(val2), 1e-300):
        warnings.warn(f"kernel quadrature on [{a}, {b}] converged only to "
                      f"{abs(val2 - val):.2e}", RuntimeWarning, stacklevel=3)
    return complex(val2)


def _vacuum_eps(m: ReservoirModel, eps: float) -> float:
    cut = m.params["cutoff"]
    return eps + (0.0 if cut is None else 1.0 / cut)


def memory_kernel(m: ReservoirModel, epsilon: float = 1e-3) -> MemoryKernel:
    """Time-domain kernel of the model with regulator ``epsilon``."""
    if m.kind == "white":
        return MemoryKernel("delta", weight=m.params["level"], model=m)
    if m.kind == "lorentzian":
        D, tc = m.params["D"], m.params["tau_c"]
        amp = math.pi * D * tc

        def C(t):
            return amp * np.exp(-np.abs(t) / tc) + 0j

        def F(t):
            t = np.asarray(t, dtype=float)
            return amp * tc * np.sign(t) * (1 - np.exp(-np.abs(t) / tc)) + 0j

        def G(t):
            a = np.abs(np.asarray(t, dtype=float))
            return amp * tc * (a - tc * (1 - np.exp(-a / tc))) + 0j

        return MemoryKernel("analytic", func=C, antiderivative=F,
                            second_antiderivative=G, epsilon=0.0, model=m)
    if m.kind == "vacuum_cubic" and not m.is_thermal:
        if epsilon <= 0 and m.params["cutoff"] is None:
            raise ReservoirError("vacuum kernel is singular at t = 0; need epsilon > 0")
        R0 = m.params["R0"]
        e = _vacuum_eps(m, epsilon)

        def C(t):
            return 6 * R0 / (e + 1j * np.asarray(t, dtype=float)) ** 4

        def F(t):
            return 2j * R0 / (e + 1j * np.asarray(t, dtype=float)) ** 3

        def G(t):
            return -R0 / (e + 1j * np.asarray(t, dtype=float)) ** 2

        return MemoryKernel("analytic", func=C, antiderivative=F,
                            second_antiderivative=G, epsilon=e, model=m)
    if epsilon <= 0 and m.kind == "vacuum_cubic" and m.params["cutoff"] is None:
        raise ReservoirError("thermal vacuum kernel needs a regulator epsilon > 0")

    def C(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([numeric_autocorrelation(m, x, epsilon) for x in t.ravel()])
        return out.reshape(t.shape)

    return MemoryKernel("numeric", func=C, epsilon=max(epsilon, 1e-12), model=m)


def _regulated(m: ReservoirModel, eps: float):
    def f(w):
        return spectral_density(m, w) * np.exp(-eps * np.abs(w))
    return f


def numeric_autocorrelation(m: ReservoirModel, t: float, epsilon: float = 0.0) -> complex:
    """C(t) by oscillatory quadrature of R(omega) exp(-eps |omega|) exp(-i omega t)."""
    if m.kind == "white":
        raise ReservoirError("white-noise kernel is a delta function")
    f = _regulated(m, epsilon)
    lo, hi = m.support()
    top = math.inf if hi == math.inf else max(hi, -lo)

    def pos(x):
        return float(f(x)) if x <= hi else 0.0

    def neg(x):
        return float(f(-x)) if -x >= lo else 0.0

    def ev(x):
        return pos(x) + neg(x)

    def od(x):
        return pos(x) - neg(x)

    kw = dict(limit=2000)
    if t == 0:
        re = integrate.quad(ev, 0, top, **kw)[0]
        return complex(re, 0.0)
    if top == math.inf:
        re = integrate.quad(ev, 0, math.inf, weight="cos", wvar=abs(t), limlst=200)[0]
        im = integrate.quad(od, 0, math.inf, weight="sin", wvar=abs(t), limlst=200)[0]
    else:
        re = integrate.quad(ev, 0, top, weight="cos", wvar=abs(t), **kw)[0]
        im = integrate.quad(od, 0, top, weight="sin", wvar=abs(t), **kw)[0]
    return complex(re, -math.copysign(1.0, t) * im)


def autocorrelation(m: ReservoirModel, t, epsilon: float = 1e-3):
    """C(t) = integral R(omega) exp(-i omega t) d omega.

    Closed forms for the lorentzian and zero-temperature vacuum variants,
    regulated quadrature otherwise. The white variant returns a
    :class:`DeltaFunction` instead of a number.
    """
    if m.kind == "white":
        return DeltaFunction(m.params["level"])
    k = memory_kernel(m, epsilon)
    val = k(t)
    return complex(val) if np.ndim(val) == 0 else val


def inverse_transform(C: Callable, omega, t_max: float, singular=(0.0,), scale=1e-3):
    """R(omega) = (1 / 2 pi) integral C(t) exp(i omega t) dt over |t| <= t_max."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    nodes, weights = graded_nodes(-t_max, t_max, singular, scale, order=24,
                                  panels_per_decade=6)
    # keep panels short against the fastest oscillation
    cvals = C(nodes)
    phase = np.exp(1j * np.outer(omega, nodes))
    return (phase @ (weights * cvals)) / (2 * math.pi)
