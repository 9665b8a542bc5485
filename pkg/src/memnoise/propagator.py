"""Controlled evolution U(t, s), Heisenberg-picture couplings and their transforms.

Conventions
-----------
``S(u, s) = U(u, s)^dag S U(u, s)`` is the coupling in the interaction picture
and its windowed transform is

    Y(omega) = integral_s^t S(u, s) exp(+i omega u) exp(-eps |u|) du.

With this sign a frequency component ``S(omega)`` (see
:func:`frequency_components`) lowers the system energy by ``omega``, so the
zero-temperature bath, whose density lives on omega >= 0, only drives decay.
"""
from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BangBangSchedule,
    ConstantSchedule,
    GaussianPulseSchedule,
    KickedSchedule,
    Operator,
    Schedule,
    ScheduleError,
    expm_hermitian,
)

_GL_ORDER = 12


def _mat(op) -> np.ndarray:
    return np.asarray(op.matrix if isinstance(op, Operator) else op, dtype=complex)


def _dag(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def _expm_stack(E: np.ndarray) -> np.ndarray:
    """exp(-i E_k) for a stack of Hermitian matrices."""
    w, v = np.linalg.eigh(E)
    return (v * np.exp(-1j * w)[..., None, :]) @ _dag(v)


class Propagator:
    """Time-ordered evolution of a schedule, measured from ``origin``.

    Exact factors are used whenever they exist: constant Hamiltonians,
    kicked schedules and families of mutually commuting pulse generators
    (including the bang-bang form). Everything else, or any schedule when
    ``force_grid`` is set, goes through step-midpoint exponentials on a grid
    with nodes on every breakpoint of the schedule.
    """

    def __init__(self, schedule: Schedule, dt: float | None = None,
                 origin: float | None = None, force_grid: bool = False):
        self.schedule = schedule
        self.dim = schedule.dim
        lo, hi = schedule.horizon
        if origin is None:
            origin = lo if math.isfinite(lo) else 0.0
        self.origin = float(origin)
        self.warnings: list[str] = []
        self.mode = self._pick_mode(force_grid)
        self.dt = dt
        if self.mode == "constant":
            self._levels, self._vecs = np.linalg.eigh(schedule.H)
        elif self.mode == "kicked":
            self._kick_times = schedule.kick_times()
            cum = [np.eye(self.dim, dtype=complex)]
            for U in schedule.unitaries:
                cum.append(U @ cum[-1])
            self._cum = np.array(cum)
        elif self.mode == "grid":
            self._build_grid(dt)

    # -- construction -----------------------------------------------------
    def _pick_mode(self, force_grid: bool) -> str:
        s = self.schedule
        if isinstance(s, KickedSchedule):
            return "kicked"
        if force_grid:
            return "grid"
        if isinstance(s, ConstantSchedule):
            return "constant"
        if isinstance(s, BangBangSchedule):
            return "commuting"
        if isinstance(s, GaussianPulseSchedule) and s.commuting():
            return "commuting"
        return "grid"

    def _default_dt(self) -> float:
        s = self.schedule
        if isinstance(s, GaussianPulseSchedule):
            return min(p.width for p in s.pulses) / 50
        lo, hi = s.horizon
        ts = np.linspace(lo, hi, 201)
        hmax = max(np.linalg.norm(s.hamiltonian(t), 2) for t in ts)
        return 0.02 / max(hmax, 1e-12) if hmax > 0 else (hi - lo) / 10

    def _grid_nodes(self, dt: float) -> np.ndarray:
        lo, hi = self.schedule.horizon
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ScheduleError("grid propagation needs a finite horizon")
        edges = sorted({lo, hi, *[b for b in self.schedule.breakpoints() if lo < b < hi]})
        nodes = [lo]
        for a, b in zip(edges[:-1], edges[1:]):
            k = max(1, int(math.ceil((b - a) / dt - 1e-9)))
            nodes.extend(np.linspace(a, b, k + 1)[1:])
        return np.array(nodes)

    def _step(self, a: float, b: float) -> np.ndarray:
        return expm_hermitian(self.schedule.hamiltonian(0.5 * (a + b)), b - a)

    def _grid_unitaries(self, nodes: np.ndarray) -> np.ndarray:
        out = np.empty((len(nodes), self.dim, self.dim), dtype=complex)
        out[0] = np.eye(self.dim)
        for i in range(1, len(nodes)):
            out[i] = self._step(nodes[i - 1], nodes[i]) @ out[i - 1]
        return out

    def _build_grid(self, dt):
        dt = self._default_dt() if dt is None else float(dt)
        if dt <= 0:
            raise ScheduleError("dt must be positive")
        self.dt = dt
        lo = self.schedule.horizon[0]
        if abs(self.origin - lo) > 1e-12:
            raise ScheduleError("grid propagators are measured from the horizon start")
        self._nodes = self._grid_nodes(dt)
        self._grid = self._grid_unitaries(self._nodes)
        # commutator-based step estimate: local error ~ |[H(a), H(b)]| h^2 / 12
        worst = 0.0
        H = self.schedule.hamiltonian
        for a, b in zip(self._nodes[:-1:7], self._nodes[1::7]):
            Ha, Hb = H(a), H(b)
            worst = max(worst, np.linalg.norm(Ha @ Hb - Hb @ Ha, 2) * (b - a) / 12)
        n_steps = len(self._nodes) - 1
        if worst * n_steps > 1e-6:
            self.warnings.append(
                f"dt={dt:.3g} may be coarse: commutator estimate {worst * n_steps:.2e}")

    def richardson_check(self, tol: float = 1e-8) -> float:
        """Halve dt and report the largest change of U on the grid nodes."""
        if self.mode != "grid":
            return 0.0
        fine_nodes = np.empty(2 * len(self._nodes) - 1)
        fine_nodes[0::2] = self._nodes
        fine_nodes[1::2] = 0.5 * (self._nodes[:-1] + self._nodes[1:])
        fine = self._grid_unitaries(fine_nodes)[0::2]
        change = float(np.max(np.linalg.norm(fine - self._grid, ord=2, axis=(1, 2))))
        if change > tol:
            self.warnings.append(
                f"Richardson check: halving dt changes U by {change:.2e} > {tol:.0e}")
        return change

    # -- evaluation ---------------------------------------------------------
    def _clamp(self, t: np.ndarray) -> np.ndarray:
        s = self.schedule
        lo, hi = s.horizon
        if s.vanishes_outside:
            return np.clip(t, lo, hi)
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            bad = t[(t < lo - 1e-12) | (t > hi + 1e-12)][0]
            raise ScheduleError(f"t={bad} outside schedule horizon [{lo}, {hi}]")
        return t

    def _exponent(self, t: np.ndarray) -> np.ndarray:
        """Integral of H from origin to t for commuting schedules."""
        s = self.schedule
        if isinstance(s, BangBangSchedule):
            Om = s.frequency
            c = (np.sin(Om * t) - math.sin(Om * self.origin)) / Om
            return c[:, None, None] * s.H
        E = np.zeros((len(t), self.dim, self.dim), dtype=complex)
        for p in s.pulses:
            a = p.center - s.truncation * p.width
            b = p.center + s.truncation * p.width
            lo_, hi_ = max(a, self.origin), b
            if hi_ <= lo_:
                continue
            c = p.phase(np.clip(t, lo_, hi_)) - p.phase(lo_)
            E += c[:, None, None] * p.axis
        return E

    def unitaries(self, times) -> np.ndarray:
        """Stack of U(t, origin) for each t."""
        t = self._clamp(np.atleast_1d(np.asarray(times, dtype=float)))
        if self.mode == "constant":
            ph = np.exp(-1j * np.outer(t - self.origin, self._levels))
            return (self._vecs[None] * ph[:, None, :]) @ self._vecs.conj().T
        if self.mode == "kicked":
            idx = [bisect.bisect_left(self._kick_times, x) for x in t]
            base = bisect.bisect_left(self._kick_times, self.origin)
            out = self._cum[idx]
            if base:
                out = out @ _dag(self._cum[base])
            return out
        if self.mode == "commuting":
            return _expm_stack(self._exponent(t))
        out = np.empty((len(t), self.dim, self.dim), dtype=complex)
        for k, x in enumerate(t):
            i = min(np.searchsorted(self._nodes, x, side="right") - 1, len(self._nodes) - 1)
            a = self._nodes[i]
            out[k] = self._grid[i] if x == a else self._step(a, x) @ self._grid[i]
        return out

    def unitary(self, t: float) -> np.ndarray:
        return self.unitaries([t])[0]

    def heisenberg_many(self, S, us, s: float) -> np.ndarray:
        """S(u, s) = U(u, s)^dag S U(u, s) for each u."""
        S = _mat(S)
        Us = self.unitary(s)
        W = self.unitaries(us) @ _dag(Us)  # U(u, s)
        return _dag(W) @ S @ W

    def backward_many(self, S, us, t: float) -> np.ndarray:
        """S(u, t) = U(t, u) S U(t, u)^dag: the fault at u carried forward to t."""
        S = _mat(S)
        V = self.unitary(t) @ _dag(self.unitaries(us))  # U(t, u)
        return V @ S @ _dag(V)


def propagate(p: Propagator, s: float, t: float) -> Operator:
    """U(t, s); swapping the arguments gives the adjoint."""
    Ut, Us = p.unitaries([t, s])
    return Operator(Ut @ Us.conj().T)


def heisenberg(p: Propagator, S, u: float, s: float) -> Operator:
    """U(u, s)^dag S U(u, s)."""
    return Operator(p.heisenberg_many(S, [u], s)[0])


# --------------------------------------------------------------------------
# Bohr-frequency decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrequencyDecomposition:
    """S = sum_k S(omega_k) with S(omega_k) lowering the energy by omega_k."""

    levels: np.ndarray
    components: dict = field(default_factory=dict)
    gap: float = math.inf
    degenerate: bool = False

    @property
    def frequencies(self) -> list[float]:
        return sorted(self.components)

    def total(self) -> np.ndarray:
        return sum(c.matrix for c in self.components.values())


def _cluster(values: np.ndarray, tol: float) -> np.ndarray:
    """Labels of 1-d values grouped so that neighbours within tol share a label."""
    order = np.argsort(values)
    labels = np.empty(len(values), dtype=int)
    lab = 0
    for k, i in enumerate(order):
        if k and values[i] - values[order[k - 1]] > tol:
            lab += 1
        labels[i] = lab
    return labels


def frequency_components(H, S, tol: float | None = None) -> FrequencyDecomposition:
    """Bucket the eigenbasis matrix elements of S by Bohr frequency.

    The element <j|S|j'> lands in the bucket omega = e_j' - e_j; frequencies
    closer than ``tol`` (default 1e-9 ||H||) are merged, and near-degenerate
    levels fall into the omega = 0 bucket.
    """
    H, S = _mat(H), _mat(S)
    if not np.allclose(H, H.conj().T, atol=1e-12):
        raise ValueError("H must be Hermitian")
    hnorm = np.linalg.norm(H, 2)
    tol = 1e-9 * max(hnorm, 1e-300) if tol is None else tol
    e, V = np.linalg.eigh(H)
    St = V.conj().T @ S @ V
    diff = e[None, :] - e[:, None]  # diff[j, j'] = e_j' - e_j
    flat = diff.ravel()
    mags = np.abs(flat)
    labels = _cluster(mags, tol)
    rep = {lab: float(np.mean(mags[labels == lab])) for lab in set(labels)}
    comps: dict[float, np.ndarray] = {}
    d = len(e)
    for idx in range(d * d):
        val = St.flat[idx]
        r = rep[labels[idx]]
        w = 0.0 if r <= tol else math.copysign(r, flat[idx])
        if w not in comps:
            comps[w] = np.zeros((d, d), dtype=complex)
        comps[w].flat[idx] += val
    out = {}
    for w, M in comps.items():
        if np.any(np.abs(M) > 0):
            out[w] = Operator(V @ M @ V.conj().T)
    nonzero = mags[mags > tol]
    gap = float(nonzero.min()) if nonzero.size else math.inf
    level_diffs = np.abs(np.diff(e))
    degenerate = bool(np.any(level_diffs <= tol))
    return FrequencyDecomposition(e, out, gap, degenerate)


# --------------------------------------------------------------------------
# windowed transforms
# --------------------------------------------------------------------------


def _exprel(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6, np.expm1(safe) / safe)


def exp_window_integral(c, a: float, b: float) -> np.ndarray:
    """Integral of exp(c u) over [a, b], vectorised over complex c.

    Infinite endpoints are allowed when the integrand decays there.
    """
    c = np.asarray(c, dtype=complex)
    if a == -math.inf and b == math.inf:
        raise ValueError("doubly infinite segment")
    if a == -math.inf:
        return np.exp(c * b) / c
    if b == math.inf:
        return -np.exp(c * a) / c
    return np.exp(c * a) * (b - a) * _exprel(c * (b - a))


def switched_integral(omega, a: float, b: float, eps: float) -> np.ndarray:
    """Integral over [a, b] of exp(i omega u - eps |u|)."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape, dtype=complex)
    if b <= a:
        return out
    if eps == 0 and not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("infinite window needs adiabatic switching eps > 0")
    if a < 0:
        out += exp_window_integral(1j * omega + eps, a, min(b, 0.0))
    if b > 0:
        out += exp_window_integral(1j * omega - eps, max(a, 0.0), b)
    return out


def _segments(p: Propagator, s: float, t: float):
    """Split [s, t] into ('frozen', a, b) and ('active', a, b) pieces."""
    sch = p.schedule
    lo, hi = sch.horizon
    frozen = list(sch.frozen_intervals())
    if sch.vanishes_outside:
        frozen += [(-math.inf, lo), (hi, math.inf)]
    frozen = sorted((max(a, s), min(b, t)) for a, b in frozen)
    frozen = [(a, b) for a, b in frozen if b > a]
    out, cur = [], s
    for a, b in frozen:
        if a > cur:
            out.append(("active", cur, a))
        out.append(("frozen", a, b))
        cur = max(cur, b)
    if t > cur:
        out.append(("active", cur, t))
    for kind, a, b in out:
        if kind == "active" and not (math.isfinite(a) and math.isfinite(b)):
            raise ScheduleError("infinite window over a driven interval")
    return out


def _hmax(p: Propagator, a: float, b: float) -> float:
    ts = np.linspace(a, b, 65)
    return max(np.linalg.norm(p.schedule.hamiltonian(x), 2) for x in ts)


def time_nodes(p: Propagator, s: float, t: float, omega_max: float = 0.0,
               dt: float | None = None, order: int = _GL_ORDER):
    """Gauss-Legendre nodes covering the driven parts of [s, t].

    Returns (nodes, weights, frozen) where ``frozen`` lists the (a, b)
    pieces on which S(u, s) is constant and can be integrated in closed form.
    """
    nodes, weights, frozen = [], [], []
    x, w = np.polynomial.legendre.leggauss(order)
    for kind, a, b in _segments(p, s, t):
        if kind == "frozen":
            frozen.append((a, b))
            continue
        if dt is None:
            rate = omega_max + 2 * _hmax(p, a, b)
            step = 0.1 / rate if rate > 0 else (b - a)
        else:
            step = dt
        L = min(step * order, b - a)
        k = max(1, int(math.ceil((b - a) / L - 1e-9)))
        edges = np.linspace(a, b, k + 1)
        bps = [c for c in p.schedule.breakpoints() if a < c < b]
        edges = np.unique(np.concatenate([edges, bps]))
        for lo_, hi_ in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi_ - lo_)
            nodes.append(lo_ + half * (x + 1))
            weights.append(half * w)
    if nodes:
        return np.concatenate(nodes), np.concatenate(weights), frozen
    return np.zeros(0), np.zeros(0), frozen


def _frozen_value(p: Propagator, S, a: float, b: float, s: float) -> np.ndarray:
    if math.isfinite(a) and math.isfinite(b):
        u = 0.5 * (a + b)
    elif math.isfinite(a) or math.isfinite(b):
        u = a if math.isfinite(a) else b
    else:
        u = 0.0
    return p.heisenberg_many(S, [u], s)[0]


def spectral_function(p: Propagator, S, s: float, t: float, omegas,
                      dt: float | None = None, switching: float = 0.0,
                      chunk: int = 2 ** 22) -> np.ndarray:
    """Y(omega) = integral_s^t S(u, s) exp(i omega u - eps |u|) du.

    Returns an array of shape (len(omegas), d, d) aligned with ``omegas``.
    Intervals without drive or kicks are integrated in closed form; driven
    intervals use Gauss-Legendre panels whose mean node spacing dt obeys
    max|omega| dt < 0.1.
    """
    om = np.atleast_1d(np.asarray(omegas, dtype=float))
    S = _mat(S)
    d = S.shape[0]
    wmax = float(np.max(np.abs(om))) if om.size else 0.0
    if dt is not None and wmax * dt >= 0.1:
        raise ValueError(
            f"aliasing guard: max|omega| dt = {wmax * dt:.3g} >= 0.1; "
            f"need dt < {0.1 / wmax:.3g}")
    if not (math.isfinite(s) and math.isfinite(t)) and switching <= 0:
        raise ValueError("infinite window needs adiabatic switching > 0")
    s_ref = s if math.isfinite(s) else p.schedule.horizon[0]
    Y = np.zeros((len(om), d, d), dtype=complex)
    sch = p.schedule
    if isinstance(sch, ConstantSchedule) and p.mode == "constant" and np.any(sch.H):
        # exact: S(u, s) = sum_k S(w_k) exp(-i w_k (u - s))
        fd = frequency_components(sch.H, S)
        for wk, comp in fd.components.items():
            fac = np.exp(1j * wk * s_ref) * switched_integral(om - wk, s, t, switching)
            Y += fac[:, None, None] * comp.matrix
        return Y
    nodes, weights, frozen = time_nodes(p, s, t, wmax, dt)
    for a, b in frozen:
        val = _frozen_value(p, S, a, b, s_ref)
        Y += switched_integral(om, a, b, switching)[:, None, None] * val
    if nodes.size:
        vals = p.heisenberg_many(S, nodes, s_ref).reshape(len(nodes), d * d)
        wts = weights * np.exp(-switching * np.abs(nodes))
        step = max(1, chunk // max(len(nodes), 1))
        for i in range(0, len(om), step):
            ph = np.exp(1j * np.outer(om[i:i + step], nodes)) * wts
            Y[i:i + step] += (ph @ vals).reshape(-1, d, d)
    return Y

