"""Minimal decoherence model: gate errors from Gaussian pulses in a vacuum bath.

When R(omega) / omega^2 is integrable at 0, integrating by parts turns the
error map into a functional of the coupling's time derivative,

    X(omega) = integral exp(i omega t) dS(t)/dt dt,
    delta = sum_ab integral R_ab / omega^2 [<X_a^dag X_b> - <X_a^dag><X_b>] d omega,

which vanishes when no gate is applied and grows as alpha^2 / t1^2 for a
pulse of action alpha and width t1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import GaussianPulseSchedule, Operator, Pulse, ScheduleError, State, pauli
from .errormap import _mixing, omega_grid
from .propagator import Propagator, time_nodes
from .reservoir import ReservoirError, ReservoirModel, spectral_density

PERTURBATIVE_LIMIT = 0.1
MIN_SEPARATION = 6.0


def _mat(op) -> np.ndarray:
    return np.asarray(op.matrix if isinstance(op, Operator) else op, dtype=complex)


def admissibility(m: ReservoirModel) -> bool:
    """True iff R(omega) / omega^2 is integrable near omega = 0."""
    if m.kind == "vacuum_cubic":
        return True
    if m.kind in ("lorentzian", "white"):
        return False
    p = m.params.get("p")
    if p is None:
        raise ReservoirError("tabulated density needs a declared low-frequency exponent")
    return p > 1


@dataclass(frozen=True, eq=False)
class PulseGate:
    """Gaussian pulse of action alpha and width t1 about ``axis``."""

    alpha: float
    width: float
    axis: np.ndarray = field(default_factory=lambda: pauli("Z").matrix / 2)
    center: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ScheduleError("pulse width must be positive")
        object.__setattr__(self, "axis", _mat(self.axis))

    def pulse(self) -> Pulse:
        return Pulse(self.center, self.width, self.alpha, self.axis)

    def schedule(self) -> GaussianPulseSchedule:
        return GaussianPulseSchedule((self.pulse(),))


@dataclass(frozen=True, eq=False)
class GateSequence:
    """Pulses whose centers are separated by m widths."""

    pulses: tuple

    def __post_init__(self):
        ps = tuple(sorted(self.pulses, key=lambda g: g.center))
        if not ps:
            raise ScheduleError("empty gate sequence")
        for a, b in zip(ps[:-1], ps[1:]):
            gap = b.center - a.center
            if gap < MIN_SEPARATION * max(a.width, b.width):
                raise ScheduleError(
                    f"pulses at {a.center} and {b.center} overlap: separation "
                    f"{gap:.3g} < {MIN_SEPARATION} widths")
        object.__setattr__(self, "pulses", ps)

    @classmethod
    def uniform(cls, n: int, alpha: float, width: float, m: float, axis=None):
        axis = pauli("Z").matrix / 2 if axis is None else axis
        return cls(tuple(PulseGate(alpha, width, axis, k * m * width) for k in range(n)))

    @property
    def n(self) -> int:
        return len(self.pulses)

    def schedule(self) -> GaussianPulseSchedule:
        return GaussianPulseSchedule(tuple(g.pulse() for g in self.pulses))


# --------------------------------------------------------------------------
# the error functional
# --------------------------------------------------------------------------


def derivative_transform(p: Propagator, S, omegas, s: float, t: float) -> np.ndarray:
    """X(omega) = integral_s^t exp(i omega u) U^dag i[H(u), S] U du."""
    S = _mat(S)
    om = np.atleast_1d(np.asarray(omegas, dtype=float))
    d = S.shape[0]
    wmax = float(np.max(np.abs(om))) if om.size else 0.0
    nodes, weights, _ = time_nodes(p, s, t, wmax)
    X = np.zeros((len(om), d, d), dtype=complex)
    if nodes.size == 0:
        return X
    Us = p.unitary(s)
    W = p.unitaries(nodes) @ Us.conj().T
    Hs = np.array([p.schedule.hamiltonian(u) for u in nodes])
    comm = 1j * (Hs @ S - S @ Hs)
    vals = (W.conj().transpose(0, 2, 1) @ comm @ W).reshape(len(nodes), d * d)
    step = max(1, 2 ** 22 // len(nodes))
    for i in range(0, len(om), step):
        ph = np.exp(1j * np.outer(om[i:i + step], nodes)) * weights
        X[i:i + step] = (ph @ vals).reshape(-1, d, d)
    return X


def _window(sch: GaussianPulseSchedule) -> tuple[float, float]:
    return sch.horizon


def _omega_top(sch: GaussianPulseSchedule) -> float:
    tmin = min(p.width for p in sch.pulses)
    amax = max(abs(p.alpha) for p in sch.pulses)
    return (14.0 + amax) / tmin


def error_functional(schedule: GaussianPulseSchedule, psi, couplings, m: ReservoirModel,
                     omega_max: float | None = None) -> float:
    """delta for the state psi, or its uniform average over pure states if psi is None."""
    if not admissibility(m):
        raise ReservoirError(f"{m.kind} density is not admissible: "
                             "integral of R / omega^2 diverges at 0")
    Ss = [_mat(S) for S in couplings]
    n = len(Ss)
    M = _mixing(m, n)
    s, t = _window(schedule)
    p = Propagator(schedule)
    top = _omega_top(schedule) if omega_max is None else omega_max
    lo, hi = m.support()
    lo, hi = max(lo, -top), min(hi, top)
    width = math.pi / (2 * (t - s))
    om, w = omega_grid(lo, hi, [0.0], width)
    c = w * spectral_density(m, om) / om ** 2
    Xs = np.stack([derivative_transform(p, S, om, s, t) for S in Ss])  # (n, N, d, d)
    d = Ss[0].shape[0]
    if psi is None:
        # Haar averages: E <X^dag Y> = Tr(X^dag Y) / d and
        # E <X^dag><Y> = (Tr(X^dag Y) + Tr(X^dag) Tr(Y)) / (d (d + 1))
        tr = np.einsum("aixx->ai", Xs)
        gram = np.einsum("aixy,bixy->abi", Xs.conj(), Xs)
        cov = gram / d - (gram + np.einsum("ai,bi->abi", tr.conj(), tr)) / (d * (d + 1))
    else:
        v = psi.ket() if isinstance(psi, State) else np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        Xv = Xs @ v                                       # (n, N, d)
        mean = np.einsum("x,aix->ai", v.conj(), Xv)
        gram = np.einsum("aix,bix->abi", Xv.conj(), Xv)
        cov = gram - np.einsum("ai,bi->abi", mean.conj(), mean)
    val = np.einsum("ab,i,abi->", M, c, cov)
    return float(val.real)


def gate_error(g: PulseGate, psi, couplings, m: ReservoirModel, **kw) -> float:
    """Error delta of one pulse gate (psi=None averages over input states)."""
    return error_functional(g.schedule(), psi, couplings, m, **kw)


def sequence_error(seq: GateSequence, psi, couplings, m: ReservoirModel, **kw) -> float:
    """Error of the whole sequence, cross-gate terms included."""
    return error_functional(seq.schedule(), psi, couplings, m, **kw)


def pulse_transforms(g: PulseGate, omegas) -> tuple[np.ndarray, np.ndarray]:
    """F_pm(omega) = integral exp(i omega t) f(t) exp(+-i phi(t)) dt, phi(center) = alpha/2."""
    om = np.atleast_1d(np.asarray(omegas, dtype=float))
    L = 8 * g.width
    x, w = np.polynomial.legendre.leggauss(24)
    edges = np.linspace(g.center - L, g.center + L, 65)
    half = 0.5 * np.diff(edges)
    t = (edges[:-1, None] + half[:, None] * (x + 1)).ravel()
    wt = (half[:, None] * w).ravel()
    pulse = g.pulse()
    f, phi = pulse.envelope(t), pulse.phase(t)
    ph = np.exp(1j * np.outer(om, t - g.center))
    Fp = ph @ (wt * f * np.exp(1j * phi))
    Fm = ph @ (wt * f * np.exp(-1j * phi))
    return Fp, Fm


def linearized_transform(alpha: float, width: float, omegas, sign: int) -> np.ndarray:
    """alpha exp(-(omega t1 + sign alpha / sqrt(2 pi))^2 / 2)."""
    om = np.asarray(omegas, dtype=float)
    return alpha * np.exp(-0.5 * (om * width + sign * alpha / math.sqrt(2 * math.pi)) ** 2)


# --------------------------------------------------------------------------
# time-energy trade-off
# --------------------------------------------------------------------------


@lru_cache(maxsize=32)
def calibration_constant(alpha: float = math.pi / 2) -> float:
    """kappa with delta_1 = kappa R0 / t1^2 (sigma_x coupling, z pulse, state average)."""
    g = PulseGate(alpha, 1.0)
    return gate_error(g, None, [pauli("X")], ReservoirModel.vacuum_cubic(1.0))


@dataclass(frozen=True)
class ErrorBudget:
    n: int
    epsilon: float
    t1: float
    tC: float
    delta_1: float
    delta_n: float
    n_qubits: int = 1
    flags: tuple = ()


def optimize_schedule(n: int, epsilon: float, m: float, R0: float,
                      alpha: float = math.pi / 2, n_qubits: int = 1,
                      t1_max: float | None = None) -> ErrorBudget:
    """Shortest pulses meeting delta_n <= epsilon under delta_n = n kappa R0 / t1^2.

    With K qubits the per-qubit target is epsilon / K.
    """
    if not (0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 0.5)")
    if n < 1 or n_qubits < 1:
        raise ValueError("n and n_qubits must be positive")
    kappa = calibration_constant(alpha)
    target = epsilon / n_qubits
    t1 = math.sqrt(n * kappa * R0 / target)
    if t1_max is not None and t1 > t1_max:
        best = n * kappa * R0 / t1_max ** 2
        raise ValueError(f"epsilon={epsilon} unreachable with t1 <= {t1_max}; "
                         f"minimal achievable delta is {best:.3g}")
    d1 = kappa * R0 / t1 ** 2
    flags = ("non_perturbative",) if d1 > PERTURBATIVE_LIMIT else ()
    return ErrorBudget(n, epsilon, t1, n * (m + 1) * t1, d1, n * d1, n_qubits, flags)
