"""Hilbert-space primitives for small qubit registers.

Operators are dense complex matrices on ``n <= 4`` qubits. Qubit 0 is the
leftmost tensor factor, so ``pauli("XI")`` acts on qubit 0. Units are
hbar = k_B = 1 throughout; time is measured in inverse energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
from scipy import linalg as sla

MAX_QUBITS = 4

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# sigma_z |0> = +|0>, so |0> is the upper level of sigma_z / 2
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


class ScheduleError(ValueError):
    """Raised for malformed schedules or queries outside their horizon."""


def _n_qubits(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator on an n-qubit register with a declared qubit support.

    ``support`` lists the qubits on which the operator acts nontrivially;
    outside of it the operator must be the identity.
    """

    matrix: np.ndarray
    support: frozenset = field(default=None)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        n = _n_qubits(m.shape[0])
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        support = self.support
        if support is None:
            support = range(n)
        support = frozenset(int(q) for q in support)
        if not support <= set(range(n)):
            raise ValueError(f"support {sorted(support)} outside qubits 0..{n - 1}")
        object.__setattr__(self, "support", support)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.dim)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.matrix
        return self.matrix.astype(dtype)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol))

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.support)

    def __matmul__(self, other):
        other = other.matrix if isinstance(other, Operator) else np.asarray(other)
        return self.matrix @ other

    def __repr__(self):
        return f"Operator(dim={self.dim}, support={sorted(self.support)})"


def pauli(spec: str) -> Operator:
    """Tensor product of single-qubit Paulis, e.g. ``pauli("XIZ")``."""
    if not spec:
        raise ValueError("empty Pauli string")
    for pos, ch in enumerate(spec):
        if ch not in _PAULI:
            raise ValueError(f"invalid Pauli character {ch!r} at position {pos}")
    if len(spec) > MAX_QUBITS:
        raise ValueError(f"at most {MAX_QUBITS} qubits supported")
    mat = reduce(np.kron, [_PAULI[ch] for ch in spec])
    return Operator(mat, {i for i, ch in enumerate(spec) if ch != "I"})


def embed(local: np.ndarray, qubits: Sequence[int], n_qubits: int) -> Operator:
    """Place an operator acting on ``qubits`` (in that order) into an n-qubit register."""
    local = np.asarray(local, dtype=complex)
    qubits = list(qubits)
    k = len(qubits)
    if local.shape != (2 ** k, 2 ** k):
        raise ValueError("local operator does not match the number of qubits")
    if len(set(qubits)) != k or any(q < 0 or q >= n_qubits for q in qubits):
        raise ValueError(f"bad qubit list {qubits} for {n_qubits} qubits")
    rest = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(local, np.eye(2 ** len(rest)))
    # full acts on the order qubits + rest; permute back to 0..n-1
    order = qubits + rest
    perm = [order.index(q) for q in range(n_qubits)]
    t = full.reshape([2] * (2 * n_qubits))
    t = t.transpose(perm + [p + n_qubits for p in perm])
    return Operator(t.reshape(2 ** n_qubits, 2 ** n_qubits), qubits)


def partial_trace(mat: np.ndarray, keep: Sequence[int], n_qubits: int) -> np.ndarray:
    """Trace out every qubit not in ``keep``; the result is ordered by ``sorted(keep)``."""
    keep = sorted(keep)
    t = np.asarray(mat).reshape([2] * (2 * n_qubits))
    traced = [q for q in range(n_qubits) if q not in keep]
    # trace highest index first so earlier axis numbers stay valid
    for q in sorted(traced, reverse=True):
        nq = t.ndim // 2
        t = np.trace(t, axis1=q, axis2=q + nq)
    d = 2 ** len(keep)
    return t.reshape(d, d)


@dataclass(frozen=True, eq=False)
class State:
    """Density matrix of the register.

    ``flags`` carries diagnostics from the code that produced the state. A
    state flagged ``"perturbative_breakdown"`` is kept even if it has
    negative eigenvalues, so that the breakdown stays visible.
    """

    rho: np.ndarray
    pure: bool = False
    flags: tuple = ()

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        if not np.allclose(rho, rho.conj().T, atol=1e-10):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > 1e-10:
            raise ValueError("density matrix does not have unit trace")
        if ("perturbative_breakdown" not in self.flags
                and np.linalg.eigvalsh(rho).min() < -1e-12):
            raise ValueError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_ket(cls, psi) -> "State":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), pure=True)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def ket(self) -> np.ndarray:
        """State vector of a pure state (global phase fixed by the largest entry)."""
        w, v = np.linalg.eigh(self.rho)
        if w[-1] < 1 - 1e-9:
            raise ValueError("state is not pure")
        psi = v[:, -1]
        k = np.argmax(abs(psi))
        return psi * abs(psi[k]) / psi[k]


def random_state(dim: int, rng: np.random.Generator, rank: int | None = None) -> State:
    """Random density matrix from the induced (Ginibre) measure."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return State(rho / np.trace(rho), pure=rank == 1)


def random_ket(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) for Hermitian h."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def _as_matrix(op) -> np.ndarray:
    return np.asarray(op.matrix if isinstance(op, Operator) else op, dtype=complex)


# --------------------------------------------------------------------------
# schedules
# --------------------------------------------------------------------------


class Schedule:
    """Base class for controlled Hamiltonians H_QC(t)."""

    dim: int
    horizon: tuple

    def hamiltonian(self, t: float) -> np.ndarray:
        raise NotImplementedError

    #: H(t) is identically zero before and after the horizon
    vanishes_outside: bool = False

    def frozen_intervals(self) -> list[tuple[float, float]]:
        """Intervals on which the propagator is constant (no drive, no kicks)."""
        return []

    def kick_times(self) -> list[float]:
        return []

    def breakpoints(self) -> list[float]:
        """Times where H(t) is not smooth; grids put nodes on them."""
        return []

    def check_time(self, t: float):
        lo, hi = self.horizon
        if not (lo - 1e-12 <= t <= hi + 1e-12):
            raise ScheduleError(f"t={t} outside schedule horizon [{lo}, {hi}]")


@dataclass(frozen=True, eq=False)
class ConstantSchedule(Schedule):
    H: np.ndarray
    horizon: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        object.__setattr__(self, "H", _as_matrix(self.H))

    @property
    def dim(self):
        return self.H.shape[0]

    def hamiltonian(self, t):
        self.check_time(t)
        return self.H

    def frozen_intervals(self):
        if not np.any(self.H):
            return [self.horizon]
        return []


@dataclass(frozen=True, eq=False)
class KickedSchedule(Schedule):
    """Instantaneous gates: at time t_j apply U_j = exp(-i h_j tau).

    A kick at t_j is part of U(t, s) when s <= t_j < t.
    """

    kicks: tuple
    tau: float
    horizon: tuple = None

    def __post_init__(self):
        kicks = tuple(sorted(((float(t), _as_matrix(h)) for t, h in self.kicks),
                             key=lambda k: k[0]))
        if not kicks:
            raise ScheduleError("kicked schedule needs at least one kick")
        object.__setattr__(self, "kicks", kicks)
        if self.tau <= 0:
            raise ScheduleError("kick duration tau must be positive")
        if self.horizon is None:
            object.__setattr__(self, "horizon", (kicks[0][0], kicks[-1][0] + self.tau))
        unis = tuple(expm_hermitian(h, self.tau) for _, h in kicks)
        object.__setattr__(self, "_unitaries", unis)

    @classmethod
    def from_steps(cls, generators: Sequence, tau: float, start: float = 0.0):
        """Kick j (1-based) at (j - 1) tau, as in a gate-per-step algorithm."""
        kicks = [(start + j * tau, h) for j, h in enumerate(generators)]
        return cls(tuple(kicks), tau, (start, start + len(kicks) * tau))

    @property
    def dim(self):
        return self.kicks[0][1].shape[0]

    @property
    def unitaries(self):
        return self._unitaries

    def hamiltonian(self, t):
        # the kicks are delta functions; the regular part vanishes
        self.check_time(t)
        return np.zeros((self.dim, self.dim), dtype=complex)

    vanishes_outside = True

    def frozen_intervals(self):
        lo, hi = self.horizon
        edges = [lo] + [t for t in self.kick_times() if lo < t < hi] + [hi]
        return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def kick_times(self):
        return [t for t, _ in self.kicks]

    def breakpoints(self):
        return self.kick_times()


def gaussian_envelope(t, alpha: float, width: float, center: float = 0.0):
    """f(t) = alpha / (sqrt(2 pi) t1) exp(-(t - c)^2 / (2 t1^2)); integrates to alpha."""
    x = (np.asarray(t, dtype=float) - center) / width
    return alpha / (math.sqrt(2 * math.pi) * width) * np.exp(-0.5 * x * x)


def gaussian_phase(t, alpha: float, width: float, center: float = 0.0):
    """Accumulated action phi(t) = integral of f up to t."""
    from scipy.special import erf
    x = (np.asarray(t, dtype=float) - center) / (math.sqrt(2) * width)
    return 0.5 * alpha * (1 + erf(x))


@dataclass(frozen=True, eq=False)
class Pulse:
    center: float
    width: float
    alpha: float
    axis: np.ndarray  # generator, e.g. sigma_z / 2

    def __post_init__(self):
        if self.width <= 0:
            raise ScheduleError("pulse width must be positive")
        object.__setattr__(self, "axis", _as_matrix(self.axis))

    def envelope(self, t):
        return gaussian_envelope(t, self.alpha, self.width, self.center)

    def phase(self, t):
        return gaussian_phase(t, self.alpha, self.width, self.center)


@dataclass(frozen=True, eq=False)
class GaussianPulseSchedule(Schedule):
    """Sum of Gaussian pulses f_k(t) G_k, truncated at ``truncation`` widths."""

    pulses: tuple
    truncation: float = 8.0
    horizon: tuple = None

    def __post_init__(self):
        pulses = tuple(sorted(self.pulses, key=lambda p: p.center))
        if not pulses:
            raise ScheduleError("need at least one pulse")
        object.__setattr__(self, "pulses", pulses)
        if self.horizon is None:
            lo = min(p.center - self.truncation * p.width for p in pulses)
            hi = max(p.center + self.truncation * p.width for p in pulses)
            object.__setattr__(self, "horizon", (lo, hi))

    @property
    def dim(self):
        return self.pulses[0].axis.shape[0]

    def windows(self) -> list[tuple[float, float]]:
        """Merged support windows of the truncated pulses."""
        spans = sorted((p.center - self.truncation * p.width,
                        p.center + self.truncation * p.width) for p in self.pulses)
        merged = [list(spans[0])]
        for a, b in spans[1:]:
            if a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return [tuple(w) for w in merged]

    def hamiltonian(self, t):
        self.check_time(t)
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for p in self.pulses:
            if abs(t - p.center) <= self.truncation * p.width:
                h = h + p.envelope(t) * p.axis
        return h

    vanishes_outside = True

    def frozen_intervals(self):
        lo, hi = self.horizon
        out, cur = [], lo
        for a, b in self.windows():
            if a > cur:
                out.append((cur, a))
            cur = max(cur, b)
        if hi > cur:
            out.append((cur, hi))
        return out

    def breakpoints(self):
        return [x for w in self.windows() for x in w]

    def commuting(self) -> bool:
        axes = [p.axis for p in self.pulses]
        return all(np.allclose(a @ b, b @ a, atol=1e-12)
                   for i, a in enumerate(axes) for b in axes[i + 1:])


@dataclass(frozen=True, eq=False)
class BangBangSchedule(Schedule):
    """H(t) = H cos(Omega t)."""

    H: np.ndarray
    frequency: float
    horizon: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        object.__setattr__(self, "H", _as_matrix(self.H))
        if self.frequency <= 0:
            raise ScheduleError("bang-bang frequency must be positive")

    @property
    def dim(self):
        return self.H.shape[0]

    def hamiltonian(self, t):
        self.check_time(t)
        return self.H * math.cos(self.frequency * t)


def evaluate_hamiltonian(s: Schedule, t: float) -> Operator:
    """H_QC(t) as an Operator (Hermitian for every variant)."""
    return Operator(s.hamiltonian(t))
