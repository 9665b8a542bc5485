"""Fault generator of the non-Markovian master equation and kicked error maps.

The generator at time t is

    L_t rho = sum_ab [Y_ab rho S_a + S_a rho Y_ab^dag]
              - 1/2 {sum_ab (S_a Y_ab + Y_ab^dag S_a), rho},

    Y_ab = integral_s^t C_ab(t - u) S_b(u, t) du,

where S(u, t) = U(t, u) S U(t, u)^dag is a fault at time u carried forward
to t by the gates applied in between. Long memory therefore turns a local
coupling into a multi-qubit fault.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .core import KickedSchedule, Operator, _PAULI
from .errormap import SecondOrderMap, _from_choi, _mixing
from .propagator import Propagator, _hmax, _segments
from .reservoir import MemoryKernel, ReservoirModel, _tent_quadrature, graded_nodes, memory_kernel


def _mat(op) -> np.ndarray:
    return np.asarray(op.matrix if isinstance(op, Operator) else op, dtype=complex)


def _kernel_of(model, epsilon: float) -> MemoryKernel:
    if isinstance(model, MemoryKernel):
        return model
    return memory_kernel(model, epsilon)


@dataclass(frozen=True, eq=False)
class FaultGenerator:
    """Generator terms (Y_ab, S_a) at a fixed time t over the memory window [s, t]."""

    t: float
    s: float
    terms: list
    epsilon: float = 0.0
    n_qubits: int = 1

    @property
    def dim(self) -> int:
        return self.terms[0][1].shape[0]

    def correction(self) -> np.ndarray:
        """Y^*(1) = sum_ab (S_a Y_ab + Y_ab^dag S_a)."""
        return sum(S @ Y + Y.conj().T @ S for Y, S in self.terms)

    def gain(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return sum(Y @ rho @ S + S @ rho @ Y.conj().T for Y, S in self.terms)

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        G = self.correction()
        return self.gain(rho) - 0.5 * (G @ rho + rho @ G)


def _upsilon(kernel: MemoryKernel, p: Propagator, S: np.ndarray, s: float, t: float,
             order: int = 16) -> np.ndarray:
    """integral_s^t C(t - u) S(u, t) du."""
    d = S.shape[0]
    out = np.zeros((d, d), dtype=complex)
    if kernel.kind == "delta":
        return 0.5 * kernel.weight * S if t > s else out
    for kind, a, b in _segments(p, s, t):
        if kind == "frozen":
            u = 0.5 * (a + b)
            val = p.backward_many(S, [u], t)[0]
            out += kernel.integral(t - b, t - a) * val
            continue
        hm = _hmax(p, a, b)
        cap = 0.5 / hm if hm > 0 else None
        sing = [b] if b == t else []
        nodes, w = graded_nodes(a, b, sing, kernel.epsilon, order, max_panel=cap)
        vals = p.backward_many(S, nodes, t)
        c = w * kernel(t - nodes)
        out += np.einsum("i,ixy->xy", c, vals)
    return out


def fault_generator(couplings, model, p: Propagator, t: float, s: float | None = None,
                    epsilon: float = 1e-3) -> FaultGenerator:
    """Assemble the fault generator at time t with memory reaching back to s."""
    Ss = [_mat(S) for S in couplings]
    n = len(Ss)
    if s is None:
        s = p.origin
    kernel = _kernel_of(model, epsilon)
    if kernel.kind == "numeric" and kernel.epsilon <= 0:
        raise ValueError("kernel singularity is unregulated")
    M = _mixing(kernel.model if kernel.model is not None else model, n) \
        if not isinstance(model, MemoryKernel) else np.eye(n)
    base = [_upsilon(kernel, p, S, s, t) for S in Ss]
    terms = []
    for a in range(n):
        for b in range(n):
            if M[a, b] == 0:
                continue
            terms.append((M[a, b] * base[b], Ss[a]))
    nq = int(round(math.log2(Ss[0].shape[0])))
    return FaultGenerator(t, s, terms, kernel.epsilon, nq)


# --------------------------------------------------------------------------
# locality
# --------------------------------------------------------------------------


def pauli_labels(n: int) -> list[str]:
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


def pauli_coefficients(A, n: int) -> dict[str, complex]:
    """c_P with A = sum_P c_P P."""
    A = _mat(A)
    d = 2 ** n
    out = {}
    for lab in pauli_labels(n):
        P = reduce(np.kron, [_PAULI[ch] for ch in lab])
        out[lab] = complex(np.trace(P.conj().T @ A) / d)
    return out


def _support(lab: str) -> frozenset:
    return frozenset(i for i, ch in enumerate(lab) if ch != "I")


def operator_support(A, n: int, tol: float = 1e-12) -> frozenset:
    sup = frozenset()
    for lab, c in pauli_coefficients(A, n).items():
        if abs(c) > tol:
            sup |= _support(lab)
    return sup


@dataclass(frozen=True)
class LocalityProfile:
    """Squared Pauli weight of the generator bucketed by qubit-support size."""

    weights: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.weights.values()))

    def __getitem__(self, k: int) -> float:
        return self.weights.get(k, 0.0)

    def nonlocal_weight(self) -> float:
        return float(sum(v for k, v in self.weights.items() if k >= 2))


def locality_profile(g: FaultGenerator) -> LocalityProfile:
    """Attribute |c_P|^2 of each Y_ab to |supp(P) U supp(S_a)|."""
    n = g.n_qubits
    weights = {k: 0.0 for k in range(1, n + 1)}
    for Y, S in g.terms:
        sup_s = operator_support(S, n)
        for lab, c in pauli_coefficients(Y, n).items():
            w = abs(c) ** 2
            if w == 0:
                continue
            k = len(_support(lab) | sup_s)
            weights[max(k, 1)] += w
    return LocalityProfile(weights)


# --------------------------------------------------------------------------
# kicked dynamics
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KickedErrorMap:
    """Phi(rho) = sum_a sum_jk r^a_jk S^j_a rho S^k_a over N gate steps of length tau."""

    unitaries: np.ndarray      # U_j = U(j, j-1) ... U(1, 0), shape (N, d, d)
    r: np.ndarray              # (channels, N, N)
    propagated: np.ndarray     # S^j_a, shape (channels, N, d, d)
    tau: float

    @property
    def n_steps(self) -> int:
        return self.r.shape[1]

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return np.einsum("ajk,ajxy,yz,akzw->xw", self.r, self.propagated, rho,
                         self.propagated)

    def to_map(self) -> SecondOrderMap:
        n, N, d, _ = self.propagated.shape
        V = self.propagated.reshape(n, N, d * d)
        choi = np.einsum("ajk,ajx,aky->xy", self.r, V, V.conj())
        return _from_choi(choi, (0.0, N * self.tau))


def _gate_unitaries(gates, tau: float) -> np.ndarray:
    if isinstance(gates, KickedSchedule):
        return np.array(gates.unitaries)
    return np.array([_mat(G) for G in gates])


def step_coefficients(kernel: MemoryKernel, tau: float, N: int,
                      method: str = "quadrature") -> np.ndarray:
    """r_jk = integral over I_j x I_k of C(w - u), I_j = [(j-1) tau, j tau]."""
    r = np.zeros((N, N), dtype=complex)
    if kernel.kind == "delta":
        return kernel.weight * tau * np.eye(N, dtype=complex)
    closed = method == "closed" and kernel.second_antiderivative is not None
    if method not in ("quadrature", "closed"):
        raise ValueError(f"unknown method {method!r}")
    # stationarity: r_jk depends on k - j only
    lag = np.zeros(N, dtype=complex)
    for m in range(N):
        a, b, c, d = 0.0, tau, m * tau, (m + 1) * tau
        if closed:
            lag[m] = kernel.double_integral(a, b, c, d)
        else:
            lag[m] = _tent_quadrature(kernel.func, a, b, c, d, kernel.epsilon)
    for j in range(N):
        for k in range(N):
            r[j, k] = lag[k - j] if k >= j else np.conj(lag[j - k])
    return r


def kicked_error_map(gates, model, tau: float, N: int, couplings, epsilon: float = 1e-3,
                     method: str = "quadrature") -> KickedErrorMap:
    """Discrete error map of an N-step gate sequence with step length tau."""
    if isinstance(model, ReservoirModel) and not model.diagonal_only:
        raise ValueError("kicked error maps assume a diagonal reservoir")
    kernel = _kernel_of(model, epsilon)
    step = _gate_unitaries(gates, tau)
    if len(step) < N:
        raise ValueError(f"need {N} gates, got {len(step)}")
    d = step.shape[1]
    cum = np.empty((N, d, d), dtype=complex)
    acc = np.eye(d, dtype=complex)
    for j in range(N):
        acc = step[j] @ acc
        cum[j] = acc
    Ss = [_mat(S) for S in couplings]
    prop = np.stack([cum.conj().transpose(0, 2, 1) @ S @ cum for S in Ss])
    r = step_coefficients(kernel, tau, N, method)
    return KickedErrorMap(cum, np.stack([r] * len(Ss)), prop, tau)


def interference_contrast(m: KickedErrorMap) -> float:
    """Share of sum |r_jk| carried by the j != k terms."""
    a = np.abs(m.r)
    total = float(a.sum())
    if total == 0:
        return 0.0
    diag = float(sum(np.trace(x) for x in a))
    return (total - diag) / total
