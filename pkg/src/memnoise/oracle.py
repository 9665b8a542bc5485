"""Exact reference dynamics: the register coupled to a few bosonic modes.

The joint Hamiltonian is

    H(t) = H_QC(t) + sum_m w_m b_m^dag b_m + lam sum_a S_a (x) B_a,
    B_a = sum_m g_m (b_am + b_am^dag),

with each coupling channel a seeing its own copy of the modes. The modes
start in the vacuum and the Fock space is truncated per mode (``n_max``)
and optionally by the total number of excitations (``max_excitations``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from .core import ConstantSchedule, Operator, Schedule, State
from .reservoir import ReservoirModel, spectral_density

MAX_JOINT_DIM = 20000


class OracleError(RuntimeError):
    """Raised when the truncated oracle cannot be trusted."""


@dataclass(frozen=True, eq=False)
class DiscreteReservoir:
    """Modes with frequencies ``omega`` and couplings ``g`` (g^2 = R dw)."""

    omega: np.ndarray
    g: np.ndarray
    n_max: int = 3
    max_excitations: int | None = None

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if om.shape != g.shape or om.ndim != 1:
            raise ValueError("omega and g must be 1-d arrays of equal length")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "g", g)
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @property
    def n_modes(self) -> int:
        return len(self.omega)

    def frequency_weights(self):
        """Nodes and weights of the equivalent spectral density sum_m g_m^2 delta(w - w_m)."""
        return self.omega, self.g ** 2

    def autocorrelation(self, t):
        t = np.asarray(t, dtype=float)
        return np.sum(self.g ** 2 * np.exp(-1j * np.multiply.outer(t, self.omega)), axis=-1)


def discretize(m: ReservoirModel, band: tuple, M: int, bohr_frequencies=(),
               rule: str = "midpoint", n_max: int = 3,
               max_excitations: int | None = None) -> DiscreteReservoir:
    """Sample R on ``band`` with M nodes; g_m^2 = R(w_m) dw_m.

    ``rule='midpoint'`` uses equal cells (commensurate frequencies, longest
    recurrence time); ``rule='gauss'`` uses Gauss-Legendre nodes and weights.
    """
    lo, hi = band
    if M < 4:
        raise ValueError("need at least 4 modes")
    if hi <= lo:
        raise ValueError("empty band")
    for w in bohr_frequencies:
        if w > 0 and not (lo <= w <= hi):
            raise ValueError(f"band [{lo}, {hi}] excludes the Bohr frequency {w}")
    if rule == "midpoint":
        dw = (hi - lo) / M
        om = lo + dw * (np.arange(M) + 0.5)
        wts = np.full(M, dw)
    elif rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(M)
        om = lo + 0.5 * (hi - lo) * (x + 1)
        wts = 0.5 * (hi - lo) * w
    else:
        raise ValueError(f"unknown rule {rule!r}")
    R = spectral_density(m, om)
    return DiscreteReservoir(om, np.sqrt(R * wts), n_max, max_excitations)


# --------------------------------------------------------------------------
# truncated Fock space
# --------------------------------------------------------------------------


def fock_basis(n_modes: int, n_max: int, max_excitations: int | None = None):
    """Occupation tuples with n_m <= n_max and sum n_m <= max_excitations."""
    cap = n_max if max_excitations is None else min(n_max, max_excitations)
    total = math.inf if max_excitations is None else max_excitations
    if max_excitations is None:
        return list(itertools.product(range(cap + 1), repeat=n_modes))
    out = []

    def rec(prefix, left):
        if len(prefix) == n_modes:
            out.append(tuple(prefix))
            return
        for k in range(min(cap, left) + 1):
            rec(prefix + [k], left - k)

    rec([], total)
    out.sort(key=lambda occ: (sum(occ), [-x for x in occ]))
    return out


class _Bath:
    def __init__(self, n_modes: int, n_max: int, max_excitations: int | None):
        self.basis = fock_basis(n_modes, n_max, max_excitations)
        self.index = {occ: i for i, occ in enumerate(self.basis)}
        self.dim = len(self.basis)
        self.n_max = n_max
        self.max_excitations = max_excitations
        occ = np.array(self.basis, dtype=int).reshape(self.dim, n_modes)
        self.occ = occ
        # edge states: where the truncation could be felt next
        edge = np.zeros(self.dim, dtype=bool)
        if n_max < (max_excitations if max_excitations is not None else math.inf):
            edge |= np.any(occ == n_max, axis=1)
        if max_excitations is not None:
            edge |= occ.sum(axis=1) == max_excitations
        self.edge = edge

    def lowering(self, m: int) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for j, occ in enumerate(self.basis):
            if occ[m] == 0:
                continue
            lower = occ[:m] + (occ[m] - 1,) + occ[m + 1:]
            rows.append(self.index[lower])
            cols.append(j)
            vals.append(math.sqrt(occ[m]))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))


def _joint_operators(couplings, d: DiscreteReservoir):
    n_ch = len(couplings)
    M = d.n_modes
    bath = _Bath(n_ch * M, d.n_max, d.max_excitations)
    freqs = np.tile(d.omega, n_ch)
    HB = sparse.diags(bath.occ @ freqs)
    Bs = []
    for a in range(n_ch):
        B = sparse.csr_matrix((bath.dim, bath.dim))
        for m in range(M):
            if d.g[m] == 0:
                continue
            L = bath.lowering(a * M + m)
            B = B + d.g[m] * (L + L.T)
        Bs.append(B)
    return bath, HB, Bs


def exact_reduced_dynamics(couplings, d: DiscreteReservoir, lam: float,
                           schedule: Schedule, t: float, rho0, t0: float | None = None,
                           dt: float | None = None, leakage_tol: float = 1e-6,
                           check_every: int = 8) -> State:
    """Reduced state at time t of the register plus truncated modes.

    Each eigenvector of ``rho0`` is evolved separately from the vacuum of
    the modes. Raises :class:`OracleError` when population reaches the
    truncation edge beyond ``leakage_tol``.
    """
    Ss = [np.asarray(S.matrix if isinstance(S, Operator) else S, dtype=complex)
          for S in couplings]
    rho = rho0.rho if isinstance(rho0, State) else np.asarray(rho0, dtype=complex)
    ds = rho.shape[0]
    bath, HB, Bs = _joint_operators(Ss, d)
    D = ds * bath.dim
    if D > MAX_JOINT_DIM:
        raise OracleError(f"joint dimension {D} exceeds {MAX_JOINT_DIM}")
    Ib = sparse.identity(bath.dim, format="csr")
    H_int = sum(sparse.kron(sparse.csr_matrix(S), B) for S, B in zip(Ss, Bs))
    H_static = sparse.kron(sparse.identity(ds), HB) + lam * H_int
    lo = schedule.horizon[0]
    t0 = (lo if math.isfinite(lo) else 0.0) if t0 is None else t0
    constant = isinstance(schedule, ConstantSchedule)
    span = t - t0
    if constant:
        H_sys = sparse.kron(sparse.csr_matrix(schedule.H), Ib)
        n_steps = max(check_every, 1)
    else:
        if dt is None:
            raise ValueError("time-dependent schedules need a step dt")
        n_steps = max(1, int(math.ceil(span / dt)))
    h = span / n_steps
    w, v = np.linalg.eigh(rho)
    out = np.zeros((ds, ds), dtype=complex)
    edge = np.kron(np.ones(ds, dtype=bool), bath.edge)
    for p, vec in zip(w, v.T):
        if p < 1e-15:
            continue
        psi = np.kron(vec, np.eye(bath.dim, 1).ravel()).astype(complex)
        for k in range(n_steps):
            if constant:
                Hk = H_static + H_sys
            else:
                Hs = schedule.hamiltonian(t0 + (k + 0.5) * h)
                Hk = H_static + sparse.kron(sparse.csr_matrix(Hs), Ib)
            psi = expm_multiply(-1j * h * Hk.tocsr(), psi)
            if (k + 1) % check_every == 0 or k == n_steps - 1:
                leak = float(np.sum(np.abs(psi[edge]) ** 2))
                if leak > leakage_tol:
                    raise OracleError(
                        f"truncation leakage {leak:.2e} > {leakage_tol:.0e}; raise "
                        f"n_max to {d.n_max + 1} or the excitation cap")
        nrm = np.linalg.norm(psi)
        if abs(nrm - 1) > 1e-10:
            raise OracleError(f"joint norm drifted by {abs(nrm - 1):.2e}")
        Psi = psi.reshape(ds, bath.dim)
        out += p * (Psi @ Psi.conj().T)
    out = 0.5 * (out + out.conj().T)
    return State(out / np.trace(out).real)
