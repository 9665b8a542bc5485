"""Second-order error map, reduced evolution, fidelity and the Markovian limit.

The map acts as

    Phi(rho) = sum_ab integral R_ab(omega) Y_b(omega) rho Y_a(omega)^dag d omega

and the reduced state in the interaction picture is

    rho_I = rho - 1/2 {A, rho} - i [h, rho] + Phi(rho),   A = Phi^*(1).

The Hamiltonian correction h is zero unless requested; it is needed only
when second-order results are compared against exact dynamics.

Choi layout: ``choi[a*d + b, c*d + e] = sum_K K[a, b] conj(K[c, e])`` so that
``Phi(rho)[a, c] = sum_be choi[(a, b), (c, e)] rho[b, e]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Operator, State
from .propagator import (
    Propagator,
    frequency_components,
    spectral_function,
    time_nodes,
    _frozen_value,
    _hmax,
)
from .reservoir import ReservoirError, ReservoirModel, spectral_density

BREAKDOWN_NORM = 0.5
_OMEGA_ORDER = 8


class PerturbativeWarning(RuntimeWarning):
    """Second order is unreliable for this map."""


def _mat(op) -> np.ndarray:
    return np.asarray(op.matrix if isinstance(op, Operator) else op, dtype=complex)


@dataclass(frozen=True, eq=False)
class SecondOrderMap:
    """Completely positive map Phi stored as a Choi matrix, with A and h."""

    choi: np.ndarray
    A: np.ndarray
    lamb: np.ndarray
    window: tuple
    coupling: float = 1.0
    buckets: dict | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def _tensor(self) -> np.ndarray:
        d = self.dim
        return self.choi.reshape(d, d, d, d)

    def apply(self, rho) -> np.ndarray:
        return np.einsum("abce,be->ac", self._tensor(), np.asarray(rho))

    def dual(self, X) -> np.ndarray:
        return np.einsum("abce,ac->be", self._tensor().conj(), np.asarray(X))

    def kraus(self, tol: float = 1e-14) -> list[tuple[float, np.ndarray]]:
        """Operator-sum form: list of (weight, K) with Phi = sum w K . K^dag."""
        w, v = np.linalg.eigh(self.choi)
        d = self.dim
        return [(float(w[i]), v[:, i].reshape(d, d)) for i in range(len(w))
                if w[i] > tol * max(w[-1], 1e-300)]

    def min_choi_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.choi)[0])

    def norm(self) -> float:
        """Induced trace norm of Phi; for a CP map it equals ||Phi^*(1)||."""
        return float(np.linalg.norm(self.A, 2))

    def compact(self, rho) -> np.ndarray:
        """rho - 1/2 {A, rho} - i [h, rho] + Phi(rho)."""
        rho = np.asarray(rho, dtype=complex)
        A, h = self.A, self.lamb
        return (rho - 0.5 * (A @ rho + rho @ A) - 1j * (h @ rho - rho @ h)
                + self.apply(rho))

    def __add__(self, other: "SecondOrderMap") -> "SecondOrderMap":
        buckets = None
        if self.buckets is not None and other.buckets is not None:
            buckets = dict(self.buckets)
            for k, v in other.buckets.items():
                buckets[k] = buckets.get(k, 0) + v
        return SecondOrderMap(self.choi + other.choi, self.A + other.A,
                              self.lamb + other.lamb, self.window, self.coupling,
                              buckets, dict(self.metadata))


def _from_choi(choi, window, coupling=1.0, lamb=None, buckets=None, metadata=None):
    d = int(round(math.sqrt(choi.shape[0])))
    choi = 0.5 * (choi + choi.conj().T)
    A = np.einsum("abae->be", choi.reshape(d, d, d, d).conj())
    A = 0.5 * (A + A.conj().T)
    lamb = np.zeros((d, d), dtype=complex) if lamb is None else lamb
    m = SecondOrderMap(choi, A, lamb, tuple(window), coupling, buckets, metadata or {})
    if m.norm() > BREAKDOWN_NORM:
        warnings.warn(f"error map norm {m.norm():.3g} > {BREAKDOWN_NORM}: second "
                      "order is unreliable", PerturbativeWarning, stacklevel=3)
    return m


def zero_map(dim: int, window=(0.0, 0.0)) -> SecondOrderMap:
    return SecondOrderMap(np.zeros((dim * dim, dim * dim), dtype=complex),
                          np.zeros((dim, dim), dtype=complex),
                          np.zeros((dim, dim), dtype=complex), tuple(window))


def _check_couplings(couplings) -> list[np.ndarray]:
    mats = [_mat(S) for S in couplings]
    if not mats:
        raise ValueError("need at least one coupling operator")
    for k, S in enumerate(mats):
        if not np.allclose(S, S.conj().T, atol=1e-12):
            raise ValueError(f"coupling {k} is not Hermitian")
    return mats


def _mixing(model, n: int) -> np.ndarray:
    if hasattr(model, "mixing_matrix"):
        M = model.mixing_matrix(n)
    else:
        M = np.eye(n, dtype=complex)
    if not np.allclose(M, M.conj().T, atol=1e-12):
        raise ReservoirError("R_ab matrix is not Hermitian (unphysical reservoir)")
    if np.linalg.eigvalsh(M)[0] < -1e-12:
        raise ReservoirError("R_ab matrix is not positive semidefinite (unphysical reservoir)")
    return M


def _accumulate(c: np.ndarray, M: np.ndarray, V: np.ndarray) -> np.ndarray:
    """sum_i c_i sum_ab M_ab v_b,i v_a,i^dag with V shaped (channels, nodes, d^2)."""
    T = np.einsum("ab,bix->aix", M, V) * c[None, :, None]
    n, N, D = V.shape
    return T.reshape(n * N, D).T @ V.conj().reshape(n * N, D)


# --------------------------------------------------------------------------
# frequency grid
# --------------------------------------------------------------------------


def omega_grid(lo: float, hi: float, points=(), width: float = 1.0,
               fine: float | None = None, order: int = _OMEGA_ORDER):
    """Gauss-Legendre nodes on [lo, hi] with panels at most ``width`` wide,
    graded geometrically down to ``fine`` around each of ``points``."""
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    fine = width / 50 if fine is None else min(fine, width)
    n = max(1, int(math.ceil((hi - lo) / width)))
    edges = set(np.linspace(lo, hi, n + 1).tolist())
    for p in points:
        if not (lo <= p <= hi):
            continue
        edges.add(p)
        h = fine
        while h < width:
            for e in (p - h, p + h):
                if lo < e < hi:
                    edges.add(e)
            h *= 2.0
    edges = np.array(sorted(edges))
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    nodes = (edges[:-1, None] + half[:, None] * (x[None, :] + 1)).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _model_scale(model: ReservoirModel) -> float:
    if model.kind == "lorentzian":
        return 10.0 / model.params["tau_c"]
    return 0.0


def _frequency_nodes(model, p: Propagator, s: float, t: float, omega_max, switching,
                     bohr):
    """(nodes, weights, density values, metadata) for the omega integral."""
    meta = {}
    if hasattr(model, "frequency_weights"):
        om, g2 = model.frequency_weights()
        return np.asarray(om, float), np.ones(len(om)), np.asarray(g2, float), meta
    span = t - s
    if not math.isfinite(span):
        lo_h, hi_h = p.schedule.horizon
        span = hi_h - lo_h
    fmax = max([abs(b) for b in bohr] + [0.0])
    hm = 0.0
    lo_h, hi_h = p.schedule.horizon
    a, b = max(s, lo_h), min(t, hi_h)
    if b > a and math.isfinite(a) and math.isfinite(b):
        hm = _hmax(p, a, b)
    if omega_max is None:
        omega_max = 10 * max(fmax, 1.0 / span, 2 * hm, _model_scale(model))
        if math.isfinite(model.scale()):
            omega_max = max(omega_max, model.scale())
        elif model.kind == "vacuum_cubic":
            meta["implicit_cutoff"] = omega_max
    lo, hi = model.support()
    lo, hi = max(lo, -omega_max), min(hi, omega_max)
    width = math.pi / (2 * span)
    pts = sorted({0.0, *bohr, *[-x for x in bohr]})
    fine = 0.02 / span if switching <= 0 else min(0.02 / span, switching / 4)
    nodes, weights = omega_grid(lo, hi, pts, width, fine)
    meta["omega_max"] = omega_max
    return nodes, weights, spectral_density(model, nodes), meta


def _bohr_of(p: Propagator, couplings) -> list[float]:
    sch = p.schedule
    H = getattr(sch, "H", None)
    if H is None:
        return []
    freqs = set()
    for S in couplings:
        freqs |= set(frequency_components(H, S).components)
    return sorted(freqs)


# --------------------------------------------------------------------------
# error map
# --------------------------------------------------------------------------


def error_map(couplings, model, p: Propagator, s: float, t: float, *,
              omega_max: float | None = None, switching: float = 0.0,
              lamb_shift: bool = False, coupling: float = 1.0) -> SecondOrderMap:
    """Second-order error map over the window [s, t].

    ``model`` is a :class:`ReservoirModel` or any object exposing
    ``frequency_weights() -> (omega, g^2)`` (a discrete set of modes).
    ``coupling`` is metadata only; fold lambda into the operators.
    """
    Ss = _check_couplings(couplings)
    n, d = len(Ss), Ss[0].shape[0]
    M = _mixing(model, n)
    if isinstance(model, ReservoirModel) and model.kind == "white":
        return _white_map(Ss, model, M, p, s, t, lamb_shift, coupling)
    bohr = _bohr_of(p, Ss)
    om, w, R, meta = _frequency_nodes(model, p, s, t, omega_max, switching, bohr)
    c = w * R
    keep = c > 0
    om, c = om[keep], c[keep]
    meta.update(switching=switching, n_omega=int(om.size))
    if om.size == 0:
        m = zero_map(d, (s, t))
        return replace(m, coupling=coupling, metadata=meta)
    Y = np.stack([spectral_function(p, S, s, t, om, switching=switching) for S in Ss])
    choi = _accumulate(c, M, Y.reshape(n, len(om), d * d))
    lamb = None
    if lamb_shift:
        lamb = _lamb_term(Ss, M, om, c, p, s, t)
    return _from_choi(choi, (s, t), coupling, lamb, metadata=meta)


def _white_map(Ss, model, M, p, s, t, lamb_shift, coupling):
    level = model.params["level"]
    n, d = len(Ss), Ss[0].shape[0]
    if not (math.isfinite(s) and math.isfinite(t)):
        raise ValueError("white-noise map needs a finite window")
    nodes, weights, frozen = time_nodes(p, s, t)
    vals, wts = [], []
    for S in Ss:
        parts = [p.heisenberg_many(S, nodes, s)] if nodes.size else []
        parts += [_frozen_value(p, S, a, b, s)[None] for a, b in frozen]
        vals.append(np.concatenate(parts))
    wts = np.concatenate([weights] + [np.array([b - a]) for a, b in frozen])
    V = np.stack(vals)  # (n, N, d, d)
    choi = _accumulate(level * wts, M, V.reshape(n, len(wts), d * d))
    lamb = None
    if lamb_shift:
        # K = level/2 sum_ab M_ab integral S_a S_b, so h = (K - K^dag) / 2i
        K = 0.5 * level * np.einsum("ab,i,aixy,biyz->xz", M, wts, V, V)
        lamb = (K - K.conj().T) / 2j
    return _from_choi(choi, (s, t), coupling, lamb, metadata={"time_domain": True})


def _cumulative_matrix(order: int) -> np.ndarray:
    """Q with sum_j Q_ij f(x_j) = integral_{-1}^{x_i} f on Gauss-Legendre nodes."""
    x, _ = np.polynomial.legendre.leggauss(order)
    V = np.polynomial.legendre.legvander(x, order - 1)
    Iv = np.empty_like(V)
    for j in range(order):
        cj = np.zeros(order + 1)
        cj[j] = 1
        integ = np.polynomial.legendre.legint(cj, lbnd=-1)
        Iv[:, j] = np.polynomial.legendre.legval(x, integ)
    return Iv @ np.linalg.inv(V)


def _lamb_term(Ss, M, om, c, p, s, t, order: int = 12):
    """h = (K - K^dag)/2i with K the time-ordered half of A."""
    if not (math.isfinite(s) and math.isfinite(t)):
        raise ValueError("the Hamiltonian correction needs a finite window")
    d = Ss[0].shape[0]
    wmax = float(np.max(np.abs(om)))
    hm = _hmax(p, s, t)
    rate = wmax + 2 * hm
    L = min(1.0 / max(rate, 1e-300), t - s)
    k = max(1, int(math.ceil((t - s) / L)))
    edges = np.linspace(s, t, k + 1)
    x, wq = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    nodes = (edges[:-1, None] + half[:, None] * (x + 1)).ravel()
    wts = (half[:, None] * wq).ravel()
    Q = _cumulative_matrix(order)
    Sn = np.stack([p.heisenberg_many(S, nodes, s) for S in Ss])  # (n, N, d, d)
    K = np.zeros((d, d), dtype=complex)
    for wi, ci in zip(om, c):
        ph = np.exp(1j * wi * nodes)
        f = Sn * ph[None, :, None, None]                      # e^{i w u} S_b(u)
        f = np.einsum("ab,bixy->aixy", M, f)                  # mix channels
        fp = f.reshape(len(Ss), k, order, d, d)
        panel = np.einsum("j,anjxy->anxy", wq, fp) * half[None, :, None, None]
        before = np.cumsum(panel, axis=1) - panel             # full panels before
        inner = np.einsum("ij,anjxy->anixy", Q, fp) * half[None, :, None, None, None]
        cum = (inner + before[:, :, None]).reshape(len(Ss), k * order, d, d)
        g = Sn * (wts / ph)[None, :, None, None]           # e^{-i w u} S_a(u)
        K += ci * np.einsum("aixy,aiyz->xz", g, cum)
    return (K - K.conj().T) / 2j


# --------------------------------------------------------------------------
# evolution and fidelity
# --------------------------------------------------------------------------


def evolve_second_order(m: SecondOrderMap, p: Propagator, rho0) -> State:
    """rho(t) = U(t, s) [rho - 1/2 {A, rho} - i[h, rho] + Phi rho] U(t, s)^dag."""
    rho = rho0.rho if isinstance(rho0, State) else np.asarray(rho0, dtype=complex)
    s, t = m.window
    Ut, Us = p.unitaries([t, s])
    U = Ut @ Us.conj().T
    out = U @ m.compact(rho) @ U.conj().T
    out = 0.5 * (out + out.conj().T)
    tol = 10 * max(m.norm() ** 2, 1e-14)
    flags = ()
    if np.linalg.eigvalsh(out)[0] < -tol:
        flags = ("perturbative_breakdown",)
        warnings.warn("second-order state has negative eigenvalues beyond the "
                      "fourth-order tolerance", PerturbativeWarning, stacklevel=2)
    elif np.linalg.eigvalsh(out)[0] < -1e-12:
        flags = ("perturbative_breakdown",)
    return State(out, flags=flags)


def fidelity(psi0, m: SecondOrderMap, p: Propagator, picture: str = "schrodinger") -> float:
    """<psi_t| rho_t |psi_t> with psi_t the noiseless image of psi0."""
    if isinstance(psi0, State):
        psi = psi0.ket()
    else:
        psi = np.asarray(psi0, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    if picture == "interaction":
        return float(np.real(psi.conj() @ m.compact(rho) @ psi))
    if picture != "schrodinger":
        raise ValueError(f"unknown picture {picture!r}")
    s, t = m.window
    Ut, Us = p.unitaries([t, s])
    U = Ut @ Us.conj().T
    psit = U @ psi
    rt = evolve_second_order(m, p, rho).rho
    return float(np.real(psit.conj() @ rt @ psit))


# --------------------------------------------------------------------------
# Markovian limit
# --------------------------------------------------------------------------


def markovian_map(H, couplings, model, tau: float, *, warn: bool = True) -> SecondOrderMap:
    """Semigroup transition map for a static Hamiltonian over a duration tau.

    Phi(rho) = 2 pi tau sum_k sum_ab R_ab(w_k) S_b(w_k) rho S_a(w_k)^dag,
    kept bucket by bucket so that the pure-dephasing part can be split off.
    """
    Ss = _check_couplings(couplings)
    H = _mat(H)
    n, d = len(Ss), H.shape[0]
    M = _mixing(model, n)
    decs = [frequency_components(H, S) for S in Ss]
    gap = decs[0].gap
    degenerate = any(fd.degenerate for fd in decs)
    if warn and math.isfinite(gap) and tau * gap < 10:
        warnings.warn(f"tau * gap = {tau * gap:.3g}: Markovian limit needs tau >> 1/gap",
                      RuntimeWarning, stacklevel=2)
    freqs = sorted(set().union(*[fd.components for fd in decs]))
    buckets = {}
    total = np.zeros((d * d, d * d), dtype=complex)
    for w in freqs:
        comps = np.stack([fd.components[w].matrix if w in fd.components
                          else np.zeros((d, d), complex) for fd in decs])
        if isinstance(model, ReservoirModel):
            R = float(spectral_density(model, w))
        else:
            R = float(model(w))
        c = np.array([2 * math.pi * tau * R])
        ch = _accumulate(c, M, comps.reshape(n, 1, d * d))
        buckets[w] = ch
        total = total + ch
    meta = {"gap": gap, "degenerate": degenerate, "tau": tau}
    return _from_choi(total, (0.0, tau), buckets=buckets, metadata=meta)


def split_dephasing_dissipation(m: SecondOrderMap) -> tuple[SecondOrderMap, SecondOrderMap]:
    """(omega = 0 bucket, all other buckets) of a Markovian map."""
    if m.buckets is None:
        raise ValueError("map has no frequency buckets; build it with markovian_map")
    d2 = m.choi.shape[0]
    zero = np.zeros((d2, d2), dtype=complex)
    pure = m.buckets.get(0.0, zero)
    diss = sum((v for k, v in m.buckets.items() if k != 0.0), zero)
    pure_b = {0.0: pure} if 0.0 in m.buckets else {}
    diss_b = {k: v for k, v in m.buckets.items() if k != 0.0}
    return (_from_choi(pure, m.window, buckets=pure_b, metadata=dict(m.metadata)),
            _from_choi(diss, m.window, buckets=diss_b, metadata=dict(m.metadata)))


# --------------------------------------------------------------------------
# delta-function models
# --------------------------------------------------------------------------


def delta1(x, tau: float):
    """sin(tau x) / (pi x)."""
    x = np.asarray(x, dtype=float)
    return tau / math.pi * np.sinc(tau * x / math.pi)


def delta2(x, tau: float):
    """sin^2(tau x) / (pi tau x^2)."""
    x = np.asarray(x, dtype=float)
    return tau / math.pi * np.sinc(tau * x / math.pi) ** 2


def delta_model_integrals(g, tau: float, center: float = 0.0, half_width: float = 40.0,
                          order: int = 16) -> tuple[float, float]:
    """(integral of delta1^2 g, pi tau integral of delta2 g) by panel quadrature."""
    width = math.pi / (2 * tau)
    nodes, w = omega_grid(center - half_width, center + half_width, [center], width,
                          order=order)
    x = nodes - center
    gv = g(nodes)
    lhs = float(np.sum(w * delta1(x, tau) ** 2 * gv))
    rhs = float(math.pi * tau * np.sum(w * delta2(x, tau) * gv))
    return lhs, rhs


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def export_choi(m: SecondOrderMap, path) -> None:
    """Two columns: flat row-major index and complex value."""
    flat = m.choi.ravel()
    with open(path, "w") as fh:
        fh.write(f"# choi matrix, dim {m.choi.shape[0]}, row-major\n")
        for i, z in enumerate(flat):
            fh.write(f"{i} {z.real:.16e}{z.imag:+.16e}j\n")


def load_choi(path) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            _, z = line.split()
            vals.append(complex(z))
    n = int(round(math.sqrt(len(vals))))
    return np.array(vals).reshape(n, n)
