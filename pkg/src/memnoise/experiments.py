"""Named experiments run by the command line tool.

Each experiment evaluates one sweep point at a time (so points can go to a
worker pool) and then a ``finalize`` step adds columns that need the whole
sweep, such as fitted slopes. Points only see plain config data, never
global state, which keeps reruns byte-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ExperimentConfig, build_reservoir, build_schedule, build_system
from .core import ConstantSchedule, State, random_ket
from .decoupling import bangbang_spectrum, decoupling_verdict
from .errormap import error_map, evolve_second_order, markovian_map
from .faultmap import fault_generator, interference_contrast, kicked_error_map, locality_profile
from .minimal import optimize_schedule
from .oracle import discretize, exact_reduced_dynamics
from .propagator import Propagator, frequency_components


class NumericRejection(RuntimeError):
    """An experiment refused a sweep point on numerical grounds."""


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    columns: tuple
    point: Callable
    finalize: Callable | None = None
    plot_y: tuple = ()
    log_axes: tuple = (False, False)


def _couplings(cfg: ExperimentConfig):
    s = build_system(cfg)
    return s, [s.strength * S for S in s.couplings]


def trace_distance(a, b) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b)))))


def _loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.abs(np.asarray(y, dtype=float))
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _initial_state(label: str, n: int, seed: int) -> np.ndarray:
    if label == "random":
        return random_ket(2 ** n, np.random.default_rng(seed))
    kets = {"0": [1, 0], "1": [0, 1], "+": [1, 1], "-": [1, -1]}
    if len(label) != n or any(ch not in kets for ch in label):
        raise NumericRejection(f"initial state '{label}' is not a {n}-qubit product label")
    v = np.array([1.0 + 0j])
    for ch in label:
        v = np.kron(v, np.array(kets[ch], dtype=complex))
    return v / np.linalg.norm(v)


# --------------------------------------------------------------------------
# markovian_limit: error map vs semigroup map as the window grows
# --------------------------------------------------------------------------


def _markov_point(cfg: ExperimentConfig, tau: float) -> dict:
    system, Ss = _couplings(cfg)
    model = build_reservoir(cfg)
    p = Propagator(ConstantSchedule(system.H))
    full = error_map(Ss, model, p, 0.0, tau)
    mk = markovian_map(system.H, Ss, model, tau, warn=False)
    diff = np.linalg.norm(full.choi - mk.choi) / max(np.linalg.norm(mk.choi), 1e-300)
    gap = frequency_components(system.H, system.couplings[0]).gap
    return {"tau": tau, "tau_gap": tau * gap, "errormap_norm": full.norm(),
            "markov_norm": mk.norm(), "relative_difference": float(diff)}


# --------------------------------------------------------------------------
# locality_sweep: nonlocal weight of the fault generator vs memory window
# --------------------------------------------------------------------------


def _locality_point(cfg: ExperimentConfig, window: float) -> dict:
    _, Ss = _couplings(cfg)
    model = build_reservoir(cfg)
    sch = build_schedule(cfg)
    p = Propagator(sch)
    t = float(cfg.params.get("t", sch.horizon[1]))
    eps = float(cfg.params.get("epsilon", 1e-3))
    g = fault_generator(Ss, model, p, t, s=t - window, epsilon=eps)
    prof = locality_profile(g)
    row = {"window": window}
    for k in range(1, g.n_qubits + 1):
        row[f"weight{k}"] = prof[k]
    row["nonlocal_fraction"] = prof.nonlocal_weight() / prof.total if prof.total else 0.0
    return row


# --------------------------------------------------------------------------
# kicked_memory: error-path interference and the tail of r_jk
# --------------------------------------------------------------------------


def _kicked_point(cfg: ExperimentConfig, tau: float) -> dict:
    _, Ss = _couplings(cfg)
    model = build_reservoir(cfg)
    sch = build_schedule(cfg, {"kind": "kicked", "tau": tau})
    N = len(sch.kicks)
    eps = float(cfg.params.get("epsilon", 1e-3))
    method = cfg.params.get("method", "quadrature")
    km = kicked_error_map(sch, model, tau, N, Ss, epsilon=eps, method=method)
    lag_min = int(cfg.params.get("tail_from", 4))
    lags = np.arange(lag_min, N)
    slope = _loglog_slope(lags, np.abs(km.r[0, 0, lag_min:])) if len(lags) >= 2 else math.nan
    m = km.to_map()
    return {"tau": tau, "contrast": interference_contrast(km), "tail_slope": slope,
            "map_norm": m.norm(), "min_choi_eigenvalue": m.min_choi_eigenvalue()}


# --------------------------------------------------------------------------
# minimal_scaling: optimal pulse width and total time vs gate count
# --------------------------------------------------------------------------


def _minimal_point(cfg: ExperimentConfig, n) -> dict:
    r = cfg.reservoir
    if r["kind"] != "vacuum_cubic":
        raise NumericRejection("minimal_scaling needs a vacuum_cubic reservoir")
    eps = float(cfg.params.get("epsilon", 1e-3))
    m = float(cfg.params.get("m", 10.0))
    alpha = float(cfg.params.get("alpha", math.pi / 2))
    lam = float(cfg.system.get("coupling_strength", 1.0))
    R0 = float(r.get("R0", 1.0)) * lam ** 2
    b = optimize_schedule(int(n), eps, m, R0, alpha, int(cfg.system["n_qubits"]))
    return {"n": int(n), "epsilon": eps, "t1": b.t1, "tC": b.tC,
            "delta_1": b.delta_1, "delta_n": b.delta_n}


def _minimal_finalize(rows: list[dict]) -> list[dict]:
    k = _loglog_slope([r["n"] for r in rows], [r["tC"] for r in rows])
    return [dict(r, fitted_exponent=k) for r in rows]


# --------------------------------------------------------------------------
# decoupling_verdict: residual decay under bang-bang modulation
# --------------------------------------------------------------------------


def _decoupling_point(cfg: ExperimentConfig, omega: float) -> dict:
    system, Ss = _couplings(cfg)
    model = build_reservoir(cfg)
    window = float(cfg.params.get("window", 200.0))
    ratio = float(cfg.params.get("ratio", 0.01))
    spec = bangbang_spectrum(system.H, Ss, omega, window)
    v = decoupling_verdict(spec, model, ratio)
    return {"omega_drive": omega, "suppressed": v.suppressed, "residual": v.residual,
            "unmodulated": v.unmodulated, "carrier": v.carrier, "verdict": v.verdict}


# --------------------------------------------------------------------------
# oracle_check: exact few-mode dynamics vs the second-order prediction
# --------------------------------------------------------------------------


def _oracle_point(cfg: ExperimentConfig, lam: float) -> dict:
    system = build_system(cfg)
    model = build_reservoir(cfg)
    prm = cfg.params
    band = tuple(prm.get("band", (0.0, 4.0)))
    bohr = frequency_components(system.H, system.couplings[0]).frequencies
    d = discretize(model, band, int(prm.get("modes", 6)), [w for w in bohr if w > 0],
                   rule=prm.get("rule", "midpoint"), n_max=int(prm.get("n_max", 3)),
                   max_excitations=prm.get("max_excitations"))
    T = float(prm.get("duration", 5.0))
    psi = _initial_state(prm.get("initial", "+" * system.n_qubits), system.n_qubits, cfg.seed)
    rho = np.outer(psi, psi.conj())
    sch = ConstantSchedule(system.H)
    exact = exact_reduced_dynamics(system.couplings, d, lam, sch, T, rho).rho
    p = Propagator(sch)
    m = error_map([lam * S for S in system.couplings], d, p, 0.0, T,
                  lamb_shift=bool(prm.get("lamb_shift", True)), coupling=lam)
    approx = evolve_second_order(m, p, rho).rho
    return {"lam": lam, "trace_distance": trace_distance(exact, approx),
            "map_norm": m.norm()}


def _oracle_finalize(rows: list[dict]) -> list[dict]:
    out = []
    for i, r in enumerate(rows):
        prev = rows[i - 1]["trace_distance"] if i else math.nan
        cur = r["trace_distance"]
        out.append(dict(r, ratio=prev / cur if i and cur > 0 else math.nan))
    return out


REGISTRY = {e.name: e for e in (
    Experiment("markovian_limit", "error map converging to the semigroup map as tau grows",
               ("tau", "tau_gap", "errormap_norm", "markov_norm", "relative_difference"),
               _markov_point, None, ("relative_difference",), (True, True)),
    Experiment("locality_sweep", "multi-qubit weight of the fault generator vs memory window",
               ("window",), _locality_point, None, ("weight1", "weight2"), (False, True)),
    Experiment("kicked_memory", "error-path interference and r_jk tail of kicked gates",
               ("tau", "contrast", "tail_slope", "map_norm", "min_choi_eigenvalue"),
               _kicked_point, None, ("contrast",), (True, False)),
    Experiment("minimal_scaling", "optimal pulse width and total time vs gate count",
               ("n", "epsilon", "t1", "tC", "delta_1", "delta_n", "fitted_exponent"),
               _minimal_point, _minimal_finalize, ("tC", "t1"), (True, True)),
    Experiment("decoupling_verdict", "residual decay under bang-bang modulation",
               ("omega_drive", "suppressed", "residual", "unmodulated", "carrier", "verdict"),
               _decoupling_point, None, ("residual", "unmodulated"), (True, True)),
    Experiment("oracle_check", "exact few-mode dynamics vs the second-order prediction",
               ("lam", "trace_distance", "map_norm", "ratio"),
               _oracle_point, _oracle_finalize, ("trace_distance",), (True, True)),
)}


def run_point(cfg: ExperimentConfig, value) -> dict:
    return REGISTRY[cfg.experiment].point(cfg, value)


def collect(cfg: ExperimentConfig, rows: list[dict]) -> tuple[list[str], list[list]]:
    """Apply the finalize step and lay rows out in column order."""
    exp = REGISTRY[cfg.experiment]
    if exp.finalize is not None:
        rows = exp.finalize(rows)
    header = list(exp.columns)
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    return header, [[r.get(k, math.nan) for k in header] for r in rows]
