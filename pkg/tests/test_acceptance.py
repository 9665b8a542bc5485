"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS criterion k`` or ``FAIL criterion k`` line
(visible in the tee'd log even when the test passes) before asserting.
Tolerances are pinned as module constants.
"""
import itertools
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from memnoise.cli import main
from memnoise.core import ConstantSchedule, KickedSchedule, pauli, random_state
from memnoise.decoupling import bangbang_spectrum, bell_density, decoupling_verdict
from memnoise.errormap import delta_model_integrals, error_map, evolve_second_order, markovian_map
from memnoise.faultmap import fault_generator, locality_profile, step_coefficients
from memnoise.minimal import GateSequence, PulseGate, gate_error, optimize_schedule, sequence_error
from memnoise.oracle import discretize, exact_reduced_dynamics
from memnoise.propagator import Propagator
from memnoise.reservoir import ReservoirModel, memory_kernel, numeric_autocorrelation, spectral_density

from conftest import trace_distance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

X, Y, Z = (pauli(c).matrix for c in "XYZ")
H_ATOM = Z / 2                         # gap 1, |0> is the upper level
EXC = np.diag([1.0, 0.0]).astype(complex)
PLUS = np.full((2, 2), 0.5, dtype=complex)
CNOT_GEN = math.pi * np.kron(np.diag([0.0, 1.0]), (np.eye(2) - X) / 2)

CP_TOL = 1e-10
TRACE_TOL = 1e-12
GOLDEN_RULE_TOL = 0.05
LAMBDA4_TARGET, LAMBDA4_TOL = 16.0, 0.30
KERNEL_SLOPE_TOL = 0.05
TAIL_SLOPE_TOL = 0.1
WHITE_NONLOCAL_MAX = 1e-10
VACUUM_WEIGHT2_MIN = 1e-6
WIDTH_SLOPE_TOL = 0.05
ADDITIVITY_RANGE = (0.9, 1.1)
TC_EXPONENT_TOL = 0.05
EPS_SCALING_TOL = 0.05
LORENTZ_FLOOR = 0.9
BELL_RESIDUAL_MAX = 0.01
DELTA_MODEL_TOL = 0.02


def _report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    assert ok, detail


def _random_hermitian_pauli_sum(rng, n, scale):
    labels = ["".join(t) for t in itertools.product("IXYZ", repeat=n)][1:]
    out = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for lab, c in zip(labels, rng.normal(size=len(labels))):
        out += c * pauli(lab).matrix
    return scale * out / np.linalg.norm(out, 2)


def test_criterion_1_complete_positivity(capsys):
    rng = np.random.default_rng(101)
    tab_om = np.linspace(0, 20, 401)
    models = {
        "vacuum": ReservoirModel.vacuum_cubic(1.0, cutoff=2.0),
        "thermal": ReservoirModel.vacuum_cubic(1.0, 0.5, cutoff=2.0),
        "lorentzian": ReservoirModel.lorentzian(1.0, 1.0),
        "white": ReservoirModel.white(0.05),
        "tabulated": ReservoirModel.tabulated(tab_om, tab_om ** 3 * np.exp(-tab_om), 3.0),
        "bell": bell_density(),
    }
    kinds = list(models)
    start = time.time()
    worst_eig, worst_tr = math.inf, 0.0
    for i in range(100):
        kind = kinds[i % len(kinds)]
        n = int(rng.integers(1, 3))
        H = _random_hermitian_pauli_sum(rng, n, rng.uniform(0.5, 2.0))
        Ss = [_random_hermitian_pauli_sum(rng, n, 0.01) for _ in range(int(rng.integers(1, 3)))]
        if rng.random() < 0.3:
            tau = float(rng.uniform(0.5, 2.0))
            gens = [_random_hermitian_pauli_sum(rng, n, 1.0) / tau for _ in range(3)]
            sch = KickedSchedule.from_steps(gens, tau)
            t = 3 * tau
        else:
            sch = ConstantSchedule(H)
            t = float(rng.uniform(1, 10))
        m = error_map(Ss, models[kind], Propagator(sch), 0.0, t)
        worst_eig = min(worst_eig, m.min_choi_eigenvalue())
        rho = random_state(2 ** n, rng).rho
        worst_tr = max(worst_tr, abs(np.trace(m.compact(rho)) - 1))
    elapsed = time.time() - start
    ok = worst_eig >= -CP_TOL and worst_tr < TRACE_TOL and elapsed < 60
    _report(capsys, 1, ok, f"min Choi eigenvalue {worst_eig:.3e}, max |Tr-1| {worst_tr:.3e}, "
                           f"{elapsed:.1f} s")


def test_criterion_2_golden_rule(capsys):
    model = ReservoirModel.vacuum_cubic(1.0, cutoff=0.5)
    lam = 0.02
    d = discretize(model, (0.0, 6.0), 100, [1.0], max_excitations=2)
    sch = ConstantSchedule(H_ATOM)
    start = time.time()
    errs = []
    for tau in (10.0, 20.0, 30.0, 50.0):
        # the second half of the window removes the initial transient
        pa = exact_reduced_dynamics([X], d, lam, sch, tau / 2, EXC).rho[0, 0].real
        pb = exact_reduced_dynamics([X], d, lam, sch, tau, EXC).rho[0, 0].real
        weight = 2 * (pa - pb) / lam ** 2
        mk = markovian_map(H_ATOM, [lam * X], model, tau).apply(EXC)[1, 1].real / lam ** 2
        errs.append(weight / mk - 1)
    elapsed = time.time() - start
    worst = max(abs(e) for e in errs)
    ok = worst < GOLDEN_RULE_TOL and elapsed < 120
    _report(capsys, 2, ok, "relative errors " + ", ".join(f"{e:+.3%}" for e in errs)
            + f" at tau = 10, 20, 30, 50; {elapsed:.1f} s")


def test_criterion_3_lambda_four_law(capsys):
    model = ReservoirModel.vacuum_cubic(1.0, cutoff=0.5)
    d = discretize(model, (0.0, 4.0), 6, [1.0], n_max=4, max_excitations=4)
    sch = ConstantSchedule(H_ATOM)
    p = Propagator(sch)
    start = time.time()
    dists = []
    for lam in (0.2, 0.1, 0.05, 0.025):
        exact = exact_reduced_dynamics([X], d, lam, sch, 5.0, PLUS).rho
        m = error_map([lam * X], d, p, 0.0, 5.0, lamb_shift=True, coupling=lam)
        dists.append(trace_distance(exact, evolve_second_order(m, p, PLUS).rho))
    ratios = [a / b for a, b in zip(dists, dists[1:])]
    elapsed = time.time() - start
    ok = all(abs(r / LAMBDA4_TARGET - 1) < LAMBDA4_TOL for r in ratios) and elapsed < 180
    _report(capsys, 3, ok, "ratios " + ", ".join(f"{r:.2f}" for r in ratios)
            + f"; {elapsed:.1f} s")


def test_criterion_4_vacuum_memory_law(capsys):
    vac = ReservoirModel.vacuum_cubic(1.0)
    start = time.time()
    ts = np.logspace(0, 1, 8)
    c = [abs(numeric_autocorrelation(vac, t, 1e-3)) for t in ts]
    s_kernel = np.polyfit(np.log(ts), np.log(c), 1)[0]
    r = step_coefficients(memory_kernel(vac, 1e-3), 1.0, 17, "quadrature")
    lags = np.arange(4, 17)
    s_tail = np.polyfit(np.log(lags), np.log(np.abs(r[0, 4:17])), 1)[0]
    elapsed = time.time() - start
    ok = (abs(s_kernel + 4) < KERNEL_SLOPE_TOL and abs(s_tail + 4) < TAIL_SLOPE_TOL
          and elapsed < 60)
    _report(capsys, 4, ok, f"kernel slope {s_kernel:.4f}, r_jk tail slope {s_tail:.4f}; "
                           f"{elapsed:.1f} s")


def test_criterion_5_locality_dichotomy(capsys):
    XI, IX = pauli("XI").matrix, pauli("IX").matrix
    rng = np.random.default_rng(55)
    start = time.time()
    white_worst = 0.0
    for _ in range(5):
        gens = [_random_hermitian_pauli_sum(rng, 2, 2.0) for _ in range(12)]
        p = Propagator(KickedSchedule.from_steps(gens, 1.0))
        g = fault_generator([XI, IX], ReservoirModel.white(0.1), p, 12.0)
        white_worst = max(white_worst, locality_profile(g).nonlocal_weight())
    p = Propagator(KickedSchedule.from_steps([CNOT_GEN] * 12, 1.0))
    vac = ReservoirModel.vacuum_cubic(1.0)
    w2 = [locality_profile(fault_generator([XI], vac, p, 12.0, s=s))[2]
          for s in (10.5, 9.0, 8.0, 6.0, 4.0, 2.0, 0.0)]
    elapsed = time.time() - start
    monotone = all(b > a for a, b in zip(w2, w2[1:]))
    ok = (white_worst < WHITE_NONLOCAL_MAX and w2[-1] > VACUUM_WEIGHT2_MIN and monotone
          and elapsed < 120)
    _report(capsys, 5, ok, f"white nonlocal weight {white_worst:.2e}; vacuum weight(2) "
                           f"{w2[0]:.3e} -> {w2[-1]:.3e}, monotone={monotone}; {elapsed:.1f} s")


def test_criterion_6_minimal_model_scaling(capsys):
    vac = ReservoirModel.vacuum_cubic(1.0)
    start = time.time()
    ws = np.logspace(0, 1, 6)
    ds = [gate_error(PulseGate(math.pi / 2, w), None, [X], vac) for w in ws]
    s_width = np.polyfit(np.log(ws), np.log(ds), 1)[0]
    d1 = gate_error(PulseGate(math.pi / 2, 1.0), None, [X], vac)
    d4 = sequence_error(GateSequence.uniform(4, math.pi / 2, 1.0, 10), None, [X], vac)
    add = d4 / (4 * d1)
    ns = [2, 4, 8, 16]
    tcs = [optimize_schedule(n, 1e-3, 10, 1e-6).tC for n in ns]
    k = np.polyfit(np.log(ns), np.log(tcs), 1)[0]
    eps_ratio = optimize_schedule(4, 2.5e-4, 10, 1e-6).tC / optimize_schedule(4, 1e-3, 10, 1e-6).tC
    elapsed = time.time() - start
    ok = (abs(s_width + 2) < WIDTH_SLOPE_TOL and ADDITIVITY_RANGE[0] <= add <= ADDITIVITY_RANGE[1]
          and abs(k - 1.5) < TC_EXPONENT_TOL and abs(eps_ratio / 2 - 1) < EPS_SCALING_TOL
          and elapsed < 300)
    _report(capsys, 6, ok, f"width slope {s_width:.4f}, d4/(4 d1) {add:.4f}, tC exponent {k:.4f}, "
                           f"tC(eps/4)/tC(eps) {eps_ratio:.4f}; {elapsed:.1f} s")


def test_criterion_7_decoupling_verdicts(capsys):
    start = time.time()
    drives = (5.0, 10.0, 20.0, 40.0)
    spectra = [bangbang_spectrum(H_ATOM, [X], om, 200.0) for om in drives]
    L = ReservoirModel.lorentzian(1e-3, 1.0)
    R0 = float(spectral_density(L, 0.0))
    lor = [decoupling_verdict(sp, L) for sp in spectra]
    lor_ok = all(v.residual >= LORENTZ_FLOOR * v.carrier * R0 for v in lor)
    bell = [decoupling_verdict(sp, bell_density()) for sp in spectra]
    # cutoff of the bell density: center 1 plus a few widths
    bell_ok = all(v.residual < BELL_RESIDUAL_MAX * v.unmodulated
                  for om, v in zip(drives, bell) if om > 2.0)
    vac = [decoupling_verdict(sp, ReservoirModel.vacuum_cubic(1.0)) for sp in spectra]
    vac_ok = all(b.residual >= a.residual for a, b in zip(vac, vac[1:]))
    elapsed = time.time() - start
    ok = lor_ok and bell_ok and vac_ok and elapsed < 120
    worst_bell = max(v.residual / v.unmodulated for v in bell)
    _report(capsys, 7, ok, f"lorentzian floor {lor_ok}, bell worst residual/unmodulated "
                           f"{worst_bell:.2e}, vacuum non-decreasing {vac_ok}; {elapsed:.1f} s")


TEST_FUNCTIONS = (lambda w: np.exp(-w ** 2),
                  lambda w: 1 / (1 + w ** 2),
                  lambda w: np.cos(w) * np.exp(-w ** 2 / 4))


def test_criterion_8_delta_model_identity(capsys):
    # Checked literally. The two sides differ by pi^2 for any g, so this is
    # expected to fail; the pi^2-corrected identity is checked in test_errormap.
    start = time.time()
    rel = []
    for g in TEST_FUNCTIONS:
        lhs, rhs = delta_model_integrals(g, 50.0)
        rel.append(abs(lhs / rhs - 1))
    elapsed = time.time() - start
    ok = max(rel) < DELTA_MODEL_TOL and elapsed < 10
    _report(capsys, 8, ok, "relative gaps " + ", ".join(f"{r:.4f}" for r in rel)
            + f" (lhs/rhs = 1/pi^2 = {1 / math.pi ** 2:.4f}); {elapsed:.2f} s")


def test_criterion_9_determinism(capsys, tmp_path):
    start = time.time()
    differing = []
    for cfg in sorted(CONFIGS.glob("*.toml")):
        bodies = []
        for run in ("a", "b"):
            # configs write to ../out, so give each run its own parent
            d = tmp_path / f"{cfg.stem}_{run}"
            (d / "configs").mkdir(parents=True)
            local = d / "configs" / cfg.name
            shutil.copy(cfg, local)
            assert main(["run", "--no-plots", str(local)]) == 0
            csvs = sorted(d.rglob("*.csv"))
            bodies.append([p.read_bytes() for p in csvs])
        if bodies[0] != bodies[1] or not bodies[0]:
            differing.append(cfg.stem)
    elapsed = time.time() - start
    ok = not differing
    _report(capsys, 9, ok, f"{len(list(CONFIGS.glob('*.toml')))} experiments run twice, "
                           f"differing: {differing or 'none'}; {elapsed:.1f} s")
