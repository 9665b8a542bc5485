import math

import numpy as np
import pytest

from memnoise.core import ConstantSchedule, pauli
from memnoise.errormap import error_map, evolve_second_order
from memnoise.oracle import (
    MAX_JOINT_DIM,
    DiscreteReservoir,
    OracleError,
    discretize,
    exact_reduced_dynamics,
    fock_basis,
)
from memnoise.propagator import Propagator
from memnoise.reservoir import ReservoirModel

from conftest import trace_distance

X, Z = pauli("X").matrix, pauli("Z").matrix
H = Z / 2
EXC = np.diag([1.0, 0.0]).astype(complex)
PLUS = np.full((2, 2), 0.5, dtype=complex)


def test_discretize_white_equal_weights():
    level = 0.3
    d = discretize(ReservoirModel.white(level), (0.0, 2.0), 8)
    assert np.allclose(d.g ** 2, level / (2 * math.pi) * 0.25)


def test_discretize_vacuum_cubic_weights():
    d = discretize(ReservoirModel.vacuum_cubic(2.0), (0.0, 4.0), 8)
    assert np.allclose(d.g ** 2, 2.0 * d.omega ** 3 * 0.5)


def test_discretize_zero_density():
    d = discretize(ReservoirModel.lorentzian(0.0, 1.0), (0.0, 2.0), 5)
    assert np.all(d.g == 0)


def test_discretize_rejections():
    with pytest.raises(ValueError, match="excludes"):
        discretize(ReservoirModel.vacuum_cubic(1.0), (2.0, 4.0), 8, [1.0])
    with pytest.raises(ValueError):
        discretize(ReservoirModel.vacuum_cubic(1.0), (0.0, 4.0), 3)


def test_fock_basis_cap():
    assert len(fock_basis(3, 2)) == 27
    assert len(fock_basis(3, 4, max_excitations=2)) == 10
    assert fock_basis(2, 3, 1)[0] == (0, 0)


def test_zero_coupling_is_free_evolution():
    d = discretize(ReservoirModel.vacuum_cubic(1.0), (0.0, 3.0), 4, n_max=2)
    out = exact_reduced_dynamics([X], d, 0.0, ConstantSchedule(H), 3.0, PLUS).rho
    U = Propagator(ConstantSchedule(H)).unitary(3.0)
    assert trace_distance(out, U @ PLUS @ U.conj().T) < 1e-12


def test_vacuum_rabi_exchange():
    lam, g = 0.1, 0.1
    d = DiscreteReservoir(np.array([1.0]), np.array([g]), n_max=3)
    sch = ConstantSchedule(H)
    for t in (10.0, 50.0, 100.0):
        pe = exact_reduced_dynamics([X], d, lam, sch, t, EXC).rho[0, 0].real
        # Rabi frequency 2 lam g, counter-rotating corrections of order lam g
        assert pe == pytest.approx(math.cos(lam * g * t) ** 2, abs=1e-3)
    # well inside t << 1 / (lam g) second order agrees
    t = 10.0
    p = Propagator(sch)
    m = error_map([lam * X], d, p, 0.0, t)
    loss_pert = 1 - evolve_second_order(m, p, EXC).rho[0, 0].real
    loss_exact = 1 - exact_reduced_dynamics([X], d, lam, sch, t, EXC).rho[0, 0].real
    assert loss_pert == pytest.approx(loss_exact, rel=0.01)


def test_halving_coupling_sixteenfold():
    model = ReservoirModel.vacuum_cubic(1.0, cutoff=0.5)
    d = discretize(model, (0.0, 4.0), 6, [1.0], n_max=4, max_excitations=4)
    sch = ConstantSchedule(H)
    p = Propagator(sch)
    dist = []
    for lam in (0.1, 0.05):
        exact = exact_reduced_dynamics([X], d, lam, sch, 5.0, PLUS).rho
        m = error_map([lam * X], d, p, 0.0, 5.0, lamb_shift=True)
        dist.append(trace_distance(exact, evolve_second_order(m, p, PLUS).rho))
    assert dist[0] / dist[1] == pytest.approx(16, rel=0.3)


def test_leakage_is_rejected():
    d = DiscreteReservoir(np.array([1.0]), np.array([1.0]), n_max=1)
    with pytest.raises(OracleError, match="n_max to 2"):
        exact_reduced_dynamics([X], d, 1.0, ConstantSchedule(H), 5.0, EXC)


def test_joint_dimension_limit():
    d = DiscreteReservoir(np.linspace(0.5, 2, 8), np.full(8, 0.1), n_max=3)
    assert 2 * 4 ** 8 > MAX_JOINT_DIM
    with pytest.raises(OracleError, match="joint dimension"):
        exact_reduced_dynamics([X], d, 0.1, ConstantSchedule(H), 1.0, EXC)


def test_reduced_state_is_valid():
    d = discretize(ReservoirModel.vacuum_cubic(1.0, cutoff=1.0), (0.0, 3.0), 5, [1.0],
                   n_max=2)
    out = exact_reduced_dynamics([X], d, 0.02, ConstantSchedule(H), 4.0, PLUS).rho
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.linalg.eigvalsh(out).min() > -1e-12


def test_time_dependent_schedule_needs_step():
    from memnoise.core import BangBangSchedule
    d = discretize(ReservoirModel.vacuum_cubic(1.0), (0.0, 3.0), 4, n_max=2)
    with pytest.raises(ValueError, match="dt"):
        exact_reduced_dynamics([X], d, 0.1, BangBangSchedule(Z, 2.0), 1.0, EXC)
