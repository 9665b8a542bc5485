import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memnoise.reservoir import (
    DeltaFunction,
    ReservoirError,
    ReservoirModel,
    autocorrelation,
    inverse_transform,
    kms_ratio,
    load_tabulated,
    memory_kernel,
    numeric_autocorrelation,
    spectral_density,
)


def test_vacuum_cubic_value():
    assert spectral_density(ReservoirModel.vacuum_cubic(1.0), 2.0) == 8.0


def test_vacuum_cubic_negative_frequency_zero():
    assert spectral_density(ReservoirModel.vacuum_cubic(1.0), -1.0) == 0.0


def test_lorentzian_at_zero():
    assert spectral_density(ReservoirModel.lorentzian(1.0, 1.0), 0.0) == 1.0


def test_kms_examples():
    assert kms_ratio(ReservoirModel.vacuum_cubic(1.0, 1.0), 1.0) == pytest.approx(math.exp(-1), rel=1e-12)
    assert kms_ratio(ReservoirModel.vacuum_cubic(1.0, 2.0), 2.0) == pytest.approx(math.exp(-1), rel=1e-12)
    assert kms_ratio(ReservoirModel.vacuum_cubic(1.0, 0.3), 0.0) == 1.0


def test_invalid_parameters():
    with pytest.raises(ReservoirError):
        ReservoirModel.vacuum_cubic(-1.0)
    with pytest.raises(ReservoirError):
        ReservoirModel.lorentzian(1.0, 0.0)
    with pytest.raises(ReservoirError):
        ReservoirModel.tabulated([0, 1, 1], [0, 1, 2])


def test_vacuum_kernel_sixteenfold_drop():
    vac = ReservoirModel.vacuum_cubic(1.0)
    for t in (1.0, 3.0):
        r = abs(autocorrelation(vac, 2 * t)) / abs(autocorrelation(vac, t))
        assert r == pytest.approx(1 / 16, rel=1e-3)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_lorentzian_kernel_against_quadrature(t):
    L = ReservoirModel.lorentzian(1.0, 1.0)
    c0 = numeric_autocorrelation(L, 0.0)
    ct = numeric_autocorrelation(L, t)
    assert ct / c0 == pytest.approx(math.exp(-t), rel=1e-6)
    assert autocorrelation(L, t) == pytest.approx(ct, rel=1e-6)


def test_kernel_at_zero_is_total_weight():
    L = ReservoirModel.lorentzian(2.0, 0.5)
    # integral of D / (w^2 + tau_c^-2) over the line is pi D tau_c
    assert autocorrelation(L, 0.0).real == pytest.approx(math.pi * 2.0 * 0.5, rel=1e-12)


def test_closed_and_numeric_vacuum_kernels_agree():
    vac = ReservoirModel.vacuum_cubic(1.0)
    for t in (-2.0, 0.7, 2.0):
        assert numeric_autocorrelation(vac, t, 1e-2) == pytest.approx(
            autocorrelation(vac, t, 1e-2), rel=1e-6)


def test_white_kernel_is_delta():
    k = autocorrelation(ReservoirModel.white(0.4), 1.0)
    assert isinstance(k, DeltaFunction) and k.weight == 0.4


def test_vacuum_power_law_slope():
    vac = ReservoirModel.vacuum_cubic(1.0)
    ts = np.logspace(0, 1, 8)
    c = [abs(numeric_autocorrelation(vac, t, 1e-3)) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(c), 1)[0]
    assert abs(slope + 4) < 0.05


def test_round_trip_lorentzian():
    L = ReservoirModel.lorentzian(1.0, 1.0)
    om = np.linspace(-5, 5, 11)
    R = inverse_transform(memory_kernel(L).func, om, 60.0)
    assert np.max(np.abs(R - L(om)) / L(om)) < 1e-3


def test_round_trip_regulated_vacuum():
    vc = ReservoirModel.vacuum_cubic(1.0, cutoff=2.0)
    k = memory_kernel(vc, 0.0)
    om = np.linspace(0.25, 5, 20)
    R = inverse_transform(k.func, om, 200.0, scale=k.epsilon)
    assert np.max(np.abs(R - vc(om)) / vc(om)) < 1e-3


def test_unregulated_vacuum_kernel_rejected():
    with pytest.raises(ReservoirError):
        memory_kernel(ReservoirModel.vacuum_cubic(1.0), 0.0)


def test_tabulated_file(tmp_path):
    f = tmp_path / "r.dat"
    f.write_text("# omega R\n-1 0\n0 0\n1 2\n")
    m = load_tabulated(f, 2.0)
    assert spectral_density(m, 0.5) == pytest.approx(1.0)
    with pytest.raises(ReservoirError):
        spectral_density(m, 3.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(-20, 20))
def test_densities_nonnegative(T, D, w):
    for m in (ReservoirModel.vacuum_cubic(1.0, T), ReservoirModel.vacuum_cubic(1.0),
              ReservoirModel.lorentzian(D, 1.0), ReservoirModel.white(D)):
        assert spectral_density(m, w) >= 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(0.01, 10.0))
def test_kms_holds(T, w):
    m = ReservoirModel.vacuum_cubic(1.0, T)
    assert kms_ratio(m, w) == pytest.approx(math.exp(-w / T), rel=1e-9)
