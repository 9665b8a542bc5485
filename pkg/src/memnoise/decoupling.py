"""Sideband analysis of bang-bang modulation H(t) = H cos(Omega t).

Under the modulated Hamiltonian a Bohr component S(w_k) acquires the phase
exp(-i w_k sin(Omega t) / Omega), so its spectral weight moves from w_k to
the harmonics n Omega with amplitudes c_n close to Bessel values J_n(w_k / Omega).
Whether this helps depends on the reservoir: a density with R(0) > 0 keeps
the carrier, and a density growing without cutoff punishes the sidebands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BangBangSchedule, Operator
from .propagator import Propagator, frequency_components, spectral_function
from .reservoir import ReservoirModel, spectral_density

HARMONICS = (-2, -1, 0, 1, 2)
EFFECTIVE_RATIO = 0.01


def _mat(op) -> np.ndarray:
    return np.asarray(op.matrix if isinstance(op, Operator) else op, dtype=complex)


@dataclass(frozen=True, eq=False)
class SidebandSpectrum:
    """Harmonic amplitudes c[n][k] of each Bohr component k at frequency n Omega."""

    omega_drive: float
    window: float
    bohr: tuple                 # (channel, w_k) per component
    weights: np.ndarray         # ||S_k||^2 / d per component
    coefficients: dict          # n -> complex array over components
    residual_norm: float        # weight outside the kept harmonics
    total_norm: float           # ||S||^2 / d summed over channels

    def carrier_weight(self) -> float:
        """2 pi sum_k |c_0|^2 ||S_k||^2 / d, so that carrier * R(0) is a rate."""
        return float(2 * math.pi * np.sum(np.abs(self.coefficients[0]) ** 2 * self.weights))

    def sideband_amplitude(self, n: int = 1) -> np.ndarray:
        return np.abs(self.coefficients[n])


def bangbang_spectrum(H, couplings, omega_drive: float, window: float) -> SidebandSpectrum:
    """Fit the transform of S(u) under H cos(Omega u) at the harmonics 0, +-Omega, +-2 Omega.

    The window is trimmed to a whole number of drive periods so the
    harmonics are exactly orthogonal.
    """
    H = _mat(H)
    if omega_drive <= 0:
        raise ValueError("drive frequency must be positive")
    period = 2 * math.pi / omega_drive
    if window < 10 * period:
        raise ValueError(f"window {window:.3g} cannot resolve Omega={omega_drive:.3g}: "
                         f"need at least {10 * period:.3g} (Omega T >= 20 pi)")
    T = math.floor(window / period) * period
    sch = BangBangSchedule(H, omega_drive, (0.0, T))
    p = Propagator(sch)
    d = H.shape[0]
    om = np.array([n * omega_drive for n in HARMONICS])
    bohr, weights, comps = [], [], []
    for a, S in enumerate(couplings):
        S = _mat(S)
        Y = spectral_function(p, S, 0.0, T, om) / T
        for wk, Sk in frequency_components(H, S).components.items():
            Sk = Sk.matrix
            nrm = float(np.real(np.vdot(Sk, Sk)))
            bohr.append((a, wk))
            weights.append(nrm / d)
            comps.append([np.vdot(Sk, Y[i]) / nrm for i in range(len(HARMONICS))])
    comps = np.array(comps)
    weights = np.array(weights)
    coeffs = {n: comps[:, i] for i, n in enumerate(HARMONICS)}
    total = float(sum(np.real(np.vdot(_mat(S), _mat(S))) for S in couplings) / d)
    kept = float(np.sum(np.abs(comps) ** 2 * weights[:, None]))
    return SidebandSpectrum(omega_drive, T, tuple(bohr), weights, coeffs,
                            max(total - kept, 0.0), total)


@dataclass(frozen=True)
class Verdict:
    omega_drive: float
    suppressed: float      # unmodulated minus residual rate
    residual: float        # decay rate left under modulation
    unmodulated: float     # rate of the static Hamiltonian
    carrier: float         # carrier weight
    verdict: str


def unmodulated_rate(spec: SidebandSpectrum, m: ReservoirModel) -> float:
    """2 pi sum_k R(w_k) ||S_k||^2 / d: the static-Hamiltonian Markovian rate."""
    wk = np.array([w for _, w in spec.bohr])
    return float(2 * math.pi * np.sum(spectral_density(m, wk) * spec.weights))


def modulated_rate(spec: SidebandSpectrum, m: ReservoirModel) -> float:
    rate = 0.0
    for n, c in spec.coefficients.items():
        R = float(spectral_density(m, n * spec.omega_drive))
        rate += 2 * math.pi * R * float(np.sum(np.abs(c) ** 2 * spec.weights))
    return rate


def decoupling_verdict(spec: SidebandSpectrum, m: ReservoirModel,
                       ratio: float = EFFECTIVE_RATIO) -> Verdict:
    """'effective' iff the residual rate is below ``ratio`` of the unmodulated rate."""
    base = unmodulated_rate(spec, m)
    res = modulated_rate(spec, m)
    ok = res < ratio * base
    return Verdict(spec.omega_drive, base - res, res, base, spec.carrier_weight(),
                   "effective" if ok else "ineffective")


def bell_density(center: float = 1.0, width: float = 0.1, amplitude: float = 1.0,
                 span: float = 1000.0, points: int = 200001) -> ReservoirModel:
    """Tabulated Gaussian density exp(-(w - center)^2 / 2 width^2) on [-span, span]."""
    om = np.linspace(-span, span, points)
    vals = amplitude * np.exp(-0.5 * ((om - center) / width) ** 2)
    return ReservoirModel.tabulated(om, vals, low_frequency_exponent=math.inf)
