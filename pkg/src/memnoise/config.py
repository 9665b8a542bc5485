"""Experiment configuration files.

A config is a TOML document::

    experiment = "markovian_limit"
    seed = 7
    output = "out/markov"

    [system]
    n_qubits = 1
    hamiltonian = [["Z", 0.5]]        # sum of coefficient * Pauli string
    couplings = ["X"]                  # coupling operators S_a
    coupling_strength = 0.05           # lambda, folded into the couplings

    [reservoir]
    kind = "vacuum_cubic"              # vacuum_cubic | lorentzian | white | tabulated | bell
    R0 = 1.0

    [schedule]                         # optional; defaults to the static Hamiltonian
    kind = "kicked"
    gates = ["CNOT01"]
    tau = 1.0
    steps = 12

    [sweep]
    parameter = "tau"
    values = [10.0, 20.0, 40.0]

    [params]                           # experiment-specific extras

Relative ``output`` and ``file`` paths resolve against the config's directory.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import (
    MAX_QUBITS,
    BangBangSchedule,
    ConstantSchedule,
    GaussianPulseSchedule,
    KickedSchedule,
    Pulse,
    embed,
    pauli,
)
from .decoupling import bell_density
from .reservoir import ReservoirModel, load_tabulated

EXPERIMENTS = ("markovian_limit", "locality_sweep", "kicked_memory",
               "minimal_scaling", "decoupling_verdict", "oracle_check")
REQUIRED_SECTIONS = ("system", "reservoir", "sweep")


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    system: dict
    reservoir: dict
    sweep: dict
    output: Path
    seed: int = 0
    schedule: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @property
    def values(self) -> list:
        return list(self.sweep["values"])

    @property
    def parameter(self) -> str:
        return self.sweep["parameter"]


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing key '{key}' in [{where}]")
    return table[key]


def parse_config(data: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    name = data.get("experiment")
    if name is None:
        raise ConfigError("missing key 'experiment'")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{name}'")
    for sec in REQUIRED_SECTIONS:
        if sec not in data:
            raise ConfigError(f"missing section '{sec}'")
        if not isinstance(data[sec], dict):
            raise ConfigError(f"'{sec}' must be a table")
    sweep = data["sweep"]
    _require(sweep, "parameter", "sweep")
    values = _require(sweep, "values", "sweep")
    if not isinstance(values, list) or not values:
        raise ConfigError("[sweep] values must be a non-empty list")
    _require(data["reservoir"], "kind", "reservoir")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    out = Path(data.get("output", f"out/{name}"))
    if not out.is_absolute():
        out = base_dir / out
    cfg = ExperimentConfig(name, data["system"], data["reservoir"], sweep, out, seed,
                           data.get("schedule", {}), data.get("params", {}), base_dir, data)
    # build once so malformed specs fail at load time
    build_system(cfg)
    build_reservoir(cfg)
    if cfg.schedule:
        build_schedule(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class System:
    n_qubits: int
    H: np.ndarray
    couplings: list
    strength: float


def _pauli_sum(terms, n: int, where: str) -> np.ndarray:
    H = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for term in terms:
        if not (isinstance(term, list) and len(term) == 2):
            raise ConfigError(f"{where} terms must be [pauli_string, coefficient]")
        lab, coef = term
        if len(lab) != n:
            raise ConfigError(f"{where} term '{lab}' does not have {n} characters")
        try:
            H = H + float(coef) * pauli(lab).matrix
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return H


def build_system(cfg: ExperimentConfig) -> System:
    sysd = cfg.system
    n = int(_require(sysd, "n_qubits", "system"))
    if not 1 <= n <= MAX_QUBITS:
        raise ConfigError(f"n_qubits must be in 1..{MAX_QUBITS}")
    H = _pauli_sum(sysd.get("hamiltonian", []), n, "hamiltonian")
    labels = _require(sysd, "couplings", "system")
    if not labels:
        raise ConfigError("[system] couplings must be non-empty")
    lam = float(sysd.get("coupling_strength", 1.0))
    Ss = []
    for lab in labels:
        if isinstance(lab, list):
            Ss.append(_pauli_sum([lab], n, "couplings"))
        else:
            if len(lab) != n:
                raise ConfigError(f"coupling '{lab}' does not have {n} characters")
            try:
                Ss.append(pauli(lab).matrix)
            except ValueError as exc:
                raise ConfigError(f"couplings: {exc}") from exc
    return System(n, H, Ss, lam)


def build_reservoir(cfg: ExperimentConfig) -> ReservoirModel:
    r = dict(cfg.reservoir)
    kind = r.pop("kind")
    try:
        if kind == "vacuum_cubic":
            return ReservoirModel.vacuum_cubic(float(r.get("R0", 1.0)),
                                               float(r.get("temperature", 0.0)),
                                               r.get("cutoff"))
        if kind == "lorentzian":
            return ReservoirModel.lorentzian(float(_require(r, "D", "reservoir")),
                                             float(_require(r, "tau_c", "reservoir")))
        if kind == "white":
            return ReservoirModel.white(float(_require(r, "level", "reservoir")))
        if kind == "tabulated":
            path = Path(_require(r, "file", "reservoir"))
            if not path.is_absolute():
                path = cfg.base_dir / path
            return load_tabulated(path, r.get("low_frequency_exponent"))
        if kind == "bell":
            return bell_density(float(r.get("center", 1.0)), float(r.get("width", 0.1)),
                                float(r.get("amplitude", 1.0)), float(r.get("span", 1000.0)))
    except OSError as exc:
        raise ConfigError(f"reservoir file: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"reservoir: {exc}") from exc
    raise ConfigError(f"unknown reservoir kind '{kind}'")


def named_gate(name: str, n: int) -> np.ndarray:
    """Generator h with exp(-i h) equal to the named gate.

    Names: CNOT<c><t>, X<q>, H<q>, Z<q>, I.
    """
    X = pauli("X").matrix
    Z = pauli("Z").matrix
    eye = np.eye(2)
    if name == "I":
        return np.zeros((2 ** n, 2 ** n), dtype=complex)
    if name.startswith("CNOT") and len(name) == 6:
        c, t = int(name[4]), int(name[5])
        if c == t or max(c, t) >= n:
            raise ConfigError(f"gate '{name}' does not fit {n} qubits")
        proj = np.kron((eye - Z) / 2, (eye - X) / 2)
        return math.pi * embed(proj, [c, t], n).matrix
    if len(name) == 2 and name[0] in "XZH" and name[1].isdigit():
        q = int(name[1])
        if q >= n:
            raise ConfigError(f"gate '{name}' does not fit {n} qubits")
        P = {"X": X, "Z": Z, "H": (X + Z) / math.sqrt(2)}[name[0]]
        return math.pi * embed((eye - P) / 2, [q], n).matrix
    raise ConfigError(f"unknown gate '{name}'")


def build_schedule(cfg: ExperimentConfig, overrides: dict | None = None):
    sch = dict(cfg.schedule)
    if overrides:
        sch.update(overrides)
    system = build_system(cfg)
    kind = sch.get("kind", "constant")
    if kind == "constant":
        return ConstantSchedule(system.H)
    if kind == "kicked":
        tau = float(_require(sch, "tau", "schedule"))
        gates = _require(sch, "gates", "schedule")
        steps = int(sch.get("steps", len(gates)))
        if not gates or steps < 1:
            raise ConfigError("[schedule] needs gates and steps >= 1")
        gens = [named_gate(gates[j % len(gates)], system.n_qubits) / tau for j in range(steps)]
        return KickedSchedule.from_steps(gens, tau)
    if kind == "gaussian":
        pulses = []
        for k, p in enumerate(_require(sch, "pulses", "schedule")):
            axis = 0.5 * pauli(p.get("axis", "Z" + "I" * (system.n_qubits - 1))).matrix
            pulses.append(Pulse(float(p.get("center", 0.0)), float(p["width"]),
                                float(p["alpha"]), axis))
        return GaussianPulseSchedule(tuple(pulses))
    if kind == "bangbang":
        return BangBangSchedule(system.H, float(_require(sch, "frequency", "schedule")))
    raise ConfigError(f"unknown schedule kind '{kind}'")
