"""
Experiment specifications: INI files with one section per concern.

Example::

    [environment]
    state = thermal
    temperature = 1.0

    [spectral]
    family = ohmic
    gamma0 = 0.01
    cutoff = drude
    cutoff_freq = 20

    [grid]
    omega_max = 80
    n_points = 8001

    [system]
    mass = 1
    omega0 = 1

    [run]
    n_trajectories = 200
    seed = 1

Every section and key is optional; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .environments import EnvironmentState, SpectralModel, build_kernels, build_multichannel, thermal_probabilities
from .errors import SpecError
from .kernels import FrequencyGrid, KernelSet
from .qbm import OscillatorBank

__all__ = ["ExperimentSpec", "parse_spec", "load_spec", "apply_overrides"]

SEED_ENV = "FDILAB_SEED"
STATES = ("thermal", "zero_temperature", "negative_temperature", "squeezed", "classical")


@dataclass
class EnvironmentSection:
    state: str = "thermal"
    temperature: float = 1.0
    squeeze: float = 0.0


@dataclass
class SpectralSection:
    family: str = "ohmic"
    gamma0: float = 0.01
    cutoff: str = "drude"
    cutoff_freq: float | None = 20.0
    exponent: float = 1.0


@dataclass
class GridSection:
    omega_max: float = 80.0
    n_points: int = 8001


@dataclass
class SystemSection:
    mass: float = 1.0
    omega0: float = 1.0
    n_modes: int = 1
    mixing: str = ""  # rows separated by ';', entries by ','


@dataclass
class RunSection:
    t_max: float = 10.0
    dt: float | None = None
    n_trajectories: int = 200
    seed: int = 0
    tolerance: float | None = None
    mode: str = "local"
    measure: float = 20.0


@dataclass
class DiscreteSection:
    levels: str = "0,1,2,3,4"
    probs: str = ""  # empty: thermal populations at inverse temperature beta
    beta: float = 1.0
    n_couplings: int = 20
    n_channels: int = 2
    broadening: float | None = None


@dataclass
class ExperimentSpec:
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    grid: GridSection = field(default_factory=GridSection)
    system: SystemSection = field(default_factory=SystemSection)
    run: RunSection = field(default_factory=RunSection)
    discrete: DiscreteSection = field(default_factory=DiscreteSection)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    # builders ---------------------------------------------------------------

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.grid.n_points, self.grid.omega_max)

    def spectral_model(self) -> SpectralModel:
        s = self.spectral
        return SpectralModel(s.family, s.gamma0, s.cutoff, s.cutoff_freq, s.exponent)

    def environment_state(self) -> EnvironmentState:
        e = self.environment
        if e.state == "thermal":
            return EnvironmentState.thermal(e.temperature)
        if e.state == "zero_temperature":
            return EnvironmentState.zero_temperature()
        if e.state == "negative_temperature":
            return EnvironmentState.negative_temperature(e.temperature)
        if e.state == "squeezed":
            return EnvironmentState.squeezed(e.temperature, e.squeeze)
        if e.state == "classical":
            return EnvironmentState.classical(e.temperature)
        raise SpecError(f"environment.state must be one of {', '.join(STATES)}")

    def oscillators(self) -> OscillatorBank:
        return OscillatorBank(self.system.n_modes, self.system.mass, self.system.omega0)

    def mixing_matrix(self) -> np.ndarray:
        n = self.system.n_modes
        if not self.system.mixing.strip():
            return np.eye(n)
        try:
            rows = [[float(v) for v in row.split(",")] for row in self.system.mixing.split(";")]
            mix = np.array(rows, dtype=float)
        except ValueError as exc:
            raise SpecError(f"system.mixing: {exc}") from None
        if mix.shape != (n, n):
            raise SpecError(f"system.mixing must be {n}x{n}, got shape {mix.shape}")
        return mix

    def kernels(self) -> KernelSet:
        model, state, grid = self.spectral_model(), self.environment_state(), self.frequency_grid()
        if self.system.n_modes == 1 and not self.system.mixing.strip():
            return build_kernels(model, state, grid)
        return build_multichannel(model, state, self.mixing_matrix(), grid)

    def levels(self) -> np.ndarray:
        return _float_list(self.discrete.levels, "discrete.levels")

    def populations(self) -> np.ndarray:
        if self.discrete.probs.strip():
            p = _float_list(self.discrete.probs, "discrete.probs")
            if p.size != self.levels().size:
                raise SpecError("discrete.probs and discrete.levels differ in length")
            return p / p.sum()
        return thermal_probabilities(self.levels(), self.discrete.beta)


def _float_list(text: str, key: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError as exc:
        raise SpecError(f"{key}: {exc}") from None


def _convert(kind: str, raw: str, key: str):
    text = raw.strip()
    optional = "None" in kind
    if optional and text.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("float"):
            return float(text)
        if kind.startswith("int"):
            return int(text)
    except ValueError:
        raise SpecError(f"{key}: cannot parse {raw!r} as {kind.split()[0]}") from None
    return text


def _set(spec: ExperimentSpec, section: str, key: str, raw: str) -> None:
    sect = getattr(spec, section, None) if section in _sections() else None
    if sect is None:
        raise SpecError(f"unknown section [{section}]")
    kinds = {f.name: f.type for f in dataclasses.fields(sect)}
    if key not in kinds:
        raise SpecError(f"unknown key {key!r} in [{section}]")
    setattr(sect, key, _convert(kinds[key], raw, f"{section}.{key}"))


def _sections() -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(ExperimentSpec))


def parse_spec(text: str) -> ExperimentSpec:
    """Parse INI text into an :class:`ExperimentSpec`.

    Raises
    ------
    SpecError
        On syntax errors, unknown sections or keys, and unparsable values.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"), default_section="\x00unused")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed spec: {exc}") from None
    spec = ExperimentSpec()
    for section in parser.sections():
        for key, raw in parser.items(section):
            _set(spec, section, key, raw)
    return spec


def apply_overrides(spec: ExperimentSpec, overrides: list[str] | None = None, env: dict | None = None) -> ExperimentSpec:
    """Apply ``section.key=value`` overrides, then the seed from ``FDILAB_SEED``."""
    for item in overrides or []:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise SpecError(f"override {item!r} is not of the form section.key=value")
        _set(spec, section, key.strip(), value)
    env = os.environ if env is None else env
    if env.get(SEED_ENV, "").strip():
        _set(spec, "run", "seed", env[SEED_ENV])
    return spec


def load_spec(path: str | None, overrides: list[str] | None = None, env: dict | None = None) -> ExperimentSpec:
    if path is None:
        spec = ExperimentSpec()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise SpecError(f"cannot read spec {path!r}: {exc.strerror}") from None
        spec = parse_spec(text)
    return apply_overrides(spec, overrides, env)
