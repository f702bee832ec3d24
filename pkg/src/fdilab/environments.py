"""
Spectral-density models, environment states and discrete environments.

The damping kernel gamma~(w) is the primitive: a :class:`SpectralModel`
defines it directly, and an :class:`EnvironmentState` supplies the scalar
FDR kernel kappa~(w) so that ``nu~ = kappa~ gamma~``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import BroadeningTooNarrow, MixingNotPositive
from .kernels import FrequencyGrid, KernelSet, MatrixFunction, default_tolerance

__all__ = [
    "SpectralModel",
    "EnvironmentState",
    "DiscreteEnvironment",
    "Classification",
    "build_kernels",
    "build_multichannel",
    "discrete_correlation",
    "classify",
    "random_hermitian_couplings",
    "thermal_probabilities",
]

FAMILIES = ("ohmic", "sub_ohmic", "supra_ohmic")
CUTOFFS = ("none", "exponential", "drude", "sharp")


@dataclass(frozen=True)
class SpectralModel:
    """``gamma~(w) = gamma0 (|w|/L)^(s-1) f_cut(|w|/L)``.

    ``cutoff_freq`` (L) doubles as the reference scale of non-ohmic
    families, so it is required for them even when ``cutoff == "none"``.
    """

    family: str = "ohmic"
    gamma0: float = 1.0
    cutoff: str = "none"
    cutoff_freq: float | None = None
    exponent: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown spectral family {self.family!r}")
        if self.cutoff not in CUTOFFS:
            raise ValueError(f"unknown cutoff {self.cutoff!r}")
        s = self.exponent
        if self.family == "ohmic" and s != 1:
            raise ValueError("ohmic family has exponent 1")
        if self.family == "sub_ohmic" and not 0 < s < 1:
            raise ValueError("sub_ohmic needs 0 < exponent < 1")
        if self.family == "supra_ohmic" and not s > 1:
            raise ValueError("supra_ohmic needs exponent > 1")
        if self.gamma0 < 0 or not np.isfinite(self.gamma0):
            raise ValueError("gamma0 must be finite and non-negative")
        needs_scale = self.cutoff != "none" or self.family != "ohmic"
        if needs_scale and (self.cutoff_freq is None or not self.cutoff_freq > 0):
            raise ValueError("cutoff_freq must be positive for this model")

    def _cutoff_profile(self, x: NDArray) -> NDArray:
        if self.cutoff == "none":
            return np.ones_like(x)
        if self.cutoff == "exponential":
            return np.exp(-x)
        if self.cutoff == "drude":
            return 1.0 / (1.0 + x * x)
        return (x <= 1.0).astype(float)

    def damping(self, omega: ArrayLike) -> NDArray[np.float64]:
        w = np.abs(np.asarray(omega, dtype=float))
        if self.cutoff_freq is None:
            return np.full_like(w, self.gamma0)
        x = w / self.cutoff_freq
        with np.errstate(divide="ignore"):
            power = np.ones_like(x) if self.exponent == 1 else x ** (self.exponent - 1)
        return self.gamma0 * power * self._cutoff_profile(x)


def _coth_kernel(w: NDArray, temperature: float) -> NDArray:
    # w coth(w / 2T); near w = 0 the series 2T (1 + x^2/3), x = w/2T
    w = np.asarray(w, dtype=float)
    x = w / (2.0 * temperature)
    small = np.abs(x) < 1e-6
    out = np.empty_like(x)
    out[small] = 2.0 * temperature * (1.0 + x[small] ** 2 / 3.0)
    big = ~small
    out[big] = w[big] / np.tanh(x[big])
    return out


@dataclass(frozen=True)
class EnvironmentState:
    """Statistical state of the environment, reduced to its FDR kernel.

    Use the named constructors rather than the raw fields.
    ``squeeze`` is a constant, a callable of ``|w|`` or a table
    ``((w0, r0), (w1, r1), ...)`` interpolated linearly in ``|w|``.
    """

    kind: str
    temperature: float = 0.0
    squeeze: float | Callable | tuple = 0.0
    kappa_fn: Callable | None = field(default=None, compare=False)

    @classmethod
    def thermal(cls, temperature: float) -> "EnvironmentState":
        if not temperature > 0:
            raise ValueError("thermal state needs T > 0")
        return cls("thermal", float(temperature))

    @classmethod
    def zero_temperature(cls) -> "EnvironmentState":
        return cls("zero_temperature", 0.0)

    @classmethod
    def negative_temperature(cls, temperature: float) -> "EnvironmentState":
        if not temperature < 0:
            raise ValueError("negative-temperature state needs T < 0")
        return cls("negative_temperature", float(temperature))

    @classmethod
    def squeezed(cls, temperature: float, r) -> "EnvironmentState":
        if temperature < 0:
            raise ValueError("squeezed thermal state needs T >= 0")
        if not callable(r) and not np.isscalar(r):
            r = tuple((float(a), float(b)) for a, b in r)
        return cls("squeezed", float(temperature), r)

    @classmethod
    def classical(cls, temperature: float) -> "EnvironmentState":
        if temperature < 0:
            raise ValueError("classical state needs T_cl >= 0")
        return cls("classical", float(temperature))

    @classmethod
    def custom(cls, kappa: Callable[[NDArray], NDArray]) -> "EnvironmentState":
        return cls("custom", kappa_fn=kappa)

    @property
    def amplifying(self) -> bool:
        return self.kind == "negative_temperature"

    def squeeze_at(self, omega: ArrayLike) -> NDArray:
        w = np.abs(np.asarray(omega, dtype=float))
        r = self.squeeze
        if callable(r):
            return np.asarray(r(w), dtype=float) * np.ones_like(w)
        if np.isscalar(r):
            return np.full_like(w, float(r))
        table = np.asarray(r, dtype=float)
        return np.interp(w, table[:, 0], table[:, 1])

    def fdr_kernel(self, omega: ArrayLike) -> NDArray[np.float64]:
        """Scalar FDR kernel kappa~(w)."""
        w = np.asarray(omega, dtype=float)
        kind = self.kind
        if kind in ("thermal", "negative_temperature"):
            return _coth_kernel(w, self.temperature)
        if kind == "zero_temperature":
            return np.abs(w)
        if kind == "squeezed":
            base = np.abs(w) if self.temperature == 0 else _coth_kernel(w, self.temperature)
            return np.cosh(2.0 * self.squeeze_at(w)) * base
        if kind == "classical":
            return np.full_like(w, 2.0 * self.temperature)
        if kind == "custom":
            return np.asarray(self.kappa_fn(w), dtype=float) * np.ones_like(w)
        raise ValueError(f"unknown environment state {kind!r}")


def _damping_profile(model: SpectralModel, grid: FrequencyGrid) -> NDArray[np.float64]:
    g = model.damping(grid.values)
    z = grid.zero_index
    if not np.isfinite(g[z]):
        # sub-ohmic profiles diverge at w = 0; sample half a grid step away
        g[z] = model.damping(0.5 * grid.spacing)
    return g


def build_kernels(
    model: SpectralModel,
    state: EnvironmentState,
    grid: FrequencyGrid,
    n_channels: int = 1,
) -> KernelSet:
    """Kernels of ``n_channels`` independent, identical channels.

    For a negative-temperature state the damping kernel is the negated model
    profile (an amplifying environment), which keeps ``nu~`` non-negative.
    """
    g = _damping_profile(model, grid)
    if state.amplifying:
        g = -g
    kappa = state.fdr_kernel(grid.values)
    eye = np.eye(n_channels)
    gamma = MatrixFunction(grid, g[:, None, None] * eye)
    nu = MatrixFunction(grid, (kappa * g)[:, None, None] * eye)
    return KernelSet.from_parts(nu, gamma, model=model, state=state)


def build_multichannel(
    models: SpectralModel | Sequence[SpectralModel],
    state: EnvironmentState,
    mixing: ArrayLike,
    grid: FrequencyGrid,
) -> KernelSet:
    """Cross-correlated channels: ``gamma~_nm = M_nm sqrt(g_n g_m)``.

    The Hadamard product of a positive mixing matrix with the rank-one
    profile matrix stays positive semidefinite (Schur product theorem).
    """
    mix = np.asarray(mixing, dtype=complex)
    if mix.ndim != 2 or mix.shape[0] != mix.shape[1]:
        raise MixingNotPositive("mixing must be a square matrix")
    n = mix.shape[0]
    tol = 1e-12 * max(1.0, float(np.max(np.abs(mix))))
    if np.max(np.abs(mix - mix.conj().T)) > tol:
        raise MixingNotPositive("mixing matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh(0.5 * (mix + mix.conj().T))) < -tol:
        raise MixingNotPositive("mixing matrix is not positive semidefinite")
    if isinstance(models, SpectralModel):
        models = [models] * n
    if len(models) != n:
        raise ValueError(f"need {n} spectral models, got {len(models)}")

    profiles = np.stack([_damping_profile(m, grid) for m in models], axis=1)
    root = np.sqrt(profiles)
    g = mix[None, :, :] * root[:, :, None] * root[:, None, :]
    if state.amplifying:
        g = -g
    kappa = state.fdr_kernel(grid.values)
    gamma = MatrixFunction(grid, g)
    nu = MatrixFunction(grid, kappa[:, None, None] * g)
    return KernelSet.from_parts(nu, gamma, model=tuple(models), state=state)


# ---------------------------------------------------------------------------
# discrete environments


def thermal_probabilities(levels: ArrayLike, beta: float) -> NDArray[np.float64]:
    e = np.asarray(levels, dtype=float)
    x = -beta * (e - e.min() if beta >= 0 else e - e.max())
    p = np.exp(x)
    return p / p.sum()


def random_hermitian_couplings(n_levels: int, n_channels: int, rng: np.random.Generator) -> NDArray:
    """Gaussian random Hermitian matrices, shape ``(n_channels, d, d)``."""
    a = rng.standard_normal((n_channels, n_levels, n_levels))
    b = rng.standard_normal((n_channels, n_levels, n_levels))
    z = (a + 1j * b) / np.sqrt(2)
    return 0.5 * (z + np.conj(np.swapaxes(z, 1, 2)))


@dataclass(frozen=True, eq=False)
class DiscreteEnvironment:
    levels: NDArray[np.float64]
    probs: NDArray[np.float64]
    couplings: NDArray[np.complex128]
    broadening: float

    def __post_init__(self):
        e = np.asarray(self.levels, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        l = np.asarray(self.couplings, dtype=complex)
        if l.ndim == 2:
            l = l[None]
        d = e.size
        if p.shape != (d,) or l.shape[1:] != (d, d):
            raise ValueError("levels, probs and couplings have inconsistent sizes")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        scale = max(1.0, float(np.max(np.abs(l), initial=0.0)))
        if np.max(np.abs(l - np.conj(np.swapaxes(l, 1, 2))), initial=0.0) > 1e-12 * scale:
            raise ValueError("coupling operators must be Hermitian")
        if not self.broadening > 0:
            raise ValueError("broadening must be positive")
        object.__setattr__(self, "levels", e)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "couplings", l)

    @property
    def n_channels(self) -> int:
        return self.couplings.shape[0]

    def transitions(self):
        """Yield ``(i, j, e_i - e_j)`` for every pair with ``p_i > 0``."""
        e = self.levels
        for i in range(e.size):
            if self.probs[i] == 0:
                continue
            for j in range(e.size):
                yield i, j, e[i] - e[j]


def _lorentzian(x: NDArray, eta: float) -> NDArray:
    return (eta / np.pi) / (x * x + eta * eta)


def discrete_correlation(env: DiscreteEnvironment, grid: FrequencyGrid) -> MatrixFunction:
    """Broadened line sum for a stationary discrete environment.

    ``alpha~_nm(w) = 2 pi sum_ij p_i l_n[i,j] conj(l_m[i,j]) d_eta(w - e_ij)``
    with ``d_eta`` a unit-area Lorentzian of half width ``eta``.
    """
    eta = env.broadening
    if eta < 2 * grid.spacing:
        raise BroadeningTooNarrow(f"broadening {eta} < 2 * grid spacing {grid.spacing}")
    pairs = list(env.transitions())
    N = env.n_channels
    if not pairs:
        return MatrixFunction.zeros(grid, N)
    w = grid.values
    centers = np.array([c for _, _, c in pairs])
    l = env.couplings
    vecs = np.array([l[:, i, j] for i, j, _ in pairs])  # (pairs, N)
    weights = 2 * np.pi * np.array([env.probs[i] for i, _, _ in pairs])
    outer = weights[:, None, None] * vecs[:, :, None] * np.conj(vecs[:, None, :])
    profile = _lorentzian(w[:, None] - centers[None, :], eta)  # (n_w, pairs)
    data = (profile @ outer.reshape(len(pairs), N * N)).reshape(w.size, N, N)
    return MatrixFunction(grid, data)


class Classification(str, enum.Enum):
    DAMPING = "Damping"
    AMPLIFYING = "Amplifying"
    INDEFINITE = "Indefinite"


def classify(k: KernelSet, tol: float | None = None) -> Classification:
    """Sign class of the damping kernel over the whole grid.

    Damping: every eigenvalue of gamma~(w) is >= -tol and the kernel is not
    identically zero within tol; Amplifying is the mirror case.
    """
    g = k.gamma.data
    if tol is None:
        tol = default_tolerance(g)
    herm = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
    eig = np.linalg.eigvalsh(herm)
    lo, hi = float(eig.min()), float(eig.max())
    if lo >= -tol and hi > tol:
        return Classification.DAMPING
    if hi <= tol and lo < -tol:
        return Classification.AMPLIFYING
    return Classification.INDEFINITE
