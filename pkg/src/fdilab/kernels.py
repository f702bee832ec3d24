"""
Stationary matrix correlation kernels in frequency and time.

Fourier convention used throughout the package::

    f~(w) = int dt exp(-i w t) f(t)
    f(t)  = (1 / 2 pi) int dw exp(+i w t) f~(w)

A correlation kernel alpha~(w) is split into the noise kernel nu~, the
dissipation kernel mu~ and the damping kernel gamma~ with

    nu~(w) = [alpha~(w) + alpha~^T(-w)] / 2
    mu~(w) = [alpha~(w) - alpha~^T(-w)] / 2i
    mu~(w) = i w gamma~(w),       alpha~ = nu~ - w gamma~
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import fft as sp_fft
from scipy.signal import fftconvolve

from .errors import AliasingRisk, GridAsymmetric, GridMismatch, NonHermitianInput, OffGrid

__all__ = [
    "FrequencyGrid",
    "MatrixFunction",
    "TimeKernel",
    "KernelSet",
    "TimeKernelSet",
    "decompose",
    "reconstruct",
    "to_time",
    "to_frequency",
    "posdef_quadratic_check",
    "quadratic_form",
    "posdef_spectral_check",
    "default_tolerance",
]

RTOL_EIG = 1e-9


def default_tolerance(data: NDArray, rtol: float = RTOL_EIG) -> float:
    """Absolute tolerance ``rtol * max ||f(w)||_F`` for a stack of matrices."""
    data = np.asarray(data)
    if data.size == 0:
        return 0.0
    if data.ndim < 2:
        return rtol * float(np.max(np.abs(data)))
    return rtol * float(np.sqrt(np.max(np.sum(np.abs(data) ** 2, axis=(-2, -1)))))


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``w_k = (k - K) dw``, ``K = (n_points - 1) / 2``.

    Built from integer offsets so that ``w = 0`` is exact and every point has
    its exact mirror ``-w`` on the grid.
    """

    n_points: int
    omega_max: float

    def __post_init__(self):
        n = self.n_points
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise GridAsymmetric(f"n_points must be an integer, got {n!r}")
        if n < 3 or n % 2 == 0:
            raise GridAsymmetric(f"n_points must be odd and >= 3, got {n}")
        if not np.isfinite(self.omega_max) or self.omega_max <= 0:
            raise GridAsymmetric(f"omega_max must be positive, got {self.omega_max}")

    @classmethod
    def from_values(cls, values: ArrayLike, rtol: float = 1e-9) -> "FrequencyGrid":
        """Validate an explicit frequency array and return the matching grid."""
        w = np.asarray(values, dtype=float)
        if w.ndim != 1 or w.size < 3 or w.size % 2 == 0:
            raise GridAsymmetric("grid needs an odd number (>= 3) of points")
        dw = np.diff(w)
        if np.any(dw <= 0):
            raise GridAsymmetric("grid must be strictly increasing")
        scale = float(np.max(np.abs(w)))
        if np.max(np.abs(dw - dw.mean())) > rtol * scale or np.max(np.abs(w + w[::-1])) > rtol * scale:
            raise GridAsymmetric("grid must be uniform and symmetric about zero")
        return cls(int(w.size), float(w[-1]))

    @property
    def half(self) -> int:
        return (self.n_points - 1) // 2

    @property
    def spacing(self) -> float:
        return self.omega_max / self.half

    @property
    def zero_index(self) -> int:
        return self.half

    @cached_property
    def values(self) -> NDArray[np.float64]:
        w = np.arange(-self.half, self.half + 1) * self.spacing
        w.setflags(write=False)
        return w

    def __len__(self) -> int:
        return self.n_points


def _as_matrix_stack(data: ArrayLike, n: int) -> NDArray[np.complex128]:
    arr = np.asarray(data, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    if arr.ndim != 3 or arr.shape[0] != n or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected data of shape ({n}, N, N), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class MatrixFunction:
    """Complex ``N x N`` matrix sampled on every point of a frequency grid."""

    grid: FrequencyGrid
    data: NDArray[np.complex128]

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix_stack(self.data, self.grid.n_points))

    @classmethod
    def zeros(cls, grid: FrequencyGrid, n_channels: int = 1) -> "MatrixFunction":
        return cls(grid, np.zeros((grid.n_points, n_channels, n_channels), complex))

    @classmethod
    def from_scalar(cls, grid: FrequencyGrid, values: ArrayLike) -> "MatrixFunction":
        return cls(grid, np.asarray(values, dtype=complex).reshape(-1, 1, 1))

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def omega(self) -> NDArray[np.float64]:
        return self.grid.values

    def scalar(self) -> NDArray[np.complex128]:
        if self.n_channels != 1:
            raise ValueError("scalar() needs a single-channel function")
        return self.data[:, 0, 0]

    def mirrored_transpose(self) -> NDArray[np.complex128]:
        """``f^T(-w)`` on the same grid."""
        return np.swapaxes(self.data[::-1], 1, 2)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.data - np.conj(np.swapaxes(self.data, 1, 2))), initial=0.0))

    def at(self, omega: ArrayLike) -> NDArray[np.complex128]:
        """Linear interpolation at arbitrary frequencies inside the grid."""
        w = np.asarray(omega, dtype=float)
        if np.any(np.abs(w) > self.grid.omega_max * (1 + 1e-12)):
            raise OffGrid(f"frequency outside [-{self.grid.omega_max}, {self.grid.omega_max}]")
        x = (w + self.grid.omega_max) / self.grid.spacing
        i0 = np.clip(np.floor(x).astype(int), 0, self.grid.n_points - 2)
        frac = (x - i0)[..., None, None]
        return (1 - frac) * self.data[i0] + frac * self.data[i0 + 1]

    def _check_same_grid(self, other: "MatrixFunction") -> None:
        if self.grid != other.grid or self.n_channels != other.n_channels:
            raise GridMismatch("matrix functions live on different grids or channel counts")

    def __add__(self, other: "MatrixFunction") -> "MatrixFunction":
        self._check_same_grid(other)
        return MatrixFunction(self.grid, self.data + other.data)

    def __sub__(self, other: "MatrixFunction") -> "MatrixFunction":
        self._check_same_grid(other)
        return MatrixFunction(self.grid, self.data - other.data)

    def __neg__(self) -> "MatrixFunction":
        return MatrixFunction(self.grid, -self.data)

    def scaled(self, factor: complex) -> "MatrixFunction":
        return MatrixFunction(self.grid, factor * self.data)


@dataclass(frozen=True, eq=False)
class TimeKernel:
    """Kernel sampled at ``t_j = (j - n) dt`` for ``j = 0 .. 2n``."""

    dt: float
    data: NDArray[np.complex128]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim == 1:
            arr = arr[:, None, None]
        if arr.ndim != 3 or arr.shape[0] % 2 == 0 or arr.shape[1] != arr.shape[2]:
            raise ValueError(f"time kernel data must have shape (2n+1, N, N), got {arr.shape}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "data", arr)

    @property
    def n_lags(self) -> int:
        return (self.data.shape[0] - 1) // 2

    @property
    def t_max(self) -> float:
        return self.n_lags * self.dt

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(-self.n_lags, self.n_lags + 1) * self.dt

    def positive_lags(self) -> NDArray[np.complex128]:
        """Samples at ``t = 0, dt, ..., t_max``."""
        return self.data[self.n_lags:]

    def scalar(self) -> NDArray[np.complex128]:
        if self.n_channels != 1:
            raise ValueError("scalar() needs a single-channel kernel")
        return self.data[:, 0, 0]


@dataclass(frozen=True, eq=False)
class KernelSet:
    """Correlation, noise, dissipation and damping kernels on one grid.

    ``model`` and ``state`` are optional provenance records set by the
    environment builders; they are never needed for the numerics.
    """

    alpha: MatrixFunction
    nu: MatrixFunction
    mu: MatrixFunction
    gamma: MatrixFunction
    model: Any = field(default=None, compare=False)
    state: Any = field(default=None, compare=False)

    def __post_init__(self):
        a = self.alpha
        for other in (self.nu, self.mu, self.gamma):
            a._check_same_grid(other)

    @classmethod
    def from_parts(cls, nu: MatrixFunction, gamma: MatrixFunction, model=None, state=None) -> "KernelSet":
        """Assemble a set from noise and damping kernels."""
        alpha = reconstruct(nu, gamma)
        w = nu.grid.values[:, None, None]
        mu = MatrixFunction(nu.grid, 1j * w * gamma.data)
        return cls(alpha, nu, mu, gamma, model=model, state=state)

    @property
    def grid(self) -> FrequencyGrid:
        return self.alpha.grid

    @property
    def n_channels(self) -> int:
        return self.alpha.n_channels

    def time_kernels(self, t_max: float, dt: float) -> "TimeKernelSet":
        return TimeKernelSet(
            alpha=to_time(self.alpha, t_max, dt),
            nu=to_time(self.nu, t_max, dt),
            mu=to_time(self.mu, t_max, dt),
            gamma=to_time(self.gamma, t_max, dt),
        )


@dataclass(frozen=True, eq=False)
class TimeKernelSet:
    alpha: TimeKernel
    nu: TimeKernel
    mu: TimeKernel
    gamma: TimeKernel

    @property
    def dt(self) -> float:
        return self.nu.dt

    @property
    def t_max(self) -> float:
        return self.nu.t_max


# ---------------------------------------------------------------------------
# decomposition


def _fill_zero_frequency(g: NDArray[np.complex128], grid: FrequencyGrid) -> NDArray[np.complex128]:
    # even fit a + b w^2 through the four nearest nonzero points
    z = grid.zero_index
    dw = grid.spacing
    w2 = np.array([1.0, 1.0, 4.0, 4.0]) * dw**2
    samples = np.stack([g[z - 1], g[z + 1], g[z - 2], g[z + 2]])
    design = np.column_stack([np.ones(4), w2])
    coef, *_ = np.linalg.lstsq(design, samples.reshape(4, -1), rcond=None)
    return coef[0].reshape(g.shape[1:])


def decompose(alpha: MatrixFunction, tol: float | None = None) -> KernelSet:
    """Split a correlation kernel into noise, dissipation and damping kernels.

    The damping kernel at ``w = 0`` is not defined by ``mu / (i w)``; it is
    filled by an even quadratic extrapolation from ``+-dw`` and ``+-2 dw``.
    The grid therefore needs at least five points.

    Raises
    ------
    NonHermitianInput
        If ``alpha(w)`` deviates from Hermitian by more than ``tol``.
    """
    grid = alpha.grid
    if grid.n_points < 5:
        raise GridAsymmetric("decompose needs at least five grid points")
    if tol is None:
        tol = default_tolerance(alpha.data)
    defect = alpha.hermitian_defect()
    if defect > tol:
        raise NonHermitianInput(f"alpha is not Hermitian (defect {defect:.3e} > tol {tol:.3e})")

    a = alpha.data
    a_mirror = alpha.mirrored_transpose()
    nu = 0.5 * (a + a_mirror)
    mu = (a - a_mirror) / 2j
    w = grid.values
    gamma = np.empty_like(mu)
    nz = w != 0
    gamma[nz] = mu[nz] / (1j * w[nz, None, None])
    gamma[grid.zero_index] = _fill_zero_frequency(gamma, grid)
    return KernelSet(
        alpha=alpha,
        nu=MatrixFunction(grid, nu),
        mu=MatrixFunction(grid, mu),
        gamma=MatrixFunction(grid, gamma),
    )


def reconstruct(nu: MatrixFunction, gamma: MatrixFunction) -> MatrixFunction:
    """Return ``alpha~(w) = nu~(w) - w gamma~(w)``."""
    if nu.grid != gamma.grid or nu.n_channels != gamma.n_channels:
        raise GridMismatch("nu and gamma must share grid and channel count")
    w = nu.grid.values[:, None, None]
    return MatrixFunction(nu.grid, nu.data - w * gamma.data)


# ---------------------------------------------------------------------------
# Fourier pair


def _unit_phase(theta: float, ints: NDArray[np.int64]) -> NDArray[np.complex128]:
    """``exp(i theta m)`` for integer ``m``, phases reduced in extended precision."""
    ph = np.longdouble(theta) * np.asarray(ints).astype(np.longdouble)
    ph = np.remainder(ph, 2 * np.pi * np.longdouble(1))
    return np.exp(1j * ph.astype(np.float64))


def _chirp(theta: float, idx: NDArray[np.int64]) -> NDArray[np.complex128]:
    return _unit_phase(theta / 2, idx.astype(np.int64) ** 2)


def _bluestein(x: NDArray[np.complex128], m: int, theta: float) -> NDArray[np.complex128]:
    """``y_j = sum_k x_k exp(i theta k j)`` for ``j < m`` along axis 0."""
    n = x.shape[0]
    size = sp_fft.next_fast_len(n + m - 1)
    k = np.arange(n)
    j = np.arange(m)
    extra = (1,) * (x.ndim - 1)
    a = x * _chirp(theta, k).reshape(-1, *extra)
    b = np.zeros(size, complex)
    b[:m] = np.conj(_chirp(theta, j))
    if n > 1:
        b[size - n + 1:] = np.conj(_chirp(theta, np.arange(n - 1, 0, -1)))
    conv = sp_fft.ifft(sp_fft.fft(a, size, axis=0) * sp_fft.fft(b).reshape(-1, *extra), axis=0)
    return conv[:m] * _chirp(theta, j).reshape(-1, *extra)


def _trapezoid_weights(n: int) -> NDArray[np.float64]:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def to_time(f: MatrixFunction, t_max: float, dt: float) -> TimeKernel:
    """Inverse transform onto ``[-t_max, t_max]`` with step ``dt``.

    The frequency integral is a trapezoid sum over the grid, evaluated with a
    chirp-z transform, so ``dt`` need not be commensurate with the grid.
    ``t_max`` is rounded up to a whole number of steps.

    Raises
    ------
    AliasingRisk
        If ``dt > pi / omega_max``.
    """
    grid = f.grid
    if dt <= 0 or t_max < 0:
        raise ValueError("dt must be positive and t_max non-negative")
    if dt > np.pi / grid.omega_max * (1 + 1e-12):
        raise AliasingRisk(f"dt={dt} exceeds pi/omega_max={np.pi / grid.omega_max}")
    n = int(np.ceil(t_max / dt - 1e-9))
    dw = grid.spacing
    theta = dw * dt
    K = grid.half
    k = np.arange(grid.n_points)
    n_ch = f.n_channels
    x = f.data.reshape(grid.n_points, -1) * _trapezoid_weights(grid.n_points)[:, None]
    x = x * _unit_phase(-theta, k * n)[:, None]
    y = _bluestein(x, 2 * n + 1, theta)
    j = np.arange(2 * n + 1)
    y *= _unit_phase(-theta, K * (j - n))[:, None]
    y *= dw / (2 * np.pi)
    return TimeKernel(dt, y.reshape(2 * n + 1, n_ch, n_ch))


def to_frequency(k: TimeKernel, grid: FrequencyGrid) -> MatrixFunction:
    """Forward transform of a time kernel by the trapezoid rule."""
    n = k.n_lags
    dt = k.dt
    theta = grid.spacing * dt
    K = grid.half
    j = np.arange(2 * n + 1)
    n_ch = k.n_channels
    x = k.data.reshape(2 * n + 1, -1) * _trapezoid_weights(2 * n + 1)[:, None]
    x = x * _unit_phase(theta, K * j)[:, None]
    y = _bluestein(x, grid.n_points, -theta)
    l = np.arange(grid.n_points)
    y *= _unit_phase(theta, l * n - K * n)[:, None]
    y *= dt
    return MatrixFunction(grid, y.reshape(grid.n_points, n_ch, n_ch))


# ---------------------------------------------------------------------------
# positivity diagnostics


def quadratic_form(k: TimeKernel, f: NDArray[np.complex128]) -> NDArray[np.float64]:
    """``int int f^dag(t) k(t - s) f(s) dt ds`` over ``[0, t_max]`` by the
    trapezoid rule, for a stack of test functions ``f`` of shape
    ``(n_trials, n_lags + 1, N)`` sampled at ``t = 0, dt, ..., t_max``."""
    n = k.n_lags
    N = k.n_channels
    m = n + 1
    f = np.asarray(f, dtype=complex)
    if f.ndim != 3 or f.shape[1:] != (m, N):
        raise ValueError(f"test functions must have shape (n_trials, {m}, {N}), got {f.shape}")
    g = f * (_trapezoid_weights(m) * k.dt)[None, :, None]
    # h_i^a = sum_j k_ab(t_i - t_j) g_j^b, lags run from -n .. n
    h = np.zeros(f.shape, complex)
    for a in range(N):
        for b in range(N):
            kern = k.data[:, a, b]
            if not np.any(kern):
                continue
            conv = fftconvolve(g[:, :, b], kern[None, :], axes=1)
            h[:, :, a] += conv[:, n:n + m]
    return np.einsum("tia,tia->t", np.conj(g), h).real


def posdef_quadratic_check(k: TimeKernel, n_trials: int = 200, seed: int = 0) -> float:
    """Smallest value of the double-integral quadratic form found by sampling.

    Random test functions ``f`` on ``[0, t_max]`` are complex white noise
    smoothed by a 3-point moving average and normalised to
    ``int |f|^2 dt = 1``; see :func:`quadratic_form`.

    The kernel must be sampled finely enough for the quadrature to converge;
    that is left to the caller.
    """
    n = k.n_lags
    N = k.n_channels
    if n == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    m = n + 1
    raw = rng.standard_normal((n_trials, m + 2, N)) + 1j * rng.standard_normal((n_trials, m + 2, N))
    f = (raw[:, :-2] + raw[:, 1:-1] + raw[:, 2:]) / 3.0
    w = _trapezoid_weights(m) * k.dt
    norm = np.sqrt(np.einsum("i,tia->t", w, np.abs(f) ** 2))
    f = f / norm[:, None, None]
    return float(np.min(quadratic_form(k, f)))


def posdef_spectral_check(f: MatrixFunction, tol: float | None = None) -> float:
    """Minimum over the grid of the smallest eigenvalue of ``f(w)``."""
    if tol is None:
        tol = default_tolerance(f.data)
    defect = f.hermitian_defect()
    if defect > tol:
        raise NonHermitianInput(f"matrix function is not Hermitian (defect {defect:.3e})")
    herm = 0.5 * (f.data + np.conj(np.swapaxes(f.data, 1, 2)))
    return float(np.min(np.linalg.eigvalsh(herm)))
