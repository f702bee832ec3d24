"""
Weak-coupling quantum Brownian motion of resonant oscillators.

Oscillators of mass ``m`` and frequency ``w0`` couple through their positions,
one noise channel per oscillator. To lowest order the steady momentum
covariance solves

    nu~(w0) = [(2/m) s_pp gamma~(w0) + gamma~(w0) (2/m) s_pp] / 2,

so ``s_pp = (m/2) kappa~(w0)`` and ``s_xx = s_pp / (m w0)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import toeplitz

from .errors import KernelWindowTooShort, NotDamping, OffGrid
from .fdr import solve_symmetrized
from .kernels import KernelSet, TimeKernel, TimeKernelSet

__all__ = [
    "OscillatorBank",
    "PhaseSpaceCovariance",
    "GaussianState",
    "MasterEquationCoefficients",
    "steady_state_covariance",
    "uncertainty_product",
    "hup_check",
    "me_coefficients",
    "dissipation_matrix",
    "dissipated_energy",
]


@dataclass(frozen=True)
class OscillatorBank:
    n_modes: int = 1
    mass: float = 1.0
    omega0: float = 1.0

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if not (self.mass > 0 and self.omega0 > 0):
            raise ValueError("mass and omega0 must be positive")


@dataclass(frozen=True, eq=False)
class PhaseSpaceCovariance:
    sigma_xx: NDArray[np.float64]
    sigma_xp: NDArray[np.float64]
    sigma_pp: NDArray[np.float64]

    def __post_init__(self):
        for name in ("sigma_xx", "sigma_xp", "sigma_pp"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        if not (np.allclose(self.sigma_xx, self.sigma_xx.T) and np.allclose(self.sigma_pp, self.sigma_pp.T)):
            raise ValueError("sigma_xx and sigma_pp must be symmetric")

    @property
    def n_modes(self) -> int:
        return self.sigma_xx.shape[0]

    def full(self) -> NDArray[np.float64]:
        """The ``2N x 2N`` matrix in ``(x_1..x_N, p_1..p_N)`` ordering."""
        return np.block([[self.sigma_xx, self.sigma_xp], [self.sigma_xp.T, self.sigma_pp]])


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean_x: NDArray[np.float64]
    mean_p: NDArray[np.float64]
    cov: PhaseSpaceCovariance

    def second_moments(self) -> NDArray[np.float64]:
        """Symmetrized ``<z z^T>`` for ``z = (x, p)``, means included."""
        mean = np.concatenate([np.atleast_1d(self.mean_x), np.atleast_1d(self.mean_p)]).astype(float)
        return self.cov.full() + np.outer(mean, mean)


def _at_resonance(bank: OscillatorBank, k: KernelSet):
    if bank.omega0 > k.grid.omega_max:
        raise OffGrid(f"omega0={bank.omega0} lies beyond omega_max={k.grid.omega_max}")
    if k.n_channels != bank.n_modes:
        raise ValueError(f"kernel has {k.n_channels} channels for {bank.n_modes} modes")
    return k.nu.at(bank.omega0), k.gamma.at(bank.omega0)


def steady_state_covariance(bank: OscillatorBank, k: KernelSet) -> PhaseSpaceCovariance:
    """Weak-damping steady state from the Lyapunov equation at ``w0``.

    Kernels are interpolated linearly to ``w0``. Only real symmetric
    ``kappa~(w0)`` is representable with ``sigma_xp = 0``; a sizeable
    imaginary part raises ``ValueError``.

    Raises
    ------
    NotDamping
        If ``gamma~(w0)`` is not positive definite.
    OffGrid
        If ``w0 > omega_max``.
    """
    nu0, g0 = _at_resonance(bank, k)
    scale = float(np.max(np.abs(g0), initial=0.0))
    kappa = solve_symmetrized(nu0, g0, tol=max(1e-12 * scale, np.finfo(float).tiny))
    kappa = 0.5 * (kappa + kappa.conj().T)
    if np.max(np.abs(kappa.imag), initial=0.0) > 1e-10 * max(np.max(np.abs(kappa)), 1e-300):
        raise ValueError("complex cross-correlations at w0 are not supported")
    m, w0 = bank.mass, bank.omega0
    s_pp = 0.5 * m * kappa.real
    return PhaseSpaceCovariance(
        sigma_xx=s_pp / (m * w0) ** 2,
        sigma_xp=np.zeros_like(s_pp),
        sigma_pp=s_pp,
    )


def uncertainty_product(cov: PhaseSpaceCovariance, bank: OscillatorBank | None = None) -> NDArray[np.float64]:
    """Per-mode ``det(sigma_n)`` in the eigenbasis of ``sigma_pp``."""
    vals, vecs = np.linalg.eigh(cov.sigma_pp)
    xx = np.einsum("in,ij,jn->n", vecs, cov.sigma_xx, vecs)
    xp = np.einsum("in,ij,jn->n", vecs, cov.sigma_xp, vecs)
    return xx * vals - xp**2


def hup_check(dets: ArrayLike, tol: float = 1e-12) -> NDArray[np.bool_]:
    """``det >= 1/4 - tol`` per mode."""
    return np.asarray(dets, dtype=float) >= 0.25 - tol


@dataclass(frozen=True, eq=False)
class MasterEquationCoefficients:
    """Second-order coefficients for ``L = x`` with the free propagator.

    ``damping_rate`` is the momentum relaxation rate and ``freq_shift`` the
    shift of ``w0**2``, both in the damping representation, so neither
    contains the renormalization ``-2 gamma(0)/m`` nor the slip
    ``2 gamma(t)/m``; those two are kept as diagnostics.
    """

    t: NDArray[np.float64]
    D_normal: NDArray[np.float64]
    D_anomalous: NDArray[np.float64]
    damping_rate: NDArray[np.float64]
    freq_shift: NDArray[np.float64]
    renormalization: float
    slip: NDArray[np.float64]


def _cumulative(y: NDArray, dt: float, t: NDArray) -> NDArray:
    s = np.arange(y.size) * dt
    acc = cumulative_trapezoid(y, dx=dt, initial=0.0)
    return np.interp(t, s, acc)


def _scalar_lags(k: TimeKernel) -> NDArray[np.float64]:
    if k.n_channels != 1:
        raise ValueError("master-equation coefficients are implemented for one oscillator")
    return k.positive_lags()[:, 0, 0].real


def me_coefficients(bank: OscillatorBank, kt: TimeKernelSet, t: ArrayLike) -> MasterEquationCoefficients:
    """Time-dependent coefficients by trapezoid quadrature on the kernel samples.

    With ``x(t - s) = x cos(w0 s) - p sin(w0 s) / (m w0)``::

        D_normal     =  int_0^t nu(s) cos(w0 s) ds
        D_anomalous  = -int_0^t nu(s) sin(w0 s) ds / (m w0)
        damping_rate =  (2/m)    int_0^t gamma(s) cos(w0 s) ds
        freq_shift   =  (2 w0/m) int_0^t gamma(s) sin(w0 s) ds

    At long times ``D_normal -> nu~(w0)/2`` and ``damping_rate ->
    gamma~(w0)/m``. Off-sample times use the linearly interpolated integrand.
    """
    if bank.n_modes != 1:
        raise ValueError("me_coefficients supports a single oscillator")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError("t must be non-negative")
    if np.any(times > kt.t_max * (1 + 1e-12)):
        raise KernelWindowTooShort(f"t={times.max()} exceeds the kernel window t_max={kt.t_max}")
    m, w0, dt = bank.mass, bank.omega0, kt.dt
    nu = _scalar_lags(kt.nu)
    gam = _scalar_lags(kt.gamma)
    s = np.arange(nu.size) * dt
    c, sn = np.cos(w0 * s), np.sin(w0 * s)
    return MasterEquationCoefficients(
        t=times,
        D_normal=_cumulative(nu * c, dt, times),
        D_anomalous=-_cumulative(nu * sn, dt, times) / (m * w0),
        damping_rate=2.0 / m * _cumulative(gam * c, dt, times),
        freq_shift=2.0 * w0 / m * _cumulative(gam * sn, dt, times),
        renormalization=-2.0 * gam[0] / m,
        slip=2.0 / m * np.interp(times, s, gam),
    )


def dissipation_matrix(bank: OscillatorBank, gamma_time: TimeKernel, t: float) -> NDArray[np.float64]:
    """``M`` with ``dE(t) = -tr(M S)`` for the second-moment matrix ``S``.

    Under free evolution ``v(tau) = a(tau) . (x, p)`` with
    ``a = (-w0 sin(w0 tau), cos(w0 tau)/m)``, hence
    ``M = sum_ij w_i w_j gamma(tau_i - tau_j) a(tau_i) a(tau_j)^T``
    (double trapezoid, ``tau`` on the kernel's own sampling).
    """
    if bank.n_modes != 1:
        raise ValueError("dissipated_energy supports a single oscillator")
    if t > gamma_time.t_max * (1 + 1e-12):
        raise KernelWindowTooShort(f"t={t} exceeds the kernel window t_max={gamma_time.t_max}")
    dt = gamma_time.dt
    n = int(round(t / dt))
    if n == 0:
        return np.zeros((2, 2))
    g = _scalar_lags(gamma_time)[: n + 1]
    tau = np.arange(n + 1) * dt
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    w0, m = bank.omega0, bank.mass
    a = np.column_stack([-w0 * np.sin(w0 * tau), np.cos(w0 * tau) / m]) * w[:, None]
    mat = a.T @ toeplitz(g) @ a
    return 0.5 * (mat + mat.T)


def dissipated_energy(bank: OscillatorBank, gamma_time: TimeKernel, state0: GaussianState, t: float) -> float:
    """Cumulative energy change through damping,
    ``-int_0^t int_0^t gamma(t1 - t2) C_vv(t1, t2)``, to second order."""
    mat = dissipation_matrix(bank, gamma_time, t)
    return -float(np.sum(mat * state0.second_moments()))
