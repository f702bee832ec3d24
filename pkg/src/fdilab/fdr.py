"""
Fluctuation-dissipation inequality and FDR kernels.

The inequality reads ``nu~(w) >= +- w gamma~(w)`` in the matrix sense. The
two margins are the spectra of ``nu~ - w gamma~ = alpha~(w)`` and
``nu~ + w gamma~ = alpha~^T(-w)``, i.e. the inequality is Bochner positivity
of the correlation kernel at both signs of the frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .environments import DiscreteEnvironment, _coth_kernel, discrete_correlation, random_hermitian_couplings
from .errors import DampingVanishes, NoTransitionNearOmega, NotDamping
from .kernels import FrequencyGrid, KernelSet, MatrixFunction, decompose, default_tolerance

__all__ = [
    "FDIReport",
    "FdrKernel",
    "fdi_check",
    "fdi_check_kappa",
    "fdr_kernel_scalar",
    "fdr_kernel_matrix",
    "solve_symmetrized",
    "coupling_independence_test",
    "CouplingSpread",
    "thermal_fdr_kernel",
]


@dataclass(frozen=True, eq=False)
class FDIReport:
    omega: NDArray[np.float64]
    margin_plus: NDArray[np.float64]
    margin_minus: NDArray[np.float64]
    tol: float

    @property
    def margins(self) -> NDArray[np.float64]:
        return np.minimum(self.margin_plus, self.margin_minus)

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins))

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    @property
    def violating_frequencies(self) -> NDArray[np.float64]:
        return self.omega[self.margins < -self.tol]


@dataclass(frozen=True, eq=False)
class FdrKernel:
    grid: FrequencyGrid
    data: NDArray[np.complex128]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def scalar(self) -> NDArray[np.float64]:
        return self.data[:, 0, 0].real

    def as_matrix_function(self) -> MatrixFunction:
        return MatrixFunction(self.grid, self.data)


def thermal_fdr_kernel(omega: ArrayLike, temperature: float) -> NDArray[np.float64]:
    """``w coth(w / 2T)``, the unique coupling-independent kernel.

    ``T = 0`` gives ``|w|``; at ``w = 0`` the value is ``2T``.
    """
    w = np.asarray(omega, dtype=float)
    if temperature == 0:
        return np.abs(w)
    return _coth_kernel(w, float(temperature))


def _hermitian_min_eig(a: NDArray) -> NDArray[np.float64]:
    herm = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    return np.linalg.eigvalsh(herm)[..., 0]


def fdi_check(k: KernelSet, tol: float | None = None) -> FDIReport:
    """Margins ``lambda_min(nu~ -+ w gamma~)`` at every grid point."""
    w = k.grid.values[:, None, None]
    nu, g = k.nu.data, k.gamma.data
    if tol is None:
        tol = default_tolerance(nu) + default_tolerance(w * g)
    plus = _hermitian_min_eig(nu - w * g)
    minus = _hermitian_min_eig(nu + w * g)
    return FDIReport(k.grid.values, plus, minus, float(tol))


def fdr_kernel_scalar(k: KernelSet) -> FdrKernel:
    """``kappa~ = nu~ / gamma~`` for a single channel.

    Raises
    ------
    DampingVanishes
        Where ``|gamma~| <= 1e-12 max |gamma~|``.
    """
    if k.n_channels != 1:
        raise ValueError("fdr_kernel_scalar needs a single channel; use fdr_kernel_matrix")
    g = k.gamma.scalar()
    floor = 1e-12 * float(np.max(np.abs(g), initial=0.0))
    bad = np.abs(g) <= floor
    if np.any(bad):
        where = k.grid.values[bad]
        raise DampingVanishes(f"damping kernel vanishes at {where.size} frequencies, e.g. w={where[0]:g}")
    kappa = (k.nu.scalar() / g).real
    return FdrKernel(k.grid, kappa.astype(complex)[:, None, None])


def solve_symmetrized(nu: NDArray, gamma: NDArray, tol: float | None = None) -> NDArray[np.complex128]:
    """Solve ``nu = (kappa gamma + gamma kappa) / 2`` for Hermitian ``kappa``.

    Works on a single matrix or a stack. In the eigenbasis of ``gamma``
    (eigenvalues ``g_a``) the solution is ``2 nu'_ab / (g_a + g_b)``.
    """
    nu = np.asarray(nu, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    herm = 0.5 * (gamma + np.conj(np.swapaxes(gamma, -1, -2)))
    g, v = np.linalg.eigh(herm)
    if tol is None:
        tol = 1e-12 * max(float(np.max(np.abs(g), initial=0.0)), np.finfo(float).tiny)
    if np.any(g <= tol):
        raise NotDamping("damping kernel is not positive definite; Lyapunov solution undefined")
    vh = np.conj(np.swapaxes(v, -1, -2))
    nu_rot = vh @ nu @ v
    kappa_rot = 2.0 * nu_rot / (g[..., :, None] + g[..., None, :])
    return v @ kappa_rot @ vh


def fdr_kernel_matrix(k: KernelSet) -> FdrKernel:
    """Matrix FDR kernel from the symmetrized-product (Lyapunov) relation."""
    g = k.gamma.data
    tol = 1e-12 * float(np.max(np.abs(g), initial=0.0))
    kappa = solve_symmetrized(k.nu.data, g, tol=tol)
    return FdrKernel(k.grid, kappa)


def fdi_check_kappa(kappa: FdrKernel, tol: float | None = None) -> FDIReport:
    """``kappa~(w) >= |w|``, the FDI restated for damping environments."""
    w = kappa.grid.values
    eye = np.eye(kappa.n_channels)
    shifted = kappa.data - np.abs(w)[:, None, None] * eye
    if tol is None:
        tol = default_tolerance(kappa.data)
    margin = _hermitian_min_eig(shifted)
    return FDIReport(w, margin, margin, float(tol))


@dataclass(frozen=True, eq=False)
class CouplingSpread:
    """Relative spread of the traced FDR kernel across random couplings."""

    omega: NDArray[np.float64]
    kappa: NDArray[np.float64]  # (n_couplings, n_omega)
    spread: NDArray[np.float64]
    line: NDArray[np.float64]  # transition frequency nearest each omega

    @property
    def max_spread(self) -> float:
        return float(np.max(self.spread))


def coupling_independence_test(
    levels: ArrayLike,
    probs: ArrayLike,
    n_random_couplings: int,
    seed: int,
    grid: FrequencyGrid,
    broadening: float | None = None,
    n_channels: int = 2,
    omegas: ArrayLike | None = None,
) -> CouplingSpread:
    """Measure how much the FDR kernel depends on the coupling operators.

    For each random Hermitian coupling set the discrete correlation is
    decomposed and ``kappa~ = tr nu~ / tr gamma~`` is evaluated at grid
    points within ``broadening`` of a populated transition line (pairs with
    distinct energies and distinct populations). The spread is
    ``(max - min) / mean`` over coupling sets.

    Only frequencies shared by transitions with different population ratios
    can expose coupling dependence; a single isolated line cannot.

    Raises
    ------
    NoTransitionNearOmega
        If no requested frequency lies within ``broadening`` of a line.
    """
    e = np.asarray(levels, dtype=float)
    p = np.asarray(probs, dtype=float)
    eta = 4 * grid.spacing if broadening is None else float(broadening)
    lines = sorted(
        {
            round(float(e[i] - e[j]), 12)
            for i in range(e.size)
            for j in range(e.size)
            if e[i] != e[j] and p[i] != p[j] and (p[i] > 0 or p[j] > 0)
        }
    )
    if not lines:
        raise NoTransitionNearOmega("environment has no populated transitions")
    lines = np.array(lines)

    w = grid.values
    if omegas is None:
        idx = np.flatnonzero(np.min(np.abs(w[:, None] - lines[None, :]), axis=1) <= eta)
    else:
        req = np.atleast_1d(np.asarray(omegas, dtype=float))
        far = np.min(np.abs(req[:, None] - lines[None, :]), axis=1) > eta
        if np.any(far):
            raise NoTransitionNearOmega(f"no populated transition within {eta} of w={req[far][0]:g}")
        idx = np.rint((req + grid.omega_max) / grid.spacing).astype(int)
    if idx.size == 0:
        raise NoTransitionNearOmega("no grid point lies within the broadening of a transition")
    nearest = lines[np.argmin(np.abs(w[idx, None] - lines[None, :]), axis=1)]

    rng = np.random.default_rng(seed)
    kappas = np.empty((n_random_couplings, idx.size))
    for c in range(n_random_couplings):
        l = random_hermitian_couplings(e.size, n_channels, rng)
        env = DiscreteEnvironment(e, p, l, eta)
        ks = decompose(discrete_correlation(env, grid))
        nu_tr = np.trace(ks.nu.data[idx], axis1=1, axis2=2).real
        g_tr = np.trace(ks.gamma.data[idx], axis1=1, axis2=2).real
        kappas[c] = nu_tr / g_tr
    mean = np.mean(kappas, axis=0)
    spread = (kappas.max(axis=0) - kappas.min(axis=0)) / np.abs(mean)
    return CouplingSpread(w[idx], kappas, spread, nearest)
