import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid, dblquad

from fdilab.environments import EnvironmentState, SpectralModel, build_kernels, build_multichannel
from fdilab.fdr import fdr_kernel_matrix, fdr_kernel_scalar
from fdilab.errors import KernelWindowTooShort, NotDamping, OffGrid
from fdilab.kernels import FrequencyGrid, TimeKernel, TimeKernelSet
from fdilab.qbm import (
    GaussianState,
    OscillatorBank,
    PhaseSpaceCovariance,
    dissipated_energy,
    dissipation_matrix,
    hup_check,
    me_coefficients,
    steady_state_covariance,
    uncertainty_product,
)

DRUDE = SpectralModel("ohmic", 0.01, "drude", 20.0)


def _drude_time_kernel(g0, lam, dt, t_max):
    # gamma~ = g0 / (1 + w^2/lam^2)  <->  gamma(t) = (g0 lam / 2) exp(-lam |t|)
    n = int(round(t_max / dt))
    t = np.arange(-n, n + 1) * dt
    return TimeKernel(dt, 0.5 * g0 * lam * np.exp(-lam * np.abs(t)))


# ---------------------------------------------------------------------------
# steady state


def test_zero_temperature_steady_state(grid):
    bank = OscillatorBank(mass=2.0, omega0=1.5)
    cov = steady_state_covariance(bank, build_kernels(DRUDE, EnvironmentState.zero_temperature(), grid))
    # s_pp = m w0 / 2, s_xx = 1 / (2 m w0)
    assert cov.sigma_pp[0, 0] == pytest.approx(1.5, rel=1e-13)
    assert cov.sigma_xx[0, 0] == pytest.approx(1 / 6.0, rel=1e-13)
    assert cov.sigma_xp[0, 0] == 0.0
    assert uncertainty_product(cov)[0] == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
def test_thermal_steady_state_determinant(T, grid):
    cov = steady_state_covariance(OscillatorBank(), build_kernels(DRUDE, EnvironmentState.thermal(T), grid))
    assert uncertainty_product(cov)[0] == pytest.approx((0.5 / np.tanh(0.5 / T)) ** 2, rel=1e-12)


def test_classical_vacuum_relaxes_below_the_bound(grid):
    k = build_kernels(DRUDE, EnvironmentState.classical(0.1), grid)
    det = uncertainty_product(steady_state_covariance(OscillatorBank(), k))
    assert det[0] == pytest.approx(0.1**2, rel=1e-12)  # (2 T_cl / 2 w0)^2
    assert not hup_check(det)[0]


def test_correlated_thermal_modes_share_the_thermal_state(grid):
    mix = np.array([[1.0, 0.4], [0.4, 0.5]])
    k = build_multichannel(DRUDE, EnvironmentState.thermal(1.0), mix, grid)
    cov = steady_state_covariance(OscillatorBank(n_modes=2), k)
    expected = 0.5 / np.tanh(0.5)
    np.testing.assert_allclose(cov.sigma_pp, expected * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(uncertainty_product(cov), expected**2, rtol=1e-12)


def test_steady_state_errors(grid):
    k = build_kernels(DRUDE, EnvironmentState.thermal(1.0), grid)
    with pytest.raises(OffGrid):
        steady_state_covariance(OscillatorBank(omega0=25.0), k)
    with pytest.raises(ValueError):
        steady_state_covariance(OscillatorBank(n_modes=2), k)
    neg = build_kernels(DRUDE, EnvironmentState.negative_temperature(-1.0), grid)
    with pytest.raises(NotDamping):
        steady_state_covariance(OscillatorBank(), neg)


def test_momentum_variance_is_half_mass_times_fdr_kernel():
    rng = np.random.default_rng(21)
    grid = FrequencyGrid(401, 8.0)
    a = rng.standard_normal((3, 3))
    mix = a @ a.T + 0.1 * np.eye(3)
    k = build_multichannel(DRUDE, EnvironmentState.squeezed(0.7, 0.3), mix, grid)
    bank = OscillatorBank(n_modes=3, mass=1.7)
    cov = steady_state_covariance(bank, k)
    kappa = fdr_kernel_matrix(k).data[grid.zero_index + 25].real  # w = 1 = w0
    np.testing.assert_allclose(cov.sigma_pp, 0.5 * 1.7 * kappa, rtol=1e-10, atol=1e-10 * np.abs(kappa).max())


@given(st.floats(0.0, 3.0), st.floats(0.0, 1.0), st.sampled_from(["thermal", "squeezed", "classical", "zero"]))
def test_uncertainty_bound_iff_kappa_bound_at_resonance(T, r, kind):
    grid = FrequencyGrid(401, 8.0)
    state = {
        "thermal": EnvironmentState.thermal(T + 1e-3),
        "squeezed": EnvironmentState.squeezed(T, r),
        "classical": EnvironmentState.classical(T),
        "zero": EnvironmentState.zero_temperature(),
    }[kind]
    k = build_kernels(DRUDE, state, grid)
    det = uncertainty_product(steady_state_covariance(OscillatorBank(), k))
    kappa = fdr_kernel_scalar(k)
    w0 = grid.zero_index + 25  # w = 1
    kappa_ok = kappa.scalar()[w0] >= 1.0 - 1e-12
    assert bool(hup_check(det)[0]) == kappa_ok


def test_uncertainty_product_uses_mode_basis():
    cov = PhaseSpaceCovariance(np.diag([2.0, 0.5]), np.diag([0.5, 0.0]), np.diag([1.0, 1.0]))
    np.testing.assert_allclose(np.sort(uncertainty_product(cov)), [0.5, 1.75])
    assert cov.full().shape == (4, 4)
    with pytest.raises(ValueError):
        PhaseSpaceCovariance(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros((2, 2)), np.eye(2))


def test_hup_check_tolerance():
    np.testing.assert_array_equal(hup_check([0.25, 0.25 - 1e-13, 0.2499]), [True, True, False])


def test_bank_validation():
    for kwargs in (dict(n_modes=0), dict(mass=0.0), dict(omega0=-1.0)):
        with pytest.raises(ValueError):
            OscillatorBank(**kwargs)


# ---------------------------------------------------------------------------
# master-equation coefficients


def _drude_damping_errors(dt):
    g0, lam, m, w0 = 0.05, 10.0, 1.5, 1.0
    gam = _drude_time_kernel(g0, lam, dt, 3.0)
    kt = TimeKernelSet(alpha=gam, nu=gam, mu=gam, gamma=gam)
    t = np.array([0.0, 0.05, 0.3, 1.0, 3.0])
    me = me_coefficients(OscillatorBank(mass=m, omega0=w0), kt, t)
    amp, den, decay = 0.5 * g0 * lam, lam**2 + w0**2, np.exp(-lam * t)
    int_cos = amp * (lam + decay * (w0 * np.sin(w0 * t) - lam * np.cos(w0 * t))) / den
    int_sin = amp * (w0 - decay * (lam * np.sin(w0 * t) + w0 * np.cos(w0 * t))) / den
    err_rate = np.max(np.abs(me.damping_rate - 2 / m * int_cos)) / (2 / m * int_cos[-1])
    err_shift = np.max(np.abs(me.freq_shift - 2 * w0 / m * int_sin)) / (2 * w0 / m * int_sin[-1])
    return me, err_rate, err_shift, amp * decay / m * 2


def test_damping_coefficients_match_drude_closed_form():
    me, err_rate, err_shift, slip = _drude_damping_errors(1e-3)
    assert err_rate < 2e-5 and err_shift < 2e-5
    assert me.renormalization == pytest.approx(-0.05 * 10.0 / 1.5)
    np.testing.assert_allclose(me.slip, slip, rtol=1e-12)
    # at t = 0 nothing has accumulated
    assert me.D_normal[0] == me.D_anomalous[0] == me.damping_rate[0] == me.freq_shift[0] == 0.0


def test_damping_coefficients_converge_at_second_order():
    _, coarse_rate, coarse_shift, _ = _drude_damping_errors(1e-3)
    _, fine_rate, fine_shift, _ = _drude_damping_errors(5e-4)
    assert 3.5 < coarse_rate / fine_rate < 4.5
    assert 3.5 < coarse_shift / fine_shift < 4.5


@pytest.fixture(scope="module")
def drude_time_kernels():
    grid = FrequencyGrid(40001, 2000.0)
    model = SpectralModel("ohmic", 0.05, "drude", 10.0)
    k = build_kernels(model, EnvironmentState.thermal(1.0), grid)
    return k, k.time_kernels(3.0, 1e-3)


def test_coefficients_reach_markov_limits(drude_time_kernels):
    k, kt = drude_time_kernels
    bank = OscillatorBank(mass=1.5)
    me = me_coefficients(bank, kt, 3.0)
    nu0, g0 = k.nu.at(1.0)[0, 0].real, k.gamma.at(1.0)[0, 0].real
    assert me.D_normal[0] == pytest.approx(nu0 / 2, rel=1e-4)
    assert me.damping_rate[0] == pytest.approx(g0 / 1.5, rel=1e-4)
    # the diffusion-to-damping ratio is the steady momentum variance
    s_pp = steady_state_covariance(bank, k).sigma_pp[0, 0]
    assert me.D_normal[0] / me.damping_rate[0] == pytest.approx(s_pp, rel=2e-4)


def test_markov_limits_at_wide_cutoff():
    # Drude cutoff 50 w0 on a band wide enough that the truncated tail of nu~ stays below 1e-6
    grid = FrequencyGrid(160001, 4000.0)
    k = build_kernels(SpectralModel("ohmic", 0.01, "drude", 50.0), EnvironmentState.thermal(1.0), grid)
    me = me_coefficients(OscillatorBank(), k.time_kernels(4.0, 7.5e-4), 4.0)
    assert me.D_normal[0] == pytest.approx(k.nu.at(1.0)[0, 0].real / 2, rel=1e-6)
    assert me.damping_rate[0] == pytest.approx(k.gamma.at(1.0)[0, 0].real, rel=1e-6)


def test_damping_rate_equals_dissipation_kernel_route(drude_time_kernels):
    _, kt = drude_time_kernels
    m, w0 = 1.5, 1.0
    t = np.linspace(0.0, 3.0, 13)
    me = me_coefficients(OscillatorBank(mass=m, omega0=w0), kt, t)
    s = np.arange(kt.mu.n_lags + 1) * kt.dt
    mu = kt.mu.positive_lags()[:, 0, 0].real
    gam = kt.gamma.positive_lags()[:, 0, 0].real
    # integration by parts of int mu(s) sin(w0 s), with mu = d gamma / ds
    int_mu_sin = np.interp(t, s, cumulative_trapezoid(mu * np.sin(w0 * s), s, initial=0.0))
    route = -2 * int_mu_sin / (m * w0) + 2 * np.interp(t, s, gam) * np.sin(w0 * t) / (m * w0)
    scale = np.max(np.abs(me.damping_rate))
    np.testing.assert_allclose(me.damping_rate, route, atol=1e-4 * scale)


def test_coefficients_need_the_kernel_window(drude_time_kernels):
    _, kt = drude_time_kernels
    with pytest.raises(KernelWindowTooShort):
        me_coefficients(OscillatorBank(), kt, 3.5)
    with pytest.raises(ValueError):
        me_coefficients(OscillatorBank(n_modes=2), kt, 1.0)


# ---------------------------------------------------------------------------
# dissipated energy


def test_dissipated_energy_matches_double_integral():
    g0, lam, w0, t = 0.05, 4.0, 1.0, 2.0
    state = GaussianState(np.zeros(1), np.zeros(1), PhaseSpaceCovariance(1.0, 0.0, 0.0))

    def integrand(t2, t1):
        # x-only state: v(tau) = -w0 sin(w0 tau) x
        g = 0.5 * g0 * lam * np.exp(-lam * (t1 - t2))
        return g * w0**2 * np.sin(w0 * t1) * np.sin(w0 * t2)

    # symmetric integrand: twice the lower triangle, where it is smooth
    oracle = -2 * dblquad(integrand, 0.0, t, 0.0, lambda t1: t1, epsabs=1e-14, epsrel=1e-12)[0]
    errors = []
    for dt in (1e-3, 5e-4):
        got = dissipated_energy(OscillatorBank(omega0=w0), _drude_time_kernel(g0, lam, dt, t), state, t)
        errors.append(abs(got / oracle - 1))
    assert errors[0] < 5e-6
    assert 3.5 < errors[0] / errors[1] < 4.5


def _random_state(rng):
    a = rng.standard_normal((2, 2))
    cov = a @ a.T + 0.25 * np.eye(2)
    return GaussianState(rng.standard_normal(1), rng.standard_normal(1), PhaseSpaceCovariance(cov[0, 0], cov[0, 1], cov[1, 1]))


def test_damping_kernel_removes_energy_amplifying_adds():
    grid = FrequencyGrid(4001, 200.0)
    k = build_kernels(SpectralModel("ohmic", 0.05, "drude", 10.0), EnvironmentState.thermal(1.0), grid)
    gam = k.time_kernels(5.0, 0.01).gamma
    neg = TimeKernel(gam.dt, -gam.data)
    bank = OscillatorBank()
    rng = np.random.default_rng(11)
    for _ in range(100):
        state = _random_state(rng)
        e = dissipated_energy(bank, gam, state, 5.0)
        assert e < 0
        assert dissipated_energy(bank, neg, state, 5.0) == pytest.approx(-e, rel=1e-12)


def test_no_damping_no_dissipation():
    gam = TimeKernel(0.01, np.zeros(201))
    state = _random_state(np.random.default_rng(0))
    assert dissipated_energy(OscillatorBank(), gam, state, 1.0) == 0.0
    assert np.all(dissipation_matrix(OscillatorBank(), gam, 0.0) == 0.0)
    with pytest.raises(KernelWindowTooShort):
        dissipated_energy(OscillatorBank(), gam, state, 1.5)


@given(st.floats(0.1, 5.0), st.floats(0.2, 3.0))
def test_dissipation_matrix_is_positive_for_positive_kernels(t, w0):
    gam = _drude_time_kernel(0.1, 5.0, 0.01, 5.0)
    mat = dissipation_matrix(OscillatorBank(omega0=w0), gam, t)
    np.testing.assert_allclose(mat, mat.T)
    assert np.min(np.linalg.eigvalsh(mat)) >= -1e-14 * np.max(np.abs(mat))


def test_second_moments_include_means():
    cov = PhaseSpaceCovariance(1.0, 0.2, 2.0)
    s = GaussianState(np.array([1.0]), np.array([-2.0]), cov).second_moments()
    np.testing.assert_allclose(s, [[2.0, -1.8], [-1.8, 6.0]])
