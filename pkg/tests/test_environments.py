import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdilab.environments import (
    Classification,
    DiscreteEnvironment,
    EnvironmentState,
    SpectralModel,
    build_kernels,
    build_multichannel,
    classify,
    discrete_correlation,
    random_hermitian_couplings,
    thermal_probabilities,
)
from fdilab.errors import BroadeningTooNarrow, MixingNotPositive
from fdilab.kernels import FrequencyGrid, KernelSet, MatrixFunction, decompose, posdef_spectral_check

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])


# ---------------------------------------------------------------------------
# spectral models


def test_drude_profile_values():
    m = SpectralModel("ohmic", 0.3, "drude", 2.0)
    np.testing.assert_allclose(m.damping([0.0, 2.0, -4.0]), [0.3, 0.15, 0.06], rtol=1e-15)


@pytest.mark.parametrize(
    "cutoff, expected",
    [("exponential", 0.5 * np.exp(-0.5)), ("sharp", 0.5), ("none", 0.5)],
)
def test_cutoff_profiles(cutoff, expected):
    freq = None if cutoff == "none" else 2.0
    m = SpectralModel("ohmic", 0.5, cutoff, freq)
    assert m.damping(1.0) == pytest.approx(expected, rel=1e-15)
    if cutoff == "sharp":
        assert m.damping(2.5) == 0.0


def test_power_law_families():
    sub = SpectralModel("sub_ohmic", 1.0, "none", 1.0, exponent=0.5)
    sup = SpectralModel("supra_ohmic", 1.0, "none", 1.0, exponent=3.0)
    assert sub.damping(4.0) == pytest.approx(0.5)  # (w/wc)^(s-1)
    assert sup.damping(2.0) == pytest.approx(4.0)


def test_sub_ohmic_zero_frequency_is_finite():
    grid = FrequencyGrid(101, 5.0)
    model = SpectralModel("sub_ohmic", 1.0, "drude", 1.0, exponent=0.5)
    k = build_kernels(model, EnvironmentState.thermal(1.0), grid)
    g = k.gamma.scalar().real
    assert np.all(np.isfinite(g))
    # the zero bin is sampled half a grid step away
    assert g[grid.zero_index] == pytest.approx(float(model.damping(0.5 * grid.spacing)))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family="ohmic", gamma0=-1.0, cutoff="drude", cutoff_freq=1.0),
        dict(family="ohmic", gamma0=1.0, cutoff="drude", cutoff_freq=None),
        dict(family="sub_ohmic", gamma0=1.0, cutoff="none", cutoff_freq=1.0, exponent=1.5),
        dict(family="supra_ohmic", gamma0=1.0, cutoff="none", cutoff_freq=1.0, exponent=0.5),
        dict(family="lorentz", gamma0=1.0, cutoff="none", cutoff_freq=1.0),
    ],
)
def test_spectral_model_validation(kwargs):
    with pytest.raises(ValueError):
        SpectralModel(**kwargs)


# ---------------------------------------------------------------------------
# environment states


def test_thermal_noise_kernel_matches_bose_oracle():
    grid = FrequencyGrid(4001, 40.0)
    model = SpectralModel("ohmic", 0.05, "drude", 10.0)
    T = 0.7
    k = build_kernels(model, EnvironmentState.thermal(T), grid)
    w = grid.values
    g = 0.05 / (1 + (w / 10.0) ** 2)
    nz = w != 0
    # nu~ = gamma~ w (1 + 2 n(w)), n the Bose occupation
    expected = np.empty_like(w)
    expected[nz] = g[nz] * w[nz] * (1 + 2 / np.expm1(w[nz] / T))
    expected[~nz] = 2 * T * g[~nz]
    np.testing.assert_allclose(k.nu.scalar().real, expected, rtol=1e-12)
    np.testing.assert_allclose(k.gamma.scalar().real, g, rtol=1e-15)


def test_thermal_kernel_at_zero_frequency_is_exactly_two_t():
    assert EnvironmentState.thermal(0.37).fdr_kernel(0.0) == 2 * 0.37
    assert EnvironmentState.zero_temperature().fdr_kernel(0.0) == 0.0


def test_squeezed_with_zero_squeeze_equals_thermal(grid):
    model = SpectralModel("ohmic", 0.1, "exponential", 5.0)
    a = build_kernels(model, EnvironmentState.thermal(2.0), grid)
    b = build_kernels(model, EnvironmentState.squeezed(2.0, 0.0), grid)
    np.testing.assert_array_equal(a.nu.data, b.nu.data)
    np.testing.assert_array_equal(a.alpha.data, b.alpha.data)


def test_squeeze_table_and_callable_agree(grid):
    table = EnvironmentState.squeezed(0.0, [(0.0, 0.0), (20.0, 2.0)])
    fn = EnvironmentState.squeezed(0.0, lambda w: w / 10.0)
    np.testing.assert_allclose(table.squeeze_at(grid.values), fn.squeeze_at(grid.values), atol=1e-15)


def test_classical_vacuum_has_no_noise(grid):
    k = build_kernels(SpectralModel("ohmic", 0.2, "drude", 4.0), EnvironmentState.classical(0.0), grid)
    assert np.all(k.nu.data == 0)
    assert np.all(k.gamma.scalar().real > 0)


def test_negative_temperature_flips_damping_keeps_noise_positive(grid):
    model = SpectralModel("ohmic", 0.2, "drude", 4.0)
    pos = build_kernels(model, EnvironmentState.thermal(1.5), grid)
    neg = build_kernels(model, EnvironmentState.negative_temperature(-1.5), grid)
    np.testing.assert_array_equal(neg.gamma.data, -pos.gamma.data)
    assert np.min(neg.nu.scalar().real) > 0


@pytest.mark.parametrize(
    "ctor, arg",
    [
        (EnvironmentState.thermal, 0.0),
        (EnvironmentState.negative_temperature, 1.0),
        (EnvironmentState.classical, -1.0),
    ],
)
def test_state_constructors_validate(ctor, arg):
    with pytest.raises(ValueError):
        ctor(arg)


@given(
    st.floats(0.01, 50.0),
    st.floats(0.0, 2.0),
    st.lists(st.floats(-100.0, 100.0), min_size=1, max_size=20),
)
def test_quantum_states_satisfy_kappa_bound(T, r, ws):
    w = np.array(ws)
    for state in (
        EnvironmentState.thermal(T),
        EnvironmentState.zero_temperature(),
        EnvironmentState.squeezed(T, r),
    ):
        kappa = state.fdr_kernel(w)
        assert np.all(kappa >= np.abs(w) * (1 - 1e-14))
    # amplifying states carry the sign of their negated damping kernel
    kappa = EnvironmentState.negative_temperature(-T).fdr_kernel(w)
    assert np.all(kappa <= -np.abs(w) * (1 - 1e-14))


# ---------------------------------------------------------------------------
# multichannel


def test_identity_mixing_is_independent_channels(grid):
    model = SpectralModel("ohmic", 0.1, "drude", 5.0)
    state = EnvironmentState.thermal(1.0)
    multi = build_multichannel(model, state, np.eye(3), grid)
    single = build_kernels(model, state, grid, n_channels=3)
    np.testing.assert_allclose(multi.nu.data, single.nu.data, rtol=1e-14, atol=0)
    np.testing.assert_allclose(multi.gamma.data, single.gamma.data, rtol=1e-14, atol=0)


def test_full_correlation_gives_rank_one_damping(grid):
    model = SpectralModel("ohmic", 0.1, "drude", 5.0)
    k = build_multichannel(model, EnvironmentState.thermal(1.0), np.ones((2, 2)), grid)
    eig = np.linalg.eigvalsh(k.gamma.data)
    scale = np.max(eig)
    assert np.max(np.abs(eig[:, 0])) < 1e-14 * scale
    np.testing.assert_allclose(eig[:, 1], 2 * k.gamma.data[:, 0, 0].real, rtol=1e-13)


@given(st.integers(0, 2**32 - 1))
def test_random_positive_mixing_gives_positive_noise(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    mix = a @ a.conj().T
    grid = FrequencyGrid(401, 10.0)
    models = [SpectralModel("ohmic", g, "drude", 3.0) for g in rng.uniform(0.01, 1.0, 3)]
    k = build_multichannel(models, EnvironmentState.thermal(0.5), mix, grid)
    scale = np.max(np.abs(k.nu.data))
    assert posdef_spectral_check(k.nu) >= -1e-12 * scale
    assert classify(k) == Classification.DAMPING


@pytest.mark.parametrize(
    "mix",
    [np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones((2, 3))],
)
def test_mixing_must_be_hermitian_positive(mix, grid):
    with pytest.raises(MixingNotPositive):
        build_multichannel(SpectralModel("ohmic", 0.1, "none"), EnvironmentState.thermal(1.0), mix, grid)


# ---------------------------------------------------------------------------
# discrete environments


def _two_level(probs, omega, eta, grid):
    env = DiscreteEnvironment(np.array([0.0, omega]), np.asarray(probs, float), SIGMA_X, eta)
    return discrete_correlation(env, grid)


def test_single_populated_level_is_one_lorentzian_line():
    grid = FrequencyGrid(2001, 10.0)
    eta = 0.05
    alpha = _two_level([1.0, 0.0], 2.0, eta, grid)
    w = grid.values
    # ground state only: one line at e_0 - e_1 = -2 with area 2 pi
    expected = 2 * eta / ((w + 2.0) ** 2 + eta**2)
    np.testing.assert_allclose(alpha.scalar().real, expected, rtol=1e-13)
    assert np.all(alpha.scalar().imag == 0)


def test_two_level_fdr_kernel_matches_line_oracle():
    grid = FrequencyGrid(4001, 10.0)
    omega, eta, beta = 1.5, 0.02, 1.3
    p = thermal_probabilities([0.0, omega], beta)
    ks = decompose(_two_level(p, omega, eta, grid))
    i = int(np.argmin(np.abs(grid.values - omega)))
    assert grid.values[i] == pytest.approx(omega, abs=1e-12)

    # alpha~(-W) and alpha~(+W) from the line sum at both signs
    peak = 1 / (np.pi * eta)
    tail = (eta / np.pi) / ((2 * omega) ** 2 + eta**2)
    a_minus = p[0] * peak + p[1] * tail
    a_plus = p[1] * peak + p[0] * tail
    kappa = omega * (a_minus + a_plus) / (a_minus - a_plus)
    got = (ks.nu.scalar() / ks.gamma.scalar()).real[i]
    assert got == pytest.approx(kappa, rel=1e-12)
    # narrow lines approach W coth(beta W / 2)
    assert got == pytest.approx(omega / np.tanh(beta * omega / 2), rel=1e-3)


def test_inverted_two_level_is_amplifying():
    grid = FrequencyGrid(801, 8.0)
    normal = decompose(_two_level([0.8, 0.2], 1.0, 0.1, grid))
    inverted = decompose(_two_level([0.2, 0.8], 1.0, 0.1, grid))
    assert classify(normal) == Classification.DAMPING
    assert classify(inverted) == Classification.AMPLIFYING


def test_broadening_must_cover_two_grid_steps():
    grid = FrequencyGrid(101, 5.0)  # spacing 0.1
    with pytest.raises(BroadeningTooNarrow):
        _two_level([0.5, 0.5], 1.0, 0.15, grid)
    _two_level([0.5, 0.5], 1.0, 0.2, grid)


def test_discrete_environment_validation():
    with pytest.raises(ValueError):
        DiscreteEnvironment([0.0, 1.0], [0.6, 0.6], SIGMA_X, 0.1)
    with pytest.raises(ValueError):
        DiscreteEnvironment([0.0, 1.0], [0.5, 0.5], np.array([[0.0, 1.0], [0.0, 0.0]]), 0.1)
    with pytest.raises(ValueError):
        DiscreteEnvironment([0.0, 1.0], [0.5, 0.5], SIGMA_X, 0.0)


def test_thermal_probabilities():
    p = thermal_probabilities([0.0, 1.0, 3.0], 2.0)
    np.testing.assert_allclose(p, np.exp([0.0, -2.0, -6.0]) / np.sum(np.exp([0.0, -2.0, -6.0])), rtol=1e-15)
    # negative beta inverts the populations without overflow
    q = thermal_probabilities([0.0, 1000.0], -1.0)
    assert q[1] == pytest.approx(1.0) and q[0] < 1e-300


@given(
    st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=5, unique=True),
    st.floats(0.1, 5.0),
    st.integers(0, 2**32 - 1),
)
def test_discrete_thermal_environment_is_damping_and_positive(levels, beta, seed):
    e = np.array(sorted(levels))
    if np.min(np.diff(e)) < 1e-3:
        return
    grid = FrequencyGrid(801, 8.0)
    rng = np.random.default_rng(seed)
    # real couplings: complex ones add an antisymmetric Im alpha~(0) and with it
    # a damping term odd in w that no population ordering removes
    couplings = random_hermitian_couplings(e.size, 2, rng).real
    env = DiscreteEnvironment(e, thermal_probabilities(e, beta), couplings, 0.1)
    alpha = discrete_correlation(env, grid)
    scale = np.max(np.abs(alpha.data))
    # a sum of positive lines with positive semidefinite weights
    assert posdef_spectral_check(alpha) >= -1e-12 * scale
    assert classify(decompose(alpha)) == Classification.DAMPING


# ---------------------------------------------------------------------------
# classification


def test_classify_indefinite_and_empty():
    grid = FrequencyGrid(101, 5.0)
    g = MatrixFunction.from_scalar(grid, np.cos(grid.values))
    nu = MatrixFunction.from_scalar(grid, np.ones(101))
    assert classify(KernelSet.from_parts(nu, g)) == Classification.INDEFINITE
    zero = MatrixFunction.zeros(grid)
    assert classify(KernelSet.from_parts(nu, zero)) == Classification.INDEFINITE
