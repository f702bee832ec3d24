"""Environment correlation kernels, fluctuation-dissipation checks and
weak-damping quantum Brownian motion."""

__version__ = "0.1.0"

from .environments import (
    Classification,
    DiscreteEnvironment,
    EnvironmentState,
    SpectralModel,
    build_kernels,
    build_multichannel,
    classify,
    discrete_correlation,
)
from .fdr import (
    FDIReport,
    FdrKernel,
    coupling_independence_test,
    fdi_check,
    fdi_check_kappa,
    fdr_kernel_matrix,
    fdr_kernel_scalar,
    thermal_fdr_kernel,
)
from .kernels import (
    FrequencyGrid,
    KernelSet,
    MatrixFunction,
    TimeKernel,
    decompose,
    posdef_quadratic_check,
    posdef_spectral_check,
    reconstruct,
    to_frequency,
    to_time,
)
from .qbm import (
    GaussianState,
    OscillatorBank,
    PhaseSpaceCovariance,
    dissipated_energy,
    hup_check,
    me_coefficients,
    steady_state_covariance,
    uncertainty_product,
)
