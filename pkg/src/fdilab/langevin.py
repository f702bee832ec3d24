"""
Classical Langevin validation of the weak-damping steady state.

Trajectories of

    m x'' + 2 int_0^t gamma(t - tau) x'(tau) dtau + m w0^2 x = xi(t),
    <xi(t) xi(s)^T> = nu(t - s),

are integrated with Heun steps. Noise is synthesized spectrally, so every
trajectory is reproducible from ``(seed, trajectory index)`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.fft import irfft, next_fast_len
from scipy.integrate import trapezoid

from .environments import Classification, EnvironmentState, SpectralModel, build_kernels, classify
from .errors import AliasingRisk, NotDamping, SpectrumNotPositive, Unstable
from .kernels import FrequencyGrid, KernelSet, MatrixFunction, to_time
from .qbm import OscillatorBank, PhaseSpaceCovariance, uncertainty_product

__all__ = [
    "NoiseEnsemble",
    "TrajectoryStats",
    "SweepRow",
    "default_dt",
    "noise_factors",
    "generate_noise",
    "memory_weights",
    "simulate",
    "run_ensemble",
    "sweep_damping",
    "extrapolate_to_zero",
]

N_BATCHES = 20
BURN_IN_RELAXATION_TIMES = 10.0
MEMORY_CUTOFF_TIMES = 8.0
ENERGY_BLOWUP = 1e6
ENERGY_CHECK_EVERY = 128


def default_dt(omega0: float) -> float:
    """``2 pi / (128 w0)``: 128 Heun steps per oscillation period."""
    return 2.0 * math.pi / (128.0 * omega0)


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True, eq=False)
class NoiseEnsemble:
    """Real Gaussian noise paths, ``samples[i, n, c]`` = channel ``c`` of
    trajectory ``first_index + i`` at time ``n dt``."""

    dt: float
    n_steps: int
    n_trajectories: int
    samples: NDArray[np.float64]
    seed: int
    first_index: int = 0

    @property
    def n_channels(self) -> int:
        return self.samples.shape[2]

    @property
    def period(self) -> float:
        """Period of the underlying circular noise, at least twice the path length."""
        return _circular_length(self.n_steps) * self.dt


def _circular_length(n_steps: int) -> int:
    m = next_fast_len(2 * n_steps, real=True)
    return m + (m % 2)


def noise_factors(nu: MatrixFunction, dt: float, n_steps: int, tol: float | None = None) -> NDArray[np.complex128]:
    """Per-bin amplitude factors ``L_q`` with ``L_q L_q^H = nu~(w_q) / (M dt)``.

    Bins are ``w_q = 2 pi q / (M dt)`` for ``q = 0 .. M/2`` with the circular
    length ``M``, the smallest even FFT-friendly size ``>= 2 n_steps``. The
    zero and Nyquist bins keep only the real part of ``nu~`` so that their
    amplitudes are real. Content above the Nyquist frequency is dropped,
    not folded: the noise is ``nu`` band-limited to ``|w| <= pi/dt``.

    Raises
    ------
    AliasingRisk
        If the Nyquist frequency ``pi/dt`` exceeds the grid's ``omega_max``.
    SpectrumNotPositive
        If ``nu~`` has an eigenvalue below ``-tol`` at some bin.
    """
    if dt <= 0 or n_steps < 1:
        raise ValueError("dt must be positive and n_steps >= 1")
    if math.pi / dt > nu.grid.omega_max * (1 + 1e-12):
        raise AliasingRisk(f"Nyquist frequency pi/dt={math.pi / dt:g} exceeds omega_max={nu.grid.omega_max:g}")
    m = _circular_length(n_steps)
    w = 2.0 * math.pi * np.arange(m // 2 + 1) / (m * dt)
    spec = nu.at(np.minimum(w, nu.grid.omega_max))
    spec = 0.5 * (spec + np.conj(np.swapaxes(spec, 1, 2)))
    spec[0] = spec[0].real
    spec[-1] = spec[-1].real
    vals, vecs = np.linalg.eigh(spec)
    scale = float(np.max(np.abs(vals), initial=0.0))
    if tol is None:
        tol = 1e-10 * scale
    if vals.size and vals.min() < -tol:
        q = int(np.argmin(vals.min(axis=1)))
        raise SpectrumNotPositive(f"noise spectrum has eigenvalue {vals.min():.3g} at w={w[q]:g}")
    root = np.sqrt(np.clip(vals, 0.0, None) / (m * dt))
    return vecs * root[:, None, :]


def _synthesize(factors: NDArray, n_steps: int, rng: np.random.Generator) -> NDArray[np.float64]:
    n_bins, n_ch, _ = factors.shape
    m = 2 * (n_bins - 1)
    z = rng.standard_normal((n_bins, 2, n_ch))
    c = (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
    c[0] = z[0, 0]
    c[-1] = z[-1, 0]
    amp = np.einsum("qij,qj->qi", factors, c)
    return m * irfft(amp, n=m, axis=0)[:n_steps]


def generate_noise(
    nu: MatrixFunction,
    dt: float,
    n_steps: int,
    n_trajectories: int,
    seed: int,
    first_index: int = 0,
) -> NoiseEnsemble:
    """Stationary Gaussian noise with spectrum ``nu~`` by spectral synthesis.

    Each bin ``0 < q < M/2`` receives ``L_q (a + ib) / sqrt(2)`` with standard
    normal ``a, b``; bins ``0`` and ``M/2`` receive ``L_q a``; the path is
    ``x_n = sum_q c_q exp(i w_q n dt)`` over both signs of ``q`` with
    ``c_{-q} = conj(c_q)``. Hence ``<x_n x_0^T> = (1/(M dt)) sum_q nu~(w_q)
    exp(i w_q n dt)``, the Riemann sum of ``nu(n dt)``, and the periodogram
    ``(dt / M) |sum_n x_n exp(-i w_q n dt)|^2`` over the full circular
    period has expectation ``nu~(w_q)``. Paths span at most half the
    period so that wrap-around correlations never enter.

    Trajectory ``i`` draws from ``default_rng([seed, i])``.
    """
    if n_trajectories < 0:
        raise ValueError("n_trajectories must be non-negative")
    factors = noise_factors(nu, dt, n_steps)
    out = np.empty((n_trajectories, n_steps, nu.n_channels))
    for j in range(n_trajectories):
        rng = np.random.default_rng([seed, first_index + j])
        out[j] = _synthesize(factors, n_steps, rng)
    return NoiseEnsemble(dt, n_steps, n_trajectories, out, seed, first_index)


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True, eq=False)
class TrajectoryStats:
    """Empirical steady-state second moments with batch-mean errors.

    Batches are disjoint groups of trajectories when there are at least
    ``n_batches`` trajectories, otherwise disjoint time segments.
    """

    sigma_xx: NDArray[np.float64]
    sigma_xp: NDArray[np.float64]
    sigma_pp: NDArray[np.float64]
    se_xx: NDArray[np.float64]
    se_xp: NDArray[np.float64]
    se_pp: NDArray[np.float64]
    det: NDArray[np.float64]
    se_det: NDArray[np.float64]
    burn_in: int
    n_steps: int
    n_trajectories: int
    n_batches: int
    dt: float
    mode: str

    def covariance(self) -> PhaseSpaceCovariance:
        return PhaseSpaceCovariance(self.sigma_xx, self.sigma_xp, self.sigma_pp)


def _kernel_cutoff(k: KernelSet) -> float | None:
    model = k.model
    if isinstance(model, tuple):
        freqs = [mm.cutoff_freq for mm in model if mm.cutoff != "none"]
        return min(freqs) if freqs else None
    if isinstance(model, SpectralModel) and model.cutoff != "none":
        return model.cutoff_freq
    return None


def memory_weights(
    k: KernelSet, dt: float, history: float | None = None, substeps: int = 32
) -> NDArray[np.float64]:
    """Product-integration weights ``W_l = int gamma(s) phi_l(s) ds``.

    ``phi_l`` is the hat function of width ``dt`` centred on ``l dt``
    (half a hat for ``l = 0``), so that for piecewise-linear velocity
    ``int_0^inf gamma(s) v(t - s) ds = sum_l W_l v(t - l dt)``. The history
    defaults to ``8 / cutoff``. ``gamma(s)`` is sampled from the grid by
    :func:`to_time` on a sub-grid fine enough for the band limit.
    """
    if history is None:
        cut = _kernel_cutoff(k)
        if cut is None:
            raise ValueError("memory mode needs a cutoff frequency or an explicit history length")
        history = MEMORY_CUTOFF_TIMES / cut
    n_lags = max(1, math.ceil(history / dt))
    fine = max(substeps, math.ceil(dt * k.grid.omega_max / math.pi))
    h = dt / fine
    g = to_time(k.gamma, n_lags * dt + 0.5 * h, h).positive_lags()[: n_lags * fine + 1].real
    s = np.arange(g.shape[0]) * h / dt
    weights = np.empty((n_lags + 1,) + g.shape[1:])
    for l in range(n_lags + 1):
        lo, hi = max(l - 1, 0) * fine, min(l + 1, n_lags) * fine
        seg = g[lo : hi + 1]
        hat = np.clip(1.0 - np.abs(s[lo : hi + 1] - l), 0.0, None)
        weights[l] = trapezoid(seg * hat[:, None, None], dx=h, axis=0) if hi > lo else 0.0
    return 0.5 * (weights + np.swapaxes(weights, 1, 2))


def _energy(x: NDArray, v: NDArray, m: float, w0: float) -> NDArray:
    return 0.5 * m * np.sum(v * v, axis=1) + 0.5 * m * w0**2 * np.sum(x * x, axis=1)


def _integrate(
    bank: OscillatorBank,
    k: KernelSet,
    noise: NoiseEnsemble,
    mode: str,
    burn_in: int,
    n_segments: int,
    x0: NDArray | None,
    p0: NDArray | None,
    energy_trace: bool = False,
):
    """Heun integration; returns per-trajectory, per-segment sums of
    ``x x^T``, ``x p^T`` and ``p p^T`` over the measured steps."""
    m, w0, dt = bank.mass, bank.omega0, noise.dt
    n_traj, n_steps, n_ch = noise.samples.shape
    x = np.zeros((n_traj, n_ch)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (n_traj, n_ch)).copy()
    v = np.zeros((n_traj, n_ch)) if p0 is None else np.broadcast_to(np.asarray(p0, float) / m, (n_traj, n_ch)).copy()

    if mode == "local":
        g0 = k.gamma.at(w0)
        damp = (0.5 * (g0 + g0.conj().T)).real[None]
    else:
        damp = 2.0 * memory_weights(k, dt)
    n_lag = damp.shape[0] - 1
    scalar = n_ch == 1
    if scalar:
        # one channel: plain vectors over trajectories
        x, v = x[:, 0].copy(), v[:, 0].copy()
        xi = np.ascontiguousarray(noise.samples[:, :, 0].T)
        d0, dl = damp[0, 0, 0], damp[1:, 0, 0]
        hist = np.zeros((n_lag, n_traj))  # hist[j] = v_{n-1-j}

        def drag(vel):
            # lag by lag, so each trajectory's arithmetic is independent of the batch size
            out = d0 * vel
            for j in range(n_lag):
                out = out + dl[j] * hist[j]
            return out

        def energy(x, v):
            return 0.5 * m * (v * v + w0**2 * x * x)

    else:
        xi = np.ascontiguousarray(np.swapaxes(noise.samples, 0, 1))
        hist = np.zeros((n_lag, n_traj, n_ch))

        def drag(vel):
            out = np.sum(vel[:, None, :] * damp[0][None], axis=2)
            for j in range(n_lag):
                out = out + np.sum(hist[j][:, None, :] * damp[j + 1][None], axis=2)
            return out

        def energy(x, v):
            return _energy(x, v, m, w0)

    k2 = w0**2
    e_ref = np.maximum(energy(x, v), 0.5 * n_ch * w0)
    seg_len = max(1, (n_steps - burn_in) // n_segments)
    sums = np.zeros((n_traj, n_segments, 3, n_ch, n_ch))
    acc = np.zeros((3, n_traj)) if scalar else np.zeros((3, n_traj, n_ch, n_ch))
    counts = np.zeros(n_segments)
    trace = [energy(x, v)] if energy_trace else None

    def accumulate(x, v):
        p = m * v
        if scalar:
            acc[0] += x * x
            acc[1] += x * p
            acc[2] += p * p
        else:
            acc[0] += x[:, :, None] * x[:, None, :]
            acc[1] += x[:, :, None] * p[:, None, :]
            acc[2] += p[:, :, None] * p[:, None, :]

    def flush(seg):
        sums[:, seg] = np.moveaxis(acc, 0, 1).reshape(n_traj, 3, n_ch, n_ch)
        acc[...] = 0.0

    def segment_of(n):
        seg = (n - burn_in) // seg_len
        return seg if 0 <= seg < n_segments else -1

    seg = segment_of(0)
    if seg >= 0:
        accumulate(x, v)
        counts[seg] += 1
    # a blow-up overflows before it is caught; Unstable reports it
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps - 1):
            a0 = (xi[n] - drag(v)) / m - k2 * x
            xs = x + dt * v
            vs = v + dt * a0
            if n_lag:
                hist[1:] = hist[:-1].copy()
                hist[0] = v
            a1 = (xi[n + 1] - drag(vs)) / m - k2 * xs
            x = x + 0.5 * dt * (v + vs)
            v = v + 0.5 * dt * (a0 + a1)
            new_seg = segment_of(n + 1)
            if new_seg != seg and seg >= 0:
                flush(seg)
            seg = new_seg
            if seg >= 0:
                accumulate(x, v)
                counts[seg] += 1
            if trace is not None:
                trace.append(energy(x, v))
            if (n + 1) % ENERGY_CHECK_EVERY == 0 or n == n_steps - 2:
                e = energy(x, v) if scalar else _energy(x, v, m, w0)
                if not np.all(np.isfinite(e)) or np.any(e > ENERGY_BLOWUP * e_ref):
                    raise Unstable(f"energy exceeded {ENERGY_BLOWUP:g} x its reference at step {n + 1}")
    if seg >= 0:
        flush(seg)
    return sums, counts, (np.array(trace).T if trace is not None else None)


def _stats_from_sums(sums: NDArray, counts: NDArray, n_batches: int, meta: dict) -> TrajectoryStats:
    n_traj = sums.shape[0]
    per_traj = np.sum(sums, axis=1)  # (traj, 3, N, N)
    total = float(np.sum(counts))
    if n_traj >= n_batches:
        groups = np.array_split(np.arange(n_traj), n_batches)
        batch = np.stack([np.sum(per_traj[gidx], axis=0) / (gidx.size * total) for gidx in groups])
    else:
        seg_tot = np.sum(sums, axis=0)  # (segments, 3, N, N)
        ok = counts > 0
        batch = seg_tot[ok] / (counts[ok][:, None, None, None] * n_traj)
    mean = np.sum(per_traj, axis=0) / (n_traj * total)
    nb = batch.shape[0]
    se = np.std(batch, axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.full_like(mean, np.nan)

    def sym(a):
        return 0.5 * (a + a.T)

    cov = PhaseSpaceCovariance(sym(mean[0]), mean[1], sym(mean[2]))
    det = uncertainty_product(cov)
    dets = np.stack([uncertainty_product(PhaseSpaceCovariance(sym(b[0]), b[1], sym(b[2]))) for b in batch])
    se_det = np.std(dets, axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.full_like(det, np.nan)
    return TrajectoryStats(
        sigma_xx=cov.sigma_xx,
        sigma_xp=cov.sigma_xp,
        sigma_pp=cov.sigma_pp,
        se_xx=se[0],
        se_xp=se[1],
        se_pp=se[2],
        det=det,
        se_det=se_det,
        n_batches=nb,
        **meta,
    )


def _burn_in_steps(bank: OscillatorBank, k: KernelSet, dt: float) -> int:
    g0 = k.gamma.at(bank.omega0)
    rate = float(np.linalg.eigvalsh(0.5 * (g0 + g0.conj().T)).min()) / bank.mass
    if rate <= 0:
        raise NotDamping("damping kernel at w0 is not positive definite")
    return math.ceil(BURN_IN_RELAXATION_TIMES / rate / dt)


def _check_inputs(bank: OscillatorBank, k: KernelSet, mode: str, n_channels: int):
    if mode not in ("local", "memory"):
        raise ValueError(f"mode must be 'local' or 'memory', got {mode!r}")
    if n_channels != bank.n_modes or k.n_channels != bank.n_modes:
        raise ValueError("noise, kernel and bank must have the same number of channels")
    if classify(k) is not Classification.DAMPING:
        raise NotDamping("Langevin integration needs a damping environment")
    if mode == "local":
        model = k.model
        models = model if isinstance(model, tuple) else (model,)
        for mm in models:
            if isinstance(mm, SpectralModel) and not (
                mm.family == "ohmic" and mm.cutoff == "drude" and mm.cutoff_freq >= 20 * bank.omega0
            ):
                raise ValueError("local mode needs an ohmic-Drude kernel with cutoff >= 20 w0")


def simulate(
    bank: OscillatorBank,
    k: KernelSet,
    noise: NoiseEnsemble,
    mode: str = "local",
    burn_in: int | None = None,
    n_batches: int = N_BATCHES,
    x0=None,
    p0=None,
) -> TrajectoryStats:
    """Integrate one trajectory per noise path and measure the steady state.

    ``local`` replaces the memory integral by ``gamma~(w0) x'``, the
    Markovian damping with the same energy relaxation rate ``gamma~(w0)/m``;
    ``memory`` evaluates the convolution by product integration over a
    stored velocity history. The first ``burn_in`` steps (default ten
    relaxation times ``m / gamma~(w0)``) are discarded; moments are raw
    second moments, the steady mean being zero.

    Raises
    ------
    NotDamping
        If the kernel is not classified as Damping.
    Unstable
        If the energy grows beyond ``1e6`` times its reference value.
    """
    _check_inputs(bank, k, mode, noise.n_channels)
    if burn_in is None:
        burn_in = _burn_in_steps(bank, k, noise.dt)
    if burn_in >= noise.n_steps:
        raise ValueError(f"burn-in of {burn_in} steps leaves nothing of {noise.n_steps} steps to measure")
    sums, counts, _ = _integrate(bank, k, noise, mode, burn_in, n_batches, x0, p0)
    meta = dict(burn_in=burn_in, n_steps=noise.n_steps, n_trajectories=noise.n_trajectories, dt=noise.dt, mode=mode)
    return _stats_from_sums(sums, counts, n_batches, meta)


def energy_trace(bank: OscillatorBank, k: KernelSet, noise: NoiseEnsemble, mode: str = "memory", x0=None, p0=None):
    """Mechanical energy per trajectory and step, shape ``(n_traj, n_steps)``."""
    _check_inputs(bank, k, mode, noise.n_channels)
    _, _, trace = _integrate(bank, k, noise, mode, noise.n_steps, 1, x0, p0, energy_trace=True)
    return trace


def run_ensemble(
    bank: OscillatorBank,
    k: KernelSet,
    n_trajectories: int,
    seed: int,
    mode: str = "local",
    dt: float | None = None,
    n_steps: int | None = None,
    measure: float = 20.0,
    chunk: int = 512,
    n_batches: int = N_BATCHES,
) -> TrajectoryStats:
    """Noise generation and integration in chunks of trajectories.

    ``n_steps`` defaults to the burn-in plus ``measure`` relaxation times.
    Chunks only bound memory use: trajectory ``i`` always uses stream
    ``(seed, i)`` and sums are reduced in trajectory order, so the result
    does not depend on ``chunk``.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    dt = default_dt(bank.omega0) if dt is None else dt
    _check_inputs(bank, k, mode, k.n_channels)
    burn_in = _burn_in_steps(bank, k, dt)
    if n_steps is None:
        n_steps = burn_in + math.ceil(measure / BURN_IN_RELAXATION_TIMES * burn_in)
    if burn_in >= n_steps:
        raise ValueError(f"burn-in of {burn_in} steps leaves nothing of {n_steps} steps to measure")
    factors = noise_factors(k.nu, dt, n_steps)
    parts, counts = [], None
    for start in range(0, n_trajectories, chunk):
        stop = min(start + chunk, n_trajectories)
        samples = np.empty((stop - start, n_steps, k.n_channels))
        for j in range(start, stop):
            samples[j - start] = _synthesize(factors, n_steps, np.random.default_rng([seed, j]))
        noise = NoiseEnsemble(dt, n_steps, stop - start, samples, seed, start)
        sums, counts, _ = _integrate(bank, k, noise, mode, burn_in, n_batches, None, None)
        parts.append(sums)
    meta = dict(burn_in=burn_in, n_steps=n_steps, n_trajectories=n_trajectories, dt=dt, mode=mode)
    return _stats_from_sums(np.concatenate(parts), counts, n_batches, meta)


# ---------------------------------------------------------------------------
# damping sweeps


@dataclass(frozen=True)
class SweepRow:
    gamma0: float
    det: float
    se_det: float
    predicted_det: float
    sigma_pp: float
    se_pp: float
    predicted_pp: float


def sweep_damping(
    bank: OscillatorBank,
    model: SpectralModel,
    state: EnvironmentState,
    grid: FrequencyGrid,
    gamma0s,
    n_trajectories: int,
    seed: int,
    mode: str = "local",
    dt: float | None = None,
    measure: float = 20.0,
) -> list[SweepRow]:
    """Empirical versus weak-damping uncertainty product over ``gamma0``.

    The prediction ``(kappa~(w0) / 2 w0)^2`` does not depend on ``gamma0``;
    the departure of the empirical value measures the breakdown of the
    weak-damping limit.
    """
    if bank.n_modes != 1:
        raise ValueError("sweep_damping supports a single oscillator")
    kappa0 = float(state.fdr_kernel(np.array([bank.omega0]))[0])
    rows = []
    for g0 in gamma0s:
        mm = SpectralModel(model.family, float(g0), model.cutoff, model.cutoff_freq, model.exponent)
        k = build_kernels(mm, state, grid)
        st = run_ensemble(bank, k, n_trajectories, seed, mode=mode, dt=dt, measure=measure)
        rows.append(
            SweepRow(
                gamma0=float(g0),
                det=float(st.det[0]),
                se_det=float(st.se_det[0]),
                predicted_det=(kappa0 / (2 * bank.omega0)) ** 2,
                sigma_pp=float(st.sigma_pp[0, 0]),
                se_pp=float(st.se_pp[0, 0]),
                predicted_pp=0.5 * bank.mass * kappa0,
            )
        )
    return rows


def extrapolate_to_zero(rows: list[SweepRow]) -> tuple[float, float]:
    """Weighted linear fit ``det = a + b gamma0``; returns ``(a, se(a))``."""
    g = np.array([r.gamma0 for r in rows])
    y = np.array([r.det for r in rows])
    s = np.array([r.se_det for r in rows])
    if g.size < 2:
        raise ValueError("need at least two damping values")
    w = 1.0 / s**2
    a_mat = np.column_stack([np.ones_like(g), g]) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(a_mat, y * np.sqrt(w), rcond=None)
    cov = np.linalg.inv(a_mat.T @ a_mat)
    return float(coef[0]), float(math.sqrt(cov[0, 0]))
