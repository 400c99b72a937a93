"""Monte-Carlo layer: linearized SDE ensembles and on-cycle phase noise.

Reproducibility contract: every ensemble member draws from its own
Philox4x64 stream with key = seed and counter high word = member index,
so (seed, member index) fully determines a path independent of batching
or ensemble size.  The analysis (bootstrap) stream uses a reserved
member index of 2**62.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .center_manifold import (
    normal_form_transform,
    predict_limit_cycle,
    radial_growth_rate,
    lyapunov_coefficient,
)
from .errors import DomainError, NumericalError
from .noise import LinearNoiseModel
from .semiclassics import (
    SystemParams,
    hopf_eigenvalues,
    hopf_frequency,
    hopf_threshold,
)

_ANALYSIS_STREAM = 2**62


def member_rng(seed: int, member: int) -> np.random.Generator:
    """Counter-based per-member stream; see the module docstring."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, member]))


@dataclass(frozen=True)
class SDEConfig:
    """Euler-Maruyama run configuration.

    ``burn_in`` is in time units and is simulated before recording
    starts; ``n_steps`` counts recorded steps.
    """

    dt: float
    n_steps: int
    n_ensemble: int
    seed: int = 0
    burn_in: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0):
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 1 or self.n_ensemble < 1:
            raise DomainError("n_steps and n_ensemble must be >= 1")
        if self.burn_in < 0:
            raise DomainError(f"burn_in must be >= 0, got {self.burn_in}")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")


def default_dt(model: LinearNoiseModel) -> float:
    """min(0.01/omega_h, 0.05/max|eig A|) for the linearized SDE."""
    om_h = hopf_frequency(model.params.kappa, model.params.gamma)
    lam = float(np.max(np.abs(np.linalg.eigvals(model.drift_A))))
    return min(0.01 / om_h, 0.05 / lam)


def default_cycle_dt(kappa: float, gamma: float) -> float:
    """min(0.01/omega_h, 0.05/max|eig|) using the marginal-point spectrum."""
    om_h = hopf_frequency(kappa, gamma)
    lam = float(np.max(np.abs(hopf_eigenvalues(kappa, gamma))))
    return min(0.01 / om_h, 0.05 / lam)


def simulate_linear_sde(model: LinearNoiseModel, config: SDEConfig,
                        member_offset: int = 0) -> np.ndarray:
    """Euler-Maruyama ensemble of the linearized equations.

    Independent real unit-variance Gaussian increments feed the two
    nonzero noise channels through sqrt(D_ii); because A and D are real
    at the fixed point the paths are real and the conjugate-pair
    components agree in distribution.

    Returns
    -------
    ndarray, shape (n_ensemble, n_steps + 1, 4)
        Recorded paths, including the post-burn-in initial state.
    """
    A = model.drift_A
    D = np.diag(model.diffusion_D)
    lam = float(np.max(np.abs(np.linalg.eigvals(A))))
    if config.dt * lam > 0.05:
        raise DomainError(
            f"stability guard violated: dt*max|eig A| = {config.dt * lam:.4g} > 0.05"
        )
    sqD = np.sqrt(np.clip(D[:2], 0.0, None))  # channels 2, 3 carry no noise
    n_burn = int(round(config.burn_in / config.dt))
    n_rec = config.n_steps
    dt = config.dt
    sq = math.sqrt(dt)

    out = np.empty((config.n_ensemble, n_rec + 1, 4))
    # Per-member noise arrays keep the stream layout independent of batching.
    for m in range(config.n_ensemble):
        rng = member_rng(config.seed, member_offset + m)
        xi = rng.standard_normal((n_burn + n_rec, 2))
        x = np.zeros(4)
        for k in range(n_burn):
            x = x + dt * (-A @ x)
            x[0] += sqD[0] * sq * xi[k, 0]
            x[1] += sqD[1] * sq * xi[k, 1]
        out[m, 0] = x
        for k in range(n_rec):
            x = x + dt * (-A @ x)
            x[0] += sqD[0] * sq * xi[n_burn + k, 0]
            x[1] += sqD[1] * sq * xi[n_burn + k, 1]
            out[m, k + 1] = x
    return out


def simulate_linear_sde_batched(model: LinearNoiseModel, config: SDEConfig,
                                member_offset: int = 0) -> np.ndarray:
    """Vectorized variant of ``simulate_linear_sde`` (same streams, same paths).

    Steps the whole ensemble at once; noise per member is still drawn
    from that member's own stream, so results are bit-identical to the
    sequential version.
    """
    A = model.drift_A
    D = np.diag(model.diffusion_D)
    lam = float(np.max(np.abs(np.linalg.eigvals(A))))
    if config.dt * lam > 0.05:
        raise DomainError(
            f"stability guard violated: dt*max|eig A| = {config.dt * lam:.4g} > 0.05"
        )
    sqD = np.sqrt(np.clip(D[:2], 0.0, None))
    n_burn = int(round(config.burn_in / config.dt))
    n_rec = config.n_steps
    dt = config.dt
    sq = math.sqrt(dt)
    n = config.n_ensemble

    xi = np.empty((n, n_burn + n_rec, 2))
    for m in range(n):
        xi[m] = member_rng(config.seed, member_offset + m).standard_normal((n_burn + n_rec, 2))

    x = np.zeros((n, 4))
    out = np.empty((n, n_rec + 1, 4))
    mAT = -A.T
    for k in range(n_burn):
        x = x + dt * (x @ mAT)
        x[:, 0] += sqD[0] * sq * xi[:, k, 0]
        x[:, 1] += sqD[1] * sq * xi[:, k, 1]
    out[:, 0] = x
    for k in range(n_rec):
        x = x + dt * (x @ mAT)
        x[:, 0] += sqD[0] * sq * xi[:, n_burn + k, 0]
        x[:, 1] += sqD[1] * sq * xi[:, n_burn + k, 1]
        out[:, k + 1] = x
    return out


def stationary_covariance(model: LinearNoiseModel) -> np.ndarray:
    """Stationary covariance from the Lyapunov equation A S + S A^T = D."""
    return solve_continuous_lyapunov(model.drift_A, model.diffusion_D)


def estimate_psd(paths: np.ndarray, dt: float, omega_ref: float = None):
    """Averaged Hann-windowed periodogram of one recorded component.

    Normalization matches the two-sided 1/(2 pi) convention of the
    analytic spectrum: for a stationary signal the estimate converges
    to (1/2pi) times the Fourier transform of the autocorrelation.

    Parameters
    ----------
    paths : ndarray, shape (n_paths, n_samples)
        Stationary (post burn-in) segments, one row per path.
    dt : float
        Sample spacing.
    omega_ref : float, optional
        When given, the segment must cover at least 16 periods of this
        angular frequency, else DomainError.

    Returns
    -------
    (omega_grid, psd) : ndarray pair, frequencies ascending.
    """
    paths = np.atleast_2d(np.asarray(paths))
    n_samples = paths.shape[1]
    if omega_ref is not None:
        needed = 16.0 * 2.0 * math.pi / omega_ref
        have = n_samples * dt
        if have < needed:
            raise DomainError(
                f"segment of {have:.4g} time units is shorter than 16 periods "
                f"({needed:.4g}) of omega={omega_ref:.4g}"
            )
    w = np.hanning(n_samples)
    wpow = float((w**2).sum())
    X = np.fft.fft(paths * w, axis=1) * dt
    psd = (np.abs(X) ** 2).mean(axis=0) / (2.0 * math.pi * dt * wpow)
    omega = 2.0 * math.pi * np.fft.fftfreq(n_samples, d=dt)
    order = np.argsort(omega)
    return omega[order], psd[order]


@dataclass(frozen=True)
class PhaseRecord:
    """Unwrapped on-cycle phases, one row per surviving ensemble member."""

    times: np.ndarray
    phases: np.ndarray
    excluded: int
    mode: str
    params: SystemParams
    delta_epsilon: float
    s: float
    noise_scale: float
    config: SDEConfig


def simulate_limit_cycle_noise(params: SystemParams, delta_epsilon: float,
                               config: SDEConfig, mode: str = "reduced",
                               noise_scale: float = 1.0,
                               radial_noise: bool = False) -> PhaseRecord:
    """Phase noise on the limit cycle at drive epsilon_h + delta_epsilon.

    mode="reduced" integrates the planar normal-form pair
        dr = (d*deps*r + a*r^3) dt [+ sqrt(s'/2) dW_r]
        dphi = omega_h dt + (1/A) sqrt(s'/2) dW_phi
    with s' = noise_scale * s and s = 1/kappa the on-cycle intensity.
    The radial noise term is opt-in: at the physical intensity it
    dwarfs the radial confinement for any moderate delta_epsilon and
    knocks every member off the cycle, so the default simulates the
    on-cycle phase equation with deterministic radial relaxation.
    With ``radial_noise`` enabled, members whose radius collapses to
    zero are flagged and excluded.

    mode="full" integrates the 4-dim semiclassical flow with the same
    white noise injected along the center-plane directions of the
    normal-form transform, and reads the phase as atan2(u, v) through
    the inverse transform.  The realized rotation makes this phase
    decrease at |omega_h| for this flow's orientation; only the variance
    growth enters the diffusion fit.

    The fitted slope scales linearly in the injected intensity, so runs
    at reduced ``noise_scale`` (useful for the full mode, where the
    physical s would overwhelm a small cycle) estimate the same
    constant; ``measure_phase_diffusion`` reports the value rescaled to
    the physical s alongside the raw fit.
    """
    if not (delta_epsilon > 0):
        raise DomainError(f"delta_epsilon must be > 0, got {delta_epsilon}")
    if mode not in ("reduced", "full"):
        raise DomainError(f"mode must be 'reduced' or 'full', got {mode!r}")
    if noise_scale < 0:
        raise DomainError(f"noise_scale must be >= 0, got {noise_scale}")
    kappa, gamma = params.kappa, params.gamma
    if gamma > 0.1 * kappa:
        warnings.warn(
            f"gamma={gamma:.4g} is not small against kappa={kappa:.4g}; the on-cycle "
            "noise intensity s = 1/kappa is derived for kappa >> gamma",
            stacklevel=2,
        )
    om_h = hopf_frequency(kappa, gamma)
    samples_per_period = 2.0 * math.pi / (om_h * config.dt)
    if samples_per_period <= 8.0:
        raise DomainError(
            f"dt={config.dt} gives {samples_per_period:.2f} samples per period; "
            "phase unwrapping needs more than 8"
        )

    s = 1.0 / kappa
    s_sim = noise_scale * s
    sig = math.sqrt(s_sim / 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # amplitude warning re-checked by callers
        pred = predict_limit_cycle(kappa, gamma, delta_epsilon)
    A_amp = pred.amplitude_A
    dt = config.dt
    sq = math.sqrt(dt)
    n_burn = int(round(config.burn_in / dt))
    n_rec = config.n_steps
    n = config.n_ensemble

    times = np.arange(n_rec + 1) * dt

    if mode == "reduced":
        d = radial_growth_rate(kappa, gamma)
        a = lyapunov_coefficient(kappa, gamma, cross_check=False)
        phases = np.empty((n, n_rec + 1))
        alive = np.ones(n, dtype=bool)
        r = np.full(n, A_amp)
        phi = np.zeros(n)
        xi_r = np.empty((n, n_burn + n_rec))
        xi_p = np.empty((n, n_burn + n_rec))
        for m in range(n):
            z = member_rng(config.seed, m).standard_normal((n_burn + n_rec, 2))
            xi_r[m] = z[:, 0]
            xi_p[m] = z[:, 1]
        sig_r = sig if radial_noise else 0.0
        for k in range(n_burn + n_rec):
            r = r + dt * (d * delta_epsilon * r + a * r**3) + sig_r * sq * xi_r[:, k]
            phi = phi + dt * om_h + (sig / A_amp) * sq * xi_p[:, k]
            alive &= r > 0.0
            if k >= n_burn:
                phases[:, k - n_burn + 1] = phi
            if k == n_burn - 1:
                phases[:, 0] = phi
        if n_burn == 0:
            phases[:, 0] = 0.0
        kept = phases[alive]
        return PhaseRecord(times=times, phases=kept, excluded=int(n - alive.sum()),
                           mode=mode, params=params, delta_epsilon=delta_epsilon,
                           s=s, noise_scale=noise_scale, config=config)

    # full mode
    eps = hopf_threshold(kappa, gamma).epsilon_h + delta_epsilon
    run = SystemParams(kappa=kappa, gamma=gamma, epsilon=eps)
    T, Tinv = normal_form_transform(kappa, gamma)
    # Columns of T give the (u, v) directions in the (beta_r, alpha_r) plane.
    dir_u = np.array([T[0, 0], 0.0, T[1, 0], 0.0])
    dir_v = np.array([T[0, 1], 0.0, T[1, 1], 0.0])
    y = np.tile(pred.orbit(0.0)[0], (n, 1))

    xi_u = np.empty((n, n_burn + n_rec))
    xi_v = np.empty((n, n_burn + n_rec))
    for m in range(n):
        z = member_rng(config.seed, m).standard_normal((n_burn + n_rec, 2))
        xi_u[m] = z[:, 0]
        xi_v[m] = z[:, 1]

    def drift(yy):
        br, bi, ar, ai = yy[:, 0], yy[:, 1], yy[:, 2], yy[:, 3]
        g2, k2 = gamma / 2.0, kappa / 2.0
        return np.stack([
            2.0 * (bi * ar - br * ai) - g2 * br,
            2.0 * (br * ar + bi * ai) - g2 * bi - eps,
            -2.0 * br * bi - k2 * ar,
            br * br - bi * bi - k2 * ai,
        ], axis=-1)

    def wrapped_angle(yy):
        u = Tinv[0, 0] * yy[:, 0] + Tinv[0, 1] * yy[:, 2]
        v = Tinv[1, 0] * yy[:, 0] + Tinv[1, 1] * yy[:, 2]
        return np.arctan2(u, v)

    phases = np.empty((n, n_rec + 1))
    for k in range(n_burn):
        y = y + dt * drift(y) + sig * sq * (np.outer(xi_u[:, k], dir_u) + np.outer(xi_v[:, k], dir_v))
    prev = wrapped_angle(y)
    phi = prev.copy()
    phases[:, 0] = phi
    for k in range(n_rec):
        kk = n_burn + k
        y = y + dt * drift(y) + sig * sq * (np.outer(xi_u[:, kk], dir_u) + np.outer(xi_v[:, kk], dir_v))
        ang = wrapped_angle(y)
        jump = ang - prev
        jump = (jump + math.pi) % (2.0 * math.pi) - math.pi  # nearest-branch continuation
        phi = phi + jump
        prev = ang
        phases[:, k + 1] = phi
    phases -= phases[:, :1]
    return PhaseRecord(times=times, phases=phases, excluded=0, mode=mode,
                       params=params, delta_epsilon=delta_epsilon, s=s,
                       noise_scale=noise_scale, config=config)


@dataclass(frozen=True)
class PhaseDiffusionFit:
    """Fit of Var[phi(t)] = D_phi * t (and its rescaling to physical s)."""

    d_phi_hat: float
    stderr: float
    d_phi_hat_physical: float
    stderr_physical: float
    r_squared: float
    n_members: int


def measure_phase_diffusion(record: PhaseRecord, n_bootstrap: int = 200) -> PhaseDiffusionFit:
    """Least-squares slope of the ensemble phase variance versus time.

    The variance at each time is taken across members (about the
    ensemble mean, which removes the common deterministic drift) and
    fitted through the origin.  The standard error comes from an
    ensemble bootstrap; sub-linear or saturating growth (R^2 < 0.9)
    raises NumericalError.
    """
    n = record.phases.shape[0]
    if n < 100:
        raise DomainError(f"need >= 100 surviving members, got {n}")
    t = record.times
    dphi = record.phases - record.phases[:, :1]

    def slope_of(rows):
        var = rows.var(axis=0, ddof=1)
        return float((var @ t) / (t @ t)), var

    d_hat, var = slope_of(dphi)
    # Identical (noise-free) members leave only summation dust in var.
    floor = (1e-12 * max(1.0, float(np.max(np.abs(record.phases))))) ** 2
    if float(var.max(initial=0.0)) <= floor:
        return PhaseDiffusionFit(d_phi_hat=0.0, stderr=0.0, d_phi_hat_physical=0.0,
                                 stderr_physical=0.0, r_squared=1.0, n_members=n)
    fit = d_hat * t
    ss_res = float(((var - fit) ** 2).sum())
    ss_tot = float(((var - var.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    rng = member_rng(record.config.seed, _ANALYSIS_STREAM)
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n, size=n)
        boots[b], _ = slope_of(dphi[idx])
    stderr = float(boots.std(ddof=1))

    if r2 < 0.9:
        raise NumericalError(
            f"variance growth is not linear (R^2 = {r2:.3f} < 0.9); the diffusion "
            "regime assumption is violated for this configuration"
        )
    scale = record.noise_scale if record.noise_scale > 0 else 1.0
    return PhaseDiffusionFit(
        d_phi_hat=d_hat,
        stderr=stderr,
        d_phi_hat_physical=d_hat / scale,
        stderr_physical=stderr / scale,
        r_squared=r2,
        n_members=n,
    )


def phase_record_to_csv(record: PhaseRecord, path) -> None:
    """Write `t,var_phi,n_effective` for the recorded window."""
    dphi = record.phases - record.phases[:, :1]
    var = dphi.var(axis=0, ddof=1)
    n_eff = record.phases.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,var_phi,n_effective\n")
        for t, v in zip(record.times, var):
            fh.write(f"{format(t, '.17g')},{format(v, '.17g')},{n_eff}\n")
