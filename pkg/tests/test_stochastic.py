import math

import numpy as np
import pytest

from selfpulse import (
    DomainError,
    NumericalError,
    SDEConfig,
    SystemParams,
    estimate_psd,
    hopf_frequency,
    hopf_threshold,
    integrate,
    linear_noise_model,
    measure_phase_diffusion,
    phase_diffusion_constant,
    predict_limit_cycle,
    simulate_limit_cycle_noise,
    simulate_linear_sde,
    spectral_peak,
    spectrum_scan,
    stationary_covariance,
    to_normal_form,
)
from selfpulse.stochastic import (
    PhaseRecord,
    member_rng,
    simulate_linear_sde_batched,
)

MODEL = linear_noise_model(SystemParams(kappa=1.0, gamma=0.1, epsilon=0.13))


class TestStreams:
    def test_member_streams_deterministic_and_distinct(self):
        a = member_rng(42, 7).standard_normal(5)
        b = member_rng(42, 7).standard_normal(5)
        c = member_rng(42, 8).standard_normal(5)
        d = member_rng(43, 7).standard_normal(5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)


class TestSimulateLinearSde:
    def test_deterministic_given_seed(self):
        cfg = SDEConfig(dt=0.02, n_steps=50, n_ensemble=4, seed=9)
        assert np.array_equal(simulate_linear_sde(MODEL, cfg), simulate_linear_sde(MODEL, cfg))

    def test_batched_matches_sequential(self):
        cfg = SDEConfig(dt=0.02, n_steps=80, n_ensemble=6, seed=3, burn_in=0.5)
        a = simulate_linear_sde(MODEL, cfg)
        b = simulate_linear_sde_batched(MODEL, cfg)
        assert np.allclose(a, b, atol=1e-13)

    def test_batching_does_not_change_member_paths(self):
        cfg_all = SDEConfig(dt=0.02, n_steps=40, n_ensemble=4, seed=5)
        cfg_tail = SDEConfig(dt=0.02, n_steps=40, n_ensemble=2, seed=5)
        full = simulate_linear_sde(MODEL, cfg_all)
        tail = simulate_linear_sde(MODEL, cfg_tail, member_offset=2)
        assert np.array_equal(full[2:], tail)

    def test_zero_diffusion_stays_at_origin(self):
        quiet = linear_noise_model(SystemParams(kappa=1.0, gamma=0.2, epsilon=0.0))
        cfg = SDEConfig(dt=0.02, n_steps=100, n_ensemble=3, seed=1)
        paths = simulate_linear_sde(quiet, cfg)
        assert np.all(paths == 0.0)

    def test_stability_guard(self):
        with pytest.raises(DomainError, match="stability guard"):
            simulate_linear_sde(MODEL, SDEConfig(dt=0.5, n_steps=10, n_ensemble=2, seed=0))

    def test_stationary_covariance_matches_lyapunov(self):
        cfg = SDEConfig(dt=0.03, n_steps=4000, n_ensemble=400, seed=11, burn_in=40.0)
        paths = simulate_linear_sde_batched(MODEL, cfg)
        samples = paths[:, ::40, :].reshape(-1, 4)
        emp = samples.T @ samples / len(samples)
        ref = stationary_covariance(MODEL)
        rel = np.linalg.norm(emp - ref) / np.linalg.norm(ref)
        assert rel < 0.10


class TestEstimatePsd:
    def test_white_noise_is_flat(self):
        rng = np.random.default_rng(0)
        dt, sigma = 0.05, 1.3
        x = sigma * rng.standard_normal((400, 1024))
        om, psd = estimate_psd(x, dt)
        expected = sigma**2 * dt / (2.0 * math.pi)
        assert np.mean(psd) == pytest.approx(expected, rel=0.02)
        assert np.std(psd) / np.mean(psd) < 0.1

    def test_ou_lorentzian_half_width(self):
        lam, sigma, dt = 0.5, 0.8, 0.02
        rng = np.random.default_rng(123)
        n_paths, n_burn, n_rec = 600, 2000, 8192
        x = np.zeros(n_paths)
        sq = math.sqrt(dt)
        for _ in range(n_burn):
            x = x - dt * lam * x + sigma * sq * rng.standard_normal(n_paths)
        rec = np.empty((n_paths, n_rec))
        for k in range(n_rec):
            x = x - dt * lam * x + sigma * sq * rng.standard_normal(n_paths)
            rec[:, k] = x
        om, psd = estimate_psd(rec, dt)
        peak = psd.max()
        above = psd >= peak / 2.0
        half_width = 0.5 * (om[above].max() - om[above].min())
        assert half_width == pytest.approx(lam, rel=0.05)

    def test_segment_length_precondition(self):
        with pytest.raises(DomainError, match="16 periods"):
            estimate_psd(np.zeros((3, 100)), 0.01, omega_ref=1.0)

    def test_cross_module_peak_location(self):
        om_h = hopf_frequency(1.0, 0.1)
        dt = 0.03
        n_steps = int(math.ceil(16.2 * 2.0 * math.pi / om_h / dt))
        cfg = SDEConfig(dt=dt, n_steps=n_steps, n_ensemble=800, seed=21, burn_in=45.0)
        paths = simulate_linear_sde_batched(MODEL, cfg)
        om, psd = estimate_psd(paths[:, 1:, 2], dt, omega_ref=om_h)
        emp_peak = om[(om > 0.1)][np.argmax(psd[om > 0.1])]
        res = spectrum_scan(MODEL, 0.01, 1.5, 1500)
        ana_peak = spectral_peak(res, 2, 2).omega_peak
        bin_width = om[1] - om[0]
        assert abs(emp_peak - ana_peak) <= bin_width


def cycle_config(dt=0.02, t_final=60.0, n_ensemble=300, seed=42, burn_in=0.0):
    return SDEConfig(dt=dt, n_steps=int(round(t_final / dt)), n_ensemble=n_ensemble,
                     seed=seed, burn_in=burn_in)


class TestLimitCycleNoise:
    def test_zero_noise_reduced(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        rec = simulate_limit_cycle_noise(p, 0.05, cycle_config(n_ensemble=100),
                                         mode="reduced", noise_scale=0.0)
        om_h = hopf_frequency(1.0, 0.0)
        rates = (rec.phases[:, -1] - rec.phases[:, 0]) / rec.times[-1]
        assert np.allclose(rates, om_h, rtol=1e-12)
        assert np.allclose(rec.phases.var(axis=0), 0.0)
        fit = measure_phase_diffusion(rec)
        assert fit.d_phi_hat == 0.0

    def test_zero_noise_full_rotates_at_omega_h(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        deps = 0.01 * hopf_threshold(1.0, 0.0).epsilon_h
        rec = simulate_limit_cycle_noise(p, deps, cycle_config(dt=0.01, t_final=80.0,
                                                               n_ensemble=100),
                                         mode="full", noise_scale=0.0)
        om_h = hopf_frequency(1.0, 0.0)
        rates = (rec.phases[:, -1] - rec.phases[:, 0]) / rec.times[-1]
        # orientation of the realized flow makes atan2(u, v) decrease
        assert np.allclose(np.abs(rates), om_h, rtol=0.02)
        assert np.max(rec.phases.var(axis=0)) <= 1e-20

    def test_reduced_mode_matches_analytic(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        rec = simulate_limit_cycle_noise(p, 0.05, cycle_config(n_ensemble=400),
                                         mode="reduced")
        fit = measure_phase_diffusion(rec)
        ref = phase_diffusion_constant(1.0, 0.05).value
        assert fit.d_phi_hat == pytest.approx(ref, rel=0.15)
        assert fit.r_squared > 0.95

    def test_full_mode_small_noise(self):
        kappa, gamma, deps = 1.0, 0.0, 0.05
        p = SystemParams(kappa=kappa, gamma=gamma, epsilon=0.0)
        scale = 1e-3
        rec = simulate_limit_cycle_noise(p, deps, cycle_config(t_final=120.0,
                                                               n_ensemble=400,
                                                               burn_in=10.0),
                                         mode="full", noise_scale=scale)
        fit = measure_phase_diffusion(rec)
        asymptotic = phase_diffusion_constant(kappa, deps).value

        # corrected prediction from the settled deterministic cycle: the
        # tangential noise yields Var rate (s'/2) <1/r^2> along the orbit
        hp = hopf_threshold(kappa, gamma)
        with pytest.warns(UserWarning, match="0.2"):
            pred = predict_limit_cycle(kappa, gamma, deps)
        run = SystemParams(kappa=kappa, gamma=gamma, epsilon=hp.epsilon_h + deps)
        T = 2.0 * math.pi / pred.omega_h
        traj = integrate(pred.orbit(0.0)[0], run, (0.0, 60.0 * T), n_samples=3600)
        sel = traj.times >= 0.5 * traj.times[-1]
        u, v = to_normal_form(kappa, gamma, traj.y[sel, 0], traj.y[sel, 2])
        corrected = (rec.s * scale / 2.0) * float(np.mean(1.0 / (u**2 + v**2))) / scale

        # the realized diffusion exceeds both (amplitude-phase shear adds a
        # genuine finite-delta_eps enhancement); both stay loose envelopes
        assert fit.d_phi_hat_physical == pytest.approx(corrected, rel=0.3)
        assert fit.d_phi_hat_physical == pytest.approx(asymptotic, rel=0.45)

    def test_full_mode_converges_to_asymptotic_near_threshold(self):
        # the finite-delta_eps enhancement of the measured diffusion shrinks
        # as the bifurcation is approached
        kappa, gamma = 1.0, 0.0
        p = SystemParams(kappa=kappa, gamma=gamma, epsilon=0.0)
        devs = []
        for deps, scale in ((0.02, 2e-4), (0.1, 2e-3)):
            rec = simulate_limit_cycle_noise(
                p, deps, cycle_config(t_final=120.0, n_ensemble=400, burn_in=10.0),
                mode="full", noise_scale=scale)
            fit = measure_phase_diffusion(rec)
            ref = phase_diffusion_constant(kappa, deps).value
            devs.append(abs(fit.d_phi_hat_physical / ref - 1.0))
        assert devs[0] < devs[1]

    def test_doubling_delta_eps_halves_diffusion(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        fits = []
        for deps in (0.025, 0.05):
            rec = simulate_limit_cycle_noise(p, deps, cycle_config(n_ensemble=300),
                                             mode="reduced")
            fits.append(measure_phase_diffusion(rec))
        ratio = fits[0].d_phi_hat / fits[1].d_phi_hat
        err = ratio * (fits[0].stderr / fits[0].d_phi_hat + fits[1].stderr / fits[1].d_phi_hat)
        assert abs(ratio - 2.0) <= 3.0 * err + 0.05

    def test_radial_collapse_flagging(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        rec = simulate_limit_cycle_noise(p, 0.001, cycle_config(n_ensemble=150, seed=3),
                                         mode="reduced", noise_scale=0.05,
                                         radial_noise=True)
        assert rec.excluded > 0
        assert rec.phases.shape[0] == 150 - rec.excluded

    def test_weak_convergence_under_dt_halving(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        fits = []
        for dt in (0.02, 0.01):
            rec = simulate_limit_cycle_noise(p, 0.05, cycle_config(dt=dt, n_ensemble=300),
                                             mode="reduced")
            fits.append(measure_phase_diffusion(rec))
        assert abs(fits[0].d_phi_hat - fits[1].d_phi_hat) <= 2.0 * (fits[0].stderr
                                                                    + fits[1].stderr)

    def test_sampling_rate_guard(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        with pytest.raises(DomainError, match="samples per period"):
            simulate_limit_cycle_noise(p, 0.05, cycle_config(dt=2.0), mode="reduced")

    def test_validation(self):
        p = SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0)
        with pytest.raises(DomainError):
            simulate_limit_cycle_noise(p, -0.1, cycle_config())
        with pytest.raises(DomainError):
            simulate_limit_cycle_noise(p, 0.05, cycle_config(), mode="other")

    def test_gamma_warning(self):
        p = SystemParams(kappa=1.0, gamma=0.5, epsilon=0.0)
        with pytest.warns(UserWarning, match="kappa >> gamma"):
            simulate_limit_cycle_noise(p, 0.05, cycle_config(n_ensemble=100),
                                       mode="reduced", noise_scale=0.0)


def synthetic_record(phases, times, noise_scale=1.0, seed=0):
    return PhaseRecord(
        times=times, phases=phases, excluded=0, mode="reduced",
        params=SystemParams(kappa=1.0, gamma=0.0, epsilon=0.0),
        delta_epsilon=0.05, s=1.0, noise_scale=noise_scale,
        config=SDEConfig(dt=float(times[1] - times[0]), n_steps=len(times) - 1,
                         n_ensemble=len(phases), seed=seed),
    )


class TestMeasurePhaseDiffusion:
    def test_recovers_known_wiener_constant(self):
        rng = np.random.default_rng(5)
        D_true, dt, n, m = 0.7, 0.05, 400, 800
        steps = rng.standard_normal((n, m)) * math.sqrt(D_true * dt)
        phases = np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
        times = np.arange(m + 1) * dt
        fit = measure_phase_diffusion(synthetic_record(phases, times))
        assert abs(fit.d_phi_hat - D_true) <= 2.0 * fit.stderr

    def test_requires_enough_members(self):
        times = np.arange(11) * 0.1
        with pytest.raises(DomainError, match="100"):
            measure_phase_diffusion(synthetic_record(np.zeros((20, 11)), times))

    def test_nonlinear_growth_rejected(self):
        rng = np.random.default_rng(8)
        times = np.arange(501) * 0.1
        # saturating spread: variance approaches a constant, nothing like D*t
        xi = rng.standard_normal((300, 1))
        phases = (1.0 - np.exp(-times / 2.0))[None, :] * xi
        with pytest.raises(NumericalError, match="not linear"):
            measure_phase_diffusion(synthetic_record(phases, times))

    def test_physical_rescaling(self):
        rng = np.random.default_rng(13)
        D_sim, dt, n, m = 0.02, 0.05, 300, 600
        steps = rng.standard_normal((n, m)) * math.sqrt(D_sim * dt)
        phases = np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
        times = np.arange(m + 1) * dt
        fit = measure_phase_diffusion(synthetic_record(phases, times, noise_scale=0.01))
        assert fit.d_phi_hat_physical == pytest.approx(fit.d_phi_hat / 0.01, rel=1e-12)
