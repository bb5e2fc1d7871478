import itertools

import numpy as np
import pytest
from _helpers import FS, in_range, oscillator

from psdcalib.estimators import (
    DegenerateModelError,
    FitOptions,
    _tau_hat,
    fit,
    fit_periodogram,
    fit_power_law,
    fit_two_step_1f,
    initial_guess,
    lp_offset,
    objective,
    profile_tau,
    std_errors,
)
from psdcalib.models import ProfiledParams, ShoParams, psd_eval, shape, to_profiled
from psdcalib.simulate import SimSpec, synthesize
from psdcalib.spectral import BinnedPeriodogram, Periodogram, bin_periodogram, periodogram, select_range, sqrt2_range

EXACT = FitOptions(lp_debias=False)


def _curve_binned(th: ShoParams, f, bin_size=100, fs=FS) -> BinnedPeriodogram:
    """Bin means placed exactly on the model at the bin frequencies."""
    f = np.asarray(f, float)
    return BinnedPeriodogram(f, fs * psd_eval(th, f), bin_size, fs)


def _curve_pgram(th: ShoParams, f, fs=FS) -> Periodogram:
    f = np.asarray(f, float)
    return Periodogram(f, fs * psd_eval(th, f), fs, n_source=int(round(fs / (f[1] - f[0]))))


def _rel(a, b):
    return abs(a / b - 1)


class TestProfileTau:
    def test_nls_mean_under_flat_model(self):
        assert _tau_hat("NLS", np.array([2.0, 4.0]), np.array([1.0, 1.0])) == pytest.approx(3.0)

    def test_lp_geometric_mean(self):
        assert _tau_hat("LP", np.array([2.0, 8.0]), np.array([1.0, 1.0])) == pytest.approx(4.0)

    def test_mle_perfectly_scaled(self):
        assert _tau_hat("MLE", np.array([2.0, 4.0]), np.array([2.0, 4.0])) == pytest.approx(1.0)

    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    def test_zero_denominator(self, method):
        with pytest.raises(DegenerateModelError):
            _tau_hat(method, np.array([1.0, 1.0]), np.array([0.0, 0.0]))

    @pytest.mark.parametrize("method", ["NLS", "LP"])
    def test_minimizes_objective_in_tau(self, method):
        th = oscillator(30.0)
        b = bin_periodogram(in_range(th, 50_000, 3), 25)
        eta = to_profiled(th).eta * np.array([1.001, 0.9, 1.2])
        t_hat = profile_tau(method, eta, b)

        def obj(t):
            return objective(method, ProfiledParams.from_eta(t, eta), b)

        assert obj(t_hat) < obj(t_hat * 1.001)
        assert obj(t_hat) < obj(t_hat / 1.001)

    def test_mle_minimizes_objective_in_tau(self):
        th = oscillator(30.0)
        p = in_range(th, 50_000, 4)
        eta = to_profiled(th).eta * np.array([0.999, 1.1, 0.8])
        t_hat = profile_tau("MLE", eta, p)
        vals = [objective("MLE", ProfiledParams.from_eta(t_hat * c, eta), p) for c in (0.999, 1.0, 1.001)]
        assert vals[1] < vals[0] and vals[1] < vals[2]

    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    @pytest.mark.parametrize("c", [1e-3, 7.5, 1e4])
    def test_scale_equivariance(self, method, c):
        p = in_range(oscillator(10.0), 20_000, 5)
        data = p if method == "MLE" else bin_periodogram(p, 10)
        scaled = p.scaled(c) if method == "MLE" else bin_periodogram(p.scaled(c), 10)
        eta = to_profiled(oscillator(10.0)).eta
        assert profile_tau(method, eta, scaled) == pytest.approx(c * profile_tau(method, eta, data), rel=1e-12)


class TestObjective:
    F = np.linspace(2e4, 5e4, 30)

    @pytest.mark.parametrize("method", ["NLS", "LP"])
    def test_zero_residual(self, method):
        th = oscillator(50.0)
        b = _curve_binned(th, self.F)
        assert objective(method, to_profiled(th), b) == pytest.approx(0.0, abs=1e-12 * FS**2)

    def test_mle_unit_ratio(self):
        th = oscillator(50.0)
        p = _curve_pgram(th, self.F)
        s = FS * psd_eval(th, self.F)
        assert objective("MLE", to_profiled(th), p) == pytest.approx(np.sum(1 + np.log(s)), rel=1e-12)

    def test_wrong_data_type(self):
        th = oscillator(50.0)
        with pytest.raises(ValueError):
            objective("MLE", to_profiled(th), _curve_binned(th, self.F))
        with pytest.raises(ValueError):
            objective("LP", to_profiled(th), _curve_pgram(th, self.F))
        with pytest.raises(ValueError):
            objective("OLS", to_profiled(th), _curve_pgram(th, self.F))

    def test_mle_truth_minimal_in_expectation(self, rng):
        # Whittle contrast: E[obj(theta') - obj(theta0)] >= 0 under exponential ordinates
        th = oscillator(20.0)
        f = np.arange(1e4, 5.7e4, 20.0)
        s0 = FS * psd_eval(th, f)
        pp0 = to_profiled(th)
        perturbed = [
            ProfiledParams(pp0.tau * 1.05, pp0.f0, pp0.gamma, pp0.R_w),
            ProfiledParams(pp0.tau, pp0.f0 * 1.002, pp0.gamma, pp0.R_w),
            ProfiledParams(pp0.tau, pp0.f0, pp0.gamma * 0.95, pp0.R_w),
            ProfiledParams(pp0.tau, pp0.f0, pp0.gamma, pp0.R_w * 1.5),
        ]
        diffs = np.empty((200, len(perturbed)))
        for r in range(200):
            p = Periodogram(f, s0 * rng.standard_exponential(f.size), FS, int(FS / 20.0))
            base = objective("MLE", pp0, p)
            diffs[r] = [objective("MLE", q, p) - base for q in perturbed]
        mean = diffs.mean(0)
        se = diffs.std(0, ddof=1) / np.sqrt(diffs.shape[0])
        assert np.all(mean > -3 * se)
        assert np.all(mean > 0)


class TestFit:
    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    @pytest.mark.parametrize("Q", [10.0, 100.0, 500.0])
    def test_noiseless_fixed_point(self, method, Q):
        th = oscillator(Q)
        f = np.arange(*sqrt2_range(th.f0), 20.0 if method != "MLE" else 2.0)
        data = _curve_binned(th, f) if method != "MLE" else _curve_pgram(th, f)
        res = fit(method, data, opts=EXACT, compute_cov=False)
        assert res.converged, res.message
        for name in ("f0", "Q", "k", "A_w"):
            assert _rel(getattr(res.theta_hat, name), getattr(th, name)) < 1e-6, name

    def test_noiseless_pink_fixed_point(self):
        th = oscillator(10.0, A_f=1e7, alpha=0.55)
        f = np.arange(*sqrt2_range(th.f0), 20.0)
        res = fit("LP", _curve_binned(th, f), opts=EXACT, pink=True, compute_cov=False)
        assert res.converged, res.message
        for name in ("f0", "Q", "k", "A_w", "A_f", "alpha"):
            assert _rel(getattr(res.theta_hat, name), getattr(th, name)) < 1e-5, name

    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    def test_grid_search_never_beats_optimizer(self, method, rng):
        for _ in range(20):
            th = oscillator(float(np.exp(rng.uniform(np.log(5), np.log(100)))))
            p = in_range(th, 20_000, int(rng.integers(1 << 30)))
            data = p if method == "MLE" else bin_periodogram(p, 20)
            res = fit(method, data, opts=EXACT, compute_cov=False)
            assert res.converged, res.message
            eta0 = to_profiled(th).eta
            axes = [
                eta0[0] * np.geomspace(0.98, 1.02, 11),
                eta0[1] * np.geomspace(0.5, 2.0, 11),
                eta0[2] * np.geomspace(0.2, 5.0, 11),
            ]
            best = min(
                objective(method, ProfiledParams.from_eta(profile_tau(method, e, data), e), data)
                for e in itertools.product(*axes)
            )
            assert best >= res.objective_value * (1 - 1e-12) - 1e-9

    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    def test_fit_scale_equivariance(self, method):
        p = in_range(oscillator(30.0), 50_000, 11)
        c = 123.0
        a = fit_periodogram(method, p, 50, compute_cov=False)
        b = fit_periodogram(method, p.scaled(c), 50, compute_cov=False)
        assert b.profiled.tau == pytest.approx(c * a.profiled.tau, rel=1e-6)
        np.testing.assert_allclose(b.profiled.eta, a.profiled.eta, rtol=1e-6)

    def test_lp_offset_shifts_only_the_scale(self):
        p = in_range(oscillator(30.0), 50_000, 12)
        on = fit_periodogram("LP", p, 100, compute_cov=False)
        off = fit_periodogram("LP", p, 100, opts=EXACT, compute_cov=False)
        np.testing.assert_allclose(on.profiled.eta, off.profiled.eta, rtol=1e-7)
        assert on.profiled.tau / off.profiled.tau == pytest.approx(np.exp(-lp_offset(100)), rel=1e-7)

    def test_lp_offset_value(self):
        # E[log Gamma(B, B)] by simulation
        r = np.random.default_rng(0).gamma(10, 1 / 10, 400_000)
        assert lp_offset(10) == pytest.approx(np.mean(np.log(r)), abs=2e-3)
        assert lp_offset(1) == pytest.approx(-np.euler_gamma, rel=1e-12)

    def test_nonconvergence_is_reported(self):
        p = in_range(oscillator(100.0), 100_000, 13)
        res = fit_periodogram("LP", p, 100, opts=FitOptions(max_iter=2))
        assert not res.converged
        assert res.cov is None

    def test_invalid_init(self):
        b = bin_periodogram(in_range(oscillator(10.0), 20_000, 14), 20)
        with pytest.raises(ValueError):
            fit("LP", b, init=oscillator(10.0))
        with pytest.raises(ValueError):
            fit("LP", b, init=ProfiledParams(1.0, 1.0, 1.0, 0.0), pink=True)

    def test_lp_rejects_zero_bins(self):
        f = np.linspace(1e4, 2e4, 5)
        b = BinnedPeriodogram(f, np.array([1.0, 2.0, 0.0, 1.0, 1.0]), 1, FS)
        with pytest.raises(ValueError, match="positive"):
            fit("LP", b)

    def test_initial_guess_near_truth(self):
        th = oscillator(100.0)
        b = bin_periodogram(in_range(th, 200_000, 15), 100)
        g = initial_guess(b)
        assert _rel(g.f0, th.f0) < 0.01
        assert 0.3 < g.gamma / g.f0 / th.Q < 3

    def test_profile_vs_joint_parametrization(self):
        b = bin_periodogram(in_range(oscillator(30.0), 50_000, 16), 50)
        a = fit("LP", b, compute_cov=False)
        j = fit("LP", b, profile=False, compute_cov=False)
        assert j.objective_value == pytest.approx(a.objective_value, rel=1e-8)
        for name in ("f0", "Q", "k"):
            assert _rel(getattr(j.theta_hat, name), getattr(a.theta_hat, name)) < 1e-5


class TestStdErrors:
    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    def test_positive_and_symmetric(self, method):
        p = in_range(oscillator(30.0), 100_000, 21)
        res = fit_periodogram(method, p, 100)
        assert res.converged
        assert res.cov_names == ("f0", "Q", "k", "A_w")
        np.testing.assert_array_equal(res.cov, res.cov.T)
        assert np.all(np.linalg.eigvalsh(res.cov) > -1e-12 * np.abs(res.cov).max())
        assert all(v > 0 for v in res.std_err.values())

    def test_requires_convergence(self):
        p = in_range(oscillator(30.0), 50_000, 22)
        res = fit_periodogram("LP", p, 100, opts=FitOptions(max_iter=2))
        with pytest.raises(np.linalg.LinAlgError):
            std_errors("LP", res, bin_periodogram(p, 100))

    def test_lp_and_mle_agree(self):
        p = in_range(oscillator(100.0), 1_000_000, 7)
        lp = fit_periodogram("LP", p, 100)
        mle = fit_periodogram("MLE", p, 100)
        for name in ("f0", "Q", "k"):
            assert _rel(lp.std_err[name], mle.std_err[name]) < 0.15, name

    @pytest.mark.parametrize("method", ["NLS", "LP", "MLE"])
    def test_coverage_q10(self, method):
        th = oscillator(10.0)
        hits, n = np.zeros(3), 0
        for s in range(200):
            res = fit_periodogram(method, in_range(th, 100_000, 1000 + s), 100)
            if res.cov is None:
                continue
            n += 1
            hits += [abs(getattr(res.theta_hat, q) - getattr(th, q)) <= 2 * res.std_err[q] for q in ("f0", "Q", "k")]
        assert n >= 190
        cover = hits / n
        assert np.all((cover >= 0.90) & (cover <= 0.99)), cover


class TestOneOverF:
    def test_power_law_recovery(self):
        f = np.linspace(50.0, 5000.0, 80)
        b = BinnedPeriodogram(f, FS * 1e7 / f**0.55, 100, FS)
        a_f, alpha, c = fit_power_law(b)
        assert _rel(a_f, 1e7) < 1e-3
        assert _rel(alpha, 0.55) < 1e-3
        assert c < 1e-3 * 1e7 / 5000**0.55

    def test_absent_term(self):
        th = oscillator(10.0)
        ts = synthesize(SimSpec(th, 0.5, FS, seed=31))
        full = periodogram(ts)
        lo, hi = sqrt2_range(th.f0)
        p = select_range(full, lo, hi)
        low = bin_periodogram(select_range(full, full.freqs[0], lo), 100)
        two = fit_two_step_1f(low, bin_periodogram(p, 100), compute_cov=False)
        plain = fit_periodogram("LP", p, 100, compute_cov=False)
        assert two.theta_hat.A_f < 1e-3 * th.A_w
        for name in ("f0", "Q", "k"):
            assert _rel(getattr(two.theta_hat, name), getattr(plain.theta_hat, name)) < 1e-4

    def test_two_step_removes_most_of_the_bias(self):
        th = oscillator(10.0, A_f=1e7, alpha=0.55)
        lo, hi = sqrt2_range(th.f0)
        ignored, two = [], []
        for s in range(40):
            full = periodogram(synthesize(SimSpec(th, 0.5, FS, seed=500 + s)))
            p = select_range(full, lo, hi)
            low = bin_periodogram(select_range(full, full.freqs[0], lo), 100)
            ignored.append(fit_periodogram("LP", p, 100, compute_cov=False).theta_hat.Q / th.Q - 1)
            two.append(fit_two_step_1f(low, bin_periodogram(p, 100), compute_cov=False).theta_hat.Q / th.Q - 1)
        b_ign, b_two = np.mean(ignored), np.mean(two)
        assert b_ign == pytest.approx(-0.11, abs=0.03)
        assert abs(b_two) <= 0.5 * abs(b_ign)
