"""Tests for the Gibbs conditionals, chains and chain selection."""

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from sparse_gfa.exceptions import InvalidInputError, NoResultError
from sparse_gfa.gibbs import (
    ChainTrace,
    SamplingSchedule,
    activity_log_odds,
    chain_selection,
    posterior_summary,
    run_chain,
    run_chains,
    sample_activity,
    sample_ard,
    sample_latents,
    sample_loadings,
    sample_noise,
    sample_pi,
    select_chain,
    sweep,
)
from sparse_gfa.model import (
    ModelConfig,
    ModelState,
    MultiViewDataset,
    initialize_state,
    joint_log_density,
    sample_prior,
    simulate_views,
)


def make_state(Z, W, H, pi=None, alpha=None, tau=None):
    k = Z.shape[1]
    return ModelState(
        Z=np.asarray(Z, dtype=float),
        W=[np.asarray(w, dtype=float) for w in W],
        H=np.asarray(H, dtype=np.int8),
        pi=np.full(k, 0.5) if pi is None else np.asarray(pi, dtype=float),
        alpha=alpha if alpha is not None else [np.ones_like(w, dtype=float) for w in W],
        tau=tau if tau is not None else [np.ones(np.shape(w)[0]) for w in W],
    )


def within(sample, expected_mean, expected_var, n_se=4.0):
    se = np.sqrt(expected_var / len(sample))
    return abs(np.mean(sample) - expected_mean) < n_se * se


def toy_dataset(seed=0, n=8, dims=(3, 4)):
    rng = np.random.default_rng(seed)
    return MultiViewDataset.from_arrays([rng.standard_normal((n, d)) for d in dims])


class TestSamplingSchedule:
    """Test the sampling schedule."""

    def test_default_retained_states(self):
        """Test 5000 burn-in, 1000 samples, thinning 5."""
        schedule = SamplingSchedule()
        assert (schedule.n_chains, schedule.burn_in) == (10, 5000)
        assert schedule.n_retained == 200

    def test_invalid_counts(self):
        """Test count checks."""
        with pytest.raises(InvalidInputError):
            SamplingSchedule(thinning=0).validate()
        with pytest.raises(InvalidInputError):
            SamplingSchedule(burn_in=-1).validate()
        SamplingSchedule(burn_in=0).validate()

    def test_chain_seeds(self):
        """Test that chain seeds are deterministic and distinct."""
        schedule = SamplingSchedule(seed=3)
        seeds = [schedule.chain_seed(i) for i in range(5)]
        assert seeds == [SamplingSchedule(seed=3).chain_seed(i) for i in range(5)]
        assert len(set(seeds)) == 5
        assert SamplingSchedule(seed=4).chain_seed(0) != seeds[0]


class TestSampleLatents:
    """Test the latent score conditional."""

    def test_scalar_conditional(self):
        """Test N(1, 1/2) for w=1, tau=1, x=2."""
        n = 20000
        dataset = MultiViewDataset.from_arrays([np.full((n, 1), 2.0), np.zeros((n, 1))])
        state = make_state(np.zeros((n, 1)), [[[1.0]], [[0.0]]], [[1], [0]])

        z = sample_latents(state, dataset, np.random.default_rng(0))[:, 0]

        assert within(z, 1.0, 0.5)
        assert np.var(z) == pytest.approx(0.5, rel=0.05)

    def test_prior_when_loadings_vanish(self):
        """Test N(0, I) draws when every loading is zero."""
        n = 10000
        dataset = MultiViewDataset.from_arrays([np.ones((n, 2)), np.ones((n, 3))])
        state = make_state(np.zeros((n, 2)), [np.zeros((2, 2)), np.zeros((3, 2))], np.zeros((2, 2)))

        z = sample_latents(state, dataset, np.random.default_rng(1))

        for k in range(2):
            assert within(z[:, k], 0.0, 1.0)

    def test_grid_quadrature(self):
        """Test moments of a two-view scalar conditional against quadrature."""
        n = 20000
        x0, x1 = 0.7, -1.3
        w0, w1, t0, t1 = 1.2, -0.5, 2.0, 0.5
        dataset = MultiViewDataset.from_arrays([np.full((n, 1), x0), np.full((n, 1), x1)])
        state = make_state(
            np.zeros((n, 1)),
            [[[w0]], [[w1]]],
            [[1], [1]],
            tau=[np.array([t0]), np.array([t1])],
        )

        grid = np.linspace(-6, 6, 20001)
        log_p = (
            stats.norm.logpdf(grid)
            + stats.norm.logpdf(x0, w0 * grid, 1 / np.sqrt(t0))
            + stats.norm.logpdf(x1, w1 * grid, 1 / np.sqrt(t1))
        )
        p = np.exp(log_p - log_p.max())
        p /= integrate.trapezoid(p, grid)
        mean = integrate.trapezoid(grid * p, grid)
        var = integrate.trapezoid((grid - mean) ** 2 * p, grid)

        z = sample_latents(state, dataset, np.random.default_rng(2))[:, 0]

        assert within(z, mean, var)
        assert np.var(z) == pytest.approx(var, rel=0.05)


class TestSampleLoadings:
    """Test the loading conditional."""

    def test_prior_when_scores_vanish(self):
        """Test N(0, 1/alpha) draws for a zero score column."""
        d = 20000
        dataset = MultiViewDataset.from_arrays([np.ones((3, d)), np.ones((3, 1))])
        state = make_state(
            np.zeros((3, 1)),
            [np.ones((d, 1)), np.zeros((1, 1))],
            [[1], [0]],
            alpha=[np.full((d, 1), 4.0), np.ones((1, 1))],
        )

        w = sample_loadings(state, dataset, np.random.default_rng(0))[0][:, 0]

        assert within(w, 0.0, 0.25)
        assert np.var(w) == pytest.approx(0.25, rel=0.05)

    def test_inactive_columns_stay_zero(self):
        """Test the spike: H=0 columns are left exactly zero."""
        dataset = toy_dataset()
        state = make_state(
            np.ones((8, 2)),
            [np.hstack([np.ones((3, 1)), np.zeros((3, 1))]), np.ones((4, 2))],
            [[1, 0], [1, 1]],
        )

        W = sample_loadings(state, dataset, np.random.default_rng(1))

        assert np.all(W[0][:, 1] == 0.0)
        assert np.all(W[1] != 0.0)

    def test_grid_quadrature(self):
        """Test the scalar conditional moments against quadrature."""
        d = 20000
        z = np.array([0.5, -1.0, 2.0])
        x = np.array([1.0, -0.3, 2.5])
        alpha, tau = 0.5, 2.0
        dataset = MultiViewDataset.from_arrays([np.tile(x[:, None], (1, d)), np.zeros((3, 1))])
        state = make_state(
            z[:, None],
            [np.ones((d, 1)), np.zeros((1, 1))],
            [[1], [0]],
            alpha=[np.full((d, 1), alpha), np.ones((1, 1))],
            tau=[np.full(d, tau), np.ones(1)],
        )

        grid = np.linspace(-6, 6, 20001)
        log_p = stats.norm.logpdf(grid, 0, 1 / np.sqrt(alpha)) + np.sum(
            stats.norm.logpdf(x[:, None], z[:, None] * grid, 1 / np.sqrt(tau)), axis=0
        )
        p = np.exp(log_p - log_p.max())
        p /= integrate.trapezoid(p, grid)
        mean = integrate.trapezoid(grid * p, grid)
        var = integrate.trapezoid((grid - mean) ** 2 * p, grid)

        w = sample_loadings(state, dataset, np.random.default_rng(2))[0][:, 0]

        assert within(w, mean, var)
        assert np.var(w) == pytest.approx(var, rel=0.05)


class TestActivity:
    """Test the collapsed activity conditional."""

    def test_log_odds_against_numerical_marginal(self):
        """Test the closed form against quadrature over the loading."""
        z = np.array([0.8, -0.4, 1.1, 0.2])
        r = np.array([[0.9], [-0.1], [1.4], [0.5]])
        alpha, tau, pi = 1.5, 2.0, 0.3

        def integrand(w):
            return stats.norm.pdf(w, 0, 1 / np.sqrt(alpha)) * np.prod(
                stats.norm.pdf(r[:, 0], z * w, 1 / np.sqrt(tau))
            )

        slab, _ = integrate.quad(integrand, -20, 20, points=[0.0], epsabs=0, epsrel=1e-12)
        spike = np.prod(stats.norm.pdf(r[:, 0], 0.0, 1 / np.sqrt(tau)))
        expected = np.log(slab / spike) + np.log(pi / (1 - pi))

        log_odds = activity_log_odds(z, r, np.array([alpha]), np.array([tau]), pi)

        assert log_odds == pytest.approx(expected, rel=1e-6)

    def test_strong_signal_is_active(self):
        """Test that a strongly expressed component is almost surely on."""
        rng = np.random.default_rng(0)
        z = rng.standard_normal(30)
        w = np.array([2.0, -1.5, 1.0])
        r = np.outer(z, w) + 0.1 * rng.standard_normal((30, 3))

        log_odds = activity_log_odds(z, r, np.ones(3), np.full(3, 100.0), 0.5)

        assert expit(log_odds) > 0.99

    def test_vanishing_pi_switches_off(self):
        """Test that pi near 0 forces the gate and its column to zero."""
        dataset = toy_dataset(1)
        state = initialize_state(ModelConfig(K=2), dataset, seed=2)
        state.pi = np.array([1e-300, 1e-300])

        H, W = sample_activity(state, dataset, np.random.default_rng(3))

        assert np.all(H == 0)
        assert all(np.all(w == 0) for w in W)

    def test_activation_rate_matches_odds(self):
        """Test the empirical gate rate on no-signal data against the closed form."""
        x0 = np.array([[0.3], [-0.3]])
        x1 = np.array([[0.5], [-0.5]])
        dataset = MultiViewDataset.from_arrays([x0, x1])
        z = np.array([1.0, -1.0])
        state = make_state(z[:, None], [[[0.4]], [[0.0]]], [[1], [0]], pi=[0.5])

        probs = [
            expit(activity_log_odds(z, x, np.ones(1), np.ones(1), 0.5)) for x in (x0, x1)
        ]
        rng = np.random.default_rng(4)
        draws = np.array([sample_activity(state, dataset, rng)[0][:, 0] for _ in range(10000)])

        for m in range(2):
            assert within(draws[:, m], probs[m], probs[m] * (1 - probs[m]))

    def test_spike_consistency_after_draw(self):
        """Test that gates and loading columns agree after the draw."""
        dataset = toy_dataset(2)
        state = initialize_state(ModelConfig(K=4), dataset, seed=5)
        rng = np.random.default_rng(6)
        for _ in range(20):
            state.H, state.W = sample_activity(state, dataset, rng)
            assert state.spike_consistent()


class TestPiArdNoise:
    """Test the remaining conjugate conditionals."""

    def _gates(self, n_views, k, active):
        W = [np.full((1, k), 1.0 if active else 0.0) for _ in range(n_views)]
        H = np.full((n_views, k), 1 if active else 0)
        return make_state(np.zeros((2, k)), W, H)

    def test_pi_all_active(self):
        """Test Beta(6, 1) for a=b=1, M=5, s=5."""
        state = self._gates(5, 20000, active=True)
        pi = sample_pi(state, ModelConfig(), np.random.default_rng(0))
        assert within(pi, 6 / 7, stats.beta(6, 1).var())

    def test_pi_none_active(self):
        """Test Beta(1, 6) for a=b=1, M=5, s=0."""
        state = self._gates(5, 20000, active=False)
        pi = sample_pi(state, ModelConfig(), np.random.default_rng(1))
        assert within(pi, 1 / 7, stats.beta(1, 6).var())
        assert np.all((pi > 0) & (pi < 1))

    def test_ard_active_zero_loading(self):
        """Test Gamma(a + 1/2, b) for an active zero entry."""
        config = ModelConfig(a_alpha=2.0, b_alpha=3.0)
        d = 20000
        state = make_state(np.zeros((2, 1)), [np.zeros((d, 1)), np.zeros((1, 1))], [[1], [0]])

        alpha = sample_ard(state, config, np.random.default_rng(2))[0][:, 0]

        assert within(alpha, 2.5 / 3.0, 2.5 / 9.0)

    def test_ard_inactive_prior(self):
        """Test prior draws for inactive components."""
        config = ModelConfig(a_alpha=2.0, b_alpha=3.0)
        d = 20000
        state = make_state(np.zeros((2, 1)), [np.zeros((d, 1)), np.zeros((1, 1))], [[0], [0]])

        alpha = sample_ard(state, config, np.random.default_rng(3))[0][:, 0]

        assert within(alpha, 2.0 / 3.0, 2.0 / 9.0)

    def test_noise_perfect_fit(self):
        """Test Gamma(a + N/2, b) when residuals vanish."""
        config = ModelConfig(a_tau=2.0, b_tau=3.0)
        d, n = 20000, 4
        z = np.array([[1.0], [-1.0], [0.5], [2.0]])
        w = np.linspace(-1, 1, d)[:, None]
        dataset = MultiViewDataset.from_arrays([z @ w.T, np.zeros((n, 1))])
        state = make_state(z, [w, np.zeros((1, 1))], [[1], [0]])

        tau = sample_noise(state, dataset, config, np.random.default_rng(4))[0]

        assert within(tau, 4.0 / 3.0, 4.0 / 9.0)

    def test_noise_constant_data(self):
        """Test rate b + N c^2 / 2 for constant data and zero loadings."""
        config = ModelConfig(a_tau=2.0, b_tau=3.0)
        d, n, c = 20000, 4, 0.5
        dataset = MultiViewDataset.from_arrays([np.full((n, d), c), np.zeros((n, 1))])
        state = make_state(np.ones((n, 1)), [np.zeros((d, 1)), np.zeros((1, 1))], [[0], [0]])

        tau = sample_noise(state, dataset, config, np.random.default_rng(5))[0]

        shape, rate = 2.0 + n / 2, 3.0 + n * c**2 / 2
        assert within(tau, shape / rate, shape / rate**2)


class TestConjugateRandomSettings:
    """Test pi, ARD and noise draws against closed-form means over random settings."""

    N_DRAWS = 10000

    @pytest.mark.parametrize("setting", range(20))
    def test_pi(self, setting):
        """Test Beta(a + s, b + M - s) means."""
        rng = np.random.default_rng(setting)
        n_views = int(rng.integers(2, 8))
        s = int(rng.integers(0, n_views + 1))
        a, b = rng.uniform(0.2, 5.0, size=2)
        k = self.N_DRAWS
        H = np.zeros((n_views, k), dtype=np.int8)
        H[:s] = 1
        state = make_state(np.zeros((2, k)), [h[None, :].astype(float) for h in H], H)

        pi = sample_pi(state, ModelConfig(a_pi=a, b_pi=b), np.random.default_rng(100 + setting))

        posterior = stats.beta(a + s, b + n_views - s)
        assert within(pi, posterior.mean(), posterior.var())

    @pytest.mark.parametrize("setting", range(20))
    def test_ard(self, setting):
        """Test Gamma(a + H/2, b + H w^2 / 2) means."""
        rng = np.random.default_rng(setting)
        active = bool(rng.random() < 0.5)
        w = float(rng.normal(0.0, 2.0)) if active else 0.0
        a, b = rng.uniform(0.2, 5.0, size=2)
        d = self.N_DRAWS
        state = make_state(
            np.zeros((2, 1)), [np.full((d, 1), w), np.zeros((1, 1))], [[int(active)], [0]]
        )

        alpha = sample_ard(state, ModelConfig(a_alpha=a, b_alpha=b), np.random.default_rng(100 + setting))

        shape, rate = a + 0.5 * active, b + 0.5 * w**2
        assert within(alpha[0][:, 0], shape / rate, shape / rate**2)

    @pytest.mark.parametrize("setting", range(20))
    def test_noise(self, setting):
        """Test Gamma(a + N/2, b + sum of squared residuals / 2) means."""
        rng = np.random.default_rng(setting)
        n = int(rng.integers(2, 12))
        a, b = rng.uniform(0.2, 5.0, size=2)
        d = self.N_DRAWS
        z = rng.standard_normal((n, 1))
        w = float(rng.normal())
        column = rng.normal(0.0, rng.uniform(0.1, 3.0), size=n)
        dataset = MultiViewDataset.from_arrays([np.tile(column[:, None], (1, d)), np.zeros((n, 1))])
        state = make_state(z, [np.full((d, 1), w), np.zeros((1, 1))], [[1], [0]])

        tau = sample_noise(state, dataset, ModelConfig(a_tau=a, b_tau=b), np.random.default_rng(100 + setting))

        shape = a + n / 2
        rate = b + 0.5 * np.sum((column - z[:, 0] * w) ** 2)
        assert within(tau[0], shape / rate, shape / rate**2)


class TestSweep:
    """Test full sweeps."""

    def test_preserves_invariants(self):
        """Test shapes and spike consistency over several sweeps."""
        dataset = toy_dataset(3)
        config = ModelConfig(K=3)
        state = initialize_state(config, dataset, seed=0)
        rng = np.random.default_rng(1)
        for _ in range(10):
            state = sweep(state, dataset, config, rng)
            state.validate(dataset)
        assert state.Z.shape == (8, 3)

    def test_spike_consistency_on_random_instances(self):
        """Test H = 0 exactly on all-zero loading columns over 1000 random sweeps."""
        for instance in range(100):
            rng = np.random.default_rng(instance)
            n = int(rng.integers(3, 15))
            arrays = []
            for d in rng.integers(1, 7, size=int(rng.integers(2, 5))):
                x = rng.standard_normal((n, d)) * 10.0 ** rng.uniform(-2, 2)
                x[:, rng.random(d) < 0.2] = 0.0
                arrays.append(x)
            dataset = MultiViewDataset.from_arrays(arrays)
            prior = float(rng.choice([1e-3, 1.0]))
            config = ModelConfig(
                K=int(rng.integers(1, 6)), a_alpha=prior, b_alpha=prior, a_tau=prior, b_tau=prior
            )
            state = initialize_state(config, dataset, seed=instance)

            for _ in range(10):
                state = sweep(state, dataset, config, rng)
                assert state.spike_consistent(), f"instance {instance}"
                state.validate(dataset)

    def test_log_density_stays_in_band(self):
        """Test long-run log densities against the generating state's value.

        The band is the density at the generating state plus or minus three
        standard deviations of forward-simulated joint densities.
        """
        config = ModelConfig(K=2, a_alpha=2.0, b_alpha=2.0, a_tau=5.0, b_tau=5.0)
        n, dims = 40, [5, 4]
        forward = []
        for j in range(200):
            drawn = sample_prior(config, n, dims, seed=j)
            views = MultiViewDataset.from_arrays(simulate_views(drawn, seed=1000 + j))
            forward.append(joint_log_density(drawn, views, config))
        width = 3 * np.std(forward)

        truth = sample_prior(config, n, dims, seed=500)
        dataset = MultiViewDataset.from_arrays(simulate_views(truth, seed=501))
        center = joint_log_density(truth, dataset, config)

        state = initialize_state(config, dataset, seed=0)
        rng = np.random.default_rng(1)
        densities = []
        for i in range(1000):
            state = sweep(state, dataset, config, rng)
            if i >= 300:
                densities.append(joint_log_density(state, dataset, config))
        densities = np.asarray(densities)

        assert abs(densities.mean() - center) < width
        assert np.mean(np.abs(densities - center) < width) > 0.95

    def test_identical_streams(self):
        """Test determinism for identical random streams."""
        dataset = toy_dataset(4)
        config = ModelConfig(K=2)
        start = initialize_state(config, dataset, seed=0)
        a = sweep(start, dataset, config, np.random.default_rng(9))
        b = sweep(start, dataset, config, np.random.default_rng(9))

        np.testing.assert_array_equal(a.Z, b.Z)
        np.testing.assert_array_equal(a.H, b.H)
        for wa, wb in zip(a.W, b.W):
            np.testing.assert_array_equal(wa, wb)

    def test_does_not_modify_input(self):
        """Test that a sweep returns a new state."""
        dataset = toy_dataset(5)
        config = ModelConfig(K=2)
        start = initialize_state(config, dataset, seed=0)
        z_before = start.Z.copy()
        sweep(start, dataset, config, np.random.default_rng(0))
        np.testing.assert_array_equal(start.Z, z_before)


class TestRunChain:
    """Test single and multiple chains."""

    def test_single_retained_state(self):
        """Test burn_in=0, n_samples=1, thinning=1."""
        schedule = SamplingSchedule(n_chains=1, burn_in=0, n_samples=1, thinning=1)
        trace = run_chain(toy_dataset(), ModelConfig(K=2), schedule, 0)

        assert len(trace.states) == 1
        assert len(trace.log_densities) == 1

    def test_retained_count_and_densities(self):
        """Test floor(n_samples / thinning) states and one density per sweep."""
        schedule = SamplingSchedule(n_chains=1, burn_in=5, n_samples=7, thinning=3)
        trace = run_chain(toy_dataset(), ModelConfig(K=2), schedule, 0)

        assert not trace.failed
        assert len(trace.states) == schedule.n_retained == 2
        assert len(trace.log_densities) == 12
        assert np.all(np.isfinite(trace.log_densities))
        assert len(trace.retained_log_densities) == 7

    def test_identical_seeds(self):
        """Test that identical inputs give identical traces."""
        schedule = SamplingSchedule(n_chains=1, burn_in=3, n_samples=4, thinning=2, seed=11)
        a = run_chain(toy_dataset(), ModelConfig(K=2), schedule, 1)
        b = run_chain(toy_dataset(), ModelConfig(K=2), schedule, 1)

        np.testing.assert_array_equal(a.log_densities, b.log_densities)
        np.testing.assert_array_equal(a.states[-1].Z, b.states[-1].Z)

    def test_parallel_matches_serial(self):
        """Test that chain results do not depend on the number of workers."""
        schedule = SamplingSchedule(n_chains=3, burn_in=2, n_samples=3, thinning=1, seed=5)
        finished = []
        serial = run_chains(toy_dataset(), ModelConfig(K=2), schedule, jobs=1, on_finish=finished.append)
        parallel = run_chains(toy_dataset(), ModelConfig(K=2), schedule, jobs=2)

        assert [t.chain_index for t in finished] == [0, 1, 2]
        for a, b in zip(serial, parallel):
            assert a.seed == b.seed
            np.testing.assert_array_equal(a.log_densities, b.log_densities)


def trace_with(index, values, failed=False):
    return ChainTrace(
        chain_index=index,
        seed=index,
        burn_in=0,
        log_densities=np.asarray(values, dtype=float),
        failed=failed,
    )


class TestChainSelection:
    """Test representative chain selection."""

    def test_single_chain(self):
        """Test that one chain is selected trivially."""
        assert select_chain([trace_with(0, [-3.0])]) == 0

    def test_outlier_excluded(self):
        """Test {-100, -101, -99, -5000}."""
        traces = [trace_with(i, [v]) for i, v in enumerate([-100, -101, -99, -5000])]
        selection = chain_selection(traces)

        assert selection.outliers == [3]
        assert selection.selected == 0
        assert selection.runner_up in (1, 2)

    def test_equal_chains_tie_break(self):
        """Test that ties go to the lowest index."""
        traces = [trace_with(i, [-7.0, -7.0]) for i in range(10)]
        assert select_chain(traces) == 0

    def test_failed_chains_skipped(self):
        """Test that failed chains never win."""
        traces = [trace_with(0, [], failed=True), trace_with(1, [-2.0]), trace_with(2, [-2.5])]
        selection = chain_selection(traces)

        assert selection.failed == [0]
        assert selection.selected in (1, 2)
        assert selection.mean_log_densities[0] is None

    def test_all_failed(self):
        """Test the no-result error."""
        with pytest.raises(NoResultError):
            chain_selection([trace_with(0, [], failed=True)])


class TestPosteriorSummary:
    """Test posterior means."""

    def _trace(self, states):
        trace = trace_with(0, [-1.0] * len(states))
        trace.states = states
        return trace

    def _state(self, rng, h):
        w0 = rng.standard_normal((3, 1)) * h
        return make_state(
            rng.standard_normal((4, 1)),
            [w0, rng.standard_normal((2, 1))],
            [[h], [1]],
            pi=[0.4],
        )

    def test_single_state(self):
        """Test that one state is its own summary."""
        state = self._state(np.random.default_rng(0), 1)
        summary = posterior_summary(self._trace([state]))

        np.testing.assert_array_equal(summary.mean_state.Z, state.Z)
        np.testing.assert_array_equal(summary.mean_state.W[0], state.W[0])
        assert summary.n_states == 1

    def test_half_active_tie(self):
        """Test activity mean 0.5 rounds up to active."""
        rng = np.random.default_rng(1)
        states = [self._state(rng, 1), self._state(rng, 0)]
        summary = posterior_summary(self._trace(states))

        assert summary.activity_mean[0, 0] == 0.5
        assert summary.mean_state.H[0, 0] == 1
        np.testing.assert_allclose(summary.mean_state.W[0], states[0].W[0] / 2)

    def test_below_threshold_zeroed(self):
        """Test that columns whose summary gate is off are zero."""
        rng = np.random.default_rng(2)
        states = [self._state(rng, 1), self._state(rng, 0), self._state(rng, 0)]
        summary = posterior_summary(self._trace(states))

        assert summary.mean_state.H[0, 0] == 0
        assert np.all(summary.mean_state.W[0] == 0)
        assert summary.mean_state.spike_consistent()

    def test_streaming_mean(self):
        """Test loading means against a running-mean recomputation."""
        rng = np.random.default_rng(3)
        states = [self._state(rng, 1) for _ in range(25)]
        summary = posterior_summary(self._trace(states))

        running = np.zeros_like(states[0].W[1])
        for i, s in enumerate(states, start=1):
            running += (s.W[1] - running) / i
        np.testing.assert_allclose(summary.mean_state.W[1], running)

    def test_empty_trace(self):
        """Test the no-result error."""
        with pytest.raises(NoResultError):
            posterior_summary(self._trace([]))


@pytest.mark.slow
class TestSyntheticRecovery:
    """Test that multi-chain fits recover a planted four-view activity pattern."""

    VIEWS = ["chem_a", "chem_b", "bio_a", "bio_b"]
    PATTERN = np.array(
        [
            # columns 0-2 span every view, 3-4 cross roles, 5-7 stay within one role
            [1, 1, 1, 1, 0, 1, 0, 1],
            [1, 1, 1, 0, 1, 0, 0, 1],
            [1, 1, 1, 1, 0, 0, 0, 0],
            [1, 1, 1, 0, 1, 0, 1, 0],
        ]
    )

    def test_planted_pattern(self):
        """Test F1 >= 0.9, matched score correlation >= 0.8 and identical kinds."""
        from sparse_gfa.components import (
            ViewRoleMap,
            activity_matrix,
            classify_components,
            concatenated_loadings,
            match_components,
        )
        from sparse_gfa.model import generate_synthetic

        pattern = self.PATTERN
        dataset, truth = generate_synthetic(
            ModelConfig(K=8),
            N=200,
            dims=[40, 40, 60, 60],
            activity=pattern,
            snr=1.0,
            seed=11,
            view_names=self.VIEWS,
        )
        roles = ViewRoleMap(dict(zip(self.VIEWS, ["chemistry", "chemistry", "biology", "biology"])))
        schedule = SamplingSchedule(n_chains=4, burn_in=2000, n_samples=500, thinning=5, seed=3)

        traces = run_chains(dataset, ModelConfig(K=16), schedule, jobs=1)
        summary = posterior_summary(traces[chain_selection(traces).selected])
        estimated = activity_matrix(summary)
        pairs = match_components(np.vstack(truth.state.W), concatenated_loadings(summary))

        true_positive = sum(
            int(np.sum((pattern[:, i] == 1) & (estimated[:, j] == 1))) for i, j, _ in pairs
        )
        precision = true_positive / max(int(estimated.sum()), 1)
        recall = true_positive / int(pattern.sum())
        assert 2 * precision * recall / max(precision + recall, 1e-12) >= 0.9

        score_corr = [
            abs(np.corrcoef(truth.state.Z[:, i], summary.mean_state.Z[:, j])[0, 1])
            for i, j, _ in pairs
        ]
        assert np.mean(score_corr) >= 0.8

        true_kinds = classify_components(pattern, roles, self.VIEWS)
        estimated_kinds = classify_components(estimated, roles, self.VIEWS)
        assert [true_kinds[i] for i, _, _ in pairs] == [estimated_kinds[j] for _, j, _ in pairs]
