import numpy as np
import pytest
from scipy.integrate import quad

from panelcorr.corrlab import CorrelationMatrix, pearson_matrix
from panelcorr.ingest import Quarter, ReturnPanel, WindowSpec, windows
from panelcorr.spectra import (
    absorption_ratio,
    cluster_sampled_absorption,
    deviating_eigenvalues,
    eigendecompose,
    mp_bounds,
    mp_density,
    negative_component_weight,
    null_spectrum,
)
from panelcorr.synth import FactorModelSpec, generate_factor_panel
from panelcorr.ingest import log_returns


def corr_from_values(values):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return CorrelationMatrix(WindowSpec(Quarter(1995, 1), max(n, 10)),
                             [f"S{i:02d}" for i in range(n)], values)


def random_panel(n, s, seed=0):
    rng = np.random.default_rng(seed)
    quarters = Quarter.span(Quarter(1980, 1), s)
    return ReturnPanel([f"S{i:02d}" for i in range(n)], quarters, rng.normal(size=(n, s)))


def full_window(panel):
    return WindowSpec(panel.quarters[-1], panel.n_quarters)


class TestEigendecompose:
    def test_two_by_two_analytic(self):
        C = corr_from_values([[1.0, 0.5], [0.5, 1.0]])
        d = eigendecompose(C)
        assert d.eigenvalues == pytest.approx([1.5, 0.5])

    def test_identity(self):
        d = eigendecompose(corr_from_values(np.eye(5)))
        assert d.eigenvalues == pytest.approx(np.ones(5))

    def test_reconstruction_trace_orthonormality(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(3, 12))
            panel = random_panel(n, n + 30, seed=int(rng.integers(1 << 30)))
            C = pearson_matrix(panel, full_window(panel))
            d = eigendecompose(C)
            assert abs(d.eigenvalues.sum() - n) < 1e-9
            gram = d.eigenvectors.T @ d.eigenvectors
            assert np.max(np.abs(gram - np.eye(n))) < 1e-9
            assert np.max(np.abs(d.reconstruct() - C.values)) < 1e-9

    def test_sign_component_sum_nonnegative(self):
        panel = random_panel(6, 40, seed=2)
        d = eigendecompose(pearson_matrix(panel, full_window(panel)))
        sums = d.eigenvectors.sum(axis=0)
        # ties at exactly zero are resolved by the first nonzero component
        assert np.all(sums >= -1e-12)

    def test_continuity_alignment(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(5, 61))
        quarters = Quarter.span(Quarter(1980, 1), 61)
        panel = ReturnPanel([f"S{i}" for i in range(5)], quarters, X)
        w1, w2 = WindowSpec(quarters[-2], 60), WindowSpec(quarters[-1], 60)
        d1 = eigendecompose(pearson_matrix(panel, w1))
        d2 = eigendecompose(pearson_matrix(panel, w2), previous=d1)
        dots = np.einsum("ik,ik->k", d1.eigenvectors, d2.eigenvectors)
        assert np.all(dots >= 0)
        assert d2.sign_convention == "sum_positive+continuity"

    def test_rejects_asymmetric(self):
        values = np.eye(3)
        values[0, 1] = 0.5
        with pytest.raises(ValueError, match="symmetric"):
            corr_from_values(values)


class TestMarchenkoPastur:
    def test_square_case(self):
        b = mp_bounds(1.0)
        assert b.lambda_min == pytest.approx(0.0, abs=1e-15)
        assert b.lambda_max == pytest.approx(4.0)

    def test_panel_aspect_ratio(self):
        b = mp_bounds(60 / 51)
        assert b.lambda_max == pytest.approx(3.694, abs=5e-4)
        assert b.lambda_min == pytest.approx(0.006, abs=5e-4)

    def test_rejects_thin_panels(self):
        with pytest.raises(ValueError):
            mp_bounds(0.8)

    @pytest.mark.parametrize("q", [1.2, 60 / 51, 4.0, 11.76])
    def test_density_integrates_to_one(self, q):
        b = mp_bounds(q)
        value, _ = quad(lambda x: mp_density(x, q), b.lambda_min, b.lambda_max, limit=200)
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_density_zero_outside_support(self):
        b = mp_bounds(2.0)
        assert mp_density(b.lambda_min - 0.1, 2.0) == 0.0
        assert mp_density(b.lambda_max + 0.1, 2.0) == 0.0


class TestNullSpectrum:
    def test_pooled_sample_count(self):
        panel = random_panel(51, 60, seed=4)
        null = null_spectrum(panel, full_window(panel), rounds=1000, seed=0)
        assert null.pooled.size == 51_000

    def test_zero_rounds_rejected(self):
        panel = random_panel(5, 20, seed=5)
        with pytest.raises(ValueError):
            null_spectrum(panel, full_window(panel), rounds=0)

    def test_seed_determinism(self):
        panel = random_panel(8, 40, seed=6)
        a = null_spectrum(panel, full_window(panel), rounds=20, seed=3)
        b = null_spectrum(panel, full_window(panel), rounds=20, seed=3)
        assert np.array_equal(a.samples, b.samples)
        assert a.lambda_5pct == b.lambda_5pct

    def test_gaussian_null_close_to_mp(self):
        # pooled permutation null of an i.i.d. Gaussian panel tracks the MP law
        panel = random_panel(51, 600, seed=7)
        null = null_spectrum(panel, full_window(panel), rounds=50, seed=1)
        b = mp_bounds(600 / 51)
        grid = np.linspace(b.lambda_min, b.lambda_max, 20001)
        dens = mp_density(grid, b.q_ratio)
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
        cdf /= cdf[-1]
        samples = np.sort(null.pooled)
        theo = np.interp(samples, grid, cdf, left=0.0, right=1.0)
        hi = np.arange(1, samples.size + 1) / samples.size
        lo = np.arange(0, samples.size) / samples.size
        ks = max(np.abs(hi - theo).max(), np.abs(lo - theo).max())
        assert ks < 0.05

    def test_round_max_exceeds_pooled(self):
        panel = random_panel(10, 80, seed=8)
        pooled = null_spectrum(panel, full_window(panel), rounds=50, seed=2)
        round_max = null_spectrum(panel, full_window(panel), rounds=50, seed=2,
                                  method="round_max")
        assert round_max.lambda_5pct > pooled.lambda_5pct


class TestDeviating:
    def test_identity_gives_empty_set(self):
        d = eigendecompose(corr_from_values(np.eye(6)))
        b = mp_bounds(10.0)
        panel = random_panel(6, 60, seed=9)
        null = null_spectrum(panel, full_window(panel), rounds=30, seed=0)
        dev = deviating_eigenvalues(d, b, null)
        assert dev.above_mp == ()
        assert dev.above_null == ()

    def test_planted_single_factor(self):
        spec = FactorModelSpec(n_entities=30, n_quarters=120, market_beta=1.0,
                               noise_scale=0.5, seed=10)
        panel, _, _ = generate_factor_panel(spec)
        returns = log_returns(panel)
        w = windows(returns, 120)[0]
        d = eigendecompose(pearson_matrix(returns, w))
        null = null_spectrum(returns, w, rounds=100, seed=4)
        dev = deviating_eigenvalues(d, mp_bounds(4.0), null)
        assert dev.above_mp == (1,)
        assert dev.above_null == (1,)

    def test_factor_structure_keeps_fifth_eigenvalue_in_bulk(self):
        # market + two clusters at state-panel scale: the top eigenvalue always
        # deviates, the fifth never does
        spec = FactorModelSpec(
            n_entities=51, n_quarters=100, market_beta=1.0,
            memberships=[list(range(0, 17)), list(range(17, 34))],
            cluster_loading=0.7, noise_scale=0.8, seed=11,
        )
        panel, _, _ = generate_factor_panel(spec)
        returns = log_returns(panel)
        b = mp_bounds(60 / 51)
        for w in windows(returns, 60)[::10]:
            d = eigendecompose(pearson_matrix(returns, w))
            assert d.eigenvalues[0] > b.lambda_max
            assert d.eigenvalues[4] < b.lambda_max


class TestAbsorption:
    def test_full_sum_is_one(self):
        panel = random_panel(7, 40, seed=12)
        d = eigendecompose(pearson_matrix(panel, full_window(panel)))
        assert absorption_ratio(d, 7) == pytest.approx(1.0, abs=1e-12)

    def test_identity_single(self):
        d = eigendecompose(corr_from_values(np.eye(51)))
        assert absorption_ratio(d, 1) == pytest.approx(1 / 51)

    def test_nondecreasing(self):
        panel = random_panel(9, 50, seed=13)
        d = eigendecompose(pearson_matrix(panel, full_window(panel)))
        values = [absorption_ratio(d, n) for n in range(1, 10)]
        assert np.all(np.diff(values) >= -1e-15)

    def test_out_of_range(self):
        d = eigendecompose(corr_from_values(np.eye(3)))
        with pytest.raises(ValueError):
            absorption_ratio(d, 0)
        with pytest.raises(ValueError):
            absorption_ratio(d, 4)


class TestNegativeComponentWeight:
    def test_all_positive(self):
        u = np.ones(16) / 4.0
        assert negative_component_weight(u) == 0.0

    def test_all_negative(self):
        u = -np.ones(16) / 4.0
        assert negative_component_weight(u) == pytest.approx(1.0)

    def test_mixed_matches_direct_sum(self):
        rng = np.random.default_rng(14)
        u = rng.normal(size=12)
        u /= np.linalg.norm(u)
        expected = sum(float(c) ** 2 for c in u if c < 0)
        assert negative_component_weight(u) == pytest.approx(expected, abs=1e-15)

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            negative_component_weight(np.ones(4))


class TestClusterSampledAbsorption:
    def test_singleton_clusters_deterministic(self):
        panel = random_panel(6, 40, seed=15)
        groups = [[e] for e in panel.entities]
        a = cluster_sampled_absorption(panel, groups, window_size=8, resamples=7, seed=0)
        b = cluster_sampled_absorption(panel, groups, window_size=8, resamples=1, seed=99)
        assert np.allclose(a.mean_eigenvalues, b.mean_eigenvalues)
        # equals the direct analysis of the same six series
        direct = []
        for w in range(40 - 8 + 1):
            X = panel.returns[:, w : w + 8]
            Z = (X - X.mean(axis=1, keepdims=True))
            Z /= np.sqrt((Z**2).mean(axis=1))[:, None]
            C = Z @ Z.T / 8
            direct.append(np.sort(np.linalg.eigvalsh((C + C.T) / 2))[::-1])
        assert np.allclose(a.mean_eigenvalues, np.array(direct))

    def test_reference_parameters_accepted(self):
        spec = FactorModelSpec(
            n_entities=51, n_quarters=60, market_beta=1.0,
            memberships=[list(range(i * 8, (i + 1) * 8)) for i in range(6)],
            cluster_loading=0.5, noise_scale=0.8, seed=16,
        )
        panel, planted, _ = generate_factor_panel(spec)
        returns = log_returns(panel)
        out = cluster_sampled_absorption(returns, planted, window_size=8,
                                         resamples=50, seed=1)
        assert out.mean_eigenvalues.shape == (60 - 8 + 1, 6)
        assert out.window_ends[0] == returns.quarters[7]
        ratios = out.absorption_ratios()
        assert ratios.shape == (53, 6)
        assert np.allclose(ratios[:, -1], 1.0, atol=1e-9)

    def test_resampling_reduces_variance(self):
        spec = FactorModelSpec(
            n_entities=24, n_quarters=30, market_beta=0.3,
            memberships=[list(range(i * 4, (i + 1) * 4)) for i in range(6)],
            cluster_loading=0.6, noise_scale=1.0, seed=17,
        )
        panel, planted, _ = generate_factor_panel(spec)
        returns = log_returns(panel)

        def summary(resamples, seed):
            out = cluster_sampled_absorption(returns, planted, window_size=8,
                                             resamples=resamples, seed=seed)
            return out.mean_eigenvalues[:, 0].mean()

        single = np.std([summary(1, s) for s in range(12)])
        averaged = np.std([summary(25, s) for s in range(12)])
        assert averaged < single

    def test_window_shorter_than_cluster_count(self):
        panel = random_panel(12, 40, seed=18)
        groups = [[e] for e in panel.entities[:6]]
        with pytest.raises(ValueError, match="singular"):
            cluster_sampled_absorption(panel, groups, window_size=5)

    def test_empty_cluster_rejected(self):
        panel = random_panel(6, 40, seed=19)
        with pytest.raises(ValueError, match="nonempty"):
            cluster_sampled_absorption(panel, [["S00"], []], window_size=8)
