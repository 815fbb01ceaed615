import numpy as np
import pytest
from scipy.linalg import null_space

from panelcorr.corrlab import (
    CorrelationMatrix,
    corr_critical_value,
    matrix_record,
    matrix_to_csv,
    mean_correlation,
    partial_correlation_matrix,
    pearson_matrix,
)
from panelcorr.ingest import Quarter, ReturnPanel, WindowSpec


def panel_from_returns(returns, start="1990Q1"):
    returns = np.asarray(returns, dtype=float)
    quarters = Quarter.span(Quarter.parse(start), returns.shape[1])
    return ReturnPanel([f"S{i:02d}" for i in range(returns.shape[0])], quarters, returns)


def full_window(panel):
    return WindowSpec(panel.quarters[-1], panel.n_quarters)


def pearson_oracle(X):
    """Direct double-loop evaluation of the windowed correlation formula."""
    n, s = X.shape
    mu = X.mean(axis=1)
    sd = np.sqrt(((X - mu[:, None]) ** 2).mean(axis=1))
    C = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            C[i, j] = ((X[i] - mu[i]) * (X[j] - mu[j])).mean() / (sd[i] * sd[j])
    return C


class TestPearson:
    def test_perfect_correlation(self):
        rng = np.random.default_rng(0)
        row = rng.normal(size=20)
        panel = panel_from_returns([row, row.copy()])
        C = pearson_matrix(panel, full_window(panel))
        assert C.values[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_perfect_anticorrelation(self):
        rng = np.random.default_rng(1)
        row = rng.normal(size=20)
        panel = panel_from_returns([row, -row])
        C = pearson_matrix(panel, full_window(panel))
        assert C.values[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(4, 10))
        panel = panel_from_returns(X)
        C = pearson_matrix(panel, full_window(panel))
        assert np.max(np.abs(C.values - pearson_oracle(X))) < 1e-12

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(5, 30))
        base = pearson_matrix(panel_from_returns(X), full_window(panel_from_returns(X)))
        X2 = X.copy()
        X2[2] = 3.7 * X2[2] + 0.01
        moved = pearson_matrix(panel_from_returns(X2), full_window(panel_from_returns(X2)))
        assert moved.values == pytest.approx(base.values, abs=1e-12)

    def test_zero_variance_entity(self):
        X = np.vstack([np.zeros(10), np.random.default_rng(4).normal(size=10)])
        panel = panel_from_returns(X)
        with pytest.raises(ValueError, match="S00"):
            pearson_matrix(panel, full_window(panel))

    def test_invariants_on_random_windows(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = rng.integers(2, 8)
            s = int(n) + int(rng.integers(5, 40))
            X = rng.normal(size=(n, s))
            panel = panel_from_returns(X)
            C = pearson_matrix(panel, full_window(panel))
            assert np.max(np.abs(C.values - C.values.T)) <= 1e-12
            assert np.all(np.diag(C.values) == 1.0)
            assert np.all(np.abs(C.values) <= 1.0)


class TestMeanCorrelation:
    def test_identity(self):
        C = CorrelationMatrix(WindowSpec(Quarter(1990, 1), 10), ["A", "B", "C"], np.eye(3))
        mean, std = mean_correlation(C)
        assert mean == 0.0

    def test_all_ones(self):
        C = CorrelationMatrix(WindowSpec(Quarter(1990, 1), 10), ["A", "B"], np.ones((2, 2)))
        mean, std = mean_correlation(C)
        assert mean == 1.0
        assert std == 0.0

    def test_arithmetic(self):
        values = np.eye(3)
        values[0, 1] = values[1, 0] = 0.2
        values[0, 2] = values[2, 0] = 0.4
        values[1, 2] = values[2, 1] = 0.6
        C = CorrelationMatrix(WindowSpec(Quarter(1990, 1), 10), list("ABC"), values)
        mean, _ = mean_correlation(C)
        assert mean == pytest.approx(0.4, abs=1e-15)


class TestCriticalValue:
    def test_alpha_to_one_limit(self):
        assert corr_critical_value(60, 0.9999) < 1e-3

    def test_reference_value(self):
        assert corr_critical_value(60, 0.05) == pytest.approx(0.254, abs=5e-4)

    def test_monotone_in_alpha(self):
        assert corr_critical_value(60, 0.01) > corr_critical_value(60, 0.05)

    def test_monte_carlo_rejection_rate(self):
        # 1e5 independent Gaussian pairs of length 60: |r| should exceed the
        # critical value in about 5% of draws
        rng = np.random.default_rng(6)
        crit = corr_critical_value(60, 0.05)
        trials, s = 100_000, 60
        x = rng.normal(size=(trials, s))
        y = rng.normal(size=(trials, s))
        x = x - x.mean(axis=1, keepdims=True)
        y = y - y.mean(axis=1, keepdims=True)
        r = (x * y).sum(axis=1) / np.sqrt((x**2).sum(axis=1) * (y**2).sum(axis=1))
        frac = (np.abs(r) > crit).mean()
        assert frac == pytest.approx(0.05, abs=0.005)

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            corr_critical_value(60, 0.0)
        with pytest.raises(ValueError):
            corr_critical_value(60, 1.5)


class TestPartialCorrelation:
    def test_reduces_to_pearson_when_market_orthogonal(self):
        # build a market series with exactly zero sample correlation to every entity
        rng = np.random.default_rng(7)
        X = rng.normal(size=(4, 20))
        centered = X - X.mean(axis=1, keepdims=True)
        basis = null_space(np.vstack([centered, np.ones(20)]))
        market = basis[:, 0]
        panel = panel_from_returns(X)
        w = full_window(panel)
        P = partial_correlation_matrix(panel, w, market)
        C = pearson_matrix(panel, w)
        assert P.values == pytest.approx(C.values, abs=1e-10)

    def test_entity_equal_to_market_rejected(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(3, 15))
        panel = panel_from_returns(X)
        with pytest.raises(ValueError, match="S01"):
            partial_correlation_matrix(panel, full_window(panel), X[1])

    def test_matches_residual_correlation_oracle(self):
        rng = np.random.default_rng(9)
        market = rng.normal(size=25)
        X = 0.6 * market + rng.normal(size=(5, 25))
        panel = panel_from_returns(X)
        P = partial_correlation_matrix(panel, full_window(panel), market)

        def residual(v):
            m = np.column_stack([np.ones_like(market), market])
            beta, *_ = np.linalg.lstsq(m, v, rcond=None)
            return v - m @ beta

        residuals = np.array([residual(X[i]) for i in range(5)])
        expected = np.corrcoef(residuals)
        assert P.values == pytest.approx(expected, abs=1e-10)

    def test_symmetry_and_diagonal_on_random_inputs(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            X = rng.normal(size=(4, 30))
            market = 0.3 * X.mean(axis=0) + rng.normal(size=30)
            panel = panel_from_returns(X)
            P = partial_correlation_matrix(panel, full_window(panel), market)
            assert np.max(np.abs(P.values - P.values.T)) <= 1e-12
            assert np.all(np.diag(P.values) == 1.0)
            assert np.all(np.abs(P.values) <= 1.0)


class TestExports:
    def test_csv_and_record(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(3, 12))
        panel = panel_from_returns(X)
        C = pearson_matrix(panel, full_window(panel))
        text = matrix_to_csv(C)
        lines = text.strip().split("\n")
        assert lines[0] == ",S00,S01,S02"
        assert len(lines) == 4
        parsed = [float(v) for v in lines[1].split(",")[1:]]
        assert parsed == pytest.approx(C.values[0])
        record = matrix_record(C)
        assert record["window_end"] == str(C.window.end_quarter)
        assert record["values"][1][2] == pytest.approx(C.values[1, 2])
