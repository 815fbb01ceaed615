"""Eigenportfolio market-effect regression and regime-shift detection.

For each moving window the returns of the eigenportfolios built from the top
eigenvectors are regressed against the aggregate market return; abrupt jumps in
the resulting coefficient series mark regime boundaries.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corrlab import pearson_matrix
from .ingest import Quarter, ReturnPanel, WindowSpec, windows
from .spectra import SpectralDecomposition, eigendecompose

__all__ = [
    "MarketEffectSeries",
    "RegimeShift",
    "RegimeTimeline",
    "eigenportfolio_returns",
    "ols_coefficient",
    "robust_coefficient",
    "market_effect_series",
    "detect_regime_shifts",
]


@dataclass
class MarketEffectSeries:
    """Per-window market coefficients for the tracked eigen-indices 1..n_tracked."""

    quarters: list[Quarter]  # window end quarters
    size_s: int
    k_ols: np.ndarray  # shape (n_windows, n_tracked)
    k_robust: np.ndarray  # same shape

    def __post_init__(self):
        self.k_ols = np.asarray(self.k_ols, dtype=float)
        self.k_robust = np.asarray(self.k_robust, dtype=float)
        w = len(self.quarters)
        if self.k_ols.shape[0] != w or self.k_robust.shape != self.k_ols.shape:
            raise ValueError("coefficient arrays do not match the window count")
        if np.any(np.abs(self.k_ols) > 1.0 + 1e-9):
            raise ValueError("OLS coefficients of standardized series must lie in [-1, 1]")

    @property
    def n_tracked(self) -> int:
        return self.k_ols.shape[1]


@dataclass(frozen=True)
class RegimeShift:
    """A flagged boundary between two consecutive window end quarters."""

    before: Quarter
    after: Quarter
    eigen_index: int
    delta: float


@dataclass
class RegimeTimeline:
    shifts: list[RegimeShift]
    regimes: list[tuple[Quarter, Quarter]]
    threshold: float

    def __post_init__(self):
        keys = [(s.before, s.eigen_index) for s in self.shifts]
        if keys != sorted(keys):
            raise ValueError("shift points must be ordered by boundary then eigen-index")
        for (_, end), (start, _) in zip(self.regimes, self.regimes[1:]):
            if start != end.shift(1):
                raise ValueError("regimes must tile the analysis period without overlap")


def eigenportfolio_returns(u: np.ndarray, panel: ReturnPanel, window: WindowSpec) -> np.ndarray:
    """Window returns of the portfolio weighting entities by eigenvector components."""
    u = np.asarray(u, dtype=float)
    if u.shape != (panel.n_entities,):
        raise ValueError(
            f"eigenvector length {u.shape} does not match {panel.n_entities} entities"
        )
    return u @ panel.window_slice(window)


def _standardize(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0.0:
        raise ValueError(f"{what} series has zero variance")
    return (x - x.mean()) / sd


def ols_coefficient(portfolio: np.ndarray, market: np.ndarray) -> float:
    """No-intercept least-squares slope of the standardized portfolio on the
    standardized market return; identical to their Pearson correlation."""
    y = _standardize(portfolio, "portfolio")
    x = _standardize(market, "market")
    if y.shape != x.shape:
        raise ValueError("series lengths differ")
    return float((x * y).mean())


def robust_coefficient(
    portfolio: np.ndarray,
    market: np.ndarray,
    tuning: float = 4.685,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> float:
    """Bisquare IRLS slope of the standardized portfolio on the standardized market.

    Residual scale is the median absolute deviation rescaled for Gaussian
    consistency; iteration stops when successive slopes differ by less than
    ``tol``.  Non-convergence emits a warning and returns the last iterate.
    """
    y = _standardize(portfolio, "portfolio")
    x = _standardize(market, "market")
    if y.shape != x.shape:
        raise ValueError("series lengths differ")
    k = float((x * y).mean())
    for _ in range(max_iter):
        resid = y - k * x
        scale = np.median(np.abs(resid - np.median(resid))) / 0.6745
        if scale < 1e-12:
            return k
        u = resid / (tuning * scale)
        w = np.where(np.abs(u) < 1.0, (1.0 - u**2) ** 2, 0.0)
        denom = float((w * x * x).sum())
        if denom <= 0.0:
            break
        k_new = float((w * x * y).sum() / denom)
        if abs(k_new - k) < tol:
            return k_new
        k = k_new
    warnings.warn(f"robust fit did not converge in {max_iter} iterations; "
                  f"returning last iterate {k:.6f}")
    return k


def market_effect_series(
    panel: ReturnPanel,
    market: np.ndarray,
    size_s: int,
    n_tracked: int = 4,
) -> MarketEffectSeries:
    """OLS and robust market coefficients for eigen-indices 1..n_tracked, every window.

    Eigenvector signs are chained across windows (continuity alignment), so the
    coefficient series do not flip sign spuriously.
    """
    market = np.asarray(market, dtype=float)
    if market.shape != (panel.n_quarters,):
        raise ValueError("market series must cover every panel quarter")
    specs = windows(panel, size_s)
    k_ols = np.empty((len(specs), n_tracked))
    k_rob = np.empty((len(specs), n_tracked))
    previous: SpectralDecomposition | None = None
    for w, spec in enumerate(specs):
        decomp = eigendecompose(pearson_matrix(panel, spec), previous=previous)
        previous = decomp
        end = panel.quarter_index(spec.end_quarter)
        m = market[end - size_s + 1 : end + 1]
        for n in range(1, n_tracked + 1):
            rn = eigenportfolio_returns(decomp.vector(n), panel, spec)
            k_ols[w, n - 1] = ols_coefficient(rn, m)
            k_rob[w, n - 1] = robust_coefficient(rn, m)
    return MarketEffectSeries([s.end_quarter for s in specs], size_s, k_ols, k_rob)


def detect_regime_shifts(series: MarketEffectSeries, threshold: float = 0.25) -> RegimeTimeline:
    """Flag boundaries where any tracked coefficient jumps by more than ``threshold``.

    Uses the OLS estimates.  Regimes are the maximal runs of consecutive
    windows with no flagged boundary, tiling the analysis period.
    """
    if len(series.quarters) < 2:
        raise ValueError("need at least 2 windows to detect shifts")
    shifts: list[RegimeShift] = []
    boundaries: list[int] = []
    deltas = np.abs(np.diff(series.k_ols, axis=0))
    for w in range(deltas.shape[0]):
        flagged = np.flatnonzero(deltas[w] > threshold)
        if flagged.size:
            boundaries.append(w)
        for n in flagged:
            shifts.append(
                RegimeShift(series.quarters[w], series.quarters[w + 1], int(n) + 1,
                            float(deltas[w, n]))
            )
    regimes: list[tuple[Quarter, Quarter]] = []
    start = 0
    for w in boundaries:
        regimes.append((series.quarters[start], series.quarters[w]))
        start = w + 1
    regimes.append((series.quarters[start], series.quarters[-1]))
    return RegimeTimeline(shifts, regimes, threshold)
