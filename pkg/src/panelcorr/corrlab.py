"""Per-window Pearson and partial correlation matrices and summary statistics."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .ingest import ReturnPanel, WindowSpec

__all__ = [
    "CorrelationMatrix",
    "PartialCorrelationMatrix",
    "pearson_matrix",
    "mean_correlation",
    "corr_critical_value",
    "partial_correlation_matrix",
    "matrix_to_csv",
    "matrix_record",
]


def _validate_corr_values(values: np.ndarray, entities: Sequence[str]) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    n = len(entities)
    if values.shape != (n, n):
        raise ValueError(f"matrix shape {values.shape} does not match {n} entities")
    if not np.all(np.isfinite(values)):
        raise ValueError("correlation matrix has undefined (non-finite) entries")
    if np.max(np.abs(values - values.T)) > 1e-12:
        raise ValueError("correlation matrix is not symmetric")
    if np.any(np.diag(values) != 1.0):
        raise ValueError("correlation matrix diagonal must be exactly 1")
    if np.any(np.abs(values) > 1.0):
        raise ValueError("correlation entries must lie in [-1, 1]")
    return values


@dataclass
class CorrelationMatrix:
    window: WindowSpec
    entities: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = _validate_corr_values(self.values, self.entities)

    @property
    def n(self) -> int:
        return len(self.entities)


@dataclass
class PartialCorrelationMatrix:
    window: WindowSpec
    entities: list[str]
    conditioning: str
    values: np.ndarray

    def __post_init__(self):
        self.values = _validate_corr_values(self.values, self.entities)

    @property
    def n(self) -> int:
        return len(self.entities)


def _standardized_window(panel: ReturnPanel, window: WindowSpec) -> np.ndarray:
    X = panel.window_slice(window)
    mu = X.mean(axis=1, keepdims=True)
    Xc = X - mu
    sd = np.sqrt((Xc**2).mean(axis=1))
    dead = np.flatnonzero(sd == 0.0)
    if dead.size:
        raise ValueError(
            f"entity {panel.entities[dead[0]]!r} has zero variance in window "
            f"ending {window.end_quarter}"
        )
    return Xc / sd[:, None]


def _finish_corr(raw: np.ndarray) -> np.ndarray:
    values = np.clip((raw + raw.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return values


def pearson_matrix(panel: ReturnPanel, window: WindowSpec) -> CorrelationMatrix:
    """Sample Pearson correlation of the window returns.

    Means and standard deviations are taken over the window with the same
    (divide-by-s) normalization in numerator and denominator, so the diagonal
    is identically 1.
    """
    Z = _standardized_window(panel, window)
    raw = Z @ Z.T / window.size_s
    return CorrelationMatrix(window, list(panel.entities), _finish_corr(raw))


def mean_correlation(matrix: CorrelationMatrix | PartialCorrelationMatrix) -> tuple[float, float]:
    """Mean and standard deviation of the off-diagonal upper-triangle entries."""
    n = matrix.n
    if n < 2:
        raise ValueError("need at least 2 entities to average correlations")
    upper = matrix.values[np.triu_indices(n, k=1)]
    return float(upper.mean()), float(upper.std())


def corr_critical_value(size_s: int, alpha: float, conditioning: int = 0) -> float:
    """Two-sided critical Pearson correlation under the independence null.

    Uses the exact Student-t relation r = t / sqrt(t^2 + df) with
    df = size_s - 2 - conditioning degrees of freedom; ``conditioning`` is the
    number of partialled-out series (0 for plain correlations).
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    df = size_s - 2 - conditioning
    if df < 1:
        raise ValueError(f"window size {size_s} too small ({df} degrees of freedom)")
    t = stats.t.ppf(1 - alpha / 2.0, df)
    return float(t / np.sqrt(t * t + df))


def _align_market(panel: ReturnPanel, window: WindowSpec, market: np.ndarray) -> np.ndarray:
    market = np.asarray(market, dtype=float)
    if market.shape == (panel.n_quarters,):
        end = panel.quarter_index(window.end_quarter)
        return market[end - window.size_s + 1 : end + 1]
    if market.shape == (window.size_s,):
        return market
    raise ValueError(
        f"market series length {market.shape} matches neither the panel "
        f"({panel.n_quarters}) nor the window ({window.size_s})"
    )


def partial_correlation_matrix(
    panel: ReturnPanel,
    window: WindowSpec,
    market: np.ndarray,
    conditioning: str = "market",
) -> PartialCorrelationMatrix:
    """Pairwise correlations with the market series' linear influence removed.

    P_ij = (C_ij - C_im C_jm) / sqrt((1 - C_im^2)(1 - C_jm^2)) where C_im is
    each entity's window correlation against the market series.  An entity
    perfectly correlated with the market makes the denominator vanish and is
    rejected.
    """
    Z = _standardized_window(panel, window)
    m = _align_market(panel, window, market)
    ms = m.std()
    if ms == 0.0:
        raise ValueError(f"market series has zero variance in window ending {window.end_quarter}")
    zm = (m - m.mean()) / ms
    C = np.clip(Z @ Z.T / window.size_s, -1.0, 1.0)
    c_m = np.clip(Z @ zm / window.size_s, -1.0, 1.0)
    degenerate = np.flatnonzero(1.0 - c_m**2 <= 1e-12)
    if degenerate.size:
        raise ValueError(
            f"entity {panel.entities[degenerate[0]]!r} is perfectly correlated with the "
            f"conditioning series in window ending {window.end_quarter}"
        )
    denom = np.sqrt(np.outer(1.0 - c_m**2, 1.0 - c_m**2))
    raw = (C - np.outer(c_m, c_m)) / denom
    return PartialCorrelationMatrix(window, list(panel.entities), conditioning, _finish_corr(raw))


def matrix_to_csv(matrix: CorrelationMatrix | PartialCorrelationMatrix, dest=None) -> str | None:
    """Write a labeled matrix as CSV; returns the text when dest is None."""
    buf = io.StringIO()
    buf.write("," + ",".join(matrix.entities) + "\n")
    for label, row in zip(matrix.entities, matrix.values):
        buf.write(label + "," + ",".join(repr(float(v)) for v in row) + "\n")
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        from pathlib import Path

        Path(dest).write_text(text, encoding="utf-8")
    return None


def matrix_record(matrix: CorrelationMatrix | PartialCorrelationMatrix) -> dict:
    """JSON-ready record keyed by the window end quarter."""
    record = {
        "window_end": str(matrix.window.end_quarter),
        "window_size": matrix.window.size_s,
        "entities": list(matrix.entities),
        "values": [[float(v) for v in row] for row in matrix.values],
    }
    if isinstance(matrix, PartialCorrelationMatrix):
        record["conditioning"] = matrix.conditioning
    return record
