"""Eigen-analysis of windowed correlation matrices.

Covers the spectral decomposition with a stable sign convention, the
Marchenko-Pastur reference law, permutation null spectra for finite-size
significance, deviating-eigenvalue detection, absorption ratios, and the
cluster-resampled fine-grained absorption procedure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .corrlab import CorrelationMatrix
from .ingest import Quarter, ReturnPanel, WindowSpec

if TYPE_CHECKING:
    from .clustering import Partition

__all__ = [
    "SpectralDecomposition",
    "MPBounds",
    "NullSpectrum",
    "DeviatingEigenvalues",
    "ClusterSampledAbsorption",
    "eigendecompose",
    "mp_bounds",
    "mp_density",
    "null_spectrum",
    "deviating_eigenvalues",
    "absorption_ratio",
    "negative_component_weight",
    "cluster_sampled_absorption",
]


@dataclass
class SpectralDecomposition:
    """Descending eigenvalues and sign-aligned eigenvectors of one window's matrix.

    ``eigenvectors[:, k]`` is the unit eigenvector of ``eigenvalues[k]``.
    """

    window: WindowSpec
    entities: list[str]
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sign_convention: str = "sum_positive"

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(self.eigenvectors, dtype=float)
        n = len(self.entities)
        if self.eigenvalues.shape != (n,) or self.eigenvectors.shape != (n, n):
            raise ValueError("eigenvalue/eigenvector shapes do not match the entity count")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        if abs(self.eigenvalues.sum() - n) > 1e-9:
            raise ValueError(
                f"eigenvalue sum {self.eigenvalues.sum()} deviates from the trace {n}"
            )
        gram = self.eigenvectors.T @ self.eigenvectors
        if np.max(np.abs(gram - np.eye(n))) > 1e-9:
            raise ValueError("eigenvectors are not orthonormal")

    @property
    def n(self) -> int:
        return len(self.entities)

    def vector(self, n: int) -> np.ndarray:
        """Unit eigenvector of the n-th largest eigenvalue (1-based)."""
        if not 1 <= n <= self.n:
            raise ValueError(f"eigen-index {n} out of range 1..{self.n}")
        return self.eigenvectors[:, n - 1]

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


@dataclass(frozen=True)
class MPBounds:
    """Support of the Marchenko-Pastur eigenvalue density at aspect ratio Q = T/N."""

    q_ratio: float
    lambda_min: float
    lambda_max: float


@dataclass
class NullSpectrum:
    """Pooled eigenvalue samples from per-entity permutation rounds."""

    samples: np.ndarray  # shape (rounds, n)
    lambda_5pct: float
    rounds: int
    seed: int
    method: str = "pooled"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape[0] != self.rounds:
            raise ValueError("sample rows do not match the round count")
        if not self.samples.min() <= self.lambda_5pct <= self.samples.max():
            raise ValueError("critical value outside the sampled range")

    @property
    def pooled(self) -> np.ndarray:
        return self.samples.ravel()

    def samples_to_csv(self, dest) -> None:
        np.savetxt(dest, self.samples, delimiter=",")


@dataclass(frozen=True)
class DeviatingEigenvalues:
    """1-based eigenvalue indices exceeding each null criterion."""

    above_mp: tuple[int, ...]
    above_null: tuple[int, ...]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    for k in range(vectors.shape[1]):
        s = vectors[:, k].sum()
        if s < 0:
            vectors[:, k] = -vectors[:, k]
        elif s == 0:
            nz = np.flatnonzero(vectors[:, k])
            if nz.size and vectors[nz[0], k] < 0:
                vectors[:, k] = -vectors[:, k]
    return vectors


def eigendecompose(
    matrix: CorrelationMatrix,
    previous: SpectralDecomposition | None = None,
) -> SpectralDecomposition:
    """Symmetric eigendecomposition with descending eigenvalues.

    Each eigenvector's sign is first fixed so its component sum is >= 0; when a
    previous window's decomposition is supplied, the sign is then flipped to
    maximize the dot product with the predecessor's same-rank eigenvector, which
    keeps component trajectories continuous across moving windows.
    """
    vals, vecs = np.linalg.eigh(matrix.values)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order])
    convention = "sum_positive"
    if previous is not None:
        if previous.n != len(matrix.entities):
            raise ValueError("previous decomposition has a different entity count")
        flips = np.sign(np.einsum("ik,ik->k", vecs, previous.eigenvectors))
        flips[flips == 0] = 1.0
        vecs = vecs * flips
        convention = "sum_positive+continuity"
    return SpectralDecomposition(matrix.window, list(matrix.entities), vals, vecs, convention)


def mp_bounds(q_ratio: float) -> MPBounds:
    """Closed-form Marchenko-Pastur support [1 + 1/Q - 2*sqrt(1/Q), 1 + 1/Q + 2*sqrt(1/Q)]."""
    if q_ratio < 1:
        raise ValueError(f"aspect ratio Q = T/N must be >= 1, got {q_ratio}")
    inv = 1.0 / q_ratio
    return MPBounds(q_ratio, 1.0 + inv - 2.0 * np.sqrt(inv), 1.0 + inv + 2.0 * np.sqrt(inv))


def mp_density(lam: float | np.ndarray, q_ratio: float) -> float | np.ndarray:
    """Marchenko-Pastur eigenvalue density; zero outside the support."""
    bounds = mp_bounds(q_ratio)
    lam_arr = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam_arr)
    inside = (lam_arr > bounds.lambda_min) & (lam_arr < bounds.lambda_max) & (lam_arr > 0)
    li = lam_arr[inside]
    out[inside] = (
        q_ratio
        / (2.0 * np.pi)
        * np.sqrt((bounds.lambda_max - li) * (li - bounds.lambda_min))
        / li
    )
    return float(out) if np.isscalar(lam) else out


def _corr_eigvals(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=1, keepdims=True)
    Xc = X - mu
    sd = np.sqrt((Xc**2).mean(axis=1))
    Z = Xc / sd[:, None]
    C = Z @ Z.T / X.shape[1]
    return np.sort(np.linalg.eigvalsh((C + C.T) / 2.0))[::-1]


def null_spectrum(
    panel: ReturnPanel,
    window: WindowSpec,
    rounds: int = 1000,
    seed: int = 0,
    method: str = "pooled",
) -> NullSpectrum:
    """Permutation null for the window's eigenvalue spectrum.

    Each round independently shuffles every entity's window returns (destroying
    temporal and cross correlations), recomputes the correlation matrix and
    pools its eigenvalues.  The 5% critical value is the 95th percentile of the
    pooled eigenvalue distribution (``method="pooled"``, the default) or of the
    per-round largest eigenvalue (``method="round_max"``).
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if method not in ("pooled", "round_max"):
        raise ValueError(f"unknown critical-value method {method!r}")
    X = panel.window_slice(window)
    if np.any(X.std(axis=1) == 0.0):
        dead = int(np.flatnonzero(X.std(axis=1) == 0.0)[0])
        raise ValueError(
            f"entity {panel.entities[dead]!r} has zero variance in window "
            f"ending {window.end_quarter}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    n, s = X.shape
    samples = np.empty((rounds, n))
    rows = np.arange(n)[:, None]
    for r in range(rounds):
        perm = rng.random((n, s)).argsort(axis=1)
        samples[r] = _corr_eigvals(X[rows, perm])
    if method == "pooled":
        lam5 = float(np.percentile(samples.ravel(), 95.0))
    else:
        lam5 = float(np.percentile(samples.max(axis=1), 95.0))
    return NullSpectrum(samples, lam5, rounds, seed, method)


def deviating_eigenvalues(
    spec: SpectralDecomposition,
    bounds: MPBounds,
    null: NullSpectrum | None = None,
) -> DeviatingEigenvalues:
    """Eigenvalue indices exceeding the MP upper edge and the permutation critical value."""
    above_mp = tuple(int(i) + 1 for i in np.flatnonzero(spec.eigenvalues > bounds.lambda_max))
    if null is None:
        return DeviatingEigenvalues(above_mp, ())
    if null.samples.shape[1] != spec.n:
        raise ValueError(
            f"null spectrum was computed for {null.samples.shape[1]} entities, "
            f"decomposition has {spec.n}"
        )
    above_null = tuple(int(i) + 1 for i in np.flatnonzero(spec.eigenvalues > null.lambda_5pct))
    return DeviatingEigenvalues(above_mp, above_null)


def absorption_ratio(spec: SpectralDecomposition, n: int) -> float:
    """Fraction of total variance captured by the n largest eigenvalues."""
    if not 1 <= n <= spec.n:
        raise ValueError(f"n must be in 1..{spec.n}, got {n}")
    return float(spec.eigenvalues[:n].sum() / spec.n)


def negative_component_weight(u: np.ndarray) -> float:
    """Squared mass on the negative components of a unit vector."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("expected a unit vector")
    neg = u[u < 0]
    return float((neg**2).sum())


@dataclass
class ClusterSampledAbsorption:
    """Resample-averaged rolling eigenvalue curves for one-entity-per-cluster draws."""

    window_ends: list[Quarter]
    mean_eigenvalues: np.ndarray  # shape (n_windows, n_clusters), descending per row
    window_size: int
    resamples: int
    seed: int

    def absorption_ratios(self) -> np.ndarray:
        """E_n(t) = sum of the top n mean eigenvalues over the cluster count."""
        k = self.mean_eigenvalues.shape[1]
        return np.cumsum(self.mean_eigenvalues, axis=1) / k


def _as_groups(partition: "Partition | Sequence[Sequence[str]]") -> list[list[str]]:
    if hasattr(partition, "clusters"):
        return [list(c) for c in partition.clusters]
    return [list(g) for g in partition]


def cluster_sampled_absorption(
    panel: ReturnPanel,
    partition: "Partition | Sequence[Sequence[str]]",
    window_size: int = 8,
    resamples: int = 50,
    seed: int = 0,
) -> ClusterSampledAbsorption:
    """Fine-grained systemic-risk curves from cluster-stratified resampling.

    Per resample, one entity is drawn uniformly from each cluster; the rolling
    correlation eigenvalues of the resulting small panel are computed with the
    given short window and averaged across resamples.  Singleton clusters make
    the procedure deterministic.
    """
    groups = _as_groups(partition)
    k = len(groups)
    if k < 1:
        raise ValueError("need at least one cluster")
    if any(len(g) == 0 for g in groups):
        raise ValueError("every cluster must be nonempty")
    if window_size < k:
        raise ValueError(
            f"window size {window_size} is shorter than the cluster count {k}; "
            f"the sampled correlation matrix would be singular"
        )
    if resamples < 1:
        raise ValueError(f"resamples must be >= 1, got {resamples}")
    pos = {e: i for i, e in enumerate(panel.entities)}
    for g in groups:
        unknown = [e for e in g if e not in pos]
        if unknown:
            raise ValueError(f"unknown entities in cluster: {unknown}")
    seen: set = set()
    for g in groups:
        overlap = seen.intersection(g)
        if overlap:
            raise ValueError(f"clusters overlap at {sorted(overlap)}")
        seen.update(g)
    if panel.n_quarters < window_size:
        raise ValueError(
            f"panel has {panel.n_quarters} return quarters, fewer than window size {window_size}"
        )

    ends = panel.quarters[window_size - 1 :]
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    total = np.zeros((len(ends), k))
    for _ in range(resamples):
        idx = np.array([pos[g[rng.integers(len(g))]] for g in groups])
        for w in range(len(ends)):
            X = panel.returns[idx, w : w + window_size]
            total[w] += _corr_eigvals(X)
    return ClusterSampledAbsorption(list(ends), total / resamples, window_size, resamples, seed)
