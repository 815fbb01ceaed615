"""Box clustering of seriated partial-correlation matrices.

A partition grows contiguous boxes along the seriated diagonal; a consensus
step stabilizes the stochastic seriation by aggregating many restarts into a
co-cluster affinity matrix and re-clustering it to a fixed point.  Clusters are
then attributed to eigen-components via the information ratio and tagged with
plot symbols.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .corrlab import CorrelationMatrix, PartialCorrelationMatrix, corr_critical_value
from .ingest import WindowSpec
from .seriation import AnnealSchedule, Ordering, anneal_order, seriation_cost
from .spectra import SpectralDecomposition

__all__ = [
    "Partition",
    "AffinityMatrix",
    "ClusterAttribution",
    "SYMBOLS",
    "greedy_box_partition",
    "consensus_partition",
    "modularity",
    "component_matrix",
    "information_ratio",
    "assign_symbols",
]

SYMBOLS = {1: "circle", 2: "square", 3: "diamond", 4: "triangle"}


@dataclass
class Partition:
    """Disjoint clusters (each with >= 2 members) plus isolated entities."""

    entities: list[str]
    clusters: list[list[str]]
    isolated: list[str]
    window: WindowSpec | None = None
    provenance: str = "direct"
    stable: bool = True

    def __post_init__(self):
        members = [e for c in self.clusters for e in c] + list(self.isolated)
        if len(members) != len(set(members)):
            raise ValueError("clusters and isolated entities must be pairwise disjoint")
        if set(members) != set(self.entities):
            raise ValueError("clusters and isolated entities must cover all entities exactly")
        for c in self.clusters:
            if len(c) < 2:
                raise ValueError(
                    f"cluster {c!r} has fewer than 2 members; singletons belong in isolated"
                )

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def labels(self) -> dict[str, int]:
        """Map entity -> 1-based cluster index (0 for isolated)."""
        out = {e: 0 for e in self.isolated}
        for k, cluster in enumerate(self.clusters, start=1):
            for e in cluster:
                out[e] = k
        return out

    def same_assignment(self, other: "Partition") -> bool:
        if set(self.entities) != set(other.entities):
            return False
        mine = {frozenset(c) for c in self.clusters}
        theirs = {frozenset(c) for c in other.clusters}
        return mine == theirs and set(self.isolated) == set(other.isolated)


@dataclass
class AffinityMatrix:
    """Co-cluster frequency over restarts; entries in [0, 1], unit diagonal."""

    window: WindowSpec | None
    entities: list[str]
    values: np.ndarray
    restarts: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.entities)
        if self.values.shape != (n, n):
            raise ValueError("affinity shape does not match the entity count")
        if np.max(np.abs(self.values - self.values.T)) > 1e-12:
            raise ValueError("affinity matrix must be symmetric")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("affinity entries must be frequencies in [0, 1]")
        if np.any(np.diag(self.values) != 1.0):
            raise ValueError("affinity diagonal must be exactly 1")


@dataclass
class ClusterAttribution:
    """Information-ratio attribution of one cluster to the tracked eigen-indices."""

    cluster: list[str]
    g_values: np.ndarray  # information ratio per eigen-index, 1-based alignment
    winning_index: int
    symbol: str


def _default_min_gain(matrix) -> float:
    window = getattr(matrix, "window", None)
    if window is None:
        raise ValueError(
            "min_gain default needs a windowed matrix; pass min_gain explicitly"
        )
    conditioning = 1 if isinstance(matrix, PartialCorrelationMatrix) else 0
    return corr_critical_value(window.size_s, 0.05, conditioning=conditioning)


def greedy_box_partition(matrix, order: Ordering | np.ndarray, min_gain: float | None = None) -> Partition:
    """Grow contiguous boxes along the seriated diagonal.

    A box extends while the candidate entity's mean matrix value against the
    current box members exceeds ``min_gain`` (default: the two-sided 5%
    critical correlation for the matrix's window).  Boxes of size 1 become
    isolated entities.
    """
    values = matrix.values
    entities = list(matrix.entities)
    perm = order.order if isinstance(order, Ordering) else np.asarray(order, dtype=np.int64)
    n = len(entities)
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("order is not a valid permutation for this matrix")
    if min_gain is None:
        min_gain = _default_min_gain(matrix)

    clusters: list[list[str]] = []
    isolated: list[str] = []
    i = 0
    while i < n:
        box = [perm[i]]
        j = i + 1
        while j < n:
            link = values[perm[j], box].mean()
            if link <= min_gain:
                break
            box.append(perm[j])
            j += 1
        if len(box) >= 2:
            clusters.append([entities[k] for k in box])
        else:
            isolated.append(entities[box[0]])
        i = j
    return Partition(entities, clusters, isolated,
                     window=getattr(matrix, "window", None), provenance="direct")


def _label_hash(entities: list[str]) -> int:
    digest = hashlib.sha256("\x1f".join(sorted(entities)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class _CanonicalView:
    """Matrix view with entities in sorted-label order (drives seed stability)."""

    window: WindowSpec | None
    entities: list[str]
    values: np.ndarray


def consensus_partition(
    matrix: PartialCorrelationMatrix,
    restarts: int = 200,
    seed: int = 0,
    schedule: AnnealSchedule | None = None,
    min_gain: float | None = None,
    affinity_min_gain: float = 0.5,
    max_iterations: int = 10,
) -> tuple[Partition, AffinityMatrix]:
    """Stabilized partition via restarted seriation and affinity re-clustering.

    Each restart seriates the matrix with an independently derived seed and box-
    partitions it; the co-cluster frequencies over all restarts form the
    affinity matrix, which is then seriated and box-partitioned repeatedly
    (threshold ``affinity_min_gain``) until the partition is identical on two
    consecutive iterations.  Entities are processed in sorted-label order and
    per-restart seeds mix in a hash of the label set, so the result does not
    depend on the input row order.  If no fixed point appears within
    ``max_iterations`` the last partition is returned flagged unstable.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    if min_gain is None:
        min_gain = _default_min_gain(matrix)
    base = _label_hash(matrix.entities)
    rank = np.argsort(np.array(matrix.entities, dtype=object))
    canon = _CanonicalView(
        matrix.window,
        [matrix.entities[i] for i in rank],
        matrix.values[np.ix_(rank, rank)],
    )
    n = len(canon.entities)
    index = {e: i for i, e in enumerate(canon.entities)}

    counts = np.zeros((n, n))
    for r in range(restarts):
        order = anneal_order(canon, schedule=schedule, restarts=1,
                             seed=_mix_seed(seed, base, r))
        part = greedy_box_partition(canon, order, min_gain=min_gain)
        for cluster in part.clusters:
            idx = np.array([index[e] for e in cluster])
            counts[np.ix_(idx, idx)] += 1.0
    affinity_values = counts / restarts
    np.fill_diagonal(affinity_values, 1.0)
    affinity = AffinityMatrix(matrix.window, list(canon.entities), affinity_values, restarts)

    previous: Partition | None = None
    part = None
    for it in range(max_iterations):
        order = anneal_order(affinity, schedule=schedule, restarts=1,
                             seed=_mix_seed(seed, base, 10_000_000 + it))
        part = greedy_box_partition(affinity, order, min_gain=affinity_min_gain)
        if previous is not None and part.same_assignment(previous):
            part.provenance = "consensus"
            return part, affinity
        previous = part
    assert part is not None
    part.provenance = "consensus"
    part.stable = False
    return part, affinity


def _mix_seed(seed: int, label_hash: int, branch: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, label_hash, branch])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def modularity(matrix, partition: Partition) -> float:
    """Newman-Girvan weighted modularity on the positive part of the matrix.

    Negative entries are clipped to zero (modularity needs nonnegative
    weights); isolated entities count as singleton communities.  All-zero
    positive weight yields 0.
    """
    values = matrix.values if hasattr(matrix, "values") else np.asarray(matrix, dtype=float)
    entities = list(matrix.entities) if hasattr(matrix, "entities") else list(partition.entities)
    if set(entities) != set(partition.entities):
        raise ValueError("partition entities do not match the matrix")
    w = np.clip(values, 0.0, None).copy()
    np.fill_diagonal(w, 0.0)
    total = w.sum()
    if total == 0.0:
        return 0.0
    index = {e: i for i, e in enumerate(entities)}
    degrees = w.sum(axis=1)
    m = 0.0
    communities = [list(c) for c in partition.clusters] + [[e] for e in partition.isolated]
    for community in communities:
        idx = np.array([index[e] for e in community])
        within = w[np.ix_(idx, idx)].sum()
        degree = degrees[idx].sum()
        m += within / total - (degree / total) ** 2
    return float(m)


def component_matrix(spec: SpectralDecomposition, n: int) -> np.ndarray:
    """Rank-one matrix contributed by the n-th eigen-component: lambda_n * u_n u_n^T."""
    u = spec.vector(n)
    return spec.eigenvalues[n - 1] * np.outer(u, u)


def information_ratio(
    matrix: CorrelationMatrix,
    spec: SpectralDecomposition,
    cluster: list[str],
) -> np.ndarray:
    """Share of a cluster's correlation mass carried by each eigen-component.

    G(n, cluster) = sum_{i,j in cluster} of the n-th component matrix over the
    same sum of the full correlation matrix, diagonal terms included; the G
    values over all eigen-indices sum to 1.  A vanishing denominator is an
    error (the caller should skip attribution for that cluster).
    """
    if not cluster:
        raise ValueError("cluster is empty")
    index = {e: i for i, e in enumerate(matrix.entities)}
    missing = [e for e in cluster if e not in index]
    if missing:
        raise ValueError(f"unknown entities in cluster: {missing}")
    if matrix.entities != spec.entities:
        raise ValueError("correlation matrix and decomposition entities differ")
    idx = np.array([index[e] for e in cluster])
    denom = float(matrix.values[np.ix_(idx, idx)].sum())
    if abs(denom) < 1e-12:
        raise ValueError(
            f"cluster correlation mass is zero; attribution undefined for {cluster!r}"
        )
    mass = spec.eigenvectors[idx].sum(axis=0)  # per-component sum over the cluster
    return spec.eigenvalues * mass**2 / denom


def assign_symbols(
    attributions: list[tuple[list[str], np.ndarray]],
    negative_weight: float,
    v_threshold: float = 0.05,
) -> list[ClusterAttribution]:
    """Pick each cluster's dominant eigen-index among 1..4 and map it to a symbol.

    The leading index is excluded when the negative-component weight of the
    first eigenvector falls below ``v_threshold`` (a nearly all-positive
    leading eigenvector reflects the common market mode, not a partition).
    Ties break toward the lower eigen-index.
    """
    results = []
    for cluster, g in attributions:
        g = np.asarray(g, dtype=float)
        if g.size < 4:
            raise ValueError("attribution needs information ratios for eigen-indices 1..4")
        eligible = list(range(1, 5))
        if negative_weight < v_threshold:
            eligible.remove(1)
        winner = max(eligible, key=lambda n: (g[n - 1], -n))
        results.append(ClusterAttribution(list(cluster), g, winner, SYMBOLS[winner]))
    return results
