"""Persistent cluster identities across windows.

Each window's partition becomes a vector of integer labels (0 = unclustered);
labels are matched across windows in reverse time by maximizing a similarity
score against already-labeled future windows, so a cluster keeps its color for
as long as its membership persists.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .clustering import Partition
from .ingest import Quarter, WindowSpec

__all__ = [
    "ColorConfiguration",
    "configuration_similarity",
    "color_timeline",
    "DEFAULT_PALETTE",
]

DEFAULT_PALETTE = [
    "yellow", "green", "red", "blue", "orange",
    "purple", "brown", "pink", "teal", "magenta",
]

_FRESH = object()  # sentinel option: give the cluster a brand-new label


@dataclass
class ColorConfiguration:
    """Integer cluster labels per entity for one window; 0 marks unclustered."""

    window: WindowSpec | None
    entities: list[str]
    labels: np.ndarray
    palette: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.entities),):
            raise ValueError("labels length does not match the entity count")
        if np.any(self.labels < 0):
            raise ValueError("labels must be nonnegative integers")

    def label_of(self, entity: str) -> int:
        return int(self.labels[self.entities.index(entity)])


def configuration_similarity(a: ColorConfiguration, b: ColorConfiguration) -> float:
    """Fraction of commonly-clustered entities that carry the same label.

    The numerator counts entities with identical nonzero labels in both
    configurations; the denominator counts entities clustered in both.  The
    value is 0 when no entity is clustered in both (by convention), 1 for
    identical configurations with at least one clustered entity.
    """
    if a.entities != b.entities:
        raise ValueError("configurations cover different entity universes")
    both = (a.labels > 0) & (b.labels > 0)
    den = int(both.sum())
    if den == 0:
        return 0.0
    num = int(((a.labels == b.labels) & both).sum())
    return num / den


def _partition_label_vector(partition: Partition, assignment: dict[int, int]) -> np.ndarray:
    labels = np.zeros(len(partition.entities), dtype=np.int64)
    index = {e: i for i, e in enumerate(partition.entities)}
    for c, cluster in enumerate(partition.clusters):
        for e in cluster:
            labels[index[e]] = assignment[c]
    return labels


def _sorted_cluster_order(partition: Partition) -> list[int]:
    # big clusters first; ties by the smallest member label for determinism
    return sorted(range(partition.n_clusters),
                  key=lambda c: (-len(partition.clusters[c]), min(partition.clusters[c])))


def _label_gains(partition: Partition, targets: list[np.ndarray],
                 existing: list[int]) -> list[dict[int, float]]:
    """Exact similarity gain of giving each cluster each existing label.

    The similarity denominator (entities clustered in both windows) does not
    depend on which labels the clusters receive, so the total score of an
    assignment decomposes into a sum of independent per-cluster gains; a fresh
    label always gains 0.
    """
    index = {e: i for i, e in enumerate(partition.entities)}
    cluster_idx = [np.array([index[e] for e in c]) for c in partition.clusters]
    clustered = np.zeros(len(partition.entities), dtype=bool)
    for idx in cluster_idx:
        clustered[idx] = True
    dens = [int((clustered & (t > 0)).sum()) for t in targets]
    gains: list[dict[int, float]] = []
    for idx in cluster_idx:
        by_label = {}
        for label in existing:
            g = 0.0
            for t, den in zip(targets, dens):
                if den:
                    g += int((t[idx] == label).sum()) / den
            by_label[label] = g
        gains.append(by_label)
    return gains


def _assign_labels(
    partition: Partition,
    targets: list[np.ndarray],
    existing: list[int],
    next_fresh: int,
    exhaustive_limit: int = 5,
) -> dict[int, int]:
    """Choose an injective cluster -> label mapping maximizing the similarity sum.

    Exhaustive over all mappings (existing labels or fresh ones) up to
    ``exhaustive_limit`` clusters, greedy best-gain beyond.  Ties prefer fresh
    labels: continuity is only claimed when it actually improves the score.
    """
    order = _sorted_cluster_order(partition)
    k = partition.n_clusters
    gains = _label_gains(partition, targets, existing)

    def finalize(choice: dict[int, object]) -> dict[int, int]:
        assignment: dict[int, int] = {}
        fresh = next_fresh
        for c in order:
            if choice[c] is _FRESH:
                assignment[c] = fresh
                fresh += 1
            else:
                assignment[c] = choice[c]
        return assignment

    if k <= exhaustive_limit:
        best_score = -1.0
        best: dict[int, object] | None = None
        options = [_FRESH] + sorted(existing)
        for combo in itertools.product(options, repeat=k):
            chosen = [c for c in combo if c is not _FRESH]
            if len(chosen) != len(set(chosen)):
                continue
            score = sum(0.0 if opt is _FRESH else gains[c][opt]
                        for c, opt in zip(order, combo))
            if score > best_score + 1e-12:
                best_score = score
                best = dict(zip(order, combo))
        assert best is not None
        return finalize(best)

    available = set(existing)
    choice: dict[int, object] = {}
    for c in order:
        candidates = [(gains[c][label], -label) for label in sorted(available)]
        if candidates:
            gain, neg_label = max(candidates)
            if gain > 1e-12:
                choice[c] = -neg_label
                available.discard(-neg_label)
                continue
        choice[c] = _FRESH
    return finalize(choice)


def color_timeline(
    partitions: list[Partition],
    interval_split: Quarter = Quarter(1996, 2),
    reference_range: tuple[Quarter, Quarter] = (Quarter(1997, 1), Quarter(1998, 3)),
    horizon: int = 6,
    palette: list[str] | None = None,
) -> list[ColorConfiguration]:
    """Assign persistent integer labels to clusters across a window sequence.

    Windows are processed in reverse time.  The final window's clusters get
    labels 1..k in descending size order.  Earlier windows at or after
    ``interval_split`` choose the label assignment maximizing the summed
    similarity against the next ``horizon`` already-labeled windows; windows
    before the split maximize similarity against the fixed ``reference_range``
    of window end quarters instead (the early-period partitions are too
    unstable for chaining).
    """
    if not partitions:
        raise ValueError("no partitions to track")
    for p in partitions:
        if p.window is None:
            raise ValueError("every partition needs a window to be tracked")
    partitions = sorted(partitions, key=lambda p: p.window.end_quarter)
    entities = partitions[-1].entities
    for p in partitions:
        if set(p.entities) != set(entities):
            raise ValueError("partitions cover different entity universes")
    palette = palette or DEFAULT_PALETTE

    n = len(partitions)
    labels_by_idx: dict[int, np.ndarray] = {}

    last = partitions[-1]
    assignment = {c: rank + 1 for rank, c in enumerate(_sorted_cluster_order(last))}
    labels_by_idx[n - 1] = _partition_label_vector(last, assignment)
    used = set(assignment.values()) if assignment else set()

    ref_lo, ref_hi = reference_range
    ref_idx = [i for i, p in enumerate(partitions)
               if ref_lo <= p.window.end_quarter <= ref_hi]

    for i in range(n - 2, -1, -1):
        part = partitions[i]
        end = part.window.end_quarter
        if end >= interval_split:
            target_idx = [j for j in range(i + 1, min(i + horizon, n - 1) + 1)]
        else:
            target_idx = [j for j in ref_idx if j > i]
        targets = [labels_by_idx[j] for j in target_idx]
        existing = sorted({int(v) for t in targets for v in t if v > 0})
        next_fresh = max(used) + 1 if used else 1
        assignment = _assign_labels(part, targets, existing, next_fresh)
        labels_by_idx[i] = _partition_label_vector(part, assignment)
        used.update(assignment.values())

    palette_map = {}
    for label in sorted(used):
        if label - 1 < len(palette):
            palette_map[label] = palette[label - 1]
        else:
            palette_map[label] = f"color{label}"

    configs = []
    for i, part in enumerate(partitions):
        labels = labels_by_idx[i]
        aligned = np.zeros(len(entities), dtype=np.int64)
        index = {e: j for j, e in enumerate(part.entities)}
        for j, e in enumerate(entities):
            aligned[j] = labels[index[e]]
        configs.append(ColorConfiguration(part.window, list(entities), aligned, palette_map))
    return configs
