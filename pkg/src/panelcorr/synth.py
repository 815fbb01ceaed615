"""Synthetic price panels with planted market and cluster factor structure.

Returns follow r_i(t) = beta_i * m(t) + gamma_i * f_{c(i)}(t) + sigma * eps_i(t)
with independent unit-variance factors; levels are rebuilt by exponentiating
cumulative returns.  The planted partition and market series come back with the
panel so recovery can be scored against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import Partition
from .ingest import PricePanel, Quarter

__all__ = ["FactorModelSpec", "generate_factor_panel"]


@dataclass
class FactorModelSpec:
    """Parameters of the planted factor model.

    ``n_quarters`` counts return observations; the generated price panel has
    one more column.  ``memberships`` lists clusters as index groups (entities
    left out get no cluster factor).  ``market_beta`` and ``cluster_loading``
    accept a scalar or one value per entity.
    """

    n_entities: int
    n_quarters: int
    market_beta: float | Sequence[float] = 1.0
    memberships: Sequence[Sequence[int]] = field(default_factory=list)
    cluster_loading: float | Sequence[float] = 0.0
    noise_scale: float = 1.0
    seed: int = 0
    innovations: str = "gaussian"
    t_dof: float = 3.0
    start_quarter: Quarter = Quarter(1975, 1)
    base_level: float = 100.0

    def __post_init__(self):
        if self.n_entities < 1 or self.n_quarters < 1:
            raise ValueError("need at least one entity and one quarter")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be nonnegative")
        if self.innovations not in ("gaussian", "student_t"):
            raise ValueError(f"unknown innovation family {self.innovations!r}")
        if self.innovations == "student_t" and self.t_dof <= 0:
            raise ValueError("Student-t innovations need positive degrees of freedom")
        seen: set[int] = set()
        for group in self.memberships:
            for i in group:
                if not 0 <= i < self.n_entities:
                    raise ValueError(f"cluster member index {i} out of range")
                if i in seen:
                    raise ValueError(f"entity index {i} appears in two clusters")
                seen.add(i)

    def betas(self) -> np.ndarray:
        return _per_entity(self.market_beta, self.n_entities, "market_beta")

    def loadings(self) -> np.ndarray:
        return _per_entity(self.cluster_loading, self.n_entities, "cluster_loading")

    def entity_names(self) -> list[str]:
        width = max(2, len(str(self.n_entities - 1)))
        return [f"E{i:0{width}d}" for i in range(self.n_entities)]


def _per_entity(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or one value per entity")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def generate_factor_panel(
    spec: FactorModelSpec,
) -> tuple[PricePanel, Partition, np.ndarray]:
    """Draw one panel from the factor model.

    Returns the price panel (levels from ``base_level`` via cumulated returns),
    the planted partition over the generated entity names, and the market
    factor series aligned with the return quarters.  Deterministic given the
    spec's seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & 0xFFFFFFFFFFFFFFFF]))
    n, T = spec.n_entities, spec.n_quarters

    def draw(size):
        if spec.innovations == "student_t":
            return rng.standard_t(spec.t_dof, size=size)
        return rng.standard_normal(size=size)

    market = draw(T)
    cluster_factors = draw((len(spec.memberships), T))
    noise = draw((n, T))

    betas = spec.betas()
    loadings = spec.loadings()
    returns = betas[:, None] * market + spec.noise_scale * noise
    for c, group in enumerate(spec.memberships):
        idx = np.fromiter(group, dtype=int)
        returns[idx] += loadings[idx, None] * cluster_factors[c]

    levels = spec.base_level * np.exp(
        np.concatenate([np.zeros((n, 1)), np.cumsum(returns, axis=1)], axis=1)
    )
    quarters = Quarter.span(spec.start_quarter, T + 1)
    names = spec.entity_names()
    panel = PricePanel(names, quarters, levels)

    clustered = {i for group in spec.memberships for i in group}
    planted = Partition(
        entities=names,
        clusters=[[names[i] for i in group] for group in spec.memberships],
        isolated=[names[i] for i in range(n) if i not in clustered],
        provenance="planted",
    )
    return panel, planted, market
