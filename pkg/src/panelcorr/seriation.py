"""Matrix seriation: order entities so large entries concentrate near the diagonal.

The objective is the band cost Q(order) = sum over all position pairs (a, b) of
|a - b| * M[order[a], order[b]].  Minimization runs by simulated annealing over
permutations (with an exhaustive oracle for small matrices); signed entries are
kept as-is, which pushes negative partial correlations away from the diagonal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "AnnealSchedule",
    "Ordering",
    "seriation_cost",
    "brute_force_order",
    "anneal_order",
]

_BRUTE_FORCE_MAX = 9


@dataclass(frozen=True)
class AnnealSchedule:
    """Cooling schedule for the annealer.

    ``t0=None`` sets the initial temperature to the standard deviation of the
    costs reached by 100 random moves from the starting order; ``moves_per_temp
    =None`` uses 200*N moves per temperature.  Cooling is geometric with factor
    ``alpha``; the run stops after ``patience`` consecutive temperatures without
    a single cost-changing acceptance, or at ``max_temperatures``.
    """

    t0: float | None = None
    alpha: float = 0.995
    moves_per_temp: int | None = None
    patience: int = 5
    max_temperatures: int = 5000

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.patience < 1 or self.max_temperatures < 1:
            raise ValueError("patience and max_temperatures must be >= 1")
        if self.t0 is not None and self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if self.moves_per_temp is not None and self.moves_per_temp < 1:
            raise ValueError("moves_per_temp must be >= 1")


@dataclass
class Ordering:
    """A permutation of entity indices with its achieved band cost."""

    order: np.ndarray
    cost: float
    method: str
    seed: int | None = None
    restarts: int = 1
    schedule: AnnealSchedule | None = None
    n_temperatures: int = 0

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        n = self.order.size
        if not np.array_equal(np.sort(self.order), np.arange(n)):
            raise ValueError("order is not a permutation")

    def apply_labels(self, labels: list[str]) -> list[str]:
        return [labels[i] for i in self.order]


def _matrix_values(matrix) -> np.ndarray:
    values = matrix.values if hasattr(matrix, "values") else matrix
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {values.shape}")
    return values


def seriation_cost(matrix, order: np.ndarray) -> float:
    """Band cost of the given ordering: sum |a - b| * M[order[a], order[b]] over all pairs."""
    values = _matrix_values(matrix)
    order = np.asarray(order, dtype=np.int64)
    n = values.shape[0]
    if not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("order is not a valid permutation of the matrix indices")
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :])
    return float((dist * values[np.ix_(order, order)]).sum())


def _canonical(order: np.ndarray) -> np.ndarray:
    # reversal leaves the cost unchanged; fix the orientation deterministically
    if order.size > 1 and order[0] > order[-1]:
        return order[::-1].copy()
    return order


def brute_force_order(matrix) -> Ordering:
    """Exhaustive global minimizer over all permutations (modulo reversal), N <= 9.

    Ties are broken toward the lexicographically smallest canonical permutation.
    """
    values = _matrix_values(matrix)
    n = values.shape[0]
    if n > _BRUTE_FORCE_MAX:
        raise ValueError(f"brute force is limited to N <= {_BRUTE_FORCE_MAX}, got N = {n}")
    if n == 1:
        return Ordering(np.array([0]), 0.0, "brute_force")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    perms = perms[perms[:, 0] < perms[:, -1]]
    costs = np.zeros(len(perms))
    for a in range(n):
        for b in range(a + 1, n):
            costs += 2.0 * (b - a) * values[perms[:, a], perms[:, b]]
    best = costs.min()
    candidates = perms[np.abs(costs - best) <= 1e-12]
    winner = candidates[np.lexsort(candidates.T[::-1])][0]
    return Ordering(winner, seriation_cost(values, winner), "brute_force")


@njit(cache=True)
def _perm_cost(values, order):
    n = order.size
    total = 0.0
    for a in range(n):
        for b in range(n):
            total += abs(a - b) * values[order[a], order[b]]
    return total


@njit(cache=True)
def _delta_swap(values, order, p, q):
    # cost change of swapping the entities at positions p < q
    x = order[p]
    y = order[q]
    delta = 0.0
    for r in range(order.size):
        if r == p or r == q:
            continue
        z = order[r]
        delta += (abs(r - p) - abs(r - q)) * (values[y, z] - values[x, z])
    return 2.0 * delta


@njit(cache=True)
def _delta_reverse(values, order, p, q):
    # cost change of reversing the segment of positions p..q inclusive
    n = order.size
    delta = 0.0
    for r in range(p, q + 1):
        z = order[r]
        left = 0.0
        for o in range(p):
            left += values[z, order[o]]
        right = 0.0
        for o in range(q + 1, n):
            right += values[z, order[o]]
        delta += (p + q - 2 * r) * (left - right)
    return 2.0 * delta


@njit(cache=True)
def _apply_reverse(order, p, q):
    while p < q:
        tmp = order[p]
        order[p] = order[q]
        order[q] = tmp
        p += 1
        q -= 1


@njit(cache=True)
def _random_move_delta(values, order):
    # sample one move uniformly from {adjacent swap, pair swap, segment reversal}
    # and return (kind, p, q, delta) without applying it
    n = order.size
    kind = np.random.randint(3)
    if kind == 0:
        p = np.random.randint(n - 1)
        q = p + 1
    else:
        p = np.random.randint(n)
        q = np.random.randint(n)
        while q == p:
            q = np.random.randint(n)
        if p > q:
            p, q = q, p
    if kind == 2:
        delta = _delta_reverse(values, order, p, q)
    else:
        delta = _delta_swap(values, order, p, q)
    return kind, p, q, delta


@njit(cache=True)
def _initial_temperature(values, order, seed):
    np.random.seed(seed)
    n_probe = 100
    costs = np.empty(n_probe)
    base = _perm_cost(values, order)
    for i in range(n_probe):
        _, _, _, delta = _random_move_delta(values, order)
        costs[i] = base + delta
    return costs.std()


@njit(cache=True)
def _anneal(values, order, t0, alpha, moves_per_temp, patience, max_temps, seed):
    np.random.seed(seed)
    cost = _perm_cost(values, order)
    best = order.copy()
    best_cost = cost
    temp = t0
    silent = 0
    temps = 0
    while silent < patience and temps < max_temps:
        changed = False
        for _ in range(moves_per_temp):
            kind, p, q, delta = _random_move_delta(values, order)
            if delta <= 0.0 or np.random.random() < np.exp(-delta / temp):
                if kind == 2:
                    _apply_reverse(order, p, q)
                else:
                    tmp = order[p]
                    order[p] = order[q]
                    order[q] = tmp
                cost += delta
                if delta != 0.0:
                    changed = True
                if cost < best_cost - 1e-12:
                    best_cost = cost
                    best = order.copy()
        temps += 1
        silent = 0 if changed else silent + 1
        temp *= alpha
    return best, temps


def _derive_seed(seed: int, *branch: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(b) for b in branch]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def anneal_order(
    matrix,
    schedule: AnnealSchedule | None = None,
    restarts: int = 1,
    seed: int = 0,
) -> Ordering:
    """Simulated-annealing seriation with Metropolis acceptance and restarts.

    Moves are adjacent transpositions, random pair swaps and segment reversals,
    chosen uniformly; acceptance probability for an uphill move of size dQ at
    temperature T is exp(-dQ/T), cooling geometrically per the schedule.  The
    first restart starts from the identity order (so the result never costs
    more than the input ordering); further restarts start from random
    permutations with independently derived seeds.  The lowest-cost restart
    wins, ties going to the lowest restart index, and the returned order is
    canonically oriented (first entity has the smaller original index).
    """
    values = _matrix_values(matrix)
    n = values.shape[0]
    if n < 2:
        raise ValueError("need at least 2 entities to seriate")
    schedule = schedule or AnnealSchedule()
    moves = schedule.moves_per_temp if schedule.moves_per_temp is not None else 200 * n

    best_order: np.ndarray | None = None
    best_cost = np.inf
    total_temps = 0
    for r in range(restarts):
        sub_seed = _derive_seed(seed, r)
        if r == 0:
            start = np.arange(n, dtype=np.int64)
        else:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, r]))
            start = rng.permutation(n).astype(np.int64)
        if schedule.t0 is not None:
            t0 = schedule.t0
        else:
            probe_seed = _derive_seed(seed, r, 1)
            t0 = max(float(_initial_temperature(values, start.copy(), probe_seed)), 1e-12)
        result, temps = _anneal(
            values, start.copy(), t0, schedule.alpha, moves,
            schedule.patience, schedule.max_temperatures, sub_seed,
        )
        total_temps += int(temps)
        cost = seriation_cost(values, result)
        if cost < best_cost - 1e-12:
            best_cost = cost
            best_order = result
    assert best_order is not None
    best_order = _canonical(best_order)
    return Ordering(
        best_order,
        seriation_cost(values, best_order),
        "anneal",
        seed=seed,
        restarts=restarts,
        schedule=schedule,
        n_temperatures=total_temps,
    )
