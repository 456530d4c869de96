"""Shapley-style attribution: exact, neighborhood-local, connected-subset,
permutation-sampled, and graph-restricted (Myerson) estimators.

All estimators consume a memoized :class:`~shapgraph.valuation.SetFunction`,
so their reported ``model_evaluations`` is the number of distinct subsets the
run actually forced, with caching shared across features and methods.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import BudgetExceededError
from .graphs import (
    DEFAULT_ENUMERATION_BUDGET,
    FeatureGraph,
    connected_subsets_containing,
    k_neighborhood,
)
from .valuation import GraphRestrictedGame, SetFunction

DEFAULT_EXACT_LIMIT = 20
DEFAULT_MYERSON_LIMIT = 15
DEFAULT_SUBSET_BUDGET = 1 << 20

C_SHAPLEY_WEIGHTINGS = ("myerson", "interior")


@dataclass
class AttributionResult:
    """Per-feature scores with run metadata."""

    method: str
    scores: np.ndarray
    model_evaluations: int
    order_k: int | None = None
    seed: int | None = None
    elapsed: float = 0.0
    per_feature_evaluations: list[int] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)

    @property
    def d(self) -> int:
        return len(self.scores)

    def to_json(self, include_elapsed: bool = False) -> dict:
        """JSON-serializable summary; wall-clock is omitted by default so that
        seeded runs serialize byte-identically."""
        return {
            "method": self.method,
            "k": self.order_k,
            "scores": [float(s) for s in self.scores],
            "evals": self.model_evaluations,
            "seed": self.seed,
            "elapsed_ms": round(self.elapsed * 1000.0, 3) if include_elapsed else None,
        }


def exact_shapley_weights(d: int) -> np.ndarray:
    """w[s] = 1 / (d * C(d-1, s-1)): weight of v(S) with |S| = s for a member."""
    w = np.zeros(d + 1)
    for s in range(1, d + 1):
        w[s] = 1.0 / (d * math.comb(d - 1, s - 1))
    return w


def exact_shapley(game: SetFunction, limit: int = DEFAULT_EXACT_LIMIT) -> AttributionResult:
    """Exact Shapley values by one pass over all 2**d subsets.

    Each subset value is scattered to every feature (positively where the
    feature is a member, negatively where it completes a larger subset), so
    the memoized game is evaluated at most 2**d times in total.
    """
    d = game.d
    if d > limit:
        raise ValueError(
            f"exact Shapley on {d} features needs 2^{d} evaluations "
            f"(limit {limit}); use l_shapley / c_shapley / sample_shapley instead"
        )
    start = time.perf_counter()
    before = game.eval_count
    values = game.scores(range(1 << d))
    phi = _kernels.shapley_scatter(values, d, exact_shapley_weights(d))
    return AttributionResult(
        method="exact",
        scores=phi,
        model_evaluations=game.eval_count - before,
        elapsed=time.perf_counter() - start,
    )


def _submasks(mask: int) -> Iterator[int]:
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def l_shapley_terms(
    g: FeatureGraph, i: int, k: int, budget: int = DEFAULT_SUBSET_BUDGET
) -> list[tuple[int, float]]:
    """(subset, weight) pairs of the order-k local estimate for feature i.

    The weights are the exact-Shapley coefficients restricted to the
    k-neighborhood: 1 / (|N| * C(|N|-1, |T|-1)) for each T containing i.
    """
    nbhd = k_neighborhood(g, i, k)
    n = bin(nbhd).count("1")
    if 1 << (n - 1) > budget:
        raise BudgetExceededError(
            f"local estimate at node {i} would enumerate 2^{n - 1} subsets of its "
            f"{n}-node neighborhood, beyond the budget of {budget}",
            count=budget,
        )
    rest = nbhd & ~(1 << i)
    terms = []
    for sub in _submasks(rest):
        t = bin(sub).count("1") + 1
        weight = 1.0 / (n * math.comb(n - 1, t - 1))
        terms.append((sub | (1 << i), weight))
    return terms


def _weighted_marginals(
    game: SetFunction, i: int, terms: list[tuple[int, float]]
) -> float:
    masks = []
    for mask, _ in terms:
        masks.append(mask)
        masks.append(mask & ~(1 << i))
    vals = game.scores(masks)
    total = 0.0
    for pos, (_, weight) in enumerate(terms):
        total += weight * (vals[2 * pos] - vals[2 * pos + 1])
    return total


def l_shapley(
    game: SetFunction,
    g: FeatureGraph,
    i: int,
    k: int,
    budget: int = DEFAULT_SUBSET_BUDGET,
) -> float:
    """Order-k local Shapley estimate for feature i.

    Averages marginal contributions over every subset of the k-neighborhood
    containing i, with neighborhood-restricted Shapley coefficients.  For k at
    least the graph diameter this is the exact Shapley value.
    """
    return _weighted_marginals(game, i, l_shapley_terms(g, i, k, budget))


def l_shapley_all(
    game: SetFunction,
    g: FeatureGraph,
    k: int,
    budget: int = DEFAULT_SUBSET_BUDGET,
) -> AttributionResult:
    """Local Shapley estimates for every feature, sharing one evaluation cache."""
    start = time.perf_counter()
    before = game.eval_count
    per_feature = []
    scores = np.zeros(g.d)
    for i in range(g.d):
        at = game.eval_count
        scores[i] = l_shapley(game, g, i, k, budget)
        per_feature.append(game.eval_count - at)
    return AttributionResult(
        method="l_shapley",
        scores=scores,
        model_evaluations=game.eval_count - before,
        order_k=k,
        elapsed=time.perf_counter() - start,
        per_feature_evaluations=per_feature,
    )


def connected_subset_weight(size: int, boundary: int) -> float:
    """Myerson-partition weight of a connected subset.

    ``boundary`` is how many of the subset's graph neighbors lie inside the
    enumeration universe; the weight is the total exact-Shapley coefficient
    mass of all supersets whose component containing the feature is exactly
    this subset.  With two blocked neighbors it reduces to the familiar
    2 / ((u+2)(u+1)u) interior form.
    """
    s = size + boundary - 1
    return 1.0 / ((s + 1) * math.comb(s, size - 1))


def interior_subset_weight(size: int) -> float:
    """Fixed interior-form coefficient 2 / ((u+2)(u+1)u)."""
    return 2.0 / ((size + 2) * (size + 1) * size)


def c_shapley_terms(
    g: FeatureGraph,
    i: int,
    k: int,
    weighting: str = "myerson",
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> list[tuple[int, float]]:
    """(subset, weight) pairs of the order-k connected estimate for feature i.

    ``weighting="myerson"`` accounts for each subset's actual boundary inside
    the neighborhood, which makes the order-d estimate coincide with the
    Myerson value of the component-additive game.  ``weighting="interior"``
    applies the interior coefficient to every subset regardless of boundary.
    """
    if weighting not in C_SHAPLEY_WEIGHTINGS:
        raise ValueError(f"weighting must be one of {C_SHAPLEY_WEIGHTINGS}, got {weighting!r}")
    nbhd = k_neighborhood(g, i, k)
    terms = []
    for mask in connected_subsets_containing(g, i, k, budget=budget):
        size = bin(mask).count("1")
        if weighting == "myerson":
            blocked = bin(g.boundary(mask) & nbhd).count("1")
            weight = connected_subset_weight(size, blocked)
        else:
            weight = interior_subset_weight(size)
        terms.append((mask, weight))
    return terms


def c_shapley(
    game: SetFunction,
    g: FeatureGraph,
    i: int,
    k: int,
    weighting: str = "myerson",
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> float:
    """Order-k connected-subset Shapley estimate for feature i.

    Sums weighted marginal contributions over the connected subsets of the
    k-neighborhood that contain i.
    """
    return _weighted_marginals(game, i, c_shapley_terms(g, i, k, weighting, budget))


def c_shapley_all(
    game: SetFunction,
    g: FeatureGraph,
    k: int,
    weighting: str = "myerson",
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> AttributionResult:
    """Connected-subset estimates for every feature, sharing one cache."""
    start = time.perf_counter()
    before = game.eval_count
    per_feature = []
    scores = np.zeros(g.d)
    for i in range(g.d):
        at = game.eval_count
        scores[i] = c_shapley(game, g, i, k, weighting, budget)
        per_feature.append(game.eval_count - at)
    return AttributionResult(
        method="c_shapley",
        scores=scores,
        model_evaluations=game.eval_count - before,
        order_k=k,
        elapsed=time.perf_counter() - start,
        per_feature_evaluations=per_feature,
    )


def sample_shapley(
    game: SetFunction, num_permutations: int, seed: int
) -> AttributionResult:
    """Monte Carlo Shapley estimate from randomly sampled feature orderings.

    For each sampled permutation, every feature receives its marginal
    contribution to the set of features preceding it; scores are averaged
    over permutations.  The permutation stream is drawn from the seed before
    any evaluation, so results are reproducible.
    """
    if num_permutations < 1:
        raise ValueError("need at least one permutation")
    d = game.d
    start = time.perf_counter()
    before = game.eval_count
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(d) for _ in range(num_permutations)]
    totals = np.zeros(d)
    for perm in perms:
        prefixes = [0]
        mask = 0
        for j in perm:
            mask |= 1 << int(j)
            prefixes.append(mask)
        vals = game.scores(prefixes)
        for pos, j in enumerate(perm):
            totals[int(j)] += vals[pos + 1] - vals[pos]
    return AttributionResult(
        method="sample_shapley",
        scores=totals / num_permutations,
        model_evaluations=game.eval_count - before,
        seed=seed,
        elapsed=time.perf_counter() - start,
    )


def myerson_value(
    game: SetFunction, g: FeatureGraph, limit: int = DEFAULT_MYERSON_LIMIT
) -> AttributionResult:
    """Shapley value of the component-additive extension of the game.

    The extension sums v(T) - v(empty) over the connected components of each
    subset (zero at the empty set), so games with a nonzero baseline behave
    the same as their zero-anchored counterparts.  The base game is queried
    only on connected subsets; reported evaluations are the distinct
    base-game queries.
    """
    d = game.d
    if d > limit:
        raise ValueError(
            f"Myerson value on {d} features decomposes all 2^{d} subsets "
            f"(limit {limit}); use c_shapley for an approximation"
        )
    start = time.perf_counter()
    before = game.eval_count
    comp = _kernels.lowbit_component_masks(np.asarray(g.adjacency, dtype=np.int64), d)
    connected = np.unique(comp[1:])
    baseline = game(0)
    vals = game.scores([int(c) for c in connected])
    raw = np.zeros(1 << d)
    raw[connected] = vals - baseline
    table = _kernels.component_sum_table(comp, raw)
    phi = _kernels.shapley_scatter(table, d, exact_shapley_weights(d))
    return AttributionResult(
        method="myerson",
        scores=phi,
        model_evaluations=game.eval_count - before,
        elapsed=time.perf_counter() - start,
    )


def myerson_value_generic(
    game: SetFunction, g: FeatureGraph, limit: int = DEFAULT_MYERSON_LIMIT
) -> AttributionResult:
    """Myerson value via the explicit graph-restricted wrapper.

    Slower than :func:`myerson_value` but independent of the dense kernels;
    kept as the cross-checking route.
    """
    restricted = GraphRestrictedGame(game, g, normalize_empty=True)
    before = game.eval_count
    result = exact_shapley(restricted, limit=limit)
    result.method = "myerson"
    result.model_evaluations = game.eval_count - before
    return result
