"""Exact rank-probability analysis under training uncertainty.

Per cluster set, every joint draw of one initialization per model is
equally likely; ranking the drawn scores over all I^M outcomes gives each
model's exact probability of landing at each rank.  The per-set matrices
are averaged uniformly over cluster sets.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIGHER_IS_BETTER = "higher_is_better"
LOWER_IS_BETTER = "lower_is_better"

EXACT_ENUMERATION_LIMIT = 10_000_000


class RankSimError(ValueError):
    pass


@dataclass
class RankMatrix:
    probs: np.ndarray  # (M, M); probs[m][r] = P(model m attains rank r), rank 0 best
    metric_name: str
    direction: str
    monte_carlo: bool = False
    mc_standard_error: float | None = None

    def to_json(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "direction": self.direction,
            "probs": self.probs.tolist(),
            "monte_carlo": self.monte_carlo,
            "mc_standard_error": self.mc_standard_error,
        }

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))


def _rank_mass(values: np.ndarray, direction: str) -> np.ndarray:
    """Rank-probability mass for one joint outcome; tied models split the
    mass of the rank positions they jointly occupy."""
    n_models = len(values)
    order = -values if direction == HIGHER_IS_BETTER else values
    mass = np.zeros((n_models, n_models))
    by_value: dict[float, list[int]] = {}
    for m, v in enumerate(order):
        by_value.setdefault(float(v), []).append(m)
    rank = 0
    for v in sorted(by_value):
        tied = by_value[v]
        share = 1.0 / len(tied)
        for m in tied:
            mass[m, rank:rank + len(tied)] += share
        rank += len(tied)
    return mass


def _enumerate_set(scores: np.ndarray, direction: str) -> np.ndarray:
    n_models, n_inits = scores.shape
    probs = np.zeros((n_models, n_models))
    n_outcomes = n_inits ** n_models
    for combo in itertools.product(range(n_inits), repeat=n_models):
        values = scores[np.arange(n_models), combo]
        probs += _rank_mass(values, direction)
    return probs / n_outcomes


def _sample_set(scores: np.ndarray, direction: str, n_draws: int,
                rng: np.random.Generator) -> np.ndarray:
    n_models, n_inits = scores.shape
    draws = rng.integers(n_inits, size=(n_draws, n_models))
    values = scores[np.arange(n_models)[None, :], draws]
    signed = -values if direction == HIGHER_IS_BETTER else values
    # continuous scores: ties have probability ~0 under sampling
    ranks = signed.argsort(axis=1).argsort(axis=1)
    probs = np.zeros((n_models, n_models))
    for m in range(n_models):
        probs[m] = np.bincount(ranks[:, m], minlength=n_models) / n_draws
    return probs


def rank_probabilities(scores_per_set, direction: str = HIGHER_IS_BETTER,
                       metric_name: str = "", n_mc_draws: int = 1_000_000,
                       seed: int = 0) -> RankMatrix:
    """Average rank-probability matrix over cluster sets.

    `scores_per_set` is a sequence of M x I arrays (one per cluster set).
    Enumeration is exact while I^M stays tractable; larger designs fall
    back to seeded Monte Carlo with a reported standard error.
    """
    if direction not in (HIGHER_IS_BETTER, LOWER_IS_BETTER):
        raise RankSimError(f"unknown direction {direction!r}")
    arrays = [np.asarray(s, dtype=float) for s in scores_per_set]
    if not arrays:
        raise RankSimError("need at least one cluster set of scores")
    shape = arrays[0].shape
    if len(shape) != 2 or shape[0] < 2 or shape[1] < 1:
        raise RankSimError(f"scores must be M x I with M >= 2, got {shape}")
    if any(a.shape != shape for a in arrays):
        raise RankSimError("inconsistent score shapes across cluster sets")

    n_models, n_inits = shape
    exact = n_inits ** n_models <= EXACT_ENUMERATION_LIMIT
    rng = np.random.default_rng(seed)
    total = np.zeros((n_models, n_models))
    for scores in arrays:
        if exact:
            total += _enumerate_set(scores, direction)
        else:
            total += _sample_set(scores, direction, n_mc_draws, rng)
    probs = total / len(arrays)
    mc_se = None if exact else float(
        np.sqrt(0.25 / (n_mc_draws * len(arrays))))
    return RankMatrix(probs=probs, metric_name=metric_name, direction=direction,
                      monte_carlo=not exact, mc_standard_error=mc_se)
