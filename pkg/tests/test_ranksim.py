"""Exact rank-probability enumeration against a Monte Carlo oracle."""

import numpy as np
import pytest

from pickerbench.ranksim import (HIGHER_IS_BETTER, LOWER_IS_BETTER, RankSimError,
                                 rank_probabilities)


def monte_carlo_ranks(scores_per_set, direction, n_draws, seed):
    """Sampling oracle: draw one initialization per model, rank, tally."""
    rng = np.random.default_rng(seed)
    arrays = [np.asarray(s, dtype=float) for s in scores_per_set]
    n_models, n_inits = arrays[0].shape
    total = np.zeros((n_models, n_models))
    for scores in arrays:
        draws = rng.integers(n_inits, size=(n_draws, n_models))
        values = scores[np.arange(n_models)[None, :], draws]
        signed = -values if direction == HIGHER_IS_BETTER else values
        ranks = signed.argsort(axis=1).argsort(axis=1)
        probs = np.zeros((n_models, n_models))
        for m in range(n_models):
            probs[m] = np.bincount(ranks[:, m], minlength=n_models) / n_draws
        total += probs
    return total / len(arrays)


class TestRankProbabilities:
    def test_64_outcomes_exhaustively(self):
        # M=3, I=4: 64 equally likely joint draws; verify the mass directly
        rng = np.random.default_rng(0)
        scores = rng.random((3, 4))
        rm = rank_probabilities([scores])
        brute = np.zeros((3, 3))
        n = 0
        for i0 in range(4):
            for i1 in range(4):
                for i2 in range(4):
                    values = np.array([scores[0, i0], scores[1, i1], scores[2, i2]])
                    order = np.argsort(-values)
                    for r, m in enumerate(order):
                        brute[m, r] += 1
                    n += 1
        assert n == 64
        assert np.allclose(rm.probs, brute / 64)

    def test_dominant_model(self):
        scores = np.array([[10.0, 11.0, 12.0, 13.0],
                           [1.0, 2.0, 3.0, 4.0],
                           [5.0, 6.0, 7.0, 8.0]])
        rm = rank_probabilities([scores])
        assert rm.probs[0, 0] == pytest.approx(1.0)
        assert rm.probs[1, 2] == pytest.approx(1.0)

    def test_doubly_stochastic(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            scores = [rng.random((4, 3)) for _ in range(3)]
            rm = rank_probabilities(scores)
            assert np.abs(rm.probs.sum(axis=0) - 1).max() < 1e-12
            assert np.abs(rm.probs.sum(axis=1) - 1).max() < 1e-12
            assert (rm.probs >= 0).all() and (rm.probs <= 1).all()

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(2)
        for trial in range(5):
            scores = [rng.random((3, 4)) for _ in range(2)]
            rm = rank_probabilities(scores)
            mc = monte_carlo_ranks(scores, HIGHER_IS_BETTER, 200_000, seed=trial)
            assert np.abs(rm.probs - mc).max() < 0.005

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        scores = [rng.random((3, 4)) for _ in range(4)]
        rm1 = rank_probabilities(scores)
        rm2 = rank_probabilities([np.exp(5 * s) for s in scores])
        assert np.array_equal(rm1.probs, rm2.probs)

    def test_single_init_is_permutation(self):
        scores = np.array([[0.3], [0.9], [0.1]])
        rm = rank_probabilities([scores])
        expected = np.zeros((3, 3))
        expected[0, 1] = expected[1, 0] = expected[2, 2] = 1.0
        assert np.array_equal(rm.probs, expected)

    def test_direction_reversal(self):
        rng = np.random.default_rng(4)
        scores = [rng.random((3, 4)) for _ in range(3)]
        hi = rank_probabilities(scores, HIGHER_IS_BETTER)
        lo = rank_probabilities(scores, LOWER_IS_BETTER)
        assert np.allclose(hi.probs, lo.probs[:, ::-1])

    def test_tie_splitting_stays_doubly_stochastic(self):
        scores = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 0.0]])
        rm = rank_probabilities([scores])
        assert np.abs(rm.probs.sum(axis=0) - 1).max() < 1e-12
        assert np.abs(rm.probs.sum(axis=1) - 1).max() < 1e-12
        # models 0 and 1 are exchangeable
        assert np.allclose(rm.probs[0], rm.probs[1])

    def test_monte_carlo_fallback(self):
        rng = np.random.default_rng(5)
        # 30^5 > enumeration limit -> sampled path with reported SE
        scores = [rng.random((5, 30))]
        rm = rank_probabilities(scores, n_mc_draws=50_000, seed=6)
        assert rm.monte_carlo
        assert rm.mc_standard_error is not None
        assert np.abs(rm.probs.sum(axis=1) - 1).max() < 1e-9

    def test_shape_errors(self):
        with pytest.raises(RankSimError):
            rank_probabilities([])
        with pytest.raises(RankSimError):
            rank_probabilities([np.zeros((1, 4))])
        with pytest.raises(RankSimError):
            rank_probabilities([np.zeros((3, 4)), np.zeros((3, 5))])
