import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlda.counts import (
    DocTopicCounts,
    Hyperparameters,
    WordTopicCounts,
    estimate_phi,
    estimate_theta,
    gibbs_conditional_masses,
    gibbs_conditional_oracle,
    rebuild_doc_counts,
)


def make_counts(rows, num_words, num_topics):
    counts = WordTopicCounts(num_words, num_topics)
    counts.rows = {v: dict(r) for v, r in rows.items()}
    counts.totals = counts.column_sums()
    return counts


class TestHyperparameters:
    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparameters(np.array([0.5, 0.0]), 0.1)
        with pytest.raises(ValueError):
            Hyperparameters(np.array([0.5]), 0.0)

    def test_symmetric(self):
        h = Hyperparameters.symmetric(4, 0.25, 0.1)
        assert h.alpha_sum == pytest.approx(1.0)
        assert h.num_topics == 4


class TestEstimateTheta:
    def test_direct_formula(self):
        theta = estimate_theta(
            DocTopicCounts({0: 2, 1: 1}), Hyperparameters.symmetric(3, 0.5, 0.1)
        )
        np.testing.assert_allclose(theta, [2.5 / 4.5, 1.5 / 4.5, 0.5 / 4.5])

    def test_empty_doc_symmetric_prior_is_uniform(self):
        theta = estimate_theta(DocTopicCounts(), Hyperparameters.symmetric(4, 0.3, 0.1))
        np.testing.assert_allclose(theta, [0.25] * 4)

    def test_asymmetric_prior(self):
        theta = estimate_theta(
            DocTopicCounts({0: 1, 1: 1}), Hyperparameters(np.array([1.0, 3.0]), 0.1)
        )
        np.testing.assert_allclose(theta, [2 / 6, 4 / 6])

    @given(
        st.dictionaries(st.integers(0, 5), st.integers(1, 40), max_size=6),
        st.lists(st.floats(0.01, 5.0), min_size=6, max_size=6),
    )
    def test_normalizes(self, counts, alpha):
        theta = estimate_theta(DocTopicCounts(counts), Hyperparameters(np.array(alpha), 0.1))
        assert abs(theta.sum() - 1.0) < 1e-12
        assert np.all(theta > 0)


class TestEstimatePhi:
    def test_direct_formula(self):
        counts = make_counts({0: {0: 1}}, 2, 2)
        phi = estimate_phi(counts, Hyperparameters.symmetric(2, 0.5, 0.5), 2)
        assert phi.prob(0, 0) == pytest.approx(1.5 / 2.0)
        assert phi.prob(1, 0) == pytest.approx(0.5 / 2.0)

    def test_all_zero_counts_uniform(self):
        counts = make_counts({}, 5, 3)
        phi = estimate_phi(counts, Hyperparameters.symmetric(3, 0.5, 0.2), 5)
        for k in range(3):
            np.testing.assert_allclose(phi.column(k), np.full(5, 0.2))

    def test_columns_normalize(self):
        rng = np.random.default_rng(0)
        rows = {
            v: {int(k): int(rng.integers(1, 9)) for k in rng.choice(4, 2, replace=False)}
            for v in range(10)
        }
        counts = make_counts(rows, 10, 4)
        phi = estimate_phi(counts, Hyperparameters.symmetric(4, 0.5, 0.05), 10)
        for k in range(4):
            assert abs(phi.column(k).sum() - 1.0) < 1e-10
        dense = phi.dense()
        np.testing.assert_allclose(dense.sum(axis=0), np.ones(4), atol=1e-10)


class TestGibbsOracle:
    def test_single_topic(self):
        counts = make_counts({0: {0: 3}}, 2, 1)
        dist = gibbs_conditional_oracle(
            0, DocTopicCounts({0: 1}), counts, Hyperparameters.symmetric(1, 0.5, 0.5)
        )
        np.testing.assert_allclose(dist, [1.0])

    def test_all_zero_is_uniform(self):
        counts = make_counts({}, 4, 3)
        dist = gibbs_conditional_oracle(
            1, DocTopicCounts(), counts, Hyperparameters.symmetric(3, 0.5, 0.5)
        )
        np.testing.assert_allclose(dist, np.full(3, 1 / 3))

    def test_hand_evaluated_state(self):
        # V=2, K=2; word 0 row (2,1), other word (1,1) -> totals (3,2).
        counts = make_counts({0: {0: 2, 1: 1}, 1: {0: 1, 1: 1}}, 2, 2)
        assert counts.totals == [3, 2]
        dist = gibbs_conditional_oracle(
            0, DocTopicCounts({0: 1}), counts, Hyperparameters.symmetric(2, 0.5, 0.5)
        )
        masses = gibbs_conditional_masses(
            0, DocTopicCounts({0: 1}), counts, Hyperparameters.symmetric(2, 0.5, 0.5)
        )
        np.testing.assert_allclose(masses, [0.9375, 0.25])
        np.testing.assert_allclose(dist, [0.9375 / 1.1875, 0.25 / 1.1875], atol=1e-12)

    def test_negative_excluded_count_errors(self):
        counts = make_counts({0: {0: 1}}, 2, 2)
        counts.totals = [-1, 1]
        with pytest.raises(ValueError):
            gibbs_conditional_oracle(
                0, DocTopicCounts(), counts, Hyperparameters.symmetric(2, 0.5, 0.5)
            )

    def test_normalized_and_positive(self):
        rng = np.random.default_rng(3)
        rows = {v: {int(k): int(rng.integers(1, 5)) for k in range(3)} for v in range(4)}
        counts = make_counts(rows, 4, 3)
        dist = gibbs_conditional_oracle(
            2, DocTopicCounts({1: 2}), counts, Hyperparameters.symmetric(3, 0.3, 0.2)
        )
        assert abs(dist.sum() - 1.0) < 1e-12
        assert np.all(dist > 0)


class TestRebuildDocCounts:
    def test_histogram(self):
        assert dict(rebuild_doc_counts([0, 0, 1], 3)) == {0: 2, 1: 1}

    def test_empty(self):
        assert dict(rebuild_doc_counts([], 3)) == {}

    def test_single_topic_run(self):
        assert dict(rebuild_doc_counts([2, 2, 2, 2], 3)) == {2: 4}

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            rebuild_doc_counts([3], 3)


class TestConservation:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3)), min_size=1, max_size=60))
    def test_increment_decrement_pairs_conserve(self, ops):
        counts = WordTopicCounts(6, 4)
        for v, k in ops:
            counts.increment(v, k)
        counts.check_consistency()
        assert counts.total_tokens() == len(ops)
        for v, k in ops:
            counts.decrement(v, k)
            counts.increment(v, k)
        counts.check_consistency()
        assert counts.column_sums() == list(counts.totals)

    def test_decrement_empty_raises(self):
        counts = WordTopicCounts(2, 2)
        with pytest.raises(ValueError):
            counts.decrement(0, 0)
