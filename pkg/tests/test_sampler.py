import itertools

import numpy as np
import pytest

from gridlda import rng as rngmod
from gridlda.counts import (
    Hyperparameters,
    WordTopicCounts,
    estimate_phi,
    estimate_theta,
    gibbs_conditional_masses,
    gibbs_conditional_oracle,
    rebuild_doc_counts,
)
from gridlda.sampler import SparseSampler, sweep_document


def corpus_counts(docs, z, num_words, num_topics):
    return WordTopicCounts.from_assignments(docs, z, num_words, num_topics)


def excluded_theta(z, i, num_topics):
    return rebuild_doc_counts([z[j] for j in range(len(z)) if j != i], num_topics)


class TestExactEquivalence:
    def test_every_state_of_enumerable_corpus(self):
        # 3 documents, 6 tokens, V=4, K=3: all 729 assignments, every token.
        docs = [[0, 1], [2, 3], [1, 2]]
        K, V = 3, 4
        hyper = Hyperparameters(np.array([0.3, 0.7, 1.1]), 0.4)
        for z_flat in itertools.product(range(K), repeat=6):
            z = [list(z_flat[0:2]), list(z_flat[2:4]), list(z_flat[4:6])]
            counts = corpus_counts(docs, z, V, K)
            for tokens, labels in zip(docs, z):
                sampler = SparseSampler(counts, hyper, V)
                sampler.begin_document(labels)
                for i, w in enumerate(tokens):
                    sampler.remove_token(w, labels[i])
                    dist = sampler.token_distribution(w)
                    oracle = gibbs_conditional_oracle(
                        w, excluded_theta(labels, i, K), counts, hyper
                    )
                    assert np.abs(dist - oracle).max() < 1e-12
                    sampler._add_token(w, labels[i])

    def test_bucket_mass_identity(self):
        rng = np.random.default_rng(5)
        docs = [list(rng.integers(0, 6, size=8)) for _ in range(4)]
        z = [list(rng.integers(0, 4, size=8)) for _ in range(4)]
        K, V = 4, 6
        hyper = Hyperparameters(rng.uniform(0.1, 2.0, size=K), 0.3)
        counts = corpus_counts(docs, z, V, K)
        sampler = SparseSampler(counts, hyper, V)
        for tokens, labels in zip(docs, z):
            sampler.begin_document(labels)
            for i, w in enumerate(tokens):
                sampler.remove_token(w, labels[i])
                total = sampler.smoothing_mass + sampler.doc_mass + sampler.word_mass(w)
                masses = gibbs_conditional_masses(
                    w, excluded_theta(labels, i, K), counts, hyper
                )
                assert abs(total - masses.sum()) < 1e-12
                sampler._add_token(w, labels[i])

    def test_single_topic_always_zero(self):
        docs = [[0, 1, 1]]
        z = [[0, 0, 0]]
        counts = corpus_counts(docs, z, 2, 1)
        sampler = SparseSampler(counts, Hyperparameters.symmetric(1, 0.5, 0.5), 2)
        gen = rngmod.derive(0, 99)
        changed = sampler.sweep_document(docs[0], z[0], gen)
        assert changed == 0
        assert z[0] == [0, 0, 0]
        counts.check_consistency()

    def test_empirical_frequency_matches_oracle(self):
        # One fixed state; 100k draws against the dense conditional, 3 sigma.
        rng = np.random.default_rng(11)
        docs = [list(rng.integers(0, 5, size=7)) for _ in range(4)]
        z = [list(rng.integers(0, 3, size=7)) for _ in range(4)]
        K, V = 3, 5
        hyper = Hyperparameters(np.array([0.4, 0.9, 1.3]), 0.25)
        counts = corpus_counts(docs, z, V, K)
        sampler = SparseSampler(counts, hyper, V)
        sampler.begin_document(z[0])
        w = docs[0][0]
        sampler.remove_token(w, z[0][0])
        oracle = gibbs_conditional_oracle(w, excluded_theta(z[0], 0, K), counts, hyper)
        n = 100_000
        gen = rngmod.derive(42, 1)
        draws = np.zeros(K, dtype=int)
        for _ in range(n):
            k = sampler.sample_token(w, gen)
            draws[k] += 1
            sampler.remove_token(w, k)
        for k in range(K):
            sigma = np.sqrt(n * oracle[k] * (1 - oracle[k]))
            assert abs(draws[k] - n * oracle[k]) < 3 * sigma + 1


class TestSweep:
    def test_zero_token_document(self):
        counts = corpus_counts([[0, 1]], [[0, 1]], 2, 2)
        sampler = SparseSampler(counts, Hyperparameters.symmetric(2, 0.5, 0.5), 2)
        assert sampler.sweep_document([], [], rngmod.derive(0, 0)) == 0

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(2)
        docs = [list(rng.integers(0, 8, size=10)) for _ in range(5)]

        def run():
            z = [list(np.random.default_rng(7).integers(0, 4, size=10)) for _ in range(5)]
            counts = corpus_counts(docs, z, 8, 4)
            gen = rngmod.derive(123, 0)
            sampler = SparseSampler(counts, Hyperparameters.symmetric(4, 0.3, 0.1), 8, gen)
            history = []
            for tokens, labels in zip(docs, z):
                sampler.sweep_document(tokens, labels, gen)
                history.append(list(labels))
            return history

        assert run() == run()

    def test_conservation_across_sweeps(self):
        rng = np.random.default_rng(4)
        docs = [list(rng.integers(0, 10, size=12)) for _ in range(6)]
        z = [list(rng.integers(0, 5, size=12)) for _ in range(6)]
        counts = corpus_counts(docs, z, 10, 5)
        total = counts.total_tokens()
        gen = rngmod.derive(9, 0)
        sampler = SparseSampler(counts, Hyperparameters.symmetric(5, 0.4, 0.2), 10, gen)
        for _ in range(10):
            for tokens, labels in zip(docs, z):
                sampler.sweep_document(tokens, labels, gen)
                assert sum(sampler.theta.values()) == len(tokens)
        counts.check_consistency()
        assert counts.total_tokens() == total

    def test_cache_coherence_after_sweeps(self):
        rng = np.random.default_rng(8)
        docs = [list(rng.integers(0, 6, size=15)) for _ in range(4)]
        z = [list(rng.integers(0, 4, size=15)) for _ in range(4)]
        counts = corpus_counts(docs, z, 6, 4)
        gen = rngmod.derive(17, 0)
        sampler = SparseSampler(counts, Hyperparameters.symmetric(4, 0.6, 0.3), 6, gen)
        for _ in range(5):
            for tokens, labels in zip(docs, z):
                sampler.sweep_document(tokens, labels, gen)
        sampler.check_cache_coherence(atol=1e-9)

    def test_owned_predicate_restricts_updates(self):
        docs = [[0, 1, 2, 3]]
        z = [[0, 1, 2, 3]]
        counts = corpus_counts(docs, z, 4, 4)
        gen = rngmod.derive(3, 0)
        sampler = SparseSampler(counts, Hyperparameters.symmetric(4, 0.5, 0.5), 4, gen)
        before = list(z[0])
        sampler.sweep_document(docs[0], z[0], gen, owned=lambda w: w < 2)
        assert z[0][2:] == before[2:]

    def test_module_level_sweep(self):
        docs = [[0, 1, 1, 2]]
        z = [[0, 0, 1, 1]]
        counts = corpus_counts(docs, z, 3, 2)
        changed = sweep_document(
            docs[0], z[0], counts, Hyperparameters.symmetric(2, 0.5, 0.5), rngmod.derive(1, 1)
        )
        assert 0 <= changed <= 4
        counts.check_consistency()


def corpus_perplexity(docs, z, counts, hyper, num_words):
    phi = estimate_phi(counts, hyper, num_words)
    loglik, n = 0.0, 0
    for tokens, labels in zip(docs, z):
        theta = estimate_theta(rebuild_doc_counts(labels, hyper.num_topics), hyper)
        for w in tokens:
            p = sum(phi.prob(w, k) * theta[k] for k in range(hyper.num_topics))
            loglik += np.log(p)
            n += 1
    return float(np.exp(-loglik / n))


class TestChainAgreement:
    def test_stationary_perplexity_matches_naive_chain(self):
        # Single-document corpus, 200 sweeps each; the naive dense chain is
        # the oracle. Time-averaged training perplexity within 2%.
        rng = np.random.default_rng(21)
        doc = list(rng.integers(0, 5, size=20))
        K, V = 3, 5
        hyper = Hyperparameters.symmetric(K, 0.5, 0.1)
        init = list(rng.integers(0, K, size=20))

        def run_sparse():
            z = [list(init)]
            counts = corpus_counts([doc], z, V, K)
            gen = rngmod.derive(100, 0)
            sampler = SparseSampler(counts, hyper, V, gen)
            series = []
            for sweep in range(200):
                sampler.sweep_document(doc, z[0], gen)
                if sweep >= 100:
                    series.append(corpus_perplexity([doc], z, counts, hyper, V))
            return float(np.mean(series))

        def run_naive():
            z = [list(init)]
            counts = corpus_counts([doc], z, V, K)
            gen = rngmod.derive(200, 0)
            series = []
            for sweep in range(200):
                theta = rebuild_doc_counts(z[0], K)
                for i, w in enumerate(doc):
                    old = z[0][i]
                    theta.decrement(old)
                    counts.decrement(w, old)
                    dist = gibbs_conditional_oracle(w, theta, counts, hyper)
                    k = int(np.searchsorted(np.cumsum(dist), gen.random(), side="right"))
                    k = min(k, K - 1)
                    z[0][i] = k
                    theta.increment(k)
                    counts.increment(w, k)
                if sweep >= 100:
                    series.append(corpus_perplexity([doc], z, counts, hyper, V))
            return float(np.mean(series))

        sparse, naive = run_sparse(), run_naive()
        assert abs(sparse - naive) / naive < 0.02


class TestErrors:
    def test_remove_from_empty_theta_raises(self):
        counts = corpus_counts([[0]], [[0]], 2, 2)
        sampler = SparseSampler(counts, Hyperparameters.symmetric(2, 0.5, 0.5), 2)
        sampler.begin_document([0])
        with pytest.raises(ValueError):
            sampler.remove_token(0, 1)
