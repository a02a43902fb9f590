"""Count statistics for collapsed Gibbs LDA and the dense conditional oracle.

All counts are integers; estimators produce float64 probabilities. Sparse
word rows never store zero entries and iterate in topic-id order so that
every consumer is deterministic.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Hyperparameters",
    "DocTopicCounts",
    "WordTopicCounts",
    "rebuild_doc_counts",
    "estimate_theta",
    "estimate_phi",
    "PhiEstimate",
    "gibbs_conditional_masses",
    "gibbs_conditional_oracle",
]


@dataclass
class Hyperparameters:
    """Asymmetric document-topic prior vector and symmetric word prior."""

    alpha: np.ndarray
    beta: float

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim != 1 or self.alpha.size < 1:
            raise ValueError("alpha must be a non-empty vector")
        if not np.all(self.alpha > 0):
            raise ValueError("alpha entries must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def num_topics(self):
        return self.alpha.size

    @property
    def alpha_sum(self):
        return float(self.alpha.sum())

    @classmethod
    def symmetric(cls, num_topics, alpha, beta):
        return cls(np.full(num_topics, float(alpha)), float(beta))


class DocTopicCounts(dict):
    """Sparse per-document topic histogram: {topic: count}, zeros absent."""

    def increment(self, topic):
        self[topic] = self.get(topic, 0) + 1

    def decrement(self, topic):
        c = self.get(topic, 0)
        if c <= 0:
            raise ValueError(f"decrement of empty doc-topic count, topic {topic}")
        if c == 1:
            del self[topic]
        else:
            self[topic] = c - 1

    def total(self):
        return sum(self.values())


def rebuild_doc_counts(z_slice, num_topics):
    """Histogram a document's topic labels into DocTopicCounts."""
    counts = DocTopicCounts()
    for k in z_slice:
        if not 0 <= k < num_topics:
            raise ValueError(f"topic label {k} outside [0, {num_topics})")
        counts[k] = counts.get(k, 0) + 1
    return counts


class WordTopicCounts:
    """Word-topic count rows plus per-topic totals.

    ``rows`` maps word id -> {topic: count} with no zero entries, and
    ``totals`` is the length-K topic-total vector. Mutations go through
    increment/decrement so both stay consistent; for shards whose totals
    track a *global* copy, mutate rows via increment/decrement and read
    totals separately.
    """

    def __init__(self, num_words, num_topics):
        self.num_words = num_words
        self.num_topics = num_topics
        self.rows = {}
        self.totals = [0] * num_topics

    def increment(self, word, topic):
        row = self.rows.get(word)
        if row is None:
            row = self.rows[word] = {}
        row[topic] = row.get(topic, 0) + 1
        self.totals[topic] += 1

    def decrement(self, word, topic):
        row = self.rows.get(word)
        if row is None or row.get(topic, 0) <= 0:
            raise ValueError(f"decrement of empty count ({word}, {topic})")
        c = row[topic]
        if c == 1:
            del row[topic]
            if not row:
                del self.rows[word]
        else:
            row[topic] = c - 1
        self.totals[topic] -= 1

    def row(self, word):
        """Sparse row for ``word`` as a list of (topic, count), topic-ascending."""
        row = self.rows.get(word)
        if not row:
            return []
        return sorted(row.items())

    def count(self, word, topic):
        row = self.rows.get(word)
        return row.get(topic, 0) if row else 0

    def total_tokens(self):
        return sum(self.totals)

    def column_sums(self):
        """Totals recomputed from the rows (checks the cached vector)."""
        sums = [0] * self.num_topics
        for row in self.rows.values():
            for k, c in row.items():
                sums[k] += c
        return sums

    def check_consistency(self):
        """Raise if cached totals disagree with the rows or any count is negative."""
        for v, row in self.rows.items():
            for k, c in row.items():
                if c < 0:
                    raise ValueError(f"negative count at ({v}, {k})")
                if c == 0:
                    raise ValueError(f"stored zero entry at ({v}, {k})")
        if self.column_sums() != list(self.totals):
            raise ValueError("topic totals out of sync with word rows")

    def copy(self):
        dup = WordTopicCounts(self.num_words, self.num_topics)
        dup.rows = {v: dict(row) for v, row in self.rows.items()}
        dup.totals = list(self.totals)
        return dup

    @classmethod
    def from_assignments(cls, docs_tokens, docs_z, num_words, num_topics):
        """Build counts from per-document token and label arrays."""
        counts = cls(num_words, num_topics)
        for tokens, z in zip(docs_tokens, docs_z):
            for v, k in zip(tokens, z):
                counts.increment(v, k)
        return counts


def estimate_theta(doc_counts, hyper):
    """Document-topic probabilities: (count + alpha_k) / (doc_len + sum(alpha))."""
    theta = hyper.alpha.copy()
    total = hyper.alpha_sum
    for k, c in doc_counts.items():
        theta[k] += c
        total += c
    theta /= total
    return theta


class PhiEstimate:
    """Smoothed topic-word probability accessor over sparse counts.

    Absent entries answer beta / (psi_k + V*beta); each topic column sums
    to one over the vocabulary.
    """

    def __init__(self, counts, hyper, num_words):
        self._counts = counts
        self.beta = hyper.beta
        self.num_words = num_words
        self.num_topics = counts.num_topics
        self._denoms = np.array(
            [counts.totals[k] + num_words * hyper.beta for k in range(counts.num_topics)]
        )

    def prob(self, word, topic):
        return (self._counts.count(word, topic) + self.beta) / self._denoms[topic]

    def column(self, topic):
        """Distribution over all V words for one topic."""
        col = np.full(self.num_words, self.beta)
        for v, row in self._counts.rows.items():
            c = row.get(topic)
            if c:
                col[v] += c
        return col / self._denoms[topic]

    def dense(self):
        """V x K matrix of probabilities; only for desk-scale vocabularies."""
        mat = np.full((self.num_words, self.num_topics), self.beta)
        for v, row in self._counts.rows.items():
            for k, c in row.items():
                mat[v, k] += c
        return mat / self._denoms[np.newaxis, :]


def estimate_phi(counts, hyper, num_words):
    """Topic-word probability accessor per (count + beta) / (psi_k + V*beta)."""
    if num_words <= 0:
        raise ValueError("vocabulary size must be positive")
    return PhiEstimate(counts, hyper, num_words)


def gibbs_conditional_masses(word, doc_counts, word_counts, hyper, num_words=None, totals=None):
    """Unnormalized dense collapsed-conditional masses for one excluded token.

    ``totals`` overrides the topic totals stored on ``word_counts`` (shards
    carry a separate local copy of the global totals).
    """
    V = num_words if num_words is not None else word_counts.num_words
    K = hyper.num_topics
    beta = hyper.beta
    psi = word_counts.totals if totals is None else totals
    masses = np.empty(K)
    row = word_counts.rows.get(word, {})
    for k in range(K):
        if psi[k] < 0:
            raise ValueError(f"negative excluded topic total for topic {k}")
        theta_c = doc_counts.get(k, 0)
        phi_c = row.get(k, 0)
        if theta_c < 0 or phi_c < 0:
            raise ValueError(f"negative excluded count for topic {k}")
        masses[k] = (phi_c + beta) / (psi[k] + V * beta) * (theta_c + hyper.alpha[k])
    return masses


def gibbs_conditional_oracle(word, doc_counts, word_counts, hyper, num_words=None, totals=None):
    """Dense collapsed conditional over topics for one excluded token.

    The caller must already have excluded the token from all counts.
    This is the O(K) correctness reference; the training hot path is the
    bucket sampler, which must induce exactly this distribution.
    """
    masses = gibbs_conditional_masses(word, doc_counts, word_counts, hyper, num_words, totals)
    return masses / masses.sum()
