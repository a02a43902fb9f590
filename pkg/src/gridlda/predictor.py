"""Real-time topic inference for unseen documents against a frozen model.

Training-time sampling is replaced by a per-token argmax (hill climbing).
A per-word cache keeps the single best prior-only candidate, so each visit
compares one cached value against the topics already present in the
document: cost tracks document sparsity, not the topic count.
"""

from dataclasses import dataclass, field

import numpy as np

from .counts import DocTopicCounts, Hyperparameters, estimate_theta

__all__ = [
    "FrozenModel",
    "RMatrix",
    "build_r_matrix",
    "PredictResult",
    "EvalCounter",
    "predict",
    "infer_theta_gibbs",
    "extract_features",
    "map_tokens",
]


class FrozenModel:
    """Immutable topic-word probabilities plus the prior, for prediction."""

    def __init__(self, alpha, beta, num_words, num_topics, counts=None, dense=None, vocab=None):
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.beta = float(beta)
        self.num_words = num_words
        self.num_topics = num_topics
        self.vocab = vocab
        self._counts = counts
        self._dense = dense
        if counts is not None:
            self._denoms = np.array(
                [counts.totals[k] + num_words * self.beta for k in range(num_topics)]
            )
        self.hyper = Hyperparameters(self.alpha, self.beta)

    @classmethod
    def from_counts(cls, word_counts, hyper, num_words, vocab=None):
        return cls(
            hyper.alpha,
            hyper.beta,
            num_words,
            hyper.num_topics,
            counts=word_counts,
            vocab=vocab,
        )

    @classmethod
    def from_dense(cls, phi, alpha, beta, vocab=None):
        """Build from an explicit V x K probability matrix (columns sum to 1)."""
        phi = np.asarray(phi, dtype=np.float64)
        sums = phi.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise ValueError("phi columns must be normalized")
        return cls(alpha, beta, phi.shape[0], phi.shape[1], dense=phi, vocab=vocab)

    def phi(self, word, topic):
        if self._dense is not None:
            return float(self._dense[word, topic])
        return (self._counts.count(word, topic) + self.beta) / self._denoms[topic]

    def phi_row(self, word):
        """Dense probability row over topics for one word."""
        if self._dense is not None:
            return self._dense[word]
        row = np.full(self.num_topics, self.beta)
        for k, c in self._counts.rows.get(word, {}).items():
            row[k] += c
        return row / self._denoms

    def word_probability_vector(self, theta):
        """P(v|d) = sum_k phi_vk theta_k over the whole vocabulary."""
        theta = np.asarray(theta, dtype=np.float64)
        if self._dense is not None:
            return self._dense @ theta
        out = np.zeros(self.num_words)
        scale = theta / self._denoms
        out += self.beta * scale.sum()
        for v, row in self._counts.rows.items():
            for k, c in row.items():
                out[v] += c * scale[k]
        return out


@dataclass
class RMatrix:
    """Per-word single retained (topic, phi*alpha value) pair."""

    topic: np.ndarray
    value: np.ndarray

    def __len__(self):
        return self.topic.size


def build_r_matrix(model):
    """Retain, per word, the prior-weighted best topic.

    Sparse-aware: nonzero count entries are scanned directly and the best
    zero entry comes from a presorted prior-only ranking, so the build does
    not touch all V*K cells for count-backed models. Ties break to the
    lowest topic id.
    """
    if model._dense is not None:
        scores = model._dense * model.alpha[np.newaxis, :]
        topic = np.argmax(scores, axis=1)
        value = scores[np.arange(scores.shape[0]), topic]
        return RMatrix(topic.astype(np.int64), value.astype(np.float64))

    counts = model._counts
    alpha, beta, denoms = model.alpha, model.beta, model._denoms
    # Same arithmetic shape as model.phi(v, k) * alpha[k], so cached values
    # compare bit-identically against dense rescans.
    base = (beta / denoms) * alpha
    base_order = np.argsort(-base, kind="stable")  # equal values keep ascending k
    topic = np.empty(model.num_words, dtype=np.int64)
    value = np.empty(model.num_words, dtype=np.float64)
    for v in range(model.num_words):
        row = counts.rows.get(v, {})
        best_k, best_val = -1, -np.inf
        for k, c in sorted(row.items()):
            val = ((c + beta) / denoms[k]) * alpha[k]
            if val > best_val:
                best_val, best_k = val, k
        for k in base_order:
            if k not in row:
                if base[k] > best_val or (base[k] == best_val and k < best_k):
                    best_val, best_k = float(base[k]), int(k)
                break
        topic[v] = best_k
        value[v] = best_val
    return RMatrix(topic, value)


class EvalCounter:
    """Records (candidates evaluated, doc-topic nnz) per token visit."""

    def __init__(self):
        self.visits = []

    def record(self, evaluations, theta_nnz):
        self.visits.append((evaluations, theta_nnz))

    def max_evaluations(self):
        return max(e for e, _ in self.visits) if self.visits else 0


@dataclass
class PredictResult:
    theta: np.ndarray
    dropped_tokens: int = 0
    prior_only: bool = False
    sweeps_run: list = field(default_factory=list)
    objective_traces: list = field(default_factory=list)


def map_tokens(words, vocab):
    """Map word strings to ids, dropping unknown words."""
    ids, dropped = [], 0
    for w in words:
        i = vocab.id_of.get(w)
        if i is None:
            dropped += 1
        else:
            ids.append(i)
    return ids, dropped


def _log_objective(tokens, z, theta, model):
    # Product over tokens of the per-token argmax objective at the chosen
    # topics, in log space; constant-shifted Dirichlet-multinomial joint.
    score = 0.0
    for v, k in zip(tokens, z):
        score += np.log(model.phi(v, k))
    for k, c in theta.items():
        a = model.alpha[k]
        for j in range(c):
            score += np.log(j + a)
    return score


def _climb(tokens, model, r_matrix, sweeps, rng, counter):
    z = [int(r_matrix.topic[v]) for v in tokens]
    theta = DocTopicCounts()
    for k in z:
        theta.increment(k)
    alpha = model.alpha
    order = rng.permutation(len(tokens))
    trace = [_log_objective(tokens, z, theta, model)]
    sweeps_run = 0
    for _ in range(sweeps):
        changed = 0
        for i in order:
            v = tokens[i]
            theta.decrement(z[i])
            best_k = int(r_matrix.topic[v])
            best_val = float(r_matrix.value[v])
            evals = 1
            for k, c in sorted(theta.items()):
                evals += 1
                val = model.phi(v, k) * (c + alpha[k])
                if val > best_val or (val == best_val and k < best_k):
                    best_val, best_k = val, k
            if counter is not None:
                counter.record(evals, len(theta))
            if best_k != z[i]:
                changed += 1
                z[i] = best_k
            theta.increment(z[i])
        sweeps_run += 1
        trace.append(_log_objective(tokens, z, theta, model))
        if changed == 0:
            break
    return theta, sweeps_run, trace


def predict(tokens, model, r_matrix, sweeps=10, trials=4, seed=0, counter=None):
    """Argmax topic inference for one document of vocabulary ids.

    Each trial starts every token at its cached prior-only topic and hill
    climbs with a trial-specific visit order; the returned mixture is the
    trial average. An empty document returns the normalized prior with
    ``prior_only`` set.
    """
    from . import rng as rngmod

    tokens = list(tokens)
    if not tokens:
        return PredictResult(
            theta=model.alpha / model.alpha.sum(), prior_only=True
        )
    thetas = []
    sweeps_run, traces = [], []
    for t in range(trials):
        gen = rngmod.derive(seed, rngmod.STREAM_PREDICT, t)
        theta, n, trace = _climb(tokens, model, r_matrix, sweeps, gen, counter)
        thetas.append(estimate_theta(theta, model.hyper))
        sweeps_run.append(n)
        traces.append(trace)
    return PredictResult(
        theta=np.mean(thetas, axis=0),
        sweeps_run=sweeps_run,
        objective_traces=traces,
    )


def infer_theta_gibbs(tokens, model, sweeps=100, seed=0, rng=None):
    """Sampling-based inference with frozen phi, the accuracy reference.

    Runs collapsed Gibbs over the document's labels and averages the
    document-topic estimate over the second half of the sweeps.
    """
    from . import rng as rngmod

    tokens = list(tokens)
    K = model.num_topics
    if not tokens:
        return model.alpha / model.alpha.sum()
    gen = rng if rng is not None else rngmod.derive(seed, rngmod.STREAM_PREDICT, 10_000)
    rows = {}
    for v in set(tokens):
        rows[v] = model.phi_row(v)
    z = [int(gen.integers(K)) for _ in tokens]
    theta = np.zeros(K)
    for k in z:
        theta[k] += 1
    keep_from = sweeps - max(1, sweeps // 2)
    averaged = np.zeros(K)
    kept = 0
    hyper = model.hyper
    for sweep in range(sweeps):
        for i, v in enumerate(tokens):
            theta[z[i]] -= 1
            mass = rows[v] * (theta + model.alpha)
            u = gen.random() * mass.sum()
            k = int(np.searchsorted(np.cumsum(mass), u, side="right"))
            k = min(k, K - 1)
            z[i] = k
            theta[k] += 1
        if sweep >= keep_from:
            counts = DocTopicCounts({k: int(c) for k, c in enumerate(theta) if c > 0})
            averaged += estimate_theta(counts, hyper)
            kept += 1
    return averaged / kept


def extract_features(theta, model, top_n=30):
    """Top likely words for a document mixture: (word id, P(v|d)) pairs.

    Ranks the whole-vocabulary likelihood vector descending, ties broken by
    ascending word id.
    """
    probs = model.word_probability_vector(theta)
    order = sorted(range(model.num_words), key=lambda v: (-probs[v], v))[:top_n]
    return [(v, float(probs[v])) for v in order]
