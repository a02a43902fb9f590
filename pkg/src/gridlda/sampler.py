"""Bucket-decomposed sparse Gibbs kernel.

The collapsed conditional splits into a smoothing bucket (prior mass over
all topics), a document bucket (topics present in the document), and a word
bucket (topics present in the word's sparse row), so a draw costs
O(nnz(word row) + nnz(doc)) instead of O(K). The induced per-token
distribution must match the dense conditional exactly; tests compare the
analytic walk against the oracle at 1e-12.

Cache discipline: the smoothing bucket keeps per-topic terms so incremental
subtraction is exact; document bucket and coefficients are rebuilt at each
document start; the smoothing bucket is rebuilt once per block to bound
floating-point drift.
"""

import numpy as np

from .counts import DocTopicCounts, rebuild_doc_counts

__all__ = ["CacheConsistencyError", "SparseSampler", "sweep_document"]

# Residual beyond this fraction of the total mass means the incremental
# caches are genuinely stale, not just drifted.
_WALK_TOLERANCE = 1e-9


class CacheConsistencyError(RuntimeError):
    """The draw walked past the cached bucket mass: caches are stale."""


class SparseSampler:
    """Gibbs kernel over one word-topic shard with a local topic-total copy.

    ``word_counts.totals`` is treated as the topic-total vector; for a full
    model it equals the column sums, for a shard it is the locally held copy
    of the global totals.
    """

    def __init__(self, word_counts, hyper, num_words, rng=None):
        self.wtc = word_counts
        self.hyper = hyper
        self.num_words = num_words
        self.rng = rng
        self.K = hyper.num_topics
        self.beta = float(hyper.beta)
        self.vbeta = num_words * self.beta
        self.alpha = [float(a) for a in hyper.alpha]
        self.theta = DocTopicCounts()
        self.coef = [0.0] * self.K
        self.r_total = 0.0
        self.s_terms = [0.0] * self.K
        self.s_total = 0.0
        self.refresh_smoothing()
        self._enter_theta(self.theta)

    # -- cache maintenance -------------------------------------------------

    def refresh_smoothing(self):
        """Rebuild the smoothing bucket from scratch (call once per block)."""
        psi = self.wtc.totals
        alpha, beta, vbeta = self.alpha, self.beta, self.vbeta
        terms = [alpha[k] * beta / (psi[k] + vbeta) for k in range(self.K)]
        self.s_terms = terms
        self.s_total = sum(terms)

    def set_alpha(self, alpha):
        self.alpha = [float(a) for a in alpha]
        self.refresh_smoothing()
        self._enter_theta(self.theta)

    def begin_document(self, z_slice):
        """Rebuild the document bucket and coefficient cache for a new document."""
        self._enter_theta(rebuild_doc_counts(z_slice, self.K))

    def _enter_theta(self, theta):
        self.theta = theta
        psi = self.wtc.totals
        alpha, beta, vbeta = self.alpha, self.beta, self.vbeta
        self.coef = [alpha[k] / (psi[k] + vbeta) for k in range(self.K)]
        r = 0.0
        for k, c in theta.items():
            denom = psi[k] + vbeta
            self.coef[k] = (alpha[k] + c) / denom
            r += c * beta / denom
        self.r_total = r

    def _update_topic(self, k):
        # Re-derive every cached quantity touching topic k after a count change.
        psi_k = self.wtc.totals[k]
        denom = psi_k + self.vbeta
        theta_k = self.theta.get(k, 0)
        self.s_total -= self.s_terms[k]
        new_s = self.alpha[k] * self.beta / denom
        self.s_terms[k] = new_s
        self.s_total += new_s
        self.coef[k] = (self.alpha[k] + theta_k) / denom

    def remove_token(self, word, topic):
        """Exclude one token before resampling it."""
        old_theta = self.theta.get(topic, 0)
        if old_theta > 0:
            self.r_total -= old_theta * self.beta / (self.wtc.totals[topic] + self.vbeta)
            self.theta.decrement(topic)
        else:
            raise ValueError(f"token removal from empty doc-topic count {topic}")
        self.wtc.decrement(word, topic)
        new_theta = old_theta - 1
        if new_theta > 0:
            self.r_total += new_theta * self.beta / (self.wtc.totals[topic] + self.vbeta)
        self._update_topic(topic)

    def _add_token(self, word, topic):
        old_theta = self.theta.get(topic, 0)
        if old_theta > 0:
            self.r_total -= old_theta * self.beta / (self.wtc.totals[topic] + self.vbeta)
        self.theta.increment(topic)
        self.wtc.increment(word, topic)
        self.r_total += (old_theta + 1) * self.beta / (self.wtc.totals[topic] + self.vbeta)
        self._update_topic(topic)

    # -- bucket masses -----------------------------------------------------

    @property
    def smoothing_mass(self):
        return self.s_total

    @property
    def doc_mass(self):
        return self.r_total

    def word_mass(self, word):
        coef = self.coef
        return sum(coef[k] * c for k, c in self.wtc.row(word))

    def token_distribution(self, word):
        """Analytic per-topic probability the next draw would induce.

        Equals the dense conditional for the current (already-excluded)
        state; used by equivalence tests instead of empirical sampling.
        """
        psi = self.wtc.totals
        beta, vbeta = self.beta, self.vbeta
        p = np.array(self.s_terms)
        for k, c in self.theta.items():
            p[k] += c * beta / (psi[k] + vbeta)
        row = self.wtc.rows.get(word)
        if row:
            for k, c in row.items():
                p[k] += self.coef[k] * c
        return p / p.sum()

    # -- draws ---------------------------------------------------------------

    def sample_token(self, word, rng=None):
        """Draw a topic for an excluded token and re-include it at the draw."""
        gen = rng if rng is not None else self.rng
        row = self.wtc.row(word)
        coef = self.coef
        q_total = 0.0
        for k, c in row:
            q_total += coef[k] * c
        total = q_total + self.r_total + self.s_total
        u = gen.random() * total
        if u < q_total:
            # Accumulation repeats the q_total order, so the walk always lands.
            acc = 0.0
            for k, c in row:
                acc += coef[k] * c
                if u < acc:
                    chosen = k
                    break
        else:
            u -= q_total
            chosen = -1
            if u < self.r_total:
                psi = self.wtc.totals
                beta, vbeta = self.beta, self.vbeta
                for k, c in sorted(self.theta.items()):
                    u -= c * beta / (psi[k] + vbeta)
                    if u < 0.0:
                        chosen = k
                        break
            else:
                u -= self.r_total
            if chosen < 0:
                # Rounding residue from the cached document mass spills into
                # the smoothing walk rather than mis-assigning a topic.
                for k, term in enumerate(self.s_terms):
                    u -= term
                    if u < 0.0:
                        chosen = k
                        break
            if chosen < 0:
                if u > _WALK_TOLERANCE * total:
                    raise CacheConsistencyError(
                        f"draw overran bucket mass by {u!r} (total {total!r})"
                    )
                chosen = self.K - 1
        self._add_token(word, chosen)
        return chosen

    def sweep_document(self, tokens, z, rng=None, owned=None):
        """Resample every (owned) token of one document in order.

        ``z`` is mutated in place; returns the number of changed labels.
        The document bucket is rebuilt from ``z`` on entry.
        """
        self.begin_document(z)
        changed = 0
        for i, word in enumerate(tokens):
            if owned is not None and not owned(word):
                continue
            old = z[i]
            self.remove_token(word, old)
            new = self.sample_token(word, rng)
            if new != old:
                z[i] = new
                changed += 1
        return changed

    def check_cache_coherence(self, atol=1e-9):
        """Verify incremental s/r/coef caches against scratch recomputation."""
        psi = self.wtc.totals
        alpha, beta, vbeta = self.alpha, self.beta, self.vbeta
        s = sum(alpha[k] * beta / (psi[k] + vbeta) for k in range(self.K))
        r = sum(c * beta / (psi[k] + vbeta) for k, c in self.theta.items())
        if abs(s - self.s_total) > atol or abs(r - self.r_total) > atol:
            raise CacheConsistencyError(
                f"cache drift: s {s!r} vs {self.s_total!r}, r {r!r} vs {self.r_total!r}"
            )
        for k in range(self.K):
            fresh = (alpha[k] + self.theta.get(k, 0)) / (psi[k] + vbeta)
            if abs(fresh - self.coef[k]) > atol:
                raise CacheConsistencyError(f"coefficient drift at topic {k}")


def sweep_document(tokens, z, word_counts, hyper, rng, owned=None):
    """One-shot document sweep over a full model (no persistent sampler)."""
    sampler = SparseSampler(word_counts, hyper, word_counts.num_words, rng)
    return sampler.sweep_document(tokens, z, rng, owned=owned)
