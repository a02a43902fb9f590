"""Model-quality metrics: document-completion perplexity, a held-out
log-likelihood training curve, and PMI topic coherence."""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .predictor import build_r_matrix, infer_theta_gibbs, predict

__all__ = [
    "PerplexityResult",
    "predictive_perplexity",
    "CooccurrenceCounts",
    "pmi_coherence",
    "heldout_loglik_curve",
    "write_series_csv",
]


@dataclass
class PerplexityResult:
    perplexity: float
    log_likelihood: float
    tokens_scored: int
    docs_scored: int
    docs_skipped: int


def predictive_perplexity(
    model,
    docs,
    split_ratio=0.8,
    method="gibbs",
    sweeps=100,
    seed=0,
    r_matrix=None,
    trials=4,
):
    """Document-completion perplexity of a frozen model.

    Each document is split at ``split_ratio``; the mixture is inferred from
    the observed prefix (``method="gibbs"`` for sampling, ``"rt"`` for the
    argmax predictor) and the held-out suffix is scored under
    P(v|d) = sum_k phi_vk theta_k. Documents too short to split into two
    non-empty parts are skipped and counted.
    """
    if not 0 < split_ratio < 1:
        raise ValueError("split ratio must lie inside (0, 1)")
    if method not in ("gibbs", "rt"):
        raise ValueError(f"unknown inference method {method!r}")
    if method == "rt" and r_matrix is None:
        r_matrix = build_r_matrix(model)
    row_cache = {}

    def phi_row(v):
        row = row_cache.get(v)
        if row is None:
            row = row_cache[v] = model.phi_row(v)
        return row

    loglik = 0.0
    scored_tokens = 0
    scored_docs = 0
    skipped = 0
    for idx, tokens in enumerate(docs):
        tokens = list(tokens)
        n_obs = int(split_ratio * len(tokens))
        if n_obs < 1 or n_obs >= len(tokens):
            skipped += 1
            continue
        observed, held = tokens[:n_obs], tokens[n_obs:]
        if method == "gibbs":
            gen = rngmod.derive(seed, rngmod.STREAM_EVAL, idx)
            theta = infer_theta_gibbs(observed, model, sweeps=sweeps, rng=gen)
        else:
            theta = predict(
                observed, model, r_matrix, sweeps=sweeps, trials=trials, seed=seed + idx
            ).theta
        for v in held:
            loglik += float(np.log(phi_row(v) @ theta))
        scored_tokens += len(held)
        scored_docs += 1
    if scored_tokens == 0:
        return PerplexityResult(float("nan"), 0.0, 0, 0, skipped)
    return PerplexityResult(
        perplexity=float(np.exp(-loglik / scored_tokens)),
        log_likelihood=loglik,
        tokens_scored=scored_tokens,
        docs_scored=scored_docs,
        docs_skipped=skipped,
    )


class CooccurrenceCounts:
    """Document-level occurrence and pair-occurrence counts for PMI."""

    def __init__(self, num_docs, doc_freq, pair_freq):
        self.num_docs = num_docs
        self.doc_freq = doc_freq
        self.pair_freq = pair_freq

    @classmethod
    def from_documents(cls, docs):
        doc_freq, pair_freq = {}, {}
        num_docs = 0
        for tokens in docs:
            num_docs += 1
            present = sorted(set(tokens))
            for w in present:
                doc_freq[w] = doc_freq.get(w, 0) + 1
            for i in range(len(present)):
                for j in range(i + 1, len(present)):
                    key = (present[i], present[j])
                    pair_freq[key] = pair_freq.get(key, 0) + 1
        return cls(num_docs, doc_freq, pair_freq)

    def pair_count(self, a, b):
        key = (a, b) if a < b else (b, a)
        return self.pair_freq.get(key, 0)


def pmi_coherence(phi_column, top_n, reference):
    """Mean pairwise PMI of a topic's top words.

    Pair probabilities get add-one smoothing; marginals come straight from
    document frequencies, which must cover every selected word.
    """
    if top_n < 2:
        raise ValueError("need at least two top words for pairwise PMI")
    col = np.asarray(phi_column, dtype=np.float64)
    top = sorted(range(col.size), key=lambda v: (-col[v], v))[:top_n]
    D = reference.num_docs
    for v in top:
        if reference.doc_freq.get(v, 0) == 0:
            raise ValueError(f"reference counts do not cover word {v}")
    total = 0.0
    pairs = 0
    for i in range(len(top)):
        for j in range(i + 1, len(top)):
            a, b = top[i], top[j]
            p_a = reference.doc_freq[a] / D
            p_b = reference.doc_freq[b] / D
            p_ab = (reference.pair_count(a, b) + 1) / D
            total += np.log(p_ab / (p_a * p_b))
            pairs += 1
    return float(total / pairs)


def heldout_loglik_curve(trainer, heldout_docs, every_n, iterations, **score_kw):
    """Score held-out log-likelihood during training.

    ``trainer`` must expose run_iteration() and frozen_model(). The series
    starts at iteration 0 (the untrained state) and then records every
    ``every_n`` iterations. An empty held-out set yields an empty series.
    """
    heldout_docs = [list(d) for d in heldout_docs]
    if not heldout_docs:
        return []
    kw = dict(method="gibbs", sweeps=30, split_ratio=0.8, seed=0)
    kw.update(score_kw)

    def score():
        return predictive_perplexity(trainer.frozen_model(), heldout_docs, **kw).log_likelihood

    series = [(0, score())]
    for it in range(1, iterations + 1):
        trainer.run_iteration()
        if it % every_n == 0:
            series.append((it, score()))
    return series


def write_series_csv(series, path, header="iteration,loglik"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in series:
            fh.write(",".join(str(x) for x in row) + "\n")
