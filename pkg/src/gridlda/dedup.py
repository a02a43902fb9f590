"""Duplicate-topic detection and merging.

Topics whose normalized word distributions sit within an L1 threshold are
clustered (single linkage by default) and merged by summing their count
rows, so the merged model stays a valid Gibbs state after remapping the
topic labels.
"""

from dataclasses import dataclass

import numpy as np

from .counts import WordTopicCounts, estimate_phi

__all__ = ["l1_distance", "cluster_topics", "DedupResult", "remap_labels"]

# Above this many topics the pairwise scan skips pairs whose top-word
# supports are disjoint; below it the scan is exact.
_PREFILTER_MIN_TOPICS = 512
_PREFILTER_TOP_WORDS = 50


def l1_distance(col_a, col_b):
    """L1 distance between two normalized topic-word columns, in [0, 2]."""
    a = np.asarray(col_a, dtype=np.float64)
    b = np.asarray(col_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("columns must have equal length")
    for name, col in (("first", a), ("second", b)):
        if abs(col.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} column is not normalized (sum {col.sum()!r})")
    return float(np.abs(a - b).sum())


@dataclass
class DedupResult:
    clusters: list  # sorted lists of original topic ids
    remap: list  # old topic id -> new topic id
    counts: WordTopicCounts  # merged model, totals recomputed
    alpha: np.ndarray  # merged prior, member sums


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _candidate_pairs(counts, num_topics):
    if num_topics <= _PREFILTER_MIN_TOPICS:
        for i in range(num_topics):
            for j in range(i + 1, num_topics):
                yield i, j
        return
    top_words = []
    per_topic = [[] for _ in range(num_topics)]
    for v, row in counts.rows.items():
        for k, c in row.items():
            per_topic[k].append((c, v))
    for k in range(num_topics):
        best = sorted(per_topic[k], reverse=True)[:_PREFILTER_TOP_WORDS]
        top_words.append({v for _, v in best})
    owners = {}
    for k, words in enumerate(top_words):
        for v in words:
            owners.setdefault(v, []).append(k)
    seen = set()
    for ks in owners.values():
        for a in range(len(ks)):
            for b in range(a + 1, len(ks)):
                pair = (ks[a], ks[b])
                if pair not in seen:
                    seen.add(pair)
                    yield pair


def cluster_topics(word_counts, hyper, threshold, linkage="single"):
    """Merge topics closer than ``threshold`` in L1 over normalized columns.

    Single linkage joins topics through chains of close pairs; complete
    linkage (``linkage="complete"``) joins clusters only when every
    cross-pair is close. Merged rows are element-wise count sums, totals are
    recomputed, and merged prior weights are member sums.
    """
    if not 0 < threshold < 2:
        raise ValueError(f"threshold must be inside (0, 2), got {threshold}")
    if linkage not in ("single", "complete"):
        raise ValueError(f"unknown linkage {linkage!r}")
    K = word_counts.num_topics
    phi = estimate_phi(word_counts, hyper, word_counts.num_words)
    columns = [phi.column(k) for k in range(K)]

    if linkage == "single":
        uf = _UnionFind(K)
        for i, j in _candidate_pairs(word_counts, K):
            if l1_distance(columns[i], columns[j]) < threshold:
                uf.union(i, j)
        groups = {}
        for k in range(K):
            groups.setdefault(uf.find(k), []).append(k)
        clusters = [sorted(g) for g in groups.values()]
    else:
        clusters = [[k] for k in range(K)]
        dist = {(i, j): l1_distance(columns[i], columns[j]) for i, j in _candidate_pairs(word_counts, K)}

        def cluster_dist(a, b):
            worst = 0.0
            for i in a:
                for j in b:
                    worst = max(worst, dist.get((min(i, j), max(i, j)), 2.0))
            return worst

        while True:
            best = None
            for x in range(len(clusters)):
                for y in range(x + 1, len(clusters)):
                    d = cluster_dist(clusters[x], clusters[y])
                    if d < threshold and (best is None or d < best[0]):
                        best = (d, x, y)
            if best is None:
                break
            _, x, y = best
            clusters[x] = sorted(clusters[x] + clusters[y])
            del clusters[y]

    clusters.sort(key=lambda g: g[0])
    remap = [0] * K
    for new_id, group in enumerate(clusters):
        for k in group:
            remap[k] = new_id

    merged = WordTopicCounts(word_counts.num_words, len(clusters))
    for v, row in word_counts.rows.items():
        new_row = {}
        for k, c in row.items():
            nk = remap[k]
            new_row[nk] = new_row.get(nk, 0) + c
        merged.rows[v] = new_row
    merged.totals = merged.column_sums()

    alpha = np.zeros(len(clusters))
    for k in range(K):
        alpha[remap[k]] += hyper.alpha[k]
    return DedupResult(clusters, remap, merged, alpha)


def remap_labels(z, remap):
    """Rewrite a label sequence through the old-to-new topic map."""
    return [remap[k] for k in z]
