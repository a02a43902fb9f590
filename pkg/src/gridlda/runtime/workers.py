"""Worker roles of one training cluster.

Data servers own document rows and their double-buffered topic labels.
Sampling servers own one word-column count shard plus a local copy of the
global topic totals. Aggregation servers own the cross-configuration model
base for one column. Workers touch each other only through message
payloads, so the byte contract stays honest even in-process.

A package carries every token of each selected document (the sampling
server needs the whole document's topic histogram as sampling context) but
a sampling server resamples only the tokens whose words it owns.
"""

import numpy as np

from ..alphaopt import AlphaSufficientStats
from ..counts import WordTopicCounts, rebuild_doc_counts
from ..sampler import SparseSampler
from . import messages

__all__ = ["DataServer", "SamplingServer", "AggregationServer"]


class DataServer:
    """Owns the documents of one row shard and their label buffers."""

    def __init__(self, row, docs):
        self.row = row
        self.docs = list(docs)
        self.z_new = {}
        self.z_old = {}
        self._docs_in_column = None
        self._token_arrays = {}

    def prepare_columns(self, col_of_word, num_columns):
        """Index which documents touch each column; done once per run."""
        self._docs_in_column = [[] for _ in range(num_columns)]
        for doc in self.docs:
            for c in sorted({col_of_word[w] for w in doc.tokens}):
                self._docs_in_column[c].append(doc)
            arr = np.empty((len(doc.tokens), 3), dtype="<u4")
            arr[:, 0] = doc.doc_id
            arr[:, 1] = doc.tokens
            self._token_arrays[doc.doc_id] = arr

    def init_assignments(self, gen, num_topics):
        for doc in self.docs:
            labels = [int(k) for k in gen.integers(0, num_topics, size=len(doc.tokens))]
            self.z_new[doc.doc_id] = labels
        self.begin_segment()

    def begin_segment(self):
        """Snapshot labels; packages are built from the stable copy."""
        self.z_old = {d: list(z) for d, z in self.z_new.items()}

    def swap_buffers(self):
        self.begin_segment()

    def build_packages(self, column, package_size, block_id):
        """Serialize this row's contribution to one block as wire packages.

        Returns (encoded packages, per-package index maps). Documents with
        no token in the column are skipped; selected documents ship all
        their tokens so the server can rebuild the full topic histogram.
        Documents are never split across packages.
        """
        if self._docs_in_column is None:
            raise RuntimeError("prepare_columns must run before building packages")
        # Greedy whole-document grouping under the package token budget, same
        # policy as transport.pack_documents but keeping doc ids attached.
        groups = []
        current, current_tokens = [], 0
        for doc in self._docs_in_column[column]:
            size = len(doc.tokens)
            if current and current_tokens + size > package_size:
                groups.append(current)
                current, current_tokens = [], 0
            current.append(doc)
            current_tokens += size
        if current:
            groups.append(current)
        packages, index_maps = [], []
        for group in groups:
            parts = []
            index_map = []
            for doc in group:
                arr = self._token_arrays[doc.doc_id].copy()
                arr[:, 2] = self.z_old[doc.doc_id]
                parts.append(arr)
                index_map.extend((doc.doc_id, pos) for pos in range(len(doc.tokens)))
            triples = parts[0] if len(parts) == 1 else np.concatenate(parts)
            packages.append(messages.encode_package_request(block_id, triples))
            index_maps.append(index_map)
        return packages, index_maps

    def apply_response(self, index_map, payload):
        """Write changed labels from one package response into the new buffer."""
        for idx, topic in messages.decode_package_response(payload):
            if idx >= len(index_map):
                raise ValueError(f"response names token {idx} outside the package")
            doc_id, pos = index_map[idx]
            self.z_new[doc_id][pos] = int(topic)

    def collect_alpha_stats(self, num_topics):
        stats = AlphaSufficientStats(num_topics)
        for doc in self.docs:
            stats.add_document(rebuild_doc_counts(self.z_new[doc.doc_id], num_topics))
        return stats

    def doc_length_histogram(self):
        hist = {}
        for doc in self.docs:
            n = len(doc.tokens)
            hist[n] = hist.get(n, 0) + 1
        return hist

    def total_tokens(self):
        return sum(len(doc.tokens) for doc in self.docs)


class SamplingServer:
    """Owns one word-column shard of the model and a local topic-total copy."""

    def __init__(self, column, col_of_word, num_words, hyper, rng):
        self.column = column
        self.col_of_word = col_of_word
        self.num_words = num_words
        self.shard = WordTopicCounts(num_words, hyper.num_topics)
        self.hyper = hyper
        self.rng = rng
        self.sampler = None
        self._psi_base = [0] * hyper.num_topics
        self._rows_base = {}
        self.tokens_changed = 0

    def owns(self, word):
        return self.col_of_word[word] == self.column

    def load_shard(self, rows, psi, base_rows=None):
        """Adopt model rows (only owned words) and the global totals copy.

        ``base_rows`` overrides the delta baseline; checkpoint resume uses it
        to restore mid-sync-period aggregation state.
        """
        self.shard.rows = {v: dict(r) for v, r in rows.items() if self.owns(v)}
        self.shard.totals = [int(x) for x in psi]
        self._psi_base = list(self.shard.totals)
        source = self.shard.rows if base_rows is None else base_rows
        self._rows_base = {v: dict(r) for v, r in source.items() if self.owns(v)}
        self.sampler = SparseSampler(self.shard, self.hyper, self.num_words, self.rng)

    def begin_block(self):
        self.sampler.refresh_smoothing()

    def handle_package(self, payload_or_frame):
        """Resample owned tokens of one package; reply with changed pairs."""
        if isinstance(payload_or_frame, (bytes, bytearray, memoryview)):
            msg_type, length = messages.decode_header(payload_or_frame)
            if msg_type != messages.MSG_PACKAGE_REQUEST:
                raise messages.MessageError(f"unexpected message type {msg_type}")
            payload = bytes(payload_or_frame[messages.HEADER_SIZE :])
        else:
            raise TypeError("handle_package expects an encoded frame")
        _, tokens = messages.decode_package_request(payload)
        changed = []
        sampler = self.sampler
        rng = self.rng
        col = self.column
        col_of_word = self.col_of_word
        n = tokens.shape[0]
        doc_ids = tokens[:, 0].tolist()
        words = tokens[:, 1].tolist()
        topics = tokens[:, 2].tolist()
        i = 0
        while i < n:
            j = i
            doc = doc_ids[i]
            while j < n and doc_ids[j] == doc:
                j += 1
            doc_z = topics[i:j]
            sampler.begin_document(doc_z)
            for pos in range(i, j):
                w = words[pos]
                if col_of_word[w] != col:
                    continue
                old = topics[pos]
                sampler.remove_token(w, old)
                new = sampler.sample_token(w, rng)
                if new != old:
                    changed.append((pos, new))
            i = j
        self.tokens_changed += len(changed)
        return messages.encode_package_response(changed)

    # -- synchronization ----------------------------------------------------

    def psi_diff(self):
        """Local total changes since the last totals broadcast."""
        return [cur - base for cur, base in zip(self.shard.totals, self._psi_base)]

    def set_psi(self, psi):
        self.shard.totals[:] = [int(x) for x in psi]
        self._psi_base = list(self.shard.totals)
        self.sampler.refresh_smoothing()

    def set_alpha(self, alpha):
        self.hyper.alpha[:] = np.asarray(alpha, dtype=np.float64)
        self.sampler.set_alpha(self.hyper.alpha)

    def phi_delta(self):
        """Sparse (word, topic, delta) changes since the last model broadcast."""
        triples = []
        seen = set(self.shard.rows) | set(self._rows_base)
        for v in sorted(seen):
            cur = self.shard.rows.get(v, {})
            base = self._rows_base.get(v, {})
            for k in sorted(set(cur) | set(base)):
                d = cur.get(k, 0) - base.get(k, 0)
                if d:
                    triples.append((v, k, d))
        return triples

    def set_model_rows(self, rows, psi):
        """Adopt the aggregated global shard and totals."""
        self.shard.rows = {v: dict(r) for v, r in rows.items() if self.owns(v)}
        self.shard.totals[:] = [int(x) for x in psi]
        self._psi_base = list(self.shard.totals)
        self._rows_base = {v: dict(r) for v, r in self.shard.rows.items()}
        self.sampler.refresh_smoothing()

    def column_token_total(self):
        return sum(sum(r.values()) for r in self.shard.rows.values())


class AggregationServer:
    """Cross-configuration accumulator for one model column."""

    def __init__(self, column, num_topics):
        self.column = column
        self.num_topics = num_topics
        self.rows = {}
        self.clamped = 0

    def set_base(self, rows):
        self.rows = {v: dict(r) for v, r in rows.items()}

    def apply_delta_payload(self, payload):
        self.apply_deltas(messages.decode_phi_delta(payload))

    def apply_deltas(self, triples):
        """Sum delta triples onto the base; negative results clamp to zero."""
        for word, topic, delta in triples:
            if not 0 <= topic < self.num_topics:
                raise ValueError(f"delta names unknown topic {topic}")
            row = self.rows.setdefault(word, {})
            value = row.get(topic, 0) + delta
            if value < 0:
                self.clamped += 1
                value = 0
            if value == 0:
                row.pop(topic, None)
                if not row:
                    del self.rows[word]
            else:
                row[topic] = value

    def column_sums(self):
        sums = [0] * self.num_topics
        for row in self.rows.values():
            for k, c in row.items():
                sums[k] += c
        return sums
