"""Corpus ingestion: frequency filtering, de-duplication, vocabulary build,
and partitioning of documents and words into a row/column block grid.

Filtering and de-duplication interact (dropping documents changes word
frequencies, dropping words creates new duplicates), so the cleaning steps
run in order and repeat until a fixed point; the output is stable under
re-preprocessing with the same thresholds.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod

__all__ = [
    "Vocabulary",
    "Document",
    "PreprocessReport",
    "BlockGrid",
    "preprocess",
    "place_words",
    "shuffle_and_partition",
    "read_lines",
    "write_vocabulary",
    "read_vocabulary",
    "write_documents",
]

DEFAULT_MIN_FREQ = 5
DEFAULT_MAX_FREQ_RATIO = 0.2


class Vocabulary:
    """Dense word-id table with the final corpus frequency of each word."""

    def __init__(self, words, frequencies):
        if len(words) != len(frequencies):
            raise ValueError("words and frequencies must align")
        self.words = list(words)
        self.frequencies = list(frequencies)
        self.id_of = {w: i for i, w in enumerate(self.words)}
        if len(self.id_of) != len(self.words):
            raise ValueError("duplicate word in vocabulary")

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.id_of

    def entries(self):
        """(word, id, frequency) triples in id order."""
        for i, (w, f) in enumerate(zip(self.words, self.frequencies)):
            yield w, i, f


@dataclass
class Document:
    doc_id: int
    tokens: list


@dataclass
class PreprocessReport:
    """Per-step drop counts; word counts are distinct words, document counts
    are whole documents."""

    lines_read: int = 0
    malformed_lines: int = 0
    words_raw: int = 0
    words_dropped_low_freq: int = 0
    words_dropped_high_freq: int = 0
    docs_dropped_duplicate: int = 0
    docs_dropped_short: int = 0
    docs_kept: int = 0
    tokens_kept: int = 0
    rounds: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def _tokenize(line):
    return line.split()


def preprocess(raw_lines, min_freq=DEFAULT_MIN_FREQ, max_freq=None):
    """Clean a one-document-per-line stream into ids.

    Steps, in order: tokenize and count; drop words rarer than ``min_freq``;
    drop words more frequent than ``max_freq`` (default: 20% of the raw
    document count); drop duplicate documents keeping the first; drop
    documents shorter than two tokens. The steps repeat until nothing
    changes. Byte lines that fail UTF-8 decoding are skipped and counted.
    """
    report = PreprocessReport()
    docs = []
    for line in raw_lines:
        report.lines_read += 1
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                report.malformed_lines += 1
                continue
        docs.append(_tokenize(line))

    report.words_raw = len(set(w for d in docs for w in d))
    if max_freq is None:
        max_freq = DEFAULT_MAX_FREQ_RATIO * len(docs)

    dropped_low, dropped_high = set(), set()
    while True:
        report.rounds += 1
        counts = Counter(w for d in docs for w in d)
        low = {w for w, c in counts.items() if c < min_freq}
        high = {w for w, c in counts.items() if c > max_freq}
        dropped_low |= low
        dropped_high |= high
        bad = low | high
        if bad:
            docs = [[w for w in d if w not in bad] for d in docs]

        seen = set()
        deduped = []
        dup_count = 0
        for d in docs:
            key = tuple(d)
            if key in seen:
                dup_count += 1
            else:
                seen.add(key)
                deduped.append(d)
        report.docs_dropped_duplicate += dup_count

        survivors = [d for d in deduped if len(d) >= 2]
        report.docs_dropped_short += len(deduped) - len(survivors)
        changed = bool(bad) or dup_count > 0 or len(survivors) < len(deduped)
        docs = survivors
        if not changed:
            break

    report.words_dropped_low_freq = len(dropped_low)
    report.words_dropped_high_freq = len(dropped_high)

    final_counts = Counter(w for d in docs for w in d)
    words = sorted(final_counts, key=lambda w: (-final_counts[w], w))
    vocab = Vocabulary(words, [final_counts[w] for w in words])
    documents = [
        Document(i, [vocab.id_of[w] for w in d]) for i, d in enumerate(docs)
    ]
    report.docs_kept = len(documents)
    report.tokens_kept = sum(len(d.tokens) for d in documents)
    return vocab, documents, report


def place_words(vocab, num_shards, seed=None):
    """Greedy balanced word-to-column assignment.

    Words go in descending frequency order to the column with the smallest
    accumulated frequency, lowest column index on load ties. ``seed``
    shuffles the order within equal-frequency groups; without it the order
    is by word id.
    """
    if num_shards < 1:
        raise ValueError("need at least one shard")
    V = len(vocab)
    tie = np.arange(V)
    if seed is not None:
        tie = rngmod.derive(seed, rngmod.STREAM_SHUFFLE, 1).permutation(V)
    order = sorted(range(V), key=lambda i: (-vocab.frequencies[i], tie[i]))
    loads = [0] * num_shards
    col_of_word = np.empty(V, dtype=np.int32)
    for i in order:
        target = loads.index(min(loads))
        col_of_word[i] = target
        loads[target] += vocab.frequencies[i]
    return col_of_word


class BlockGrid:
    """Documents dealt into row shards crossed with word columns.

    ``docs_by_row`` preserves the shuffled order inside each row; a token of
    document d with word v lives in block (row_of_doc[d], col_of_word[v]).
    """

    def __init__(self, num_rows, num_cols, docs_by_row, row_of_doc, col_of_word):
        self.num_rows = num_rows
        self.num_cols = num_cols
        self.docs_by_row = docs_by_row
        self.row_of_doc = row_of_doc
        self.col_of_word = col_of_word

    @property
    def M(self):
        return self.num_cols

    def block_tokens(self, row, col):
        """All (doc_id, word_id) pairs of one block, document order."""
        out = []
        col_of_word = self.col_of_word
        for doc in self.docs_by_row[row]:
            for w in doc.tokens:
                if col_of_word[w] == col:
                    out.append((doc.doc_id, w))
        return out

    def total_tokens(self):
        return sum(len(d.tokens) for row in self.docs_by_row for d in row)

    def documents(self):
        for row in self.docs_by_row:
            yield from row


def shuffle_and_partition(docs, vocab, num_shards, seed, num_rows=None):
    """Shuffle documents into row shards and build the block grid.

    ``num_rows`` defaults to ``num_shards``; the free-data-server schedule
    uses one extra row. Deterministic for a fixed seed.
    """
    num_rows = num_shards if num_rows is None else num_rows
    if num_rows > len(docs):
        raise ValueError(f"{num_rows} row shards over {len(docs)} documents leaves empty shards")
    if num_shards > len(vocab):
        raise ValueError(f"{num_shards} columns over {len(vocab)} words leaves empty shards")
    gen = rngmod.derive(seed, rngmod.STREAM_SHUFFLE, 0)
    perm = gen.permutation(len(docs))
    docs_by_row = [[] for _ in range(num_rows)]
    row_of_doc = {}
    for pos, doc_index in enumerate(perm):
        doc = docs[int(doc_index)]
        r = pos % num_rows
        docs_by_row[r].append(doc)
        row_of_doc[doc.doc_id] = r
    col_of_word = place_words(vocab, num_shards, seed)
    return BlockGrid(num_rows, num_shards, docs_by_row, row_of_doc, col_of_word)


# -- file formats ------------------------------------------------------------


def read_lines(path):
    """Lines of a UTF-8 corpus file, malformed bytes surfaced to preprocess."""
    with open(path, "rb") as fh:
        for line in fh:
            yield line.rstrip(b"\n")


def write_vocabulary(vocab, path):
    """word<TAB>id<TAB>frequency, ascending id."""
    with open(path, "w", encoding="utf-8") as fh:
        for w, i, f in vocab.entries():
            fh.write(f"{w}\t{i}\t{f}\n")


def read_vocabulary(path):
    words, freqs = [], []
    with open(path, encoding="utf-8") as fh:
        for expected, line in enumerate(fh):
            w, i, f = line.rstrip("\n").split("\t")
            if int(i) != expected:
                raise ValueError(f"vocabulary ids must ascend densely, got {i}")
            words.append(w)
            freqs.append(int(f))
    return Vocabulary(words, freqs)


def write_documents(docs, vocab, path):
    """Processed corpus back to one-document-per-line text."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(" ".join(vocab.words[w] for w in doc.tokens))
            fh.write("\n")
