import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlda.corpus import (
    BlockGrid,
    Vocabulary,
    place_words,
    preprocess,
    read_vocabulary,
    shuffle_and_partition,
    write_vocabulary,
)

BIG = 10**9


class TestPreprocess:
    def test_single_word_document_dropped(self):
        vocab, docs, report = preprocess(["hello"], min_freq=1, max_freq=BIG)
        assert docs == []
        assert report.docs_dropped_short == 1

    def test_duplicates_keep_one(self):
        vocab, docs, report = preprocess(
            ["red apple", "red apple"], min_freq=1, max_freq=BIG
        )
        assert len(docs) == 1
        assert report.docs_dropped_duplicate == 1

    def test_low_frequency_word_removed_and_docs_refiltered(self):
        lines = ["zzz common words", "common words here", "common words here again"]
        vocab, docs, report = preprocess(lines, min_freq=2, max_freq=BIG)
        assert "zzz" not in vocab
        assert report.words_dropped_low_freq >= 1
        # the doc that contained zzz still has >= 2 surviving tokens
        assert all(len(d.tokens) >= 2 for d in docs)

    def test_high_frequency_word_removed(self):
        lines = [f"stopword unique{i} other{i}" for i in range(10)]
        vocab, docs, report = preprocess(lines, min_freq=1, max_freq=5)
        assert "stopword" not in vocab
        assert report.words_dropped_high_freq == 1

    def test_empty_input(self):
        vocab, docs, report = preprocess([], min_freq=1, max_freq=BIG)
        assert len(vocab) == 0 and docs == []
        assert report.lines_read == 0 and report.docs_kept == 0

    def test_malformed_utf8_line_skipped(self):
        lines = [b"good line here", b"\xff\xfe broken", b"good line here too"]
        vocab, docs, report = preprocess(lines, min_freq=1, max_freq=BIG)
        assert report.malformed_lines == 1
        assert report.lines_read == 3

    def test_vocabulary_ids_dense_and_frequencies_bounded(self):
        lines = ["a b c a b", "a b d d b", "c a d b a"]
        vocab, docs, report = preprocess(lines, min_freq=2, max_freq=BIG)
        ids = sorted(i for _, i, _ in vocab.entries())
        assert ids == list(range(len(vocab)))
        assert all(f >= 2 for f in vocab.frequencies)

    def test_dedup_happens_after_word_filtering(self):
        # distinct raw lines become identical once the rare word drops
        lines = ["apple pie rare1", "apple pie rare2", "apple pie tart"]
        vocab, docs, report = preprocess(lines, min_freq=2, max_freq=BIG)
        assert report.docs_dropped_duplicate == 1

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.lists(st.sampled_from("abcdefgh"), min_size=0, max_size=6).map(" ".join),
            max_size=20,
        ),
        st.integers(1, 3),
    )
    def test_idempotence(self, lines, min_freq):
        vocab, docs, _ = preprocess(lines, min_freq=min_freq, max_freq=BIG)
        rendered = [" ".join(vocab.words[w] for w in d.tokens) for d in docs]
        vocab2, docs2, _ = preprocess(rendered, min_freq=min_freq, max_freq=BIG)
        assert [
            [vocab.words[w] for w in d.tokens] for d in docs
        ] == [[vocab2.words[w] for w in d.tokens] for d in docs2]


class TestPlaceWords:
    def test_greedy_balancing_example(self):
        vocab = Vocabulary(list("abcde"), [10, 9, 1, 1, 1])
        cols = place_words(vocab, 2)
        loads = [0, 0]
        for i, f in enumerate(vocab.frequencies):
            loads[cols[i]] += f
        assert sorted(loads) == [11, 11]

    def test_single_shard(self):
        vocab = Vocabulary(list("abc"), [3, 2, 1])
        assert list(place_words(vocab, 1)) == [0, 0, 0]

    def test_equal_frequencies_balance_exactly(self):
        vocab = Vocabulary(list("abcd"), [5, 5, 5, 5])
        cols = place_words(vocab, 2)
        loads = [0, 0]
        for i in range(4):
            loads[cols[i]] += 5
        assert loads[0] == loads[1]

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(1, 50), min_size=1, max_size=30),
        st.integers(1, 5),
    )
    def test_balance_bound(self, freqs, num_shards):
        vocab = Vocabulary([f"w{i}" for i in range(len(freqs))], freqs)
        cols = place_words(vocab, num_shards)
        loads = [0] * num_shards
        for i, f in enumerate(freqs):
            loads[cols[i]] += f
        assert max(loads) - min(loads) <= max(freqs)

    def test_seeded_tie_order_is_deterministic(self):
        vocab = Vocabulary(list("abcdef"), [2, 2, 2, 2, 2, 2])
        a = list(place_words(vocab, 3, seed=5))
        b = list(place_words(vocab, 3, seed=5))
        assert a == b


def toy_docs(num_docs, tokens_each, num_words, seed=0):
    from gridlda.corpus import Document

    rng = np.random.default_rng(seed)
    return [
        Document(d, [int(w) for w in rng.integers(0, num_words, size=tokens_each)])
        for d in range(num_docs)
    ]


class TestShuffleAndPartition:
    def test_single_block_contains_everything(self):
        docs = toy_docs(5, 4, 6)
        vocab = Vocabulary([f"w{i}" for i in range(6)], [1] * 6)
        grid = shuffle_and_partition(docs, vocab, 1, seed=0)
        assert grid.total_tokens() == 20
        assert len(grid.block_tokens(0, 0)) == 20

    def test_deterministic_for_fixed_seed(self):
        docs = toy_docs(10, 5, 8)
        vocab = Vocabulary([f"w{i}" for i in range(8)], [2] * 8)
        g1 = shuffle_and_partition(docs, vocab, 2, seed=3)
        g2 = shuffle_and_partition(docs, vocab, 2, seed=3)
        assert [d.doc_id for row in g1.docs_by_row for d in row] == [
            d.doc_id for row in g2.docs_by_row for d in row
        ]
        assert list(g1.col_of_word) == list(g2.col_of_word)

    def test_token_conservation_across_blocks(self):
        docs = toy_docs(12, 6, 9, seed=4)
        vocab = Vocabulary([f"w{i}" for i in range(9)], [3] * 9)
        grid = shuffle_and_partition(docs, vocab, 3, seed=1)
        total = sum(
            len(grid.block_tokens(r, c)) for r in range(3) for c in range(3)
        )
        assert total == grid.total_tokens() == 72

    def test_blocks_respect_row_and_column(self):
        docs = toy_docs(8, 5, 10, seed=2)
        vocab = Vocabulary([f"w{i}" for i in range(10)], [1] * 10)
        grid = shuffle_and_partition(docs, vocab, 2, seed=7)
        for r in range(2):
            for c in range(2):
                for doc_id, w in grid.block_tokens(r, c):
                    assert grid.row_of_doc[doc_id] == r
                    assert grid.col_of_word[w] == c

    def test_too_many_shards_error(self):
        docs = toy_docs(2, 3, 5)
        vocab = Vocabulary([f"w{i}" for i in range(5)], [1] * 5)
        with pytest.raises(ValueError):
            shuffle_and_partition(docs, vocab, 3, seed=0)
        with pytest.raises(ValueError):
            shuffle_and_partition(docs, vocab, 6, seed=0)

    def test_row_token_balance_uniform_docs(self):
        # 100 equal-length docs over 4 rows: shard token ratio bounded.
        docs = toy_docs(100, 10, 50, seed=9)
        vocab = Vocabulary([f"w{i}" for i in range(50)], [5] * 50)
        grid = shuffle_and_partition(docs, vocab, 4, seed=11)
        loads = [sum(len(d.tokens) for d in row) for row in grid.docs_by_row]
        assert max(loads) / min(loads) <= 1.5


class TestVocabularyFile:
    def test_round_trip(self, tmp_path):
        vocab = Vocabulary(["alpha", "beta", "gamma"], [7, 5, 5])
        path = tmp_path / "vocab.tsv"
        write_vocabulary(vocab, path)
        loaded = read_vocabulary(path)
        assert loaded.words == vocab.words
        assert loaded.frequencies == vocab.frequencies
        text = path.read_text()
        assert text.splitlines()[0] == "alpha\t0\t7"

    def test_non_dense_ids_rejected(self, tmp_path):
        path = tmp_path / "vocab.tsv"
        path.write_text("alpha\t0\t7\nbeta\t2\t5\n")
        with pytest.raises(ValueError):
            read_vocabulary(path)
