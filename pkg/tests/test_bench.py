"""Fertility accounting, latency reporting, side-by-side comparison."""

import json

import pytest

from lgse.bench import compare, latency_benchmark, token_fertility
from lgse.errors import ValidationError
from lgse.morphseg import MorphemeLexicon
from lgse.tokenizer import Tokenizer
from lgse.vocab import HybridVocab, VocabConfig, build_hybrid_vocab

LEX3 = MorphemeLexicon.from_entries({
    "abcdef": ("abc", "def"),
    "defabc": ("def", "abc"),
    "abcabc": ("abc", "abc"),
    "ghi": ("ghi",),
})
CORPUS3 = ["abcdef defabc abcabc ghi", "abcdef abcabc ghi ghi"]


def hybrid_tok(name="hybrid"):
    vocab = build_hybrid_vocab(CORPUS3, LEX3, VocabConfig(s=18, r=0.5))
    return Tokenizer(vocab, LEX3, name=name)


def word_level_tok():
    """Every corpus word is itself a morph token: one token per word."""
    words = sorted({w for line in CORPUS3 for w in line.split()})
    lex = MorphemeLexicon.from_entries({w: (w,) for w in words})
    specials = ["<pad>", "<unk>", "<mask>", "<s>", "</s>"]
    tokens = specials + words
    vocab = HybridVocab(
        id_to_token=tokens,
        kinds=["special"] * 5 + ["morph"] * len(words),
        merges=[],
        token_to_id={t: i for i, t in enumerate(tokens)},
    )
    return Tokenizer(vocab, lex, name="word-level")


class TestFertility:
    def test_word_level_tokenizer_has_tf_one(self):
        rep = token_fertility(CORPUS3, word_level_tok())
        assert rep.tf == 1.0
        assert rep.total_words == 8 and rep.total_tokens == 8
        assert rep.unk_rate == 0.0

    def test_exact_counts_on_small_corpus(self):
        # five 2-morpheme words at 2 tokens each; ghi is chars, 3 tokens x3
        rep = token_fertility(CORPUS3, hybrid_tok())
        assert rep.total_words == 8
        assert rep.total_tokens == 5 * 2 + 3 * 3
        assert rep.tf == pytest.approx(19 / 8)

    def test_hist_buckets_by_word_length(self):
        rep = token_fertility(CORPUS3, hybrid_tok())
        # lengths: 6 (five words), 3 (three ghi)
        assert set(rep.hist) == {6, 3}
        words6, tokens6 = rep.hist[6]
        words3, tokens3 = rep.hist[3]
        assert words6 == 5 and words3 == 3
        assert words6 + words3 == rep.total_words
        assert tokens6 + tokens3 == rep.total_tokens

    def test_unk_rate_counts_unknown_codepoints(self):
        rep = token_fertility(["ghz"], hybrid_tok())
        # g and h are chars, z is unknown
        assert rep.total_tokens == 3
        assert rep.unk_rate == pytest.approx(1 / 3)

    def test_duplicated_corpus_doubles_counts_keeps_tf(self):
        one = token_fertility(CORPUS3, hybrid_tok())
        two = token_fertility(CORPUS3 + CORPUS3, hybrid_tok())
        assert two.total_words == 2 * one.total_words
        assert two.total_tokens == 2 * one.total_tokens
        assert two.tf == one.tf

    def test_line_order_invariance(self):
        rep_a = token_fertility(CORPUS3, hybrid_tok())
        rep_b = token_fertility(list(reversed(CORPUS3)), hybrid_tok())
        assert rep_a == rep_b

    def test_zero_words_rejected(self):
        with pytest.raises(ValidationError):
            token_fertility(["   ", ""], hybrid_tok())

    def test_json_dict_round_trips_deterministically(self):
        a = json.dumps(token_fertility(CORPUS3, hybrid_tok()).json_dict())
        b = json.dumps(token_fertility(CORPUS3, hybrid_tok()).json_dict())
        assert a == b
        obj = json.loads(a)
        assert set(obj) == {"total_words", "total_tokens", "tf", "unk_rate", "hist"}


class TestLatency:
    def test_single_rep_percentiles_collapse(self):
        rep = latency_benchmark(CORPUS3, hybrid_tok(), repetitions=1)
        assert rep.p50_ns_per_1k_chars == rep.p95_ns_per_1k_chars
        assert rep.mean_ns_per_1k_chars == rep.p50_ns_per_1k_chars
        assert len(rep.run_ns) == 1
        assert all(ns > 0 for ns in rep.run_ns)

    def test_warmup_runs_are_discarded(self):
        rep = latency_benchmark(CORPUS3, hybrid_tok(), repetitions=3, warmup=2)
        assert rep.repetitions == 3 and rep.warmup_runs == 2
        assert len(rep.run_ns) == 3

    def test_percentile_ordering(self):
        rep = latency_benchmark(CORPUS3 * 5, hybrid_tok(), repetitions=5)
        assert rep.p50_ns_per_1k_chars <= rep.p95_ns_per_1k_chars

    def test_counts_are_deterministic(self):
        a = latency_benchmark(CORPUS3, hybrid_tok(), repetitions=2)
        b = latency_benchmark(CORPUS3 + CORPUS3, hybrid_tok(), repetitions=2)
        assert b.total_chars == 2 * a.total_chars
        assert b.total_tokens == 2 * a.total_tokens

    def test_bad_arguments(self):
        with pytest.raises(ValidationError):
            latency_benchmark(CORPUS3, hybrid_tok(), repetitions=0)
        with pytest.raises(ValidationError):
            latency_benchmark(CORPUS3, hybrid_tok(), repetitions=1, warmup=-1)
        with pytest.raises(ValidationError):
            latency_benchmark([""], hybrid_tok(), repetitions=1)


class TestCompare:
    def test_needs_two_tokenizers(self):
        with pytest.raises(ValidationError):
            compare(CORPUS3, [hybrid_tok()])

    def test_rows_in_input_order_without_timing(self):
        rep = compare(CORPUS3, [hybrid_tok("a"), word_level_tok()])
        assert [r.name for r in rep.rows] == ["a", "word-level"]
        assert all(r.latency is None for r in rep.rows)
        # word-level: 8 tokens over 2 nonempty lines
        assert rep.rows[1].tf == 1.0
        assert rep.rows[1].mean_seq_len == 4.0

    def test_identical_tokenizers_identical_rows(self):
        rep = compare(CORPUS3, [hybrid_tok("x"), hybrid_tok("y")])
        a, b = rep.rows
        assert (a.tf, a.mean_seq_len, a.unk_rate, a.total_tokens) == \
               (b.tf, b.mean_seq_len, b.unk_rate, b.total_tokens)

    def test_repetitions_attach_latency(self):
        rep = compare(CORPUS3, [hybrid_tok("a"), hybrid_tok("b")], repetitions=2)
        assert all(r.latency is not None for r in rep.rows)
        assert all(r.latency.repetitions == 2 for r in rep.rows)

    def test_text_table_shape(self):
        rep = compare(CORPUS3, [hybrid_tok("a"), word_level_tok()])
        table = rep.text_table()
        lines = table.splitlines()
        assert len(lines) == 4  # header, rule, two rows
        assert lines[0].startswith("tokenizer")
        assert "p50" not in lines[0]  # no timing columns without reps
        timed = compare(CORPUS3, [hybrid_tok("a"), hybrid_tok("b")], repetitions=1)
        assert "p50_ns/1k" in timed.text_table().splitlines()[0]

    def test_json_dict_deterministic_without_timing(self):
        a = json.dumps(compare(CORPUS3, [hybrid_tok("a"), word_level_tok()]).json_dict())
        b = json.dumps(compare(CORPUS3, [hybrid_tok("a"), word_level_tok()]).json_dict())
        assert a == b
