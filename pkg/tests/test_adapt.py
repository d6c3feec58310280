"""Drift regularizer, masking, gradients, and the adaptation driver."""

import json

import numpy as np
import pytest

from lgse.adapt import (
    AdaptConfig,
    EpochStats,
    MaskedSequence,
    adapt,
    init_optimizer_state,
    mask_sequence,
    mlm_loss_and_grads,
    mlm_step,
    reg_grad,
    reg_loss,
    write_report_jsonl,
)
from lgse.embeddings import EmbeddingMatrix
from lgse.errors import ValidationError
from lgse.morphseg import MorphemeLexicon
from lgse.tokenizer import Tokenizer
from lgse.vocab import VocabConfig, build_hybrid_vocab

from oracles import central_difference, rel_error

LEX3 = MorphemeLexicon.from_entries({
    "abcdef": ("abc", "def"),
    "defabc": ("def", "abc"),
    "abcabc": ("abc", "abc"),
    "ghi": ("ghi",),
})
CORPUS3 = ["abcdef defabc abcabc ghi", "abcdef abcabc ghi ghi"]


def cfg_with(**kw):
    kw.setdefault("reg_lambda", 0.0)
    return AdaptConfig(**kw)


def make_setup(n_new=2, dim=4, seed=0):
    """vocab s=18 (ids 14..17 trainable), matrix, anchors, tokenizer."""
    vocab = build_hybrid_vocab(CORPUS3, LEX3, VocabConfig(s=18, r=0.5))
    tok = Tokenizer(vocab, LEX3)
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((vocab.size, dim))
    new_ids = frozenset(range(vocab.size - n_new, vocab.size))
    E = EmbeddingMatrix(rows=rows, new_token_ids=new_ids)
    anchors = {i: rows[i].copy() for i in new_ids}
    return vocab, tok, E, anchors


class TestRegularizer:
    def test_hand_computed_loss(self):
        rows = np.zeros((6, 2))
        rows[5] = [3.0, 4.0]
        E = EmbeddingMatrix(rows=rows, new_token_ids=frozenset({5}))
        anchors = {5: np.zeros(2)}
        assert reg_loss(E, anchors, 0.5) == pytest.approx(12.5)

    def test_zero_point(self):
        rng = np.random.default_rng(1)
        rows = rng.standard_normal((6, 3))
        E = EmbeddingMatrix(rows=rows, new_token_ids=frozenset({4, 5}))
        anchors = {4: rows[4].copy(), 5: rows[5].copy()}
        assert reg_loss(E, anchors, 1.0) == 0.0
        E.rows[5, 0] += 1e-3
        assert reg_loss(E, anchors, 1.0) > 0.0

    def test_missing_anchor_and_negative_lambda(self):
        E = EmbeddingMatrix(rows=np.zeros((3, 2)), new_token_ids=frozenset({2}))
        with pytest.raises(ValidationError, match="anchors missing"):
            reg_loss(E, {}, 1.0)
        with pytest.raises(ValidationError):
            reg_loss(E, {2: np.zeros(2)}, -1.0)

    def test_grad_hand_case(self):
        g = reg_grad(np.array([1.0, -2.0]), np.zeros(2), 1.0)
        np.testing.assert_allclose(g, [2.0, -4.0])

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        e0 = rng.standard_normal(4)
        e_init = rng.standard_normal(4)
        lam = 0.7
        g = reg_grad(e0, e_init, lam)
        for j in range(4):
            def f(x, j=j):
                e = e0.copy()
                e[j] = x
                d = e - e_init
                return lam * float(d @ d)
            fd = central_difference(f, e0[j], step=1e-4)
            assert rel_error(g[j], fd) < 1e-5


class TestMaskSequence:
    SPECIALS = frozenset({0, 1, 2, 3, 4})

    def test_prob_one_masks_every_eligible(self):
        cfg = cfg_with(mask_prob=1.0, max_len=8)
        rng = np.random.default_rng(0)
        out = mask_sequence([5, 6, 7], cfg, rng, pad_id=0, mask_id=2,
                            special_ids=self.SPECIALS)
        assert out.target_positions == (0, 1, 2)
        assert out.target_ids == (5, 6, 7)
        assert out.masked_ids[:3] == (2, 2, 2)
        assert out.masked_ids[3:] == (0,) * 5  # padded to max_len

    def test_prob_zero_forces_exactly_one(self):
        cfg = cfg_with(mask_prob=0.0, max_len=8)
        rng = np.random.default_rng(0)
        out = mask_sequence([5, 6, 7, 5], cfg, rng, pad_id=0, mask_id=2,
                            special_ids=self.SPECIALS)
        assert len(out.target_positions) == 1
        p = out.target_positions[0]
        assert out.masked_ids[p] == 2 and out.target_ids[0] in (5, 6, 7)

    def test_specials_only_gives_empty_targets(self):
        cfg = cfg_with(mask_prob=0.5, max_len=4)
        rng = np.random.default_rng(0)
        out = mask_sequence([3, 4, 3], cfg, rng, pad_id=0, mask_id=2,
                            special_ids=self.SPECIALS)
        assert out.target_positions == () and out.target_ids == ()
        assert out.masked_ids == (3, 4, 3, 0)

    def test_truncates_to_max_len(self):
        cfg = cfg_with(mask_prob=0.0, max_len=4)
        rng = np.random.default_rng(0)
        out = mask_sequence([5] * 10, cfg, rng, pad_id=0, mask_id=2,
                            special_ids=self.SPECIALS)
        assert len(out.masked_ids) == 4

    def test_default_length_is_256(self):
        cfg = cfg_with()
        rng = np.random.default_rng(0)
        out = mask_sequence([5, 6], cfg, rng, pad_id=0, mask_id=2,
                            special_ids=self.SPECIALS)
        assert len(out.masked_ids) == 256

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValidationError):
            mask_sequence([], cfg_with(), np.random.default_rng(0), 0, 2, self.SPECIALS)

    def test_redraw_differs_across_calls(self):
        # "dynamic": the same advancing generator gives fresh picks per epoch
        cfg = cfg_with(mask_prob=0.15, max_len=128)
        rng = np.random.default_rng(3)
        ids = [5] * 100
        a = mask_sequence(ids, cfg, rng, 0, 2, self.SPECIALS)
        b = mask_sequence(ids, cfg, rng, 0, 2, self.SPECIALS)
        assert a.target_positions != b.target_positions

    def test_empirical_rate_near_p(self):
        cfg = cfg_with(mask_prob=0.15, max_len=128)
        rng = np.random.default_rng(4)
        ids = [5] * 100
        total = 0
        n_eligible = 0
        for _ in range(100):
            out = mask_sequence(ids, cfg, rng, 0, 2, self.SPECIALS)
            total += len(out.target_positions)
            n_eligible += 100
        assert 0.13 <= total / n_eligible <= 0.17


class TestConfigValidation:
    def test_rejects_bad_fields(self):
        bad = [
            dict(reg_lambda=-1.0),
            dict(reg_lambda=0.0, mask_prob=1.5),
            dict(reg_lambda=0.0, max_len=1),
            dict(reg_lambda=0.0, batch_size=0),
            dict(reg_lambda=0.0, epochs=-1),
            dict(reg_lambda=0.0, lr=0.0),
            dict(reg_lambda=0.0, optimizer="rmsprop"),
            dict(reg_lambda=0.0, weight_decay=-0.1),
        ]
        for kw in bad:
            with pytest.raises(ValidationError):
                AdaptConfig(**kw).validate()


def hand_batch(pad_id=0, mask_id=2):
    # one target at position 1 (true id 3), context ids 3, 4, 5
    return [MaskedSequence(masked_ids=(3, mask_id, 4, 5, pad_id, pad_id),
                           target_positions=(1,), target_ids=(3,))]


class TestGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        rows = rng.standard_normal((6, 4))
        E = EmbeddingMatrix(rows=rows.copy(), new_token_ids=frozenset({4, 5}))
        anchors = {4: rng.standard_normal(4), 5: rng.standard_normal(4)}
        cfg = cfg_with(reg_lambda=0.5)
        batch = hand_batch() + [
            MaskedSequence(masked_ids=(5, 4, 2, 0, 0, 0),
                           target_positions=(2,), target_ids=(4,)),
        ]
        total, task, reg, grads, new_ids = mlm_loss_and_grads(
            batch, E, anchors, cfg, pad_id=0, mask_id=2)
        assert total == pytest.approx(task + reg)
        assert new_ids == [4, 5]
        for k, tid in enumerate(new_ids):
            for j in range(4):
                def f(x, tid=tid, j=j):
                    E2 = EmbeddingMatrix(rows=rows.copy(),
                                         new_token_ids=frozenset({4, 5}))
                    E2.rows[tid, j] = x
                    t, _, _, _, _ = mlm_loss_and_grads(
                        batch, E2, anchors, cfg, pad_id=0, mask_id=2)
                    return t
                fd = central_difference(f, rows[tid, j], step=1e-4)
                assert rel_error(grads[k, j], fd) < 1e-4

    def test_empty_context_sequence_contributes_constant_loss(self):
        # every position masked: h = 0, so the loss exists but has no gradient
        rng = np.random.default_rng(6)
        rows = rng.standard_normal((6, 4))
        E = EmbeddingMatrix(rows=rows, new_token_ids=frozenset({5}))
        anchors = {5: rows[5].copy()}
        batch = [MaskedSequence(masked_ids=(2, 2), target_positions=(0, 1),
                                target_ids=(3, 4))]
        total, task, reg, grads, _ = mlm_loss_and_grads(
            batch, E, anchors, cfg_with(), pad_id=0, mask_id=2)
        assert task == pytest.approx(np.log(6.0))  # uniform over vocab 6
        np.testing.assert_allclose(grads, 0.0)

    def test_non_finite_loss_carries_batch_index(self):
        rows = np.zeros((6, 4))
        rows[5] = np.nan
        E = EmbeddingMatrix(rows=rows, new_token_ids=frozenset({5}))
        anchors = {5: np.zeros(4)}
        with pytest.raises(ValidationError, match="batch 3"):
            mlm_loss_and_grads(hand_batch(), E, anchors, cfg_with(),
                               pad_id=0, mask_id=2, batch_index=3)


class TestStep:
    def test_zero_new_tokens_leaves_matrix_untouched(self):
        rng = np.random.default_rng(7)
        rows = rng.standard_normal((6, 4))
        before = rows.tobytes()
        E = EmbeddingMatrix(rows=rows, new_token_ids=frozenset())
        cfg = cfg_with()
        state = init_optimizer_state(E, cfg)
        total, E, state = mlm_step(hand_batch(), E, {}, cfg, state,
                                   pad_id=0, mask_id=2)
        assert np.isfinite(total) and total > 0
        assert E.rows.tobytes() == before

    def test_frozen_rows_bit_identical_after_step(self):
        rng = np.random.default_rng(8)
        rows = rng.standard_normal((6, 4))
        frozen_before = rows[:5].tobytes()
        E = EmbeddingMatrix(rows=rows, new_token_ids=frozenset({5}))
        anchors = {5: rows[5].copy()}
        cfg = cfg_with(reg_lambda=0.1, lr=0.01)
        state = init_optimizer_state(E, cfg)
        for _ in range(5):
            mlm_step(hand_batch(), E, anchors, cfg, state, pad_id=0, mask_id=2)
        assert E.rows[:5].tobytes() == frozen_before

    def test_huge_lambda_reduces_post_step_drift(self):
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((6, 4))
        anchors = {5: rows[5].copy()}
        rows[5] += 0.05  # start slightly off the anchor
        drifts = {}
        for lam in (0.0, 1e6):
            E = EmbeddingMatrix(rows=rows.copy(), new_token_ids=frozenset({5}))
            cfg = cfg_with(reg_lambda=lam, optimizer="sgd", lr=5e-7, weight_decay=0.0)
            state = init_optimizer_state(E, cfg)
            mlm_step(hand_batch(), E, anchors, cfg, state, pad_id=0, mask_id=2)
            drifts[lam] = float(np.linalg.norm(E.rows[5] - anchors[5]))
        assert drifts[1e6] < drifts[0.0]


class TestAdapt:
    def test_zero_epochs_is_identity(self):
        vocab, tok, E, anchors = make_setup()
        before = E.rows.tobytes()
        report = adapt(CORPUS3, tok, E, anchors, cfg_with(epochs=0))
        assert report.epochs == []
        assert report.final.rows.tobytes() == before

    def test_matrix_row_count_checked(self):
        vocab, tok, E, anchors = make_setup()
        bad = EmbeddingMatrix(rows=E.rows[:-1], new_token_ids=frozenset())
        with pytest.raises(ValidationError, match="rows"):
            adapt(CORPUS3, tok, bad, {}, cfg_with(epochs=1))

    def test_empty_corpus_rejected(self):
        vocab, tok, E, anchors = make_setup()
        with pytest.raises(ValidationError, match="empty"):
            adapt(["   ", ""], tok, E, anchors, cfg_with(epochs=1))

    def test_frozen_rows_bit_identical_through_training(self):
        vocab, tok, E, anchors = make_setup(n_new=4)
        frozen_before = E.rows[:14].tobytes()
        adapt(CORPUS3 * 5, tok, E, anchors,
              cfg_with(reg_lambda=0.5, epochs=3, batch_size=4, lr=0.01))
        assert E.rows[:14].tobytes() == frozen_before

    def test_seed_determinism_bytes(self, tmp_path):
        finals = []
        reports = []
        for run in range(2):
            vocab, tok, E, anchors = make_setup(n_new=4)
            rep = adapt(CORPUS3 * 3, tok, E, anchors,
                        cfg_with(reg_lambda=0.1, epochs=2, batch_size=4,
                                 lr=0.01, seed=123))
            finals.append(E.rows.tobytes())
            p = str(tmp_path / f"r{run}.jsonl")
            write_report_jsonl(p, rep.epochs)
            reports.append(open(p, "rb").read())
        assert finals[0] == finals[1]
        assert reports[0] == reports[1]

    def test_different_seed_changes_course(self):
        finals = []
        for seed in (1, 2):
            vocab, tok, E, anchors = make_setup(n_new=4)
            adapt(CORPUS3 * 3, tok, E, anchors,
                  cfg_with(reg_lambda=0.0, epochs=2, batch_size=4,
                           lr=0.01, seed=seed))
            finals.append(E.rows.tobytes())
        assert finals[0] != finals[1]

    def test_task_loss_improves_without_regularizer(self):
        vocab, tok, E, anchors = make_setup(n_new=4)
        rep = adapt(CORPUS3 * 10, tok, E, anchors,
                    cfg_with(reg_lambda=0.0, epochs=4, batch_size=8,
                             lr=0.05, weight_decay=0.0))
        assert rep.epochs[-1].task_loss < rep.epochs[0].task_loss

    def test_epoch_stats_fields_and_report_format(self, tmp_path):
        vocab, tok, E, anchors = make_setup(n_new=2)
        rep = adapt(CORPUS3, tok, E, anchors,
                    cfg_with(reg_lambda=0.5, epochs=2, batch_size=2, lr=0.01))
        assert [s.epoch for s in rep.epochs] == [0, 1]
        for s in rep.epochs:
            assert s.reg_loss >= 0.0 and s.mean_drift >= 0.0
        p = str(tmp_path / "report.jsonl")
        write_report_jsonl(p, rep.epochs)
        lines = open(p, encoding="utf-8").read().splitlines()
        assert len(lines) == 2
        row = json.loads(lines[0])
        assert list(row) == ["epoch", "task_loss", "reg_loss", "mean_drift"]

    def test_lambda_zero_reg_loss_stays_zero(self):
        vocab, tok, E, anchors = make_setup(n_new=2)
        rep = adapt(CORPUS3, tok, E, anchors,
                    cfg_with(reg_lambda=0.0, epochs=2, batch_size=2, lr=0.01))
        assert all(s.reg_loss == 0.0 for s in rep.epochs)
        assert rep.epochs[-1].mean_drift > 0.0  # still moved


class TestEpochStats:
    def test_json_dict_key_order(self):
        s = EpochStats(epoch=3, task_loss=1.5, reg_loss=0.25, mean_drift=0.1)
        assert list(s.json_dict()) == ["epoch", "task_loss", "reg_loss", "mean_drift"]
