"""Embedding-only adaptation under a drift regularizer.

This is a desk-scale stand-in for language-adaptive pretraining: the
scorer is a bag-of-context linear model with tied input/output
embeddings, not a transformer. Each sequence contributes h = mean of the
embeddings of its non-masked, non-pad positions; logits are E h over the
whole vocabulary, and masked positions are predicted from h alone. That
keeps every gradient desk-checkable by finite differences while
exercising exactly the mechanics under study: only rows in new_token_ids
are ever updated, pulled back toward their init vectors by
lambda * sum ||e - e_init||^2.

Masked positions are replaced by <mask> only (no 80/10/10 split), and at
least one eligible position is always masked. Sequences are corpus lines
in file order, truncated or padded to max_len; the trailing short batch
is kept.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import ValidationError
from .tokenizer import Tokenizer


@dataclass(frozen=True)
class AdaptConfig:
    reg_lambda: float
    mask_prob: float = 0.15
    max_len: int = 256
    batch_size: int = 32
    epochs: int = 10
    lr: float = 5e-5
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if self.reg_lambda < 0:
            raise ValidationError("lambda must be non-negative")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValidationError("mask_prob must lie in [0, 1]")
        if self.max_len < 2:
            raise ValidationError("max_len must be at least 2")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.lr <= 0:
            raise ValidationError("lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be non-negative")


@dataclass(frozen=True)
class MaskedSequence:
    masked_ids: tuple[int, ...]
    target_positions: tuple[int, ...]
    target_ids: tuple[int, ...]


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    task_loss: float
    reg_loss: float
    mean_drift: float

    def json_dict(self) -> dict:
        return {"epoch": self.epoch, "task_loss": self.task_loss,
                "reg_loss": self.reg_loss, "mean_drift": self.mean_drift}


@dataclass
class AdaptReport:
    epochs: list[EpochStats]
    final: EmbeddingMatrix


@dataclass
class OptimizerState:
    """Adam moments over new rows only; SGD keeps just the step counter."""
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


# ---------------------------------------------------------------------------
# regularizer


def _check_anchors(E: EmbeddingMatrix, anchors: dict[int, np.ndarray]) -> None:
    missing = sorted(i for i in E.new_token_ids if i not in anchors)
    if missing:
        raise ValidationError(f"anchors missing for new token ids {missing}")


def reg_loss(E: EmbeddingMatrix, anchors: dict[int, np.ndarray], lam: float) -> float:
    """lambda * sum over new tokens of squared distance to the anchor."""
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    _check_anchors(E, anchors)
    total = 0.0
    for i in sorted(E.new_token_ids):
        diff = E.rows[i] - anchors[i]
        total += float(diff @ diff)
    return lam * total


def reg_grad(e: np.ndarray, e_init: np.ndarray, lam: float) -> np.ndarray:
    """d/de of lambda * ||e - e_init||^2, i.e. 2 lambda (e - e_init)."""
    e = np.asarray(e, dtype=np.float64)
    e_init = np.asarray(e_init, dtype=np.float64)
    if e.shape != e_init.shape:
        raise ValidationError(f"shape mismatch {e.shape} vs {e_init.shape}")
    return 2.0 * lam * (e - e_init)


# ---------------------------------------------------------------------------
# masking


def mask_sequence(ids: Sequence[int], cfg: AdaptConfig, rng: np.random.Generator,
                  pad_id: int, mask_id: int,
                  special_ids: frozenset[int]) -> MaskedSequence:
    """Truncate/pad to max_len, then mask eligible positions independently.

    Eligible means non-pad and non-special. When the draw selects nothing
    and eligible positions exist, one is forced uniformly at random. A
    sequence of only special tokens comes back with empty targets.
    """
    if not len(ids):
        raise ValidationError("cannot mask an empty sequence")
    clipped = list(ids[: cfg.max_len])
    clipped.extend([pad_id] * (cfg.max_len - len(clipped)))
    eligible = [p for p, t in enumerate(clipped) if t != pad_id and t not in special_ids]
    picks: list[int] = []
    if eligible:
        draws = rng.random(len(eligible))
        picks = [p for p, u in zip(eligible, draws) if u < cfg.mask_prob]
        if not picks:
            picks = [eligible[int(rng.integers(len(eligible)))]]
    masked = list(clipped)
    targets = []
    for p in picks:
        targets.append((p, clipped[p]))
        masked[p] = mask_id
    return MaskedSequence(
        masked_ids=tuple(masked),
        target_positions=tuple(p for p, _ in targets),
        target_ids=tuple(t for _, t in targets),
    )


# ---------------------------------------------------------------------------
# loss, gradients, optimization


def mlm_loss_and_grads(
    batch: Sequence[MaskedSequence], E: EmbeddingMatrix,
    anchors: dict[int, np.ndarray], cfg: AdaptConfig, pad_id: int, mask_id: int,
    batch_index: int | None = None,
) -> tuple[float, float, float, np.ndarray, list[int]]:
    """Total/task/reg losses plus d(total)/d(row) for each new row.

    Returns (total, task, reg, grad_rows, new_ids) with grad_rows[k] the
    gradient for new_ids[k]. Gradients flow through context means and the
    tied output side; frozen-row gradients are simply not materialized.
    """
    _check_anchors(E, anchors)
    new_ids = sorted(E.new_token_ids)
    row_of = {tid: k for k, tid in enumerate(new_ids)}
    grads = np.zeros((len(new_ids), E.dim), dtype=np.float64)
    rows = E.rows
    n_targets = sum(len(s.target_ids) for s in batch)
    task = 0.0
    if n_targets:
        scale = 1.0 / n_targets
        for s in batch:
            if not s.target_ids:
                continue
            target_set = set(s.target_positions)
            ctx = [p for p, t in enumerate(s.masked_ids)
                   if t != pad_id and p not in target_set]
            if ctx:
                ctx_ids = [s.masked_ids[p] for p in ctx]
                h = rows[ctx_ids].mean(axis=0)
            else:
                ctx_ids = []
                h = np.zeros(E.dim, dtype=np.float64)
            z = rows @ h
            z_max = z.max()
            logsumexp = z_max + np.log(np.exp(z - z_max).sum())
            p = np.exp(z - logsumexp)
            # dz accumulated over this sequence's targets: T*p - sum(onehot)
            dz = len(s.target_ids) * p
            for t in s.target_ids:
                task += logsumexp - z[t]
                dz[t] -= 1.0
            dz *= scale
            # tied output side: dL/d row_v += dz_v * h, new rows only
            for tid in new_ids:
                gv = dz[tid]
                if gv:
                    grads[row_of[tid]] += gv * h
            # input side: dL/dh = E^T dz, spread over context tokens
            if ctx_ids:
                dh = rows.T @ dz
                w = 1.0 / len(ctx_ids)
                for tid in ctx_ids:
                    k = row_of.get(tid)
                    if k is not None:
                        grads[k] += w * dh
        task *= scale
    reg = reg_loss(E, anchors, cfg.reg_lambda)
    for k, tid in enumerate(new_ids):
        grads[k] += reg_grad(rows[tid], anchors[tid], cfg.reg_lambda)
    total = task + reg
    if not np.isfinite(total):
        where = f" in batch {batch_index}" if batch_index is not None else ""
        raise ValidationError(
            f"non-finite loss{where}; inputs or learning dynamics are broken")
    return total, task, reg, grads, new_ids


def init_optimizer_state(E: EmbeddingMatrix, cfg: AdaptConfig) -> OptimizerState:
    n = len(E.new_token_ids)
    if cfg.optimizer == "adam":
        return OptimizerState(step=0, m=np.zeros((n, E.dim)), v=np.zeros((n, E.dim)))
    return OptimizerState(step=0)


def mlm_step(
    batch: Sequence[MaskedSequence], E: EmbeddingMatrix,
    anchors: dict[int, np.ndarray], cfg: AdaptConfig, state: OptimizerState,
    pad_id: int, mask_id: int, batch_index: int | None = None,
) -> tuple[float, EmbeddingMatrix, OptimizerState]:
    """One optimizer step; mutates only new rows of E, in place.

    Weight decay is decoupled (applied to the pre-step parameter values)
    and, like everything else, touches new rows only.
    """
    total, _task, _reg, grads, new_ids = mlm_loss_and_grads(
        batch, E, anchors, cfg, pad_id, mask_id, batch_index)
    _apply_update(E, grads, new_ids, cfg, state)
    return total, E, state


# ---------------------------------------------------------------------------
# driver


def _mean_drift(E: EmbeddingMatrix, anchors: dict[int, np.ndarray]) -> float:
    ids = sorted(E.new_token_ids)
    if not ids:
        return 0.0
    return float(np.mean([np.linalg.norm(E.rows[i] - anchors[i]) for i in ids]))


def adapt(corpus: Iterable[str], tokenizer: Tokenizer, E: EmbeddingMatrix,
          anchors: dict[int, np.ndarray], cfg: AdaptConfig) -> AdaptReport:
    """Run the masked-token objective over the corpus for cfg.epochs.

    Sequences are corpus lines encoded by `tokenizer`, re-masked each
    epoch from one advancing seeded generator. Deterministic under
    cfg.seed. E is updated in place and also returned in the report.
    """
    cfg.validate()
    _check_anchors(E, anchors)
    vocab = tokenizer.vocab
    if E.n_rows != vocab.size:
        raise ValidationError(
            f"matrix has {E.n_rows} rows for a vocabulary of {vocab.size}")
    pad_id, mask_id = vocab.pad_id, vocab.mask_id
    special_ids = vocab.special_ids
    sequences = [tokenizer.encode(line).ids for line in corpus]
    sequences = [ids for ids in sequences if ids]
    if not sequences:
        raise ValidationError("corpus is empty")
    rng = np.random.default_rng(cfg.seed)
    state = init_optimizer_state(E, cfg)
    stats: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        masked = [mask_sequence(ids, cfg, rng, pad_id, mask_id, special_ids)
                  for ids in sequences]
        batch_losses: list[float] = []
        for n_batch, start in enumerate(range(0, len(masked), cfg.batch_size)):
            batch = masked[start : start + cfg.batch_size]
            _total, task, _reg, grads, new_ids = mlm_loss_and_grads(
                batch, E, anchors, cfg, pad_id, mask_id, n_batch)
            batch_losses.append(task)
            _apply_update(E, grads, new_ids, cfg, state)
        stats.append(EpochStats(
            epoch=epoch,
            task_loss=float(np.mean(batch_losses)) if batch_losses else 0.0,
            reg_loss=reg_loss(E, anchors, cfg.reg_lambda),
            mean_drift=_mean_drift(E, anchors),
        ))
    return AdaptReport(epochs=stats, final=E)


def _apply_update(E: EmbeddingMatrix, grads: np.ndarray, new_ids: list[int],
                  cfg: AdaptConfig, state: OptimizerState) -> None:
    if not new_ids:
        return
    idx = np.array(new_ids)
    theta = E.rows[idx]
    decay = cfg.lr * cfg.weight_decay * theta if cfg.weight_decay else 0.0
    state.step += 1
    if cfg.optimizer == "adam":
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        state.m = b1 * state.m + (1 - b1) * grads
        state.v = b2 * state.v + (1 - b2) * grads * grads
        m_hat = state.m / (1 - b1 ** state.step)
        v_hat = state.v / (1 - b2 ** state.step)
        update = cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    else:
        update = cfg.lr * grads
    E.rows[idx] = theta - update - decay


def write_report_jsonl(path: str, stats: Sequence[EpochStats]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in stats:
            fh.write(json.dumps(row.json_dict(), separators=(",", ":")) + "\n")
    os.replace(tmp, path)
