"""Hybrid subword vocabulary: morpheme slots plus within-morpheme BPE.

The token budget s splits as follows: special tokens and the character
base (every codepoint observed in the corpus) are always included; the
remaining s' = s - |special| - |chars| slots go to the top-frequency
morphemes (floor(s' * r) of them) and to BPE merge units (the rest).
Setting r=1 gives a morpheme-only vocabulary, r=0 plain BPE.

BPE here is boundary-restricted: pair statistics are collected within
segmentation spans only, so no merge ever crosses a morpheme boundary.
With an empty lexicon every word is a single span and this degrades to
ordinary whole-word BPE, which doubles as the comparison baseline.

Merge selection is greedy most-frequent-pair with ties broken by the
lexicographically smallest (left, right) pair; occurrences are counted
left to right allowing overlaps, and merge application is a left-to-right
non-overlapping rewrite. Training stops early when no pair occurs twice.
"""

from __future__ import annotations

import heapq
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

from .errors import CapacityError, ParseError, ValidationError
from .morphseg import MorphemeLexicon
from .pretok import pretokenize, word_spans

DEFAULT_SPECIAL_TOKENS = ("<pad>", "<unk>", "<mask>", "<s>", "</s>")

KIND_SPECIAL = "special"
KIND_CHAR = "char"
KIND_MORPH = "morph"
KIND_BPE = "bpe"

VOCAB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class VocabConfig:
    s: int
    r: float = 0.5
    special_tokens: tuple[str, ...] = DEFAULT_SPECIAL_TOKENS

    def validate(self) -> None:
        if self.s < len(self.special_tokens) + 1:
            raise ValidationError(f"vocab size {self.s} cannot hold the special tokens")
        if not 0.0 <= self.r <= 1.0:
            raise ValidationError(f"morph ratio must lie in [0, 1], got {self.r}")
        if len(set(self.special_tokens)) != len(self.special_tokens):
            raise ValidationError("special tokens must be distinct")


@dataclass(eq=False)
class HybridVocab:
    """Immutable-by-convention vocabulary: parallel id->token / id->kind lists."""

    id_to_token: list[str]
    kinds: list[str]
    merges: list[tuple[str, str]]
    token_to_id: dict[str, int] = field(repr=False)

    @classmethod
    def build(cls, tokens: list[str], kinds: list[str],
              merges: list[tuple[str, str]]) -> "HybridVocab":
        if len(tokens) != len(kinds):
            raise ValidationError("token and kind lists differ in length")
        t2i = {t: i for i, t in enumerate(tokens)}
        if len(t2i) != len(tokens):
            raise ValidationError("duplicate token strings in vocabulary")
        return cls(id_to_token=list(tokens), kinds=list(kinds),
                   merges=[tuple(m) for m in merges], token_to_id=t2i)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @cached_property
    def morph_tokens(self) -> frozenset[str]:
        return frozenset(t for t, k in zip(self.id_to_token, self.kinds) if k == KIND_MORPH)

    @cached_property
    def special_ids(self) -> frozenset[int]:
        return frozenset(i for i, k in enumerate(self.kinds) if k == KIND_SPECIAL)

    def _special_id(self, token: str) -> int:
        i = self.token_to_id.get(token)
        if i is None:
            raise ValidationError(f"vocabulary has no {token} token")
        return i

    @property
    def pad_id(self) -> int:
        return self._special_id("<pad>")

    @property
    def unk_id(self) -> int:
        return self._special_id("<unk>")

    @property
    def mask_id(self) -> int:
        return self._special_id("<mask>")

    def kind_counts(self) -> dict[str, int]:
        return dict(Counter(self.kinds))

    def to_json_dict(self) -> dict:
        return {
            "version": VOCAB_FORMAT_VERSION,
            "size": self.size,
            "special": [t for t, k in zip(self.id_to_token, self.kinds) if k == KIND_SPECIAL],
            "tokens": [
                {"id": i, "text": t, "kind": k}
                for i, (t, k) in enumerate(zip(self.id_to_token, self.kinds))
            ],
            "merges": [[l, r] for l, r in self.merges],
        }

    def save_json(self, path: str) -> None:
        payload = json.dumps(self.to_json_dict(), ensure_ascii=False,
                             separators=(",", ":")) + "\n"
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)

    @classmethod
    def load_json(cls, path: str) -> "HybridVocab":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: not valid JSON: {exc}") from None
        if obj.get("version") != VOCAB_FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported vocab format version {obj.get('version')!r}")
        rows = obj.get("tokens")
        if not isinstance(rows, list) or not rows:
            raise ValidationError(f"{path}: missing token table")
        tokens: list[str] = []
        kinds: list[str] = []
        for n, row in enumerate(rows):
            if row.get("id") != n:
                raise ValidationError(f"{path}: token ids must be dense and sorted, broke at {n}")
            tokens.append(row["text"])
            kinds.append(row["kind"])
        if obj.get("size") != len(tokens):
            raise ValidationError(f"{path}: declared size {obj.get('size')} != {len(tokens)} tokens")
        merges = [tuple(m) for m in obj.get("merges", [])]
        for m in merges:
            if len(m) != 2:
                raise ValidationError(f"{path}: malformed merge entry {m!r}")
        return cls.build(tokens, kinds, merges)


# ---------------------------------------------------------------------------
# corpus statistics


def _corpus_stats(corpus: Iterable[str], lex: MorphemeLexicon) -> tuple[Counter, Counter, set[str]]:
    """Count span strings, morpheme occurrences, and observed codepoints."""
    word_counts: Counter[str] = Counter()
    for line in corpus:
        word_counts.update(pretokenize(line))
    span_counts: Counter[str] = Counter()
    morph_counts: Counter[str] = Counter()
    chars: set[str] = set()
    for word, c in word_counts.items():
        spans, morphs = word_spans(word, lex)
        chars.update(word)
        for s in spans:
            span_counts[s] += c
        for m in morphs:
            morph_counts[m] += c
    return span_counts, morph_counts, chars


def top_morphemes(corpus: Iterable[str], lex: MorphemeLexicon, k: int) -> list[tuple[str, int]]:
    """k most frequent morphemes by corpus occurrence, ties lexicographic."""
    if k < 0:
        raise ValidationError("k must be non-negative")
    _, morph_counts, _ = _corpus_stats(corpus, lex)
    ranked = sorted(morph_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


# ---------------------------------------------------------------------------
# BPE trainer


def apply_merge(symbols: list[str], left: str, right: str) -> list[str]:
    """One left-to-right non-overlapping rewrite of (left, right) -> left+right."""
    out: list[str] = []
    i = 0
    n = len(symbols)
    merged = left + right
    while i < n:
        if i < n - 1 and symbols[i] == left and symbols[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


class BpeTrainer:
    """Incremental pair-merge trainer over aggregated span types.

    Spans with identical text share one type whose frequency is the sum of
    occurrences; a pair -> type index plus a lazy max-heap keeps each merge
    step near O(affected types) instead of rescanning the corpus. Heap
    entries are (-count, left, right), so the pop order realizes
    highest-count-first with lexicographic tie-breaking; entries whose
    count no longer matches the live table are stale and skipped.
    """

    def __init__(self, span_counts: Counter[str]):
        self._types: list[list[str]] = []
        self._freq: list[int] = []
        self._pair_counts: dict[tuple[str, str], int] = {}
        self._pair_types: dict[tuple[str, str], set[int]] = {}
        self._heap: list[tuple[int, str, str]] = []
        for span, c in sorted(span_counts.items()):
            tid = len(self._types)
            syms = list(span)
            self._types.append(syms)
            self._freq.append(c)
            for pair in zip(syms, syms[1:]):
                self._pair_counts[pair] = self._pair_counts.get(pair, 0) + c
                self._pair_types.setdefault(pair, set()).add(tid)
        for (l, r), c in self._pair_counts.items():
            heapq.heappush(self._heap, (-c, l, r))

    def merges(self) -> Iterator[tuple[str, str, int]]:
        """Yield (left, right, count_at_merge) until no pair occurs twice."""
        while True:
            best = None
            while self._heap:
                negc, l, r = heapq.heappop(self._heap)
                if self._pair_counts.get((l, r)) == -negc:
                    best = (l, r, -negc)
                    break
            if best is None or best[2] < 2:
                return
            yield best
            self._apply(best[0], best[1])

    def _apply(self, left: str, right: str) -> None:
        pair = (left, right)
        changed: set[tuple[str, str]] = set()
        for tid in sorted(self._pair_types.get(pair, ())):
            syms = self._types[tid]
            c = self._freq[tid]
            old_pairs = list(zip(syms, syms[1:]))
            new_syms = apply_merge(syms, left, right)
            new_pairs = list(zip(new_syms, new_syms[1:]))
            for p in old_pairs:
                left_over = self._pair_counts[p] - c
                if left_over:
                    self._pair_counts[p] = left_over
                else:
                    del self._pair_counts[p]
                changed.add(p)
            for p in set(old_pairs):
                holders = self._pair_types[p]
                holders.discard(tid)
                if not holders:
                    del self._pair_types[p]
            for p in new_pairs:
                self._pair_counts[p] = self._pair_counts.get(p, 0) + c
                changed.add(p)
            for p in set(new_pairs):
                self._pair_types.setdefault(p, set()).add(tid)
            self._types[tid] = new_syms
        # push final counts once per touched pair; intermediate states stay stale
        for p in sorted(changed):
            c = self._pair_counts.get(p)
            if c:
                heapq.heappush(self._heap, (-c, p[0], p[1]))

    def final_spans(self) -> dict[str, list[str]]:
        """Current symbol sequence per span text (diagnostics and tests)."""
        return {"".join(syms): list(syms) for syms in self._types}


def train_bpe_within_morphemes(
    corpus: Iterable[str], lex: MorphemeLexicon, n_merges: int
) -> list[tuple[str, str]]:
    """Learn up to n_merges boundary-restricted merges from the corpus."""
    if n_merges < 0:
        raise ValidationError("n_merges must be non-negative")
    span_counts, _, _ = _corpus_stats(corpus, lex)
    if not span_counts:
        raise ValidationError("corpus is empty")
    if n_merges == 0:
        return []
    out: list[tuple[str, str]] = []
    for l, r, _c in BpeTrainer(span_counts).merges():
        out.append((l, r))
        if len(out) == n_merges:
            break
    return out


# ---------------------------------------------------------------------------
# budget arithmetic and assembly


def vocab_budget(s: int, n_special: int, n_chars: int, r: float) -> tuple[int, int]:
    """Split the learnable budget s' = s - n_special - n_chars into
    (morph_slots, bpe_slots) with morph_slots = floor(s' * r)."""
    s_prime = s - n_special - n_chars
    if s_prime < 0:
        raise CapacityError(
            f"size {s} cannot hold {n_special} special tokens plus {n_chars} characters"
        )
    # the epsilon absorbs float dust on r values that are exact in decimal only
    morph_slots = int(math.floor(s_prime * r + 1e-9))
    return morph_slots, s_prime - morph_slots


def build_hybrid_vocab(corpus: Iterable[str], lex: MorphemeLexicon,
                       cfg: VocabConfig) -> HybridVocab:
    """Assemble a vocabulary of exactly cfg.s tokens from the corpus.

    Id layout: special tokens in config order, then the character base
    sorted lexicographically, then morpheme slots in frequency order, then
    BPE units in merge order. Morpheme picks that collide with an existing
    token string are skipped (the scan continues down the ranked list);
    unfillable morph slots fall through to the BPE fill so |V| == s holds
    whenever the corpus can support it at all.
    """
    cfg.validate()
    span_counts, morph_counts, chars = _corpus_stats(corpus, lex)
    if not span_counts:
        raise ValidationError("corpus is empty")

    specials = list(cfg.special_tokens)
    seen = set(specials)
    char_tokens = [c for c in sorted(chars) if c not in seen]
    seen.update(char_tokens)

    morph_slots, _ = vocab_budget(cfg.s, len(specials), len(char_tokens), cfg.r)

    ranked = sorted(morph_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    morph_picks: list[str] = []
    for m, _c in ranked:
        if len(morph_picks) == morph_slots:
            break
        if m in seen:
            continue
        morph_picks.append(m)
        seen.add(m)

    bpe_needed = cfg.s - len(specials) - len(char_tokens) - len(morph_picks)
    merges: list[tuple[str, str]] = []
    bpe_picks: list[str] = []
    if bpe_needed > 0:
        for l, r, _c in BpeTrainer(span_counts).merges():
            merges.append((l, r))
            unit = l + r
            if unit not in seen:
                bpe_picks.append(unit)
                seen.add(unit)
                if len(bpe_picks) == bpe_needed:
                    break
        if len(bpe_picks) < bpe_needed:
            got = len(specials) + len(char_tokens) + len(morph_picks) + len(bpe_picks)
            raise CapacityError(
                f"corpus supports only {got} tokens toward requested size {cfg.s}"
            )

    tokens = specials + char_tokens + morph_picks + bpe_picks
    kinds = (
        [KIND_SPECIAL] * len(specials)
        + [KIND_CHAR] * len(char_tokens)
        + [KIND_MORPH] * len(morph_picks)
        + [KIND_BPE] * len(bpe_picks)
    )
    return HybridVocab.build(tokens, kinds, merges)
