"""Token fertility, sequence length, and encode latency measurement.

TF = total tokens / total words, words being the whitespace units of the
shared pre-tokenizer, so the number is comparable across any tokenizers
built in this package. Latency is wall-clock (monotonic) over full-corpus
encodes, normalized per 1,000 input characters because token counts
differ between the tokenizers being compared. This module emits numbers
only; rendering lives with the CLI.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ValidationError
from .pretok import pretokenize
from .tokenizer import Tokenizer


@dataclass(frozen=True)
class FertilityReport:
    total_words: int
    total_tokens: int
    tf: float
    hist: dict[int, tuple[int, int]]  # word length -> (words, tokens)
    unk_rate: float

    def json_dict(self) -> dict:
        return {
            "total_words": self.total_words,
            "total_tokens": self.total_tokens,
            "tf": self.tf,
            "unk_rate": self.unk_rate,
            "hist": {str(k): {"words": w, "tokens": t}
                     for k, (w, t) in sorted(self.hist.items())},
        }


@dataclass(frozen=True)
class LatencyReport:
    repetitions: int
    warmup_runs: int
    total_chars: int
    total_tokens: int
    run_ns: tuple[int, ...]
    mean_ns_per_1k_chars: float
    p50_ns_per_1k_chars: float
    p95_ns_per_1k_chars: float

    def json_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "warmup_runs": self.warmup_runs,
            "total_chars": self.total_chars,
            "total_tokens": self.total_tokens,
            "run_ns": list(self.run_ns),
            "mean_ns_per_1k_chars": self.mean_ns_per_1k_chars,
            "p50_ns_per_1k_chars": self.p50_ns_per_1k_chars,
            "p95_ns_per_1k_chars": self.p95_ns_per_1k_chars,
        }


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    tf: float
    mean_seq_len: float
    unk_rate: float
    total_tokens: int
    latency: LatencyReport | None

    def json_dict(self) -> dict:
        return {
            "name": self.name,
            "tf": self.tf,
            "mean_seq_len": self.mean_seq_len,
            "unk_rate": self.unk_rate,
            "total_tokens": self.total_tokens,
            "latency": self.latency.json_dict() if self.latency else None,
        }


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]

    def json_dict(self) -> dict:
        return {"rows": [r.json_dict() for r in self.rows]}

    def text_table(self) -> str:
        headers = ["tokenizer", "tf", "mean_seq_len", "unk_rate", "tokens"]
        has_latency = any(r.latency for r in self.rows)
        if has_latency:
            headers += ["p50_ns/1k", "p95_ns/1k"]
        cells = [headers]
        for r in self.rows:
            row = [r.name, f"{r.tf:.4f}", f"{r.mean_seq_len:.2f}",
                   f"{r.unk_rate:.4f}", str(r.total_tokens)]
            if has_latency:
                if r.latency:
                    row += [f"{r.latency.p50_ns_per_1k_chars:.0f}",
                            f"{r.latency.p95_ns_per_1k_chars:.0f}"]
                else:
                    row += ["-", "-"]
            cells.append(row)
        widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
        lines = []
        for n, row in enumerate(cells):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


def token_fertility(corpus: Iterable[str], tok: Tokenizer) -> FertilityReport:
    """Exact token/word counts; raises when the corpus has zero words."""
    total_words = 0
    total_tokens = 0
    unk = 0
    hist: dict[int, list[int]] = {}
    unk_token = "<unk>"
    for line in corpus:
        for word in pretokenize(line):
            tokens = tok.tokenize_word(word)
            total_words += 1
            total_tokens += len(tokens)
            unk += sum(1 for t in tokens if t == unk_token)
            bucket = hist.setdefault(len(word), [0, 0])
            bucket[0] += 1
            bucket[1] += len(tokens)
    if total_words == 0:
        raise ValidationError("corpus has no words; fertility is undefined")
    return FertilityReport(
        total_words=total_words,
        total_tokens=total_tokens,
        tf=total_tokens / total_words,
        hist={k: (w, t) for k, (w, t) in hist.items()},
        unk_rate=unk / total_tokens if total_tokens else 0.0,
    )


def _nearest_rank(sorted_vals: Sequence[float], q: float) -> float:
    # nearest-rank percentile; q in (0, 1]; single sample gives that sample
    idx = max(0, math.ceil(q * len(sorted_vals)) - 1)
    return sorted_vals[idx]


def latency_benchmark(corpus: Iterable[str], tok: Tokenizer,
                      repetitions: int, warmup: int = 0) -> LatencyReport:
    """Time full-corpus encodes on the monotonic clock, discarding warmup."""
    if repetitions < 1:
        raise ValidationError("repetitions must be at least 1")
    if warmup < 0:
        raise ValidationError("warmup must be non-negative")
    lines = list(corpus)
    total_chars = sum(len(line) for line in lines)
    total_tokens = 0
    run_ns: list[int] = []
    for rep in range(warmup + repetitions):
        t0 = time.perf_counter_ns()
        n_tokens = 0
        for line in lines:
            n_tokens += len(tok.encode(line).ids)
        dt = time.perf_counter_ns() - t0
        total_tokens = n_tokens
        if rep >= warmup:
            run_ns.append(dt)
    if total_chars == 0:
        raise ValidationError("corpus has no characters; latency is undefined")
    per_1k = sorted(ns / total_chars * 1000.0 for ns in run_ns)
    return LatencyReport(
        repetitions=repetitions,
        warmup_runs=warmup,
        total_chars=total_chars,
        total_tokens=total_tokens,
        run_ns=tuple(run_ns),
        mean_ns_per_1k_chars=sum(per_1k) / len(per_1k),
        p50_ns_per_1k_chars=_nearest_rank(per_1k, 0.50),
        p95_ns_per_1k_chars=_nearest_rank(per_1k, 0.95),
    )


def compare(corpus: Iterable[str], toks: Sequence[Tokenizer],
            repetitions: int = 0, warmup: int = 0) -> ComparisonReport:
    """Side-by-side fertility (and optional latency) for >= 2 tokenizers.

    repetitions=0 skips timing so the report is fully deterministic.
    """
    if len(toks) < 2:
        raise ValidationError("compare needs at least two tokenizers")
    lines = list(corpus)
    rows = []
    for tok in toks:
        fert = token_fertility(lines, tok)
        n_lines = sum(1 for line in lines if pretokenize(line))
        latency = latency_benchmark(lines, tok, repetitions, warmup) if repetitions else None
        rows.append(ComparisonRow(
            name=tok.name,
            tf=fert.tf,
            mean_seq_len=fert.total_tokens / n_lines if n_lines else 0.0,
            unk_rate=fert.unk_rate,
            total_tokens=fert.total_tokens,
            latency=latency,
        ))
    return ComparisonReport(rows=tuple(rows))
