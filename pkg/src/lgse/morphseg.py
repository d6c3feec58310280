"""Morpheme lexicon loading and deterministic word segmentation.

A lexicon maps surface words to morpheme sequences whose concatenation
reproduces the word exactly (no elision or normalization is modeled).
Words missing from the lexicon are segmented by greedy longest-prefix
match over the morpheme inventory, with no backtracking: if the greedy
walk dead-ends, the word is unsegmentable and is carried whole. All
operations work on codepoints, never bytes, so combining marks and
non-Latin scripts are handled uniformly.

Lexicon file format: UTF-8 text, one entry per line as
``word<TAB>morph1 morph2 ...``; blank lines and lines starting with ``#``
are skipped. An optional companion frequency file holds
``morpheme<TAB>count`` lines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentedWord:
    word: str
    morphemes: tuple[str, ...]
    segmentable: bool


@dataclass
class MorphemeLexicon:
    """Word entries plus the morpheme inventory they induce.

    ``morph_freq`` carries externally supplied morpheme counts when a
    frequency file was given, otherwise occurrence counts across entries.
    """

    entries: dict[str, tuple[str, ...]]
    morph_freq: dict[str, int]
    morph_set: frozenset[str]
    duplicates_skipped: int = 0
    max_morph_len: int = field(default=0)

    @classmethod
    def from_entries(
        cls,
        entries: dict[str, tuple[str, ...]],
        morph_freq: dict[str, int] | None = None,
        duplicates_skipped: int = 0,
    ) -> "MorphemeLexicon":
        for word, morphs in entries.items():
            if not word:
                raise ValidationError("lexicon contains an empty word")
            if not morphs or any(not m for m in morphs):
                raise ValidationError(f"entry for {word!r} has an empty morpheme")
            if "".join(morphs) != word:
                raise ValidationError(
                    f"segmentation of {word!r} does not concatenate to the word: {morphs!r}"
                )
        inventory: frozenset[str] = frozenset(m for ms in entries.values() for m in ms)
        if morph_freq is None:
            freq: dict[str, int] = {}
            for morphs in entries.values():
                for m in morphs:
                    freq[m] = freq.get(m, 0) + 1
            morph_freq = freq
        max_len = max((len(m) for m in inventory), default=0)
        return cls(
            entries=dict(entries),
            morph_freq=morph_freq,
            morph_set=inventory,
            duplicates_skipped=duplicates_skipped,
            max_morph_len=max_len,
        )

    @classmethod
    def empty(cls) -> "MorphemeLexicon":
        """Lexicon with no entries; every word is unsegmentable (whole-word spans)."""
        return cls(entries={}, morph_freq={}, morph_set=frozenset(), max_morph_len=0)


def load_lexicon(path: str, freq_path: str | None = None) -> MorphemeLexicon:
    """Parse a lexicon file, first entry winning on duplicate words.

    Raises ParseError on malformed lines and ValidationError when an
    entry's morphemes do not concatenate back to the word.
    """
    entries: dict[str, tuple[str, ...]] = {}
    dupes = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(
                    f"{path}:{lineno}: expected word<TAB>morphemes, got {len(fields)} field(s)"
                )
            word, morph_field = fields
            morphs = tuple(morph_field.split())
            if not word:
                raise ParseError(f"{path}:{lineno}: empty word")
            if not morphs:
                raise ParseError(f"{path}:{lineno}: entry for {word!r} has no morphemes")
            if "".join(morphs) != word:
                raise ValidationError(
                    f"{path}:{lineno}: morphemes {morphs!r} do not concatenate to {word!r}"
                )
            if word in entries:
                dupes += 1
                continue
            entries[word] = morphs
    if dupes:
        log.warning("lexicon %s: skipped %d duplicate entr%s (first kept)",
                    path, dupes, "y" if dupes == 1 else "ies")
    freq = _load_freq(freq_path) if freq_path is not None else None
    lex = MorphemeLexicon.from_entries(entries, morph_freq=freq, duplicates_skipped=dupes)
    return lex


def _load_freq(path: str) -> dict[str, int]:
    freq: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected morpheme<TAB>count")
            morph, count_text = fields
            try:
                count = int(count_text)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: count {count_text!r} is not an integer") from None
            if count < 0:
                raise ParseError(f"{path}:{lineno}: negative count for {morph!r}")
            freq[morph] = count
    return freq


def segment(word: str, lex: MorphemeLexicon) -> SegmentedWord:
    """Segment one word. Lexicon lookup wins; otherwise greedy longest match.

    Unsegmentable words come back whole as a single pseudo-morpheme with
    segmentable=False. The greedy walk never backtracks, so a word can be
    unsegmentable even when some non-greedy cover exists.
    """
    if not word:
        raise ValidationError("word must be non-empty")
    entry = lex.entries.get(word)
    if entry is not None:
        return SegmentedWord(word, entry, True)
    cover = _greedy_cover(word, lex.morph_set, lex.max_morph_len)
    if cover is None:
        return SegmentedWord(word, (word,), False)
    return SegmentedWord(word, cover, True)


def is_segmentable(word: str, lex: MorphemeLexicon) -> bool:
    return segment(word, lex).segmentable


def _greedy_cover(word: str, morph_set: frozenset[str], max_len: int) -> tuple[str, ...] | None:
    if not morph_set:
        return None
    out: list[str] = []
    i = 0
    n = len(word)
    while i < n:
        picked = None
        for length in range(min(max_len, n - i), 0, -1):
            cand = word[i : i + length]
            if cand in morph_set:
                picked = cand
                break
        if picked is None:
            return None
        out.append(picked)
        i += len(picked)
    return tuple(out)
