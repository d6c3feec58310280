"""Shared pre-tokenization: whitespace words, punctuation-isolated spans.

Every consumer (vocabulary building, encoding, fertility accounting) must
see the same word boundaries, so this is the single place they are
defined. A "word" is a maximal run of non-whitespace codepoints. Within a
word, punctuation codepoints (Unicode category P*) are split off as their
own single-character spans so no BPE merge can cross them; the word as a
whole still counts as one word for fertility.
"""

from __future__ import annotations

import unicodedata

from .morphseg import MorphemeLexicon, segment


def is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def pretokenize(text: str) -> list[str]:
    """Split on Unicode whitespace. Empty input gives an empty list."""
    return text.split()


def word_pieces(word: str) -> list[tuple[str, bool]]:
    """Split a word into (piece, is_punct) runs, punctuation one char each."""
    pieces: list[tuple[str, bool]] = []
    buf: list[str] = []
    for ch in word:
        if is_punct(ch):
            if buf:
                pieces.append(("".join(buf), False))
                buf = []
            pieces.append((ch, True))
        else:
            buf.append(ch)
    if buf:
        pieces.append(("".join(buf), False))
    return pieces


def word_spans(word: str, lex: MorphemeLexicon) -> tuple[list[str], list[str]]:
    """Return (spans, morphemes) for one word.

    spans are the BPE working units covering the word in order; morphemes
    are the occurrences to credit for frequency counting (only segmentable
    text runs contribute; punctuation and unsegmentable runs credit none).
    A whole-word lexicon entry short-circuits punctuation splitting so
    entries like "can't" keep their stored segmentation.
    """
    entry = lex.entries.get(word)
    if entry is not None:
        return list(entry), list(entry)
    spans: list[str] = []
    morphs: list[str] = []
    for piece, punct in word_pieces(word):
        if punct:
            spans.append(piece)
            continue
        seg = segment(piece, lex)
        spans.extend(seg.morphemes)
        if seg.segmentable:
            morphs.extend(seg.morphemes)
    return spans, morphs
