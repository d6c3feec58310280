"""Regenerates the golden parity fixtures under test/golden/.

Every golden file is literal core CLI output captured over a small
deterministic corpus, so the binding tests compare against the exact
bytes the core produces. Run from anywhere:

    python3 scripts/gen_goldens.py
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np

GOLDEN = Path(__file__).resolve().parent.parent / "test" / "golden"

LETTERS = "abcdefghijklmnop"
ACCENTED = ["él", "ño"]
SEED = 20250816
DIM = 6


def cli(*args, stdin=None):
    proc = subprocess.run(
        [sys.executable, "-m", "lgse", *args],
        input=stdin, capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"lgse {' '.join(args)} failed:\n{proc.stderr}")
    return proc.stdout


def make_morphemes(rng):
    seen = set(ACCENTED)
    for length in (2, 3, 3, 4, 4, 5):
        for _ in range(13):
            m = "".join(LETTERS[i] for i in rng.integers(0, len(LETTERS), length))
            seen.add(m)
    return sorted(seen)


def make_entries(rng, morphemes):
    entries = {}
    for i, m in enumerate(morphemes):
        j = int(rng.integers(0, len(morphemes)))
        entries.setdefault(m + morphemes[j], (m, morphemes[j]))
    while len(entries) < 250:
        i, j = rng.integers(0, len(morphemes), 2)
        a, b = morphemes[int(i)], morphemes[int(j)]
        entries.setdefault(a + b, (a, b))
    for i in rng.permutation(len(morphemes))[:60]:
        m = morphemes[int(i)]
        entries.setdefault(m, (m,))
    return entries


def make_corpus(rng, words, n_lines=1000):
    # every word type twice keeps all morpheme counts at 2+, the rest is
    # sampled with a mild frequency skew; a few words carry punctuation
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    p = ranks ** -1.1
    p /= p.sum()
    pool = list(words) * 2
    lengths = rng.integers(6, 11, size=n_lines)
    need = int(lengths.sum()) - len(pool)
    pool.extend(words[int(i)] for i in rng.choice(len(words), size=max(need, 0), p=p))
    pool = [pool[i] for i in rng.permutation(len(pool))]
    lines, at = [], 0
    for n in lengths:
        row = pool[at : at + int(n)]
        at += int(n)
        row = [w + ("," if rng.random() < 0.03 else "." if rng.random() < 0.02 else "")
               for w in row]
        lines.append(" ".join(row))
    return lines


def make_vector_table(rng, morphemes, chars):
    from lgse.embeddings import extract_ngrams

    keys = sorted(chars)
    for m in morphemes[: len(morphemes) // 2]:
        keys.append(m)  # whole-key entries
        keys.extend(extract_ngrams(m)[:3])
    uniq = sorted(set(keys))
    lines = [f"{len(uniq)} {DIM}"]
    for key in uniq:
        vec = rng.standard_normal(DIM)
        lines.append(key + " " + " ".join(f"{v:.6f}" for v in vec))
    return "\n".join(lines) + "\n"


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    morphemes = make_morphemes(rng)
    entries = make_entries(rng, morphemes)
    words = sorted(entries)

    lexicon = GOLDEN / "lexicon.tsv"
    with open(lexicon, "w", encoding="utf-8") as fh:
        for word, morphs in entries.items():
            fh.write(f"{word}\t{' '.join(morphs)}\n")

    corpus_lines = make_corpus(rng, words)
    corpus = GOLDEN / "corpus.txt"
    corpus.write_text("\n".join(corpus_lines) + "\n", encoding="utf-8")

    # encode input: the training corpus plus lines the vocabulary has
    # never seen (unknown codepoints, extra punctuation, blank-ish line)
    extra = [
        "qux zebra! wyvern?",
        "ßß çç",
        "   ",
        ",,..",
        corpus_lines[0] + " qq",
    ]
    encode_input = GOLDEN / "encode_input.txt"
    encode_input.write_text("\n".join(corpus_lines + extra) + "\n", encoding="utf-8")

    vocab = GOLDEN / "vocab.json"
    cli("vocab", "train", "--corpus", str(corpus), "--lexicon", str(lexicon),
        "--size", "160", "--out", str(vocab), "--quiet")

    chars = sorted({c for line in corpus_lines for c in line if not c.isspace()})
    (GOLDEN / "grams.vec").write_text(
        make_vector_table(rng, morphemes, chars), encoding="utf-8")

    from lgse.embeddings import save_matrix_binary
    n_orig = 5 + len(chars)
    save_matrix_binary(str(GOLDEN / "pretrained.bin"),
                       rng.standard_normal((n_orig, DIM)))

    cli("tokenize", "--vocab", str(vocab), "--lexicon", str(lexicon),
        "--input", str(encode_input), "--format", "json",
        "--output", str(GOLDEN / "encoded.jsonl"))
    cli("tokenize", "--vocab", str(vocab), "--decode",
        "--input", str(GOLDEN / "encoded.jsonl"),
        "--output", str(GOLDEN / "decoded.txt"))

    # 50 init queries spanning all three tiers: known words, novel
    # morpheme compounds, ngram-only strings, table misses
    novel = ["".join(pair) for pair in zip(morphemes[3:23], morphemes[30:50])]
    queries = (words[10:25] + novel[:15]
               + [m + "x" for m in morphemes[:10]]
               + ["q" * (i + 2) for i in range(10)])[:50]
    tokens = GOLDEN / "tokens.txt"
    tokens.write_text("\n".join(queries) + "\n", encoding="utf-8")
    inits = cli("init", "--vocab", str(vocab), "--lexicon", str(lexicon),
                "--vectors", str(GOLDEN / "grams.vec"),
                "--pretrained", str(GOLDEN / "pretrained.bin"),
                "--tokens-file", str(tokens), "--seed", "7", "--quiet")
    (GOLDEN / "inits.jsonl").write_text(inits, encoding="utf-8")

    cli("stats", "fertility", "--vocab", str(vocab), "--lexicon", str(lexicon),
        "--corpus", str(corpus), "--quiet", "--json", str(GOLDEN / "fertility.json"))

    # whitespace only: zero words, so fertility must refuse it
    (GOLDEN / "empty.txt").write_text("   \n\n", encoding="utf-8")

    # single-character words always encode to one token each
    wordlevel = GOLDEN / "wordlevel.txt"
    picks = [chars[int(i)] for i in rng.integers(0, len(chars), 120)]
    wordlevel.write_text(
        "\n".join(" ".join(picks[i : i + 8]) for i in range(0, len(picks), 8)) + "\n",
        encoding="utf-8")

    methods = {json.loads(row)["method"] for row in inits.splitlines()}
    if methods != {"morph_average", "char_ngram", "gaussian"}:
        raise SystemExit(f"init queries only exercised {sorted(methods)}")
    n_seqs = len((GOLDEN / "encoded.jsonl").read_text().splitlines())
    if n_seqs != len(corpus_lines) + len(extra):
        raise SystemExit(f"expected {len(corpus_lines) + len(extra)} sequences, got {n_seqs}")
    print(f"goldens written to {GOLDEN}: {n_seqs} sequences, "
          f"{len(queries)} init queries, methods {sorted(methods)}")


if __name__ == "__main__":
    main()
