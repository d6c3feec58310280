"""Command-line entry point.

One binary, subcommands per module: `vocab train`, `init`, `tokenize`,
`adapt`, `stats fertility`, `bench latency`, `compare`. Exit codes:
1 usage, 2 I/O, 3 validation, 4 capacity. All outputs are written via
temp-file rename, so a failed run never leaves a torn file behind.
`--json` streams the machine-readable report to stdout; `--json PATH`
writes it to a file instead. The default seed comes from LGSE_SEED when
set, overridden by `--seed`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import bench as bench_mod
from . import embeddings as emb
from .adapt import AdaptConfig, adapt as run_adapt, write_report_jsonl
from .errors import CapacityError, LgseError, UsageError, ValidationError
from .morphseg import MorphemeLexicon, load_lexicon
from .tokenizer import TokenSequence, Tokenizer, decode
from .vocab import DEFAULT_SPECIAL_TOKENS, HybridVocab, VocabConfig, build_hybrid_vocab

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_CAPACITY = 4

STDOUT_MARKER = "-"


class _Parser(argparse.ArgumentParser):
    # argparse defaults to exit code 2 on usage errors; the contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: $LGSE_SEED, else 0)")
    p.add_argument("--quiet", action="store_true", help="suppress the human-readable summary")
    p.add_argument("--json", nargs="?", const=STDOUT_MARKER, default=None, metavar="PATH",
                   help="emit the machine-readable report to stdout, or to PATH")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="lgse", description=__doc__.splitlines()[0])
    root.add_argument("--version", action="version", version=f"lgse {__version__}")
    sub = root.add_subparsers(dest="command", required=True, metavar="COMMAND")

    vocab_p = sub.add_parser("vocab", help="vocabulary operations")
    vocab_sub = vocab_p.add_subparsers(dest="vocab_command", required=True)
    train = vocab_sub.add_parser("train", help="build a hybrid vocabulary")
    _common_flags(train)
    train.add_argument("--corpus", required=True)
    train.add_argument("--lexicon", required=True)
    train.add_argument("--freq", default=None, help="optional morpheme frequency file")
    train.add_argument("--size", type=int, required=True, help="total vocabulary size s")
    train.add_argument("--morph-ratio", type=float, default=0.5,
                       help="fraction r of the learnable budget given to morphemes")
    train.add_argument("--special", nargs="+", default=list(DEFAULT_SPECIAL_TOKENS))
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_vocab_train)

    init = sub.add_parser("init", help="initialize embeddings for new vocabulary entries")
    _common_flags(init)
    init.add_argument("--vocab", required=True)
    init.add_argument("--lexicon", required=True)
    init.add_argument("--vectors", required=True, help="character n-gram vector table")
    init.add_argument("--pretrained", required=True, help="embedding matrix covering the first ids")
    init.add_argument("--out-prefix", default=None,
                      help="write PREFIX.bin, PREFIX.txt, PREFIX.audit.jsonl")
    init.add_argument("--token", action="append", default=None,
                      help="init just this token and print the record (repeatable)")
    init.add_argument("--tokens-file", default=None,
                      help="file with one token per line to init and print")
    init.add_argument("--nmin", type=int, default=emb.NGRAM_MIN_DEFAULT)
    init.add_argument("--nmax", type=int, default=emb.NGRAM_MAX_DEFAULT)
    init.add_argument("--alpha", type=float, default=emb.RIDGE_ALPHA_DEFAULT,
                      help="ridge strength for the projection fit")
    init.add_argument("--orthogonal", action="store_true",
                      help="use the orthogonal (SVD) projection instead of ridge")
    init.add_argument("--gamma", type=float, default=emb.SHRINKAGE_GAMMA_DEFAULT,
                      help="covariance shrinkage toward scaled identity")
    init.add_argument("--diag", action="store_true",
                      help="diagonal covariance for the Gaussian fallback")
    init.set_defaults(func=cmd_init)

    tok = sub.add_parser("tokenize", help="encode text lines to ids/tokens, or decode")
    _common_flags(tok)
    tok.add_argument("--vocab", required=True)
    tok.add_argument("--lexicon", default=None)
    tok.add_argument("--input", default=None, help="default: stdin")
    tok.add_argument("--output", default=None, help="default: stdout")
    tok.add_argument("--format", choices=("ids", "tokens", "json"), default="ids")
    tok.add_argument("--decode", action="store_true",
                     help="input is JSONL {ids, word_spans}; emit text lines")
    tok.set_defaults(func=cmd_tokenize)

    ad = sub.add_parser("adapt", help="drift-regularized embedding adaptation")
    _common_flags(ad)
    ad.add_argument("--vocab", required=True)
    ad.add_argument("--lexicon", default=None)
    ad.add_argument("--corpus", required=True)
    ad.add_argument("--matrix", required=True, help="expanded embedding matrix (binary)")
    ad.add_argument("--orig-rows", type=int, required=True,
                    help="rows belonging to the original model; ids past this are trainable")
    ad.add_argument("--lambda", dest="reg_lambda", type=float, required=True,
                    help="drift regularizer strength")
    ad.add_argument("--mask-prob", type=float, default=0.15)
    ad.add_argument("--max-len", type=int, default=256)
    ad.add_argument("--batch-size", type=int, default=32)
    ad.add_argument("--epochs", type=int, default=10)
    ad.add_argument("--lr", type=float, default=5e-5)
    ad.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    ad.add_argument("--weight-decay", type=float, default=0.01)
    ad.add_argument("--out", required=True, help="final matrix path (binary)")
    ad.add_argument("--report", required=True, help="per-epoch JSONL report path")
    ad.add_argument("--plot", default=None, help="optional PNG with loss/drift curves")
    ad.set_defaults(func=cmd_adapt)

    stats = sub.add_parser("stats", help="corpus statistics")
    stats_sub = stats.add_subparsers(dest="stats_command", required=True)
    fert = stats_sub.add_parser("fertility", help="token fertility report")
    _common_flags(fert)
    fert.add_argument("--vocab", required=True)
    fert.add_argument("--lexicon", default=None)
    fert.add_argument("--corpus", required=True)
    fert.add_argument("--plot", default=None, help="optional PNG histogram")
    fert.set_defaults(func=cmd_stats_fertility)

    bench = sub.add_parser("bench", help="performance measurement")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    lat = bench_sub.add_parser("latency", help="encode latency over the corpus")
    _common_flags(lat)
    lat.add_argument("--vocab", required=True)
    lat.add_argument("--lexicon", default=None)
    lat.add_argument("--corpus", required=True)
    lat.add_argument("--reps", type=int, required=True)
    lat.add_argument("--warmup", type=int, default=0)
    lat.set_defaults(func=cmd_bench_latency)

    comp = sub.add_parser("compare", help="side-by-side tokenizer comparison")
    _common_flags(comp)
    comp.add_argument("--corpus", required=True)
    comp.add_argument("--tokenizer", action="append", required=True, metavar="NAME=VOCAB[:LEXICON]",
                      help="repeatable; lexicon defaults to empty")
    comp.add_argument("--reps", type=int, default=0,
                      help="latency repetitions per tokenizer (0 = skip timing)")
    comp.add_argument("--warmup", type=int, default=0)
    comp.add_argument("--plot", default=None, help="optional PNG chart")
    comp.set_defaults(func=cmd_compare)

    return root


# ---------------------------------------------------------------------------
# helpers


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("LGSE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"LGSE_SEED={env!r} is not an integer") from None
    return 0


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit_json(args, payload: str) -> None:
    if args.json is None:
        return
    if args.json == STDOUT_MARKER:
        sys.stdout.write(payload if payload.endswith("\n") else payload + "\n")
    else:
        _atomic_write_text(args.json, payload if payload.endswith("\n") else payload + "\n")


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _load_lexicon_arg(path: str | None) -> MorphemeLexicon:
    return load_lexicon(path) if path else MorphemeLexicon.empty()


def _load_matrix_any(path: str) -> tuple[list[str] | None, np.ndarray]:
    if emb.is_binary_matrix(path):
        return None, emb.load_matrix_binary(path)
    keys, rows = emb.load_matrix_text(path)
    return keys, rows


# ---------------------------------------------------------------------------
# subcommands


def cmd_vocab_train(args) -> int:
    lex = load_lexicon(args.lexicon, args.freq)
    corpus = _read_lines(args.corpus)
    cfg = VocabConfig(s=args.size, r=args.morph_ratio, special_tokens=tuple(args.special))
    vocab = build_hybrid_vocab(corpus, lex, cfg)
    vocab.save_json(args.out)
    counts = vocab.kind_counts()
    _say(args, f"wrote {args.out}: size {vocab.size} "
               f"(special {counts.get('special', 0)}, char {counts.get('char', 0)}, "
               f"morph {counts.get('morph', 0)}, bpe {counts.get('bpe', 0)}), "
               f"{len(vocab.merges)} merges")
    _emit_json(args, json.dumps(vocab.to_json_dict(), ensure_ascii=False, separators=(",", ":")))
    return EXIT_OK


def _f32_list(vec: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(vec, dtype=np.float32)]


def cmd_init(args) -> int:
    vocab = HybridVocab.load_json(args.vocab)
    lex = load_lexicon(args.lexicon)
    table = emb.load_vector_table(args.vectors)
    _keys, rows = _load_matrix_any(args.pretrained)
    n_orig = rows.shape[0]
    if n_orig > vocab.size:
        raise ValidationError(
            f"pretrained matrix has {n_orig} rows but the vocabulary only {vocab.size}")
    seed = _resolve_seed(args)

    anchors = []
    for i in range(n_orig):
        t = vocab.id_to_token[i]
        vec = table.get(t)
        if vec is not None:
            anchors.append((vec, rows[i]))
    mode = "orthogonal" if args.orthogonal else "ridge"
    proj = emb.fit_projection(anchors, alpha=args.alpha, mode=mode)
    gauss = emb.fit_gaussian(rows, gamma=args.gamma, diag=args.diag)

    def one(token: str) -> emb.InitRecord:
        return emb.init_new_token(token, lex, table, proj, gauss,
                                  emb.token_seed(seed, token),
                                  nmin=args.nmin, nmax=args.nmax)

    query_tokens: list[str] = list(args.token or [])
    if args.tokens_file:
        query_tokens.extend(t for t in _read_lines(args.tokens_file) if t)
    if query_tokens:
        out_lines = []
        for t in query_tokens:
            rec = one(t)
            payload = rec.audit_dict()
            payload["vector"] = _f32_list(rec.vector)
            out_lines.append(json.dumps(payload, ensure_ascii=False, separators=(",", ":")))
        sys.stdout.write("\n".join(out_lines) + "\n")
        return EXIT_OK

    if not args.out_prefix:
        raise UsageError("init needs --out-prefix (or --token/--tokens-file)")
    records = [one(vocab.id_to_token[i]) for i in range(n_orig, vocab.size)]
    E = emb.EmbeddingMatrix(rows=rows, new_token_ids=frozenset())
    expanded = emb.expand_matrix(E, records, vocab)
    emb.save_matrix_binary(args.out_prefix + ".bin", expanded.rows)
    emb.save_matrix_text(args.out_prefix + ".txt", expanded.rows, vocab.id_to_token)
    emb.write_audit_jsonl(args.out_prefix + ".audit.jsonl", records)
    by_method = {m: 0 for m in (emb.METHOD_MORPH, emb.METHOD_CHAR, emb.METHOD_GAUSSIAN)}
    for rec in records:
        by_method[rec.method] += 1
    _say(args, f"initialized {len(records)} new tokens "
               f"(morph_average {by_method[emb.METHOD_MORPH]}, "
               f"char_ngram {by_method[emb.METHOD_CHAR]}, "
               f"gaussian {by_method[emb.METHOD_GAUSSIAN]}); "
               f"{proj.anchor_count} anchors, projection residual {proj.residual:.6g}")
    _emit_json(args, json.dumps({
        "new_tokens": len(records),
        "methods": by_method,
        "anchors": proj.anchor_count,
        "projection_residual": proj.residual,
        "projection_mode": proj.mode,
    }, separators=(",", ":")))
    return EXIT_OK


def cmd_tokenize(args) -> int:
    vocab = HybridVocab.load_json(args.vocab)
    lex = _load_lexicon_arg(args.lexicon)
    tok = Tokenizer(vocab, lex)
    lines = _read_lines(args.input) if args.input else sys.stdin.read().splitlines()
    out: list[str] = []
    if args.decode:
        for n, line in enumerate(lines, start=1):
            try:
                obj = json.loads(line)
                seq = TokenSequence(ids=tuple(obj["ids"]),
                                    word_spans=tuple(tuple(sp) for sp in obj["word_spans"]))
            except (ValueError, KeyError, TypeError):
                raise ValidationError(f"decode input line {n}: expected "
                                      '{"ids": [...], "word_spans": [[a,b], ...]}') from None
            out.append(decode(seq, vocab))
    else:
        for line in lines:
            seq = tok.encode(line)
            if args.format == "ids":
                out.append(" ".join(str(i) for i in seq.ids))
            elif args.format == "tokens":
                out.append(" ".join(vocab.id_to_token[i] for i in seq.ids))
            else:
                out.append(json.dumps(
                    {"ids": list(seq.ids), "word_spans": [list(sp) for sp in seq.word_spans]},
                    ensure_ascii=False, separators=(",", ":")))
    payload = "\n".join(out) + ("\n" if out else "")
    if args.output:
        _atomic_write_text(args.output, payload)
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_adapt(args) -> int:
    vocab = HybridVocab.load_json(args.vocab)
    lex = _load_lexicon_arg(args.lexicon)
    rows = emb.load_matrix_binary(args.matrix)
    if rows.shape[0] != vocab.size:
        raise ValidationError(
            f"matrix has {rows.shape[0]} rows for a vocabulary of {vocab.size}")
    if not 0 <= args.orig_rows <= rows.shape[0]:
        raise ValidationError(f"--orig-rows {args.orig_rows} outside 0..{rows.shape[0]}")
    new_ids = frozenset(range(args.orig_rows, rows.shape[0]))
    E = emb.EmbeddingMatrix(rows=rows, new_token_ids=new_ids)
    anchors = {i: rows[i].copy() for i in new_ids}
    cfg = AdaptConfig(
        reg_lambda=args.reg_lambda, mask_prob=args.mask_prob, max_len=args.max_len,
        batch_size=args.batch_size, epochs=args.epochs, lr=args.lr,
        optimizer=args.optimizer, weight_decay=args.weight_decay,
        seed=_resolve_seed(args))
    corpus = _read_lines(args.corpus)
    report = run_adapt(corpus, Tokenizer(vocab, lex), E, anchors, cfg)
    write_report_jsonl(args.report, report.epochs)
    emb.save_matrix_binary(args.out, report.final.rows)
    if args.plot:
        if report.epochs:
            from . import plots
            plots.save_adapt_curves(report.epochs, args.plot)
        else:
            _say(args, "no epochs ran; skipping plot")
    if report.epochs:
        last = report.epochs[-1]
        _say(args, f"epoch {last.epoch}: task_loss {last.task_loss:.6f}, "
                   f"reg_loss {last.reg_loss:.6f}, mean_drift {last.mean_drift:.6f}")
    else:
        _say(args, "epochs=0: matrix passed through unchanged")
    _emit_json(args, "\n".join(json.dumps(s.json_dict(), separators=(",", ":"))
                               for s in report.epochs))
    return EXIT_OK


def cmd_stats_fertility(args) -> int:
    vocab = HybridVocab.load_json(args.vocab)
    lex = _load_lexicon_arg(args.lexicon)
    corpus = _read_lines(args.corpus)
    report = bench_mod.token_fertility(corpus, Tokenizer(vocab, lex))
    _say(args, f"words {report.total_words}, tokens {report.total_tokens}, "
               f"tf {report.tf:.4f}, unk_rate {report.unk_rate:.4f}")
    _emit_json(args, json.dumps(report.json_dict(), separators=(",", ":")))
    if args.plot:
        from . import plots
        plots.save_fertility_hist(report, args.plot)
    return EXIT_OK


def cmd_bench_latency(args) -> int:
    vocab = HybridVocab.load_json(args.vocab)
    lex = _load_lexicon_arg(args.lexicon)
    corpus = _read_lines(args.corpus)
    report = bench_mod.latency_benchmark(corpus, Tokenizer(vocab, lex),
                                         repetitions=args.reps, warmup=args.warmup)
    _say(args, f"{report.repetitions} reps over {report.total_chars} chars "
               f"({report.total_tokens} tokens): mean {report.mean_ns_per_1k_chars:.0f} "
               f"p50 {report.p50_ns_per_1k_chars:.0f} p95 {report.p95_ns_per_1k_chars:.0f} ns/1k chars")
    _emit_json(args, json.dumps(report.json_dict(), separators=(",", ":")))
    return EXIT_OK


def cmd_compare(args) -> int:
    corpus = _read_lines(args.corpus)
    toks: list[Tokenizer] = []
    for spec_text in args.tokenizer:
        name, _, paths = spec_text.partition("=")
        if not name or not paths:
            raise UsageError(f"--tokenizer wants NAME=VOCAB[:LEXICON], got {spec_text!r}")
        vocab_path, _, lex_path = paths.partition(":")
        vocab = HybridVocab.load_json(vocab_path)
        lex = _load_lexicon_arg(lex_path or None)
        toks.append(Tokenizer(vocab, lex, name=name))
    report = bench_mod.compare(corpus, toks, repetitions=args.reps, warmup=args.warmup)
    _say(args, report.text_table())
    _emit_json(args, json.dumps(report.json_dict(), separators=(",", ":")))
    if args.plot:
        from . import plots
        plots.save_compare_chart(report, args.plot)
    return EXIT_OK


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse printed usage/help already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lgse: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"lgse: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValidationError, ValueError) as exc:
        print(f"lgse: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"lgse: {exc}", file=sys.stderr)
        return EXIT_IO
    except LgseError as exc:
        print(f"lgse: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
