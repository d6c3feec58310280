"""Embedding initialization for new vocabulary entries.

New tokens are initialized from a character n-gram vector table in three
tiers: (1) segmentable tokens average their morphemes' vectors, each
morpheme being the mean of its table-present n-grams (plus its whole-word
vector when the table has one); (2) tokens whose morphemes are all absent
fall back to n-grams of the whole token string; (3) tokens with no table
support draw from a Gaussian fitted to the original embedding rows. Tiers
1 and 2 produce vectors in the table's space and are mapped into the
embedding space by a ridge-regression projection fitted on anchor tokens
present in both.

File formats owned here: the text vector table ("count dim" header, then
"key v1 .. v_dim" per line) and the embedding matrix, either binary
(magic "LGSE", u32 version 1, u32 rows, u32 dim, row-major little-endian
float32) or the same text layout keyed by token string.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .morphseg import MorphemeLexicon, segment

NGRAM_MIN_DEFAULT = 3
NGRAM_MAX_DEFAULT = 6
RIDGE_ALPHA_DEFAULT = 1e-3
SHRINKAGE_GAMMA_DEFAULT = 0.1

MATRIX_MAGIC = b"LGSE"
MATRIX_FORMAT_VERSION = 1

METHOD_MORPH = "morph_average"
METHOD_CHAR = "char_ngram"
METHOD_GAUSSIAN = "gaussian"

InitMethod = Literal["morph_average", "char_ngram", "gaussian"]


# ---------------------------------------------------------------------------
# n-gram extraction and table lookup


def extract_ngrams(s: str, nmin: int = NGRAM_MIN_DEFAULT,
                   nmax: int = NGRAM_MAX_DEFAULT) -> list[str]:
    """Boundary-wrapped codepoint n-grams of <s>, ordered by (n, position).

    Duplicates keep their first occurrence only. nmin..nmax measure the
    wrapped string, so a single-char morpheme still yields "<x>" at n=3.
    """
    if not s:
        raise ValidationError("cannot extract n-grams of an empty string")
    if nmin < 1 or nmax < nmin:
        raise ValidationError(f"bad n-gram range [{nmin}, {nmax}]")
    wrapped = "<" + s + ">"
    seen: set[str] = set()
    out: list[str] = []
    for n in range(nmin, nmax + 1):
        for i in range(len(wrapped) - n + 1):
            g = wrapped[i : i + n]
            if g not in seen:
                seen.add(g)
                out.append(g)
    return out


@dataclass
class NgramVectorTable:
    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def get(self, key: str) -> np.ndarray | None:
        return self.vectors.get(key)


def load_vector_table(path: str) -> NgramVectorTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError(f"{path}:1: expected 'count dim' header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError(f"{path}:1: non-integer header fields") from None
        if dim < 1:
            raise ValidationError(f"{path}: dimension must be positive")
        vectors: dict[str, np.ndarray] = {}
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) != dim + 1:
                raise ParseError(
                    f"{path}:{lineno}: expected key plus {dim} floats, got {len(fields) - 1}"
                )
            key = fields[0]
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed float") from None
            if key not in vectors:  # first occurrence wins, as for lexicon entries
                vectors[key] = vec
    if len(vectors) != count:
        raise ParseError(f"{path}: header claims {count} rows, found {len(vectors)}")
    return NgramVectorTable(dim=dim, vectors=vectors)


def save_vector_table(path: str, table: NgramVectorTable) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.vectors)} {table.dim}\n")
        for key, vec in table.vectors.items():
            fh.write(key + " " + " ".join(repr(float(v)) for v in vec) + "\n")
    os.replace(tmp, path)


def _mean_with_counts(m: str, table: NgramVectorTable, nmin: int,
                      nmax: int) -> tuple[np.ndarray | None, int, int]:
    grams = extract_ngrams(m, nmin, nmax)
    hits: list[np.ndarray] = []
    missed = 0
    for g in grams:
        v = table.get(g)
        if v is None:
            missed += 1
        else:
            hits.append(v)
    whole = table.get(m)
    if whole is not None:
        hits.append(whole)
    if not hits:
        return None, 0, missed
    return np.mean(np.stack(hits), axis=0), len(hits), missed


def morpheme_embedding(m: str, table: NgramVectorTable,
                       nmin: int = NGRAM_MIN_DEFAULT,
                       nmax: int = NGRAM_MAX_DEFAULT) -> np.ndarray | None:
    """Mean of the morpheme's table-present n-gram vectors, including the
    whole-morpheme vector when present; None when nothing is in the table."""
    vec, _, _ = _mean_with_counts(m, table, nmin, nmax)
    return vec


@dataclass(frozen=True)
class TokenSource:
    vector: np.ndarray | None
    method: InitMethod | None
    morphemes_used: tuple[str, ...]
    ngrams_hit: int
    ngrams_missed: int


def token_embedding_source(t: str, lex: MorphemeLexicon, table: NgramVectorTable,
                           nmin: int = NGRAM_MIN_DEFAULT,
                           nmax: int = NGRAM_MAX_DEFAULT) -> TokenSource:
    """Best table-backed vector for a token, or an absent source.

    Segmentable tokens average the embeddings of their table-present
    morphemes; if none are present (or the token is unsegmentable) the
    whole token string is treated as one morpheme. Hit/miss counts belong
    to the tier that produced the result.
    """
    seg = segment(t, lex)
    if seg.segmentable:
        vecs: list[np.ndarray] = []
        used: list[str] = []
        hit = 0
        missed = 0
        for m in seg.morphemes:
            v, h, ms = _mean_with_counts(m, table, nmin, nmax)
            hit += h
            missed += ms
            if v is not None:
                vecs.append(v)
                used.append(m)
        if vecs:
            return TokenSource(np.mean(np.stack(vecs), axis=0), METHOD_MORPH,
                               tuple(used), hit, missed)
    vec, hit, missed = _mean_with_counts(t, table, nmin, nmax)
    if vec is not None:
        return TokenSource(vec, METHOD_CHAR, (), hit, missed)
    return TokenSource(None, None, (), 0, missed)


# ---------------------------------------------------------------------------
# projection from table space into embedding space


@dataclass(frozen=True)
class ProjectionMap:
    matrix: np.ndarray  # (d_m, d_f)
    ridge_alpha: float
    anchor_count: int
    residual: float
    mode: str = "ridge"


def fit_projection(anchors: Sequence[tuple[np.ndarray, np.ndarray]],
                   alpha: float = RIDGE_ALPHA_DEFAULT,
                   mode: str = "ridge") -> ProjectionMap:
    """Least-squares map W from table space to embedding space.

    anchors are (feature_vec, embedding_vec) pairs. Ridge solves
    W^T = (F^T F + alpha I)^{-1} F^T E; mode="orthogonal" instead takes
    the SVD-based orthogonal map (alpha is ignored there). The recorded
    residual is the RMS of F W^T - E over the anchors.
    """
    if not len(anchors):
        raise ValidationError("at least one anchor pair is required")
    if alpha < 0:
        raise ValidationError("ridge alpha must be non-negative")
    F = np.stack([np.asarray(f, dtype=np.float64) for f, _ in anchors])
    E = np.stack([np.asarray(e, dtype=np.float64) for _, e in anchors])
    if not (np.isfinite(F).all() and np.isfinite(E).all()):
        raise ValidationError("anchor vectors contain non-finite values")
    d_f = F.shape[1]
    if mode == "ridge":
        A = F.T @ F + alpha * np.eye(d_f)
        if alpha == 0.0 and (not np.isfinite(np.linalg.cond(A)) or np.linalg.cond(A) > 1e12):
            raise ValidationError("anchor features are rank-deficient; use alpha > 0")
        Wt = np.linalg.solve(A, F.T @ E)  # (d_f, d_m)
    elif mode == "orthogonal":
        U, _s, Vt = np.linalg.svd(F.T @ E, full_matrices=False)
        Wt = U @ Vt
    else:
        raise ValidationError(f"unknown projection mode {mode!r}")
    resid = float(np.sqrt(np.mean((F @ Wt - E) ** 2)))
    return ProjectionMap(matrix=Wt.T.copy(), ridge_alpha=alpha,
                         anchor_count=len(anchors), residual=resid, mode=mode)


def align(vec: np.ndarray, proj: ProjectionMap) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (proj.matrix.shape[1],):
        raise ValidationError(
            f"vector has dim {vec.shape}, projection expects {proj.matrix.shape[1]}"
        )
    return proj.matrix @ vec


# ---------------------------------------------------------------------------
# Gaussian fallback


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray  # lower triangular
    shrinkage_gamma: float


def fit_gaussian(rows: np.ndarray, gamma: float = SHRINKAGE_GAMMA_DEFAULT,
                 diag: bool = False) -> GaussianModel:
    """Moment-match a Gaussian to embedding rows with trace shrinkage.

    Sigma = (1 - gamma) * Sigma_emp + gamma * (trace(Sigma_emp)/d) * I,
    Sigma_emp unbiased (n - 1). diag=True keeps only the variances before
    shrinkage. Cholesky failure (e.g. identical rows give Sigma = 0) is a
    validation error.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValidationError("need at least two rows to fit the fallback Gaussian")
    if not np.isfinite(rows).all():
        raise ValidationError("embedding rows contain non-finite values")
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"shrinkage gamma must lie in [0, 1], got {gamma}")
    d = rows.shape[1]
    mean = rows.mean(axis=0)
    centered = rows - mean
    if diag:
        cov_emp = np.diag(centered.var(axis=0, ddof=1))
    else:
        cov_emp = centered.T @ centered / (rows.shape[0] - 1)
    cov = (1.0 - gamma) * cov_emp + gamma * (np.trace(cov_emp) / d) * np.eye(d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValidationError(
            "shrunken covariance is not positive definite; raise gamma or vary the rows"
        ) from None
    return GaussianModel(mean=mean, cov=cov, chol=chol, shrinkage_gamma=gamma)


def sample_fallback(g: GaussianModel, seed: int) -> np.ndarray:
    """One draw mean + chol @ z with a PCG64 generator seeded by `seed`."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(g.mean.shape[0])
    return g.mean + g.chol @ z


def sample_many(g: GaussianModel, seed: int, n: int) -> np.ndarray:
    """(n, d) draws from one generator; row i is not sample_fallback(seed+i)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, g.mean.shape[0]))
    return g.mean + z @ g.chol.T


def token_seed(global_seed: int, token: str) -> int:
    """Stable per-token 64-bit seed; independent of init order."""
    h = hashlib.blake2b(f"{global_seed}\x00{token}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# per-token dispatch and matrix expansion


@dataclass(frozen=True)
class InitRecord:
    token: str
    method: InitMethod
    vector: np.ndarray
    morphemes_used: tuple[str, ...]
    ngrams_hit: int
    ngrams_missed: int

    def audit_dict(self) -> dict:
        return {
            "token": self.token,
            "method": self.method,
            "ngrams_hit": self.ngrams_hit,
            "ngrams_missed": self.ngrams_missed,
        }


def init_new_token(t: str, lex: MorphemeLexicon, table: NgramVectorTable,
                   proj: ProjectionMap, gauss: GaussianModel, seed: int,
                   nmin: int = NGRAM_MIN_DEFAULT,
                   nmax: int = NGRAM_MAX_DEFAULT) -> InitRecord:
    """Initialize one token: table-backed tiers first, Gaussian last."""
    src = token_embedding_source(t, lex, table, nmin, nmax)
    if src.vector is not None:
        return InitRecord(token=t, method=src.method, vector=align(src.vector, proj),
                          morphemes_used=src.morphemes_used,
                          ngrams_hit=src.ngrams_hit, ngrams_missed=src.ngrams_missed)
    return InitRecord(token=t, method=METHOD_GAUSSIAN,
                      vector=sample_fallback(gauss, seed), morphemes_used=(),
                      ngrams_hit=0, ngrams_missed=src.ngrams_missed)


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray  # (|V|, d_m) float64 working copy
    new_token_ids: frozenset[int] = field(default_factory=frozenset)

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])


def expand_matrix(E: EmbeddingMatrix, records: Iterable[InitRecord],
                  vocab) -> EmbeddingMatrix:
    """Append init vectors for every vocab id beyond the current rows.

    records must cover ids len(E.rows)..vocab.size-1 exactly, keyed by
    token; gaps, repeats, and records for already-present ids are errors.
    Original rows are copied bit-identically.
    """
    n_orig = E.n_rows
    if vocab.size < n_orig:
        raise ValidationError(
            f"vocabulary ({vocab.size}) is smaller than the matrix ({n_orig} rows)"
        )
    expected = list(range(n_orig, vocab.size))
    by_id: dict[int, InitRecord] = {}
    overlaps: list[int] = []
    for rec in records:
        tid = vocab.token_to_id.get(rec.token)
        if tid is None:
            raise ValidationError(f"init record for {rec.token!r}, which is not in the vocabulary")
        if tid < n_orig or tid in by_id:
            overlaps.append(tid)
            continue
        if rec.vector.shape != (E.dim,):
            raise ValidationError(
                f"init vector for {rec.token!r} has dim {rec.vector.shape[0]}, matrix is {E.dim}"
            )
        by_id[tid] = rec
    gaps = [i for i in expected if i not in by_id]
    if overlaps or gaps:
        raise ValidationError(
            f"init records do not tile the new id range: overlap ids {sorted(overlaps)}, gap ids {gaps}"
        )
    if not expected:
        return EmbeddingMatrix(rows=E.rows.copy(), new_token_ids=E.new_token_ids)
    new_rows = np.stack([np.asarray(by_id[i].vector, dtype=np.float64) for i in expected])
    rows = np.vstack([E.rows.copy(), new_rows])
    return EmbeddingMatrix(rows=rows,
                           new_token_ids=E.new_token_ids | frozenset(expected))


# ---------------------------------------------------------------------------
# matrix I/O


def save_matrix_binary(path: str, rows: np.ndarray) -> None:
    rows32 = np.ascontiguousarray(np.asarray(rows), dtype="<f4")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<III", MATRIX_FORMAT_VERSION, rows32.shape[0], rows32.shape[1]))
        fh.write(rows32.tobytes())
    os.replace(tmp, path)


def load_matrix_binary(path: str) -> np.ndarray:
    """Rows as float64 (exact promotion of the stored float32)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MATRIX_MAGIC:
        raise ValidationError(f"{path}: bad magic, not an embedding matrix file")
    version, n, d = struct.unpack("<III", blob[4:16])
    if version != MATRIX_FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported matrix format version {version}")
    body = blob[16:]
    if len(body) != n * d * 4:
        raise ValidationError(f"{path}: payload is {len(body)} bytes, expected {n * d * 4}")
    return np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)


def save_matrix_text(path: str, rows: np.ndarray, keys: Sequence[str]) -> None:
    """Same values as the binary file: floats pass through float32 first."""
    rows32 = np.asarray(rows, dtype=np.float32)
    if rows32.shape[0] != len(keys):
        raise ValidationError(f"{len(keys)} keys for {rows32.shape[0]} rows")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(f"{rows32.shape[0]} {rows32.shape[1]}\n")
        for key, row in zip(keys, rows32):
            fh.write(key + " " + " ".join(repr(float(v)) for v in row) + "\n")
    os.replace(tmp, path)


def load_matrix_text(path: str) -> tuple[list[str], np.ndarray]:
    table = load_vector_table(path)
    keys = list(table.vectors.keys())
    rows = np.stack([table.vectors[k] for k in keys]) if keys else np.zeros((0, table.dim))
    return keys, rows


def is_binary_matrix(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MATRIX_MAGIC


def write_audit_jsonl(path: str, records: Iterable[InitRecord]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.audit_dict(), ensure_ascii=False,
                                separators=(",", ":")) + "\n")
    os.replace(tmp, path)
