"""Morphology-aware subword vocabularies with grounded embedding init.

The pipeline: build a hybrid vocabulary (top-frequency morphemes plus
BPE units learned strictly within morpheme boundaries), encode text with
the two-stage tokenizer, initialize embeddings for the new tokens from a
character n-gram vector table (projected into the model space, Gaussian
fallback), then adapt only those rows under a drift regularizer.
"""

__version__ = "0.1.0"

from .adapt import AdaptConfig, AdaptReport, adapt, mask_sequence, mlm_step, reg_grad, reg_loss
from .bench import compare, latency_benchmark, token_fertility
from .embeddings import (
    EmbeddingMatrix,
    GaussianModel,
    NgramVectorTable,
    ProjectionMap,
    align,
    expand_matrix,
    extract_ngrams,
    fit_gaussian,
    fit_projection,
    init_new_token,
    morpheme_embedding,
    sample_fallback,
    token_embedding_source,
)
from .errors import CapacityError, LgseError, ParseError, UsageError, ValidationError
from .morphseg import MorphemeLexicon, SegmentedWord, is_segmentable, load_lexicon, segment
from .tokenizer import TokenSequence, Tokenizer, decode, encode, normalize, tokenize_word
from .vocab import (
    DEFAULT_SPECIAL_TOKENS,
    HybridVocab,
    VocabConfig,
    build_hybrid_vocab,
    top_morphemes,
    train_bpe_within_morphemes,
)

__all__ = [name for name in dir() if not name.startswith("_")]
