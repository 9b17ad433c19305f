"""Rank regulatory device categories against free-text device descriptions."""

from .corpus import (
    LabelEntry,
    TargetRecord,
    TokenizedDoc,
    parse_label_corpus,
    parse_target_set,
    strip_regulation_refs,
    tokenize,
)
from .embed import (
    SentenceEmbedding,
    WordVectorTable,
    embed_bag,
    load_precomputed,
    load_word_vectors,
    ngram_hash,
    subword_ngrams,
)
from .estimators import CosineLabelRanker, TfidfBagEmbedder
from .exceptions import (
    ContractError,
    DataError,
    DeviceRankError,
    MissingIdError,
    TransportError,
    UnembeddableError,
)
from .lexicon import Lexicon, build_lexicon, idf, stopword_curve, tfidf_weights
from .metrics import EvalReport, MislabelVerdict, detect_mislabels, evaluate, hit_at_k, random_baseline
from .rank import RankResult, SimilarityIndex, build_index, cosine, gold_rank, rank_labels
from .stats import pearson_r, t_test_two_sided

__version__ = "0.1.0"
