"""scikit-learn compatible wrappers around the embedding and ranking functions.

``make_pipeline(TfidfBagEmbedder(table), CosineLabelRanker(k=15))`` fitted on
label descriptions and label ids predicts the best label for new text, and
its ``score`` is hit@k.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_fraction, check_positive_int, check_texts
from .corpus import strip_regulation_refs, tokenize
from .embed import SentenceEmbedding, WordVectorTable, embed_bag, load_word_vectors
from .lexicon import build_lexicon, tfidf_weights
from .metrics import hit_at_k
from .rank import build_index, gold_rank, rank_labels, score_all


class TfidfBagEmbedder(TransformerMixin, BaseEstimator):
    """TF-IDF weighted mean of word vectors.

    ``fit`` learns document frequencies and stop words from the reference
    texts; ``transform`` maps any texts to one row per text.

    Parameters
    ----------
    word_vectors : WordVectorTable or path
        Table of pre-trained vectors, or a text vector file to load on fit.
    stop_fraction : float, default 0.2
        Tokens found in more than this fraction of fitted documents are dropped.
    """

    def __init__(self, word_vectors=None, stop_fraction=0.2, backend_id="bag_of_vectors"):
        self.word_vectors = word_vectors
        self.stop_fraction = stop_fraction
        self.backend_id = backend_id

    def _docs(self, texts, ids=None):
        ids = ids if ids is not None else [str(i) for i in range(len(texts))]
        return [tokenize(strip_regulation_refs(t), i) for t, i in zip(texts, ids)]

    def fit(self, X, y=None):
        check_fraction(self.stop_fraction, "stop_fraction")
        texts = check_texts(X)
        if not texts:
            raise ValueError("cannot fit on zero documents")
        if isinstance(self.word_vectors, WordVectorTable):
            self.table_ = self.word_vectors
        elif isinstance(self.word_vectors, (str, Path)):
            self.table_ = load_word_vectors(self.word_vectors)
        else:
            raise ValueError("word_vectors must be a WordVectorTable or a path to a vector file")
        self.lexicon_ = build_lexicon(self._docs(texts), self.stop_fraction)
        self.dim_ = self.table_.dim
        return self

    def embed(self, X, ids=None):
        """Like ``transform`` but returns SentenceEmbedding objects and skipped tokens."""
        check_is_fitted(self, "lexicon_")
        texts = check_texts(X)
        out = []
        for doc in self._docs(texts, ids):
            out.append(embed_bag(doc, tfidf_weights(doc, self.lexicon_), self.table_, self.backend_id))
        return out

    def transform(self, X):
        embs = self.embed(X)
        if not embs:
            return np.empty((0, self.dim_))
        return np.vstack([e.vector for e, _ in embs])


class CosineLabelRanker(BaseEstimator):
    """Exact cosine ranking of query rows against fitted label rows.

    ``fit(X, y)`` stores one row per label, ``y`` holding the label ids.
    Ties are broken by the order labels were given to ``fit``.
    """

    def __init__(self, k=15):
        self.k = k

    _backend = "estimator"

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"y must hold one label id per row of X ({X.shape[0]}), got shape {y.shape}")
        labels = [(str(lid), SentenceEmbedding(row, self._backend)) for lid, row in zip(y, X)]
        self.index_ = build_index(labels)
        self.classes_ = np.array(self.index_.label_ids, dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def _queries(self, X):
        check_is_fitted(self, "index_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, ranker was fitted with {self.n_features_in_}")
        return [SentenceEmbedding(row, self._backend) for row in X]

    def decision_function(self, X):
        """Cosine similarity of every query (rows) to every label (columns)."""
        return np.vstack([score_all(q, self.index_) for q in self._queries(X)])

    def predict_top_k(self, X, k=None):
        k = check_positive_int(self.k if k is None else k, "k")
        return [[lid for lid, _ in rank_labels(q, self.index_, k).top(k)] for q in self._queries(X)]

    def predict(self, X):
        return np.array([top[0] for top in self.predict_top_k(X, 1)], dtype=object)

    def gold_ranks(self, X, y):
        queries = self._queries(X)
        y = [str(v) for v in np.asarray(y)]
        if len(y) != len(queries):
            raise ValueError("X and y differ in length")
        return np.array([gold_rank(rank_labels(q, self.index_), g) for q, g in zip(queries, y)])

    def score(self, X, y, sample_weight=None):
        """hit@k of the gold labels ``y``."""
        if sample_weight is not None:
            raise NotImplementedError("sample weights are not supported")
        return hit_at_k(self.gold_ranks(X, y), check_positive_int(self.k, "k"))
