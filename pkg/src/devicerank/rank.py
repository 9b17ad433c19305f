"""Exact cosine-similarity ranking of labels against a query embedding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import check_positive_int
from .embed import SentenceEmbedding
from .exceptions import ContractError, DataError, MissingIdError


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine is undefined for a zero-norm vector")
    return float(min(1.0, max(-1.0, np.dot(a, b) / (na * nb))))


_BLOCK = 1 << 20


def _rowwise_dot(matrix, other):
    """Per-row dot products with one reduction order for every row.

    A BLAS matrix-vector product can round identical rows differently, which
    would break the corpus-order tie-break.
    """
    n, dim = matrix.shape
    out = np.empty(n)
    step = max(1, _BLOCK // max(dim, 1))
    for start in range(0, n, step):
        block = matrix[start:start + step]
        rhs = other if other.ndim == 1 else other[start:start + step]
        out[start:start + step] = (block * rhs).sum(axis=1)
    return out


def _roles_compatible(query_role, doc_role):
    if query_role == "symmetric" or doc_role == "symmetric":
        return query_role == doc_role
    return query_role != doc_role


class SimilarityIndex:
    """Immutable label matrix in corpus order.

    Rows keep their build order, which is the tie-break for equal scores.
    """

    def __init__(self, label_ids: Sequence[str], matrix: np.ndarray, backend_id: str, role: str):
        self.label_ids = tuple(label_ids)
        matrix = np.array(matrix, dtype=np.float64)
        matrix.setflags(write=False)
        self.matrix = matrix
        norms = np.sqrt(_rowwise_dot(matrix, matrix))
        norms.setflags(write=False)
        self.norms = norms
        self.backend_id = backend_id
        self.role = role
        self._position = {lid: i for i, lid in enumerate(self.label_ids)}

    @property
    def n_labels(self):
        return len(self.label_ids)

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return self.n_labels

    def __contains__(self, label_id):
        return label_id in self._position

    def position(self, label_id):
        try:
            return self._position[label_id]
        except KeyError:
            raise MissingIdError(f"label {label_id!r} is not in the index") from None

    def embedding(self, label_id):
        return SentenceEmbedding(self.matrix[self.position(label_id)], self.backend_id, self.role)


def build_index(labels: Sequence[tuple[str, SentenceEmbedding]]) -> SimilarityIndex:
    labels = list(labels)
    if not labels:
        raise DataError("cannot build an index from zero labels")
    first = labels[0][1]
    seen = set()
    for label_id, emb in labels:
        if label_id in seen:
            raise DataError(f"duplicate label_id {label_id!r} in index")
        seen.add(label_id)
        if emb.dim != first.dim:
            raise ContractError(f"label {label_id!r} has dim {emb.dim}, index dim is {first.dim}")
        if emb.backend_id != first.backend_id:
            raise ContractError(
                f"label {label_id!r} comes from backend {emb.backend_id!r}, index uses {first.backend_id!r}"
            )
        if emb.role != first.role:
            raise ContractError(f"label {label_id!r} has role {emb.role!r}, index uses {first.role!r}")
        if not np.any(emb.vector):
            raise ContractError(f"label {label_id!r} has a zero vector")
    matrix = np.vstack([emb.vector for _, emb in labels])
    return SimilarityIndex([lid for lid, _ in labels], matrix, first.backend_id, first.role)


@dataclass(frozen=True, eq=False)
class Ranking:
    """Full descending order of every label for one query."""

    index: SimilarityIndex
    order: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return self.order.shape[0]

    def label_at(self, rank):
        return self.index.label_ids[self.order[rank - 1]]

    def top(self, k):
        check_positive_int(k, "k")
        if k > len(self):
            raise ValueError(f"k={k} exceeds the number of labels ({len(self)})")
        ids = self.index.label_ids
        return [(ids[i], float(self.scores[i])) for i in self.order[:k]]

    def rank_of(self, label_id):
        pos = self.index.position(label_id)
        return int(np.flatnonzero(self.order == pos)[0]) + 1


@dataclass(frozen=True)
class RankResult:
    target_id: str
    gold_label_id: str
    gold_rank: int
    top_k: tuple
    n_labels: int


def score_all(query: SentenceEmbedding, index: SimilarityIndex) -> np.ndarray:
    """Cosine similarity of the query against every row, in index order."""
    if query.backend_id != index.backend_id:
        raise ContractError(f"query backend {query.backend_id!r} does not match index backend {index.backend_id!r}")
    if query.dim != index.dim:
        raise ContractError(f"query dim {query.dim} does not match index dim {index.dim}")
    if not _roles_compatible(query.role, index.role):
        raise ContractError(f"query role {query.role!r} cannot be ranked against {index.role!r} embeddings")
    qn = np.linalg.norm(query.vector)
    if qn == 0:
        raise ValueError("cosine is undefined for a zero-norm query")
    scores = _rowwise_dot(index.matrix, query.vector) / (index.norms * qn)
    return np.clip(scores, -1.0, 1.0)


def rank_labels(query: SentenceEmbedding, index: SimilarityIndex, k: int | None = None) -> Ranking:
    if k is not None:
        check_positive_int(k, "k")
        if k > index.n_labels:
            raise ValueError(f"k={k} exceeds the number of labels ({index.n_labels})")
    scores = score_all(query, index)
    # stable sort on the negated scores keeps corpus order among ties
    order = np.argsort(-scores, kind="stable")
    order.setflags(write=False)
    scores.setflags(write=False)
    return Ranking(index, order, scores)


def gold_rank(ranking: Ranking, gold_label_id: str) -> int:
    return ranking.rank_of(gold_label_id)


def rank_target(query: SentenceEmbedding, index: SimilarityIndex, gold_label_id: str,
                k: int = 15, target_id: str = "") -> RankResult:
    ranking = rank_labels(query, index)
    k = min(check_positive_int(k, "k"), index.n_labels)
    return RankResult(
        target_id=target_id,
        gold_label_id=gold_label_id,
        gold_rank=gold_rank(ranking, gold_label_id),
        top_k=tuple(ranking.top(k)),
        n_labels=index.n_labels,
    )
