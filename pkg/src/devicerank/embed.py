"""Sentence embeddings: TF-IDF weighted word vectors, precomputed stores and backends.

Three interchangeable backends share one call shape,
``backend.embed(items, role)`` where ``items`` is a list of ``(doc_id, text)``
pairs, so callers do not care where the vectors come from.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_positive_int, check_vector
from .corpus import TokenizedDoc, strip_regulation_refs, tokenize
from .exceptions import ContractError, DataError, MissingIdError, UnembeddableError
from .lexicon import Lexicon, tfidf_weights

logger = logging.getLogger(__name__)

ROLES = ("query", "document", "symmetric")

FNV_OFFSET = 2166136261
FNV_PRIME = 16777619
DEFAULT_BUCKETS = 2_000_000


@dataclass(frozen=True, eq=False)
class SentenceEmbedding:
    vector: np.ndarray
    backend_id: str
    role: str = "symmetric"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        vec = check_vector(self.vector, name="embedding")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self):
        return self.vector.shape[0]


@dataclass(eq=False)
class WordVectorTable:
    """Word vectors plus optional hashed character n-gram buckets."""

    words: dict
    matrix: np.ndarray
    bucket_vectors: np.ndarray | None = None
    bucket_count: int = DEFAULT_BUCKETS
    nmin: int = 3
    nmax: int = 6
    duplicates: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.words):
            raise DataError("matrix rows must match the word index")
        if self.bucket_vectors is not None:
            self.bucket_vectors = np.asarray(self.bucket_vectors, dtype=np.float64)
            if self.bucket_vectors.ndim != 2 or self.bucket_vectors.shape[1] != self.dim:
                raise DataError(f"bucket vectors must have {self.dim} components")
            self.bucket_count = self.bucket_vectors.shape[0]
        check_positive_int(self.bucket_count, "bucket_count")
        if self.nmin < 1 or self.nmax < self.nmin:
            raise ValueError("need 1 <= nmin <= nmax")

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.words

    @classmethod
    def from_dict(cls, vectors: Mapping[str, Sequence[float]], **kwargs):
        words = {w: i for i, w in enumerate(vectors)}
        matrix = np.array([np.asarray(v, dtype=np.float64) for v in vectors.values()])
        if matrix.ndim != 2:
            raise DataError("all word vectors must share one dimension")
        return cls(words, matrix, **kwargs)

    def lookup(self, word):
        """Stored vector, else the mean of its n-gram buckets, else ``None``."""
        idx = self.words.get(word)
        if idx is not None:
            return self.matrix[idx]
        if self.bucket_vectors is None:
            return None
        grams = subword_ngrams(word, self.nmin, self.nmax)
        if not grams:
            return None
        rows = [ngram_hash(g, self.bucket_count) for g in grams]
        return self.bucket_vectors[rows].mean(axis=0)


def load_word_vectors(path, bucket_vectors=None, nmin=3, nmax=6) -> WordVectorTable:
    """Read a text vector file: a ``count dim`` header then ``word v1 ... vdim``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    words = {}
    rows = []
    duplicates = 0
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: header must be 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}:1: header must be two integers") from None
        if dim <= 0 or count < 0:
            raise DataError(f"{path}:1: invalid header count={count} dim={dim}")
        seen = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if parts == [""]:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} components, found {len(values)}")
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric component") from None
            seen += 1
            if word in words:
                duplicates += 1
                rows[words[word]] = vec
            else:
                words[word] = len(rows)
                rows.append(vec)
    if seen != count:
        raise DataError(f"{path}: header declares {count} rows, file has {seen}")
    if duplicates:
        logger.warning("%s: %d duplicate words, last occurrence kept", path, duplicates)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    kwargs = {"nmin": nmin, "nmax": nmax}
    if bucket_vectors is not None:
        kwargs["bucket_vectors"] = bucket_vectors
    return WordVectorTable(words, matrix, duplicates=duplicates, **kwargs)


def subword_ngrams(word: str, nmin: int = 3, nmax: int = 6) -> list[str]:
    """Character n-grams of ``<word>`` with lengths ``nmin..nmax``.

    Ordered by length, then by start position.
    """
    if nmin < 1 or nmax < nmin:
        raise ValueError(f"need 1 <= nmin <= nmax, got nmin={nmin}, nmax={nmax}")
    wrapped = f"<{word}>"
    out = []
    for n in range(nmin, min(nmax, len(wrapped)) + 1):
        for i in range(len(wrapped) - n + 1):
            out.append(wrapped[i:i + n])
    return out


def ngram_hash(ngram: str, bucket_count: int = DEFAULT_BUCKETS) -> int:
    """32-bit FNV-1a over the UTF-8 bytes, reduced modulo ``bucket_count``."""
    if bucket_count <= 0:
        raise ValueError("bucket_count must be positive")
    h = FNV_OFFSET
    for byte in ngram.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h % bucket_count


def embed_bag(doc: TokenizedDoc, weights: Mapping[str, float], table: WordVectorTable,
              backend_id: str = "bag_of_vectors") -> tuple[SentenceEmbedding, list[str]]:
    """Weighted mean of word vectors; returns the embedding and the skipped tokens.

    Raises UnembeddableError instead of ever returning a zero vector.
    """
    total = np.zeros(table.dim)
    wsum = 0.0
    skipped = []
    for token, w in weights.items():
        if w < 0:
            raise ValueError(f"negative weight for {token!r}")
        vec = table.lookup(token)
        if vec is None:
            skipped.append(token)
            continue
        total += w * vec
        wsum += w
    if wsum <= 0:
        raise UnembeddableError(doc.doc_id, skipped)
    vector = total / wsum
    if not np.any(vector):
        raise UnembeddableError(doc.doc_id, skipped)
    return SentenceEmbedding(vector, backend_id, "symmetric"), skipped


class PrecomputedStore(Mapping):
    """Read-only ``doc_id -> SentenceEmbedding`` map with one shared dim."""

    def __init__(self, embeddings: Mapping[str, SentenceEmbedding]):
        dims = {e.dim for e in embeddings.values()}
        if len(dims) > 1:
            raise DataError(f"mixed embedding dimensions {sorted(dims)}")
        self._data = dict(embeddings)
        self.dim = dims.pop() if dims else None

    def __getitem__(self, doc_id):
        try:
            return self._data[doc_id]
        except KeyError:
            raise MissingIdError(f"no precomputed embedding for id {doc_id!r}") from None

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)


def load_precomputed(path, backend_id="precomputed", role="symmetric") -> PrecomputedStore:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    data = {}
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise DataError(f"{path}:1: header must be 'count dim'")
        count, dim = int(header[0]), int(header[1])
        if dim <= 0:
            raise DataError(f"{path}:1: dim must be positive")
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            doc_id, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataError(
                    f"{path}:{lineno}: mixed embedding dimensions ({len(values)} vs header {dim})"
                )
            if doc_id in data:
                raise DataError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric component") from None
            try:
                data[doc_id] = SentenceEmbedding(vec, backend_id, role)
            except ContractError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if len(data) != count:
        raise DataError(f"{path}: header declares {count} rows, file has {len(data)}")
    return PrecomputedStore(data)


def write_precomputed(items: Iterable[tuple[str, SentenceEmbedding]], path) -> int:
    items = list(items)
    if not items:
        raise DataError("nothing to write")
    dim = items[0][1].dim
    lines = [f"{len(items)} {dim}\n"]
    for doc_id, emb in items:
        if not doc_id or any(c.isspace() for c in doc_id):
            raise DataError(f"id {doc_id!r} cannot be written: ids must be non-empty without whitespace")
        if emb.dim != dim:
            raise DataError(f"mixed embedding dimensions ({emb.dim} vs {dim})")
        # repr round-trips doubles exactly
        lines.append(doc_id + " " + " ".join(repr(float(x)) for x in emb.vector) + "\n")
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
    return len(items)


class BagOfVectorsBackend:
    """TF-IDF weighted word vectors against a lexicon built on the label corpus."""

    supports_asymmetric = False

    def __init__(self, table: WordVectorTable, lexicon: Lexicon, backend_id="bag_of_vectors"):
        self.table = table
        self.lexicon = lexicon
        self.backend_id = backend_id
        self.last_skipped = {}

    @property
    def dim(self):
        return self.table.dim

    def embed_one(self, doc_id, text):
        doc = tokenize(strip_regulation_refs(text), doc_id)
        emb, skipped = embed_bag(doc, tfidf_weights(doc, self.lexicon), self.table, self.backend_id)
        if skipped:
            self.last_skipped[doc_id] = skipped
        return emb

    def embed(self, items, role="symmetric"):
        self.last_skipped = {}
        return [self.embed_one(doc_id, text) for doc_id, text in items]


class PrecomputedBackend:
    """Serves stored vectors by id; the text half of each item is ignored."""

    supports_asymmetric = True

    def __init__(self, documents: PrecomputedStore, queries: PrecomputedStore | None = None,
                 backend_id="precomputed"):
        self.documents = documents
        self.queries = queries if queries is not None else documents
        self.backend_id = backend_id
        if self.queries.dim is not None and documents.dim is not None and self.queries.dim != documents.dim:
            raise DataError("query and document stores differ in dimension")

    @property
    def dim(self):
        return self.documents.dim

    def embed(self, items, role="symmetric"):
        store = self.queries if role == "query" else self.documents
        out = []
        for doc_id, _ in items:
            emb = store[doc_id]
            out.append(SentenceEmbedding(emb.vector, self.backend_id, emb.role))
        return out


@dataclass
class ExternalBackend:
    """Adapter from an embedding provider client to the backend call shape."""

    client: object
    backend_id: str = ""
    label_mode: str = "document"
    target_mode: str = "query"
    last_skipped: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.backend_id:
            self.backend_id = f"external:{self.client.config.model}"

    @property
    def dim(self):
        return self.client.config.dim

    @property
    def supports_asymmetric(self):
        return self.client.config.supports_asymmetric

    def embed(self, items, role="symmetric"):
        from .provider import embed_external

        texts = [strip_regulation_refs(text) for _, text in items]
        return embed_external(texts, role, self.client, backend_id=self.backend_id)
