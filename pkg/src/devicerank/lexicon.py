"""Document frequencies, frequency-based stop words and TF-IDF weights."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from ._validation import check_fraction
from .corpus import TokenizedDoc


@dataclass(frozen=True)
class Lexicon:
    doc_count: int
    df: Mapping[str, int]
    stopwords: frozenset
    stop_fraction: float

    @property
    def vocabulary_size(self):
        return len(self.df)

    def is_stopword(self, token):
        return token in self.stopwords

    def to_dict(self):
        return {
            "doc_count": self.doc_count,
            "stop_fraction": self.stop_fraction,
            "df": dict(sorted(self.df.items())),
            "stopwords": sorted(self.stopwords),
        }

    @classmethod
    def from_dict(cls, data):
        df = {str(k): int(v) for k, v in data["df"].items()}
        lex = build_from_df(df, int(data["doc_count"]), float(data["stop_fraction"]))
        if set(data.get("stopwords", lex.stopwords)) != lex.stopwords:
            raise ValueError("stored stop-word list disagrees with df table")
        return lex


def document_frequencies(docs: Iterable[TokenizedDoc]) -> tuple[int, Counter]:
    df = Counter()
    n = 0
    for doc in docs:
        df.update(set(doc.tokens))
        n += 1
    return n, df


def _stopwords(df, n, theta):
    cutoff = theta * n
    return frozenset(t for t, c in df.items() if c > cutoff)


def build_from_df(df: Mapping[str, int], doc_count: int, stop_fraction: float) -> Lexicon:
    check_fraction(stop_fraction, "stop_fraction")
    if doc_count < 1:
        raise ValueError("doc_count must be positive")
    return Lexicon(doc_count, dict(df), _stopwords(df, doc_count, stop_fraction), float(stop_fraction))


def build_lexicon(docs: Sequence[TokenizedDoc], stop_fraction: float = 0.2) -> Lexicon:
    """Count document frequencies and mark tokens with ``df > stop_fraction * N``."""
    check_fraction(stop_fraction, "stop_fraction")
    n, df = document_frequencies(docs)
    if n == 0:
        raise ValueError("cannot build a lexicon from zero documents")
    return build_from_df(df, n, stop_fraction)


def stopword_curve(docs: Sequence[TokenizedDoc], thetas: Sequence[float]) -> list[tuple[float, int]]:
    """Vocabulary size left after stop-word removal, for each threshold."""
    for th in thetas:
        check_fraction(th, "theta")
    if list(thetas) != sorted(thetas):
        raise ValueError("theta grid must be sorted ascending")
    n, df = document_frequencies(docs)
    if n == 0:
        raise ValueError("cannot build a lexicon from zero documents")
    counts = sorted(df.values())
    rows = []
    for th in thetas:
        # tokens kept are those with df <= th * n
        kept = _count_at_most(counts, th * n)
        rows.append((th, kept))
    return rows


def _count_at_most(sorted_counts, bound):
    lo, hi = 0, len(sorted_counts)
    while lo < hi:
        mid = (lo + hi) // 2
        if sorted_counts[mid] <= bound:
            lo = mid + 1
        else:
            hi = mid
    return lo


def idf(token: str, lexicon: Lexicon) -> float:
    """Smoothed inverse document frequency, ``ln((1+N)/(1+df)) + 1``.

    Tokens never seen in the corpus get ``df = 0``.
    """
    df = lexicon.df.get(token, 0)
    return math.log((1 + lexicon.doc_count) / (1 + df)) + 1.0


def tfidf_weights(doc: TokenizedDoc, lexicon: Lexicon) -> dict[str, float]:
    counts = Counter(t for t in doc.tokens if t not in lexicon.stopwords)
    # dict keeps first-occurrence order, which fixes the summation order downstream
    return {t: c * idf(t, lexicon) for t, c in counts.items()}
