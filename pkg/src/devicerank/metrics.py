"""Rank metrics, mislabel flags and the length/rank correlation test."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_positive_int
from .corpus import TargetRecord
from .rank import RankResult
from .stats import pearson_r, t_test_two_sided

DEFAULT_KS = (1, 5, 10, 15, 20, 100)
DEFAULT_THRESHOLD = 100


def hit_at_k(ranks: Sequence[int], k: int) -> float:
    """Fraction of ranks that are ``<= k``."""
    check_positive_int(k, "k")
    ranks = list(ranks)
    if not ranks:
        raise ValueError("hit_at_k needs at least one rank")
    return sum(1 for r in ranks if r <= k) / len(ranks)


def random_baseline(n_labels: int) -> float:
    """Expected 1-based rank of the gold label under random scoring."""
    check_positive_int(n_labels, "n_labels")
    return (n_labels + 1) / 2


def simulate_random_baseline(n_labels: int, trials: int, seed: int = 0) -> float:
    """Mean gold rank when every label gets an i.i.d. uniform score."""
    check_positive_int(n_labels, "n_labels")
    check_positive_int(trials, "trials")
    rng = np.random.default_rng(seed)
    total = 0
    done = 0
    chunk = max(1, 2_000_000 // n_labels)
    while done < trials:
        m = min(chunk, trials - done)
        scores = rng.random((m, n_labels))
        total += int(m + (scores[:, 1:] > scores[:, :1]).sum())
        done += m
    return total / trials


@dataclass(frozen=True)
class MislabelVerdict:
    target_id: str
    gold_rank: int
    flagged: bool
    threshold: int


def detect_mislabels(results: Iterable[RankResult], threshold: int = DEFAULT_THRESHOLD) -> list[MislabelVerdict]:
    """Flag every target whose gold rank exceeds ``threshold``.

    Verdicts come back worst rank first; equal ranks keep input order.
    """
    check_positive_int(threshold, "threshold")
    verdicts = [MislabelVerdict(r.target_id, r.gold_rank, r.gold_rank > threshold, threshold) for r in results]
    return sorted(verdicts, key=lambda v: -v.gold_rank)


@dataclass
class EvalReport:
    backend_id: str
    n_labels: int
    n_correct: int
    n_mislabeled: int
    avg_rank_correct: float
    avg_rank_mislabeled: float | None
    hit_at_k: dict
    pearson_r: float | None
    p_value: float | None
    random_baseline: float
    random_baseline_simulated: float | None = None
    random_seed: int | None = None
    random_trials: int | None = None
    mislabel_threshold: int = DEFAULT_THRESHOLD
    flagged: list = field(default_factory=list)

    def to_dict(self):
        data = asdict(self)
        data["hit_at_k"] = {str(k): v for k, v in sorted(self.hit_at_k.items())}
        return data


def evaluate(results: Sequence[RankResult], targets: Sequence[TargetRecord], backend_id: str = "",
             ks: Iterable[int] = DEFAULT_KS, threshold: int = DEFAULT_THRESHOLD,
             seed: int | None = 0, trials: int = 10_000) -> EvalReport:
    """Aggregate per-target rank results into an EvalReport.

    Targets flagged as mislabeled are averaged separately and left out of
    hit@k and the correlation. The correlation is ``None`` when it is
    undefined (fewer than three correct targets or a constant series).
    """
    by_id = {r.target_id: r for r in results}
    missing = [t.target_id for t in targets if t.target_id not in by_id]
    if missing:
        raise ValueError(f"no rank result for target(s) {', '.join(missing)}")
    if not targets:
        raise ValueError("no targets to evaluate")
    n_labels = by_id[targets[0].target_id].n_labels
    correct = [t for t in targets if not t.is_mislabeled]
    wrong = [t for t in targets if t.is_mislabeled]
    if not correct:
        raise ValueError("no correctly labeled targets; correlation and hit@k are undefined")

    ranks_ok = [by_id[t.target_id].gold_rank for t in correct]
    ranks_bad = [by_id[t.target_id].gold_rank for t in wrong]
    k_set = sorted({check_positive_int(k, "k") for k in ks} | {100, n_labels})
    hits = {k: hit_at_k(ranks_ok, k) for k in k_set}

    r = p = None
    counts = [t.word_count for t in correct]
    if len(correct) >= 3 and len(set(counts)) > 1 and len(set(ranks_ok)) > 1:
        r = pearson_r(counts, ranks_ok)
        p = t_test_two_sided(r, len(correct))

    sim = None
    if seed is not None:
        sim = simulate_random_baseline(n_labels, trials, seed)

    flagged = [v.target_id for v in detect_mislabels([by_id[t.target_id] for t in targets], threshold) if v.flagged]
    return EvalReport(
        backend_id=backend_id,
        n_labels=n_labels,
        n_correct=len(correct),
        n_mislabeled=len(wrong),
        avg_rank_correct=math.fsum(ranks_ok) / len(ranks_ok),
        avg_rank_mislabeled=math.fsum(ranks_bad) / len(ranks_bad) if ranks_bad else None,
        hit_at_k=hits,
        pearson_r=r,
        p_value=p,
        random_baseline=random_baseline(n_labels),
        random_baseline_simulated=sim,
        random_seed=seed,
        random_trials=trials if seed is not None else None,
        mislabel_threshold=threshold,
        flagged=flagged,
    )
