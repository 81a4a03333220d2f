"""Retrieval metrics: MRR, pooled precision/recall/F1, random baselines and the signed-rank test."""

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata, wilcoxon

from crosschv.datamodel import EvalReport, GroundTruth, TaggedWord
from crosschv.errors import DegenerateTestError, EvaluationError, SampleSizeError

logger = logging.getLogger(__name__)

MIN_WILCOXON_PAIRS = 6
MAX_EXACT_PAIRS = 12


def load_ground_truth(path: str | Path) -> GroundTruth:
    frame = pd.read_csv(
        path,
        sep="\t",
        header=None,
        names=["query", "candidate", "relevant"],
        dtype={"query": str, "candidate": str, "relevant": str},
        keep_default_na=False,
        quoting=csv.QUOTE_NONE,
    )

    invalid = frame[~frame["relevant"].isin(["0", "1"])]
    if len(invalid) > 0:
        row = invalid.iloc[0]
        raise EvaluationError(f"{path}: relevance of ({row['query']}, {row['candidate']}) must be 0 or 1")

    labels = {}
    for query, candidate, relevant in frame.itertuples(index=False):
        labels[(query.strip(), candidate.strip())] = relevant == "1"

    return GroundTruth(labels)


def save_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    frame = pd.DataFrame(
        [(query, candidate, int(relevant)) for (query, candidate), relevant in truth.labels.items()],
        columns=["query", "candidate", "relevant"],
    )
    frame.to_csv(path, sep="\t", header=False, index=False)


def check_queries(queries: Iterable[TaggedWord], truth: GroundTruth) -> None:
    missing = [query for query in queries if query not in truth]
    if len(missing) > 0:
        raise EvaluationError(f"Query '{missing[0]}' has no labels in the ground truth ({len(missing)} missing)")


def first_relevant_rank(ranked: Sequence[TaggedWord], query: TaggedWord, truth: GroundTruth) -> int | None:
    for rank, candidate in enumerate(ranked, start=1):
        if truth.is_relevant(query, candidate):
            return rank

    return None


@dataclass(frozen=True)
class MrrResult:
    mrr: float
    mrr_answerable: float | None
    per_query_ranks: dict[TaggedWord, int | None]


def mrr(ranked_lists: Mapping[TaggedWord, Sequence[TaggedWord]], truth: GroundTruth) -> MrrResult:
    """Mean reciprocal rank; a query without a relevant candidate contributes 0.

    ``mrr_answerable`` averages only over queries with at least one relevant annotated item.
    """
    if len(ranked_lists) == 0:
        raise EvaluationError("MRR is undefined for an empty query set")

    check_queries(ranked_lists, truth)

    ranks = {query: first_relevant_rank(ranked, query, truth) for query, ranked in ranked_lists.items()}
    reciprocal = {query: 1.0 / rank if rank is not None else 0.0 for query, rank in ranks.items()}

    answerable = [reciprocal[query] for query in ranks if truth.relevant_count(query) > 0]

    return MrrResult(
        float(np.mean(list(reciprocal.values()))),
        float(np.mean(answerable)) if len(answerable) > 0 else None,
        ranks,
    )


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0

    return 2 * precision * recall / (precision + recall)


def set_metrics(retrieved: Mapping[TaggedWord, Iterable[TaggedWord]], truth: GroundTruth) -> EvalReport:
    """Micro-averaged precision, recall and F1 over the pooled retrieved items."""
    check_queries(retrieved, truth)

    retrieved_count = 0
    relevant_retrieved = 0
    relevant_total = 0

    for query, candidates in retrieved.items():
        candidates = set(candidates)

        retrieved_count += len(candidates)
        relevant_retrieved += sum(1 for candidate in candidates if truth.is_relevant(query, candidate))
        relevant_total += truth.relevant_count(query)

    precision_defined = retrieved_count > 0
    precision = relevant_retrieved / retrieved_count if precision_defined else 0.0
    recall = relevant_retrieved / relevant_total if relevant_total > 0 else 0.0

    if not precision_defined:
        logger.warning("no items retrieved, precision is reported as 0")

    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        correct_ratio=precision,
        retrieved_count=retrieved_count,
        relevant_retrieved=relevant_retrieved,
        relevant_total=relevant_total,
        precision_defined=precision_defined,
    )


def evaluate(ranked_lists: Mapping[TaggedWord, Sequence[TaggedWord]], truth: GroundTruth) -> EvalReport:
    """Set metrics plus MRR over the same ranked lists."""
    ranking = mrr(ranked_lists, truth)
    report = set_metrics(ranked_lists, truth)

    return EvalReport(
        precision=report.precision,
        recall=report.recall,
        f1=report.f1,
        correct_ratio=report.correct_ratio,
        retrieved_count=report.retrieved_count,
        relevant_retrieved=report.relevant_retrieved,
        relevant_total=report.relevant_total,
        precision_defined=report.precision_defined,
        mrr=ranking.mrr,
        mrr_answerable=ranking.mrr_answerable,
        per_query_ranks=ranking.per_query_ranks,
    )


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n: int
    z: float
    exact: bool


def exact_signed_rank_p_value(ranks: np.ndarray, positive: float) -> float:
    """Two-sided p-value from all 2^n sign assignments of the (possibly tied) ranks."""
    n = len(ranks)
    masks = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    sums = masks @ ranks

    mean = ranks.sum() / 2
    extreme = np.abs(sums - mean) >= abs(positive - mean) - 1e-9
    return float(extreme.mean())


def wilcoxon_signed_rank(ranks_a: Sequence[float], ranks_b: Sequence[float], correction: bool = True) -> WilcoxonResult:
    """Two-sided signed-rank test on paired samples.

    Zero differences are dropped before ranking. The statistic is the smaller of the
    positive and negative rank sums. Up to ``MAX_EXACT_PAIRS`` non-zero differences the
    p-value comes from the exact sign-flip distribution of the tie-averaged ranks, above
    that from scipy's normal approximation with tie correction (and continuity correction
    unless disabled). ``z`` is the standard normal deviate matching the p-value.
    """
    if len(ranks_a) != len(ranks_b):
        raise SampleSizeError(f"Paired samples differ in length: {len(ranks_a)} vs {len(ranks_b)}")

    differences = np.asarray(ranks_a, dtype=np.float64) - np.asarray(ranks_b, dtype=np.float64)
    differences = differences[differences != 0]

    if len(differences) == 0 and len(ranks_a) > 0:
        raise DegenerateTestError("All paired differences are zero, the signed-rank test has no signal")

    n = len(differences)
    if n < MIN_WILCOXON_PAIRS:
        raise SampleSizeError(f"The signed-rank test needs at least {MIN_WILCOXON_PAIRS} non-zero differences, got {n}")

    ranks = rankdata(np.abs(differences))
    positive = float(ranks[differences > 0].sum())
    negative = float(ranks[differences < 0].sum())

    exact = n <= MAX_EXACT_PAIRS
    if exact:
        p_value = exact_signed_rank_p_value(ranks, positive)
    else:
        result = wilcoxon(differences, zero_method="wilcox", correction=correction, method="approx")
        p_value = float(result.pvalue)

    p_value = min(p_value, 1.0)
    z = float(norm.isf(p_value / 2))

    return WilcoxonResult(min(positive, negative), p_value, n, z, exact)


def expected_reciprocal_rank(pool_size: int, relevant: int) -> float:
    """Expected reciprocal rank of the first relevant item in a uniformly shuffled pool."""
    if relevant <= 0 or pool_size <= 0:
        return 0.0

    total = math.comb(pool_size, relevant)
    return sum(
        math.comb(pool_size - rank, relevant - 1) / total / rank for rank in range(1, pool_size - relevant + 2)
    )


def random_baseline_mrr(truth: GroundTruth, queries: Iterable[TaggedWord] | None = None) -> float:
    """Expected MRR when each query's annotated pool is presented in random order."""
    queries = list(queries) if queries is not None else truth.queries
    if len(queries) == 0:
        raise EvaluationError("MRR is undefined for an empty query set")

    check_queries(queries, truth)
    return float(np.mean([expected_reciprocal_rank(truth.pool_size(q), truth.relevant_count(q)) for q in queries]))


def monte_carlo_baseline_mrr(pool_size: int, relevant: int, trials: int, seed: int) -> float:
    rng = np.random.default_rng(seed)

    labels = np.zeros(pool_size, dtype=bool)
    labels[:relevant] = True

    total = 0.0
    for _ in range(trials):
        hits = np.flatnonzero(rng.permutation(labels))
        total += 1.0 / (hits[0] + 1) if len(hits) > 0 else 0.0

    return total / trials


def rank_distribution(per_query_ranks: Mapping[TaggedWord, int | None], max_rank: int = 100) -> pd.Series:
    """Number of queries whose first relevant candidate sits at each rank; unranked queries count as ``None``."""
    counts = Counter(rank if rank is not None and rank <= max_rank else None for rank in per_query_ranks.values())

    index = [*range(1, max_rank + 1), None]
    return pd.Series([counts.get(rank, 0) for rank in index], index=pd.Index(index, name="rank"), name="queries")

