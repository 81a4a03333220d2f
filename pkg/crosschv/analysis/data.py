import logging
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from crosschv.analysis.evaluation import check_queries, first_relevant_rank, rank_distribution, set_metrics
from crosschv.datamodel import (
    AnchorSet,
    BilingualSpace,
    Candidate,
    DynamicThresholdPolicy,
    EvalReport,
    GroundTruth,
    LanguageTag,
    Query,
    TaggedWord,
)
from crosschv.errors import EvaluationError, OutOfVocabularyError
from crosschv.expansion.retrieval import (
    DEFAULT_DELTA_GRID,
    DEFAULT_K,
    DEFAULT_MAX_K,
    modularity,
    nearest_neighbors,
    split_groups,
)

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ["Query Method", "#Retrieved Items", "Correct Ratio", "F1"]


def _ranked_candidates(
    space: BilingualSpace, queries: Sequence[Query], max_k: int
) -> dict[TaggedWord, list[Candidate]]:
    candidates = {}
    for query in queries:
        _, target_language = query.direction(space)

        try:
            candidates[query.key] = nearest_neighbors(space, query, max_k, target_language)
        except OutOfVocabularyError as e:
            logger.warning("leaving query %s out of the comparison: %s", query.key, e)

    if len(candidates) == 0:
        raise EvaluationError("None of the queries is part of the space")

    return candidates


def _best_by_f1[T](reports: Sequence[tuple[T, EvalReport]]) -> tuple[T, EvalReport]:
    # First grid point wins ties, grids are scanned in ascending order
    best = reports[0]
    for setting, report in reports[1:]:
        if report.f1 > best[1].f1:
            best = (setting, report)

    return best


def _comparison_row(method: str, report: EvalReport) -> list:
    return [method, report.retrieved_count, report.correct_ratio, report.f1]


def compare_methods(
    space: BilingualSpace,
    queries: Sequence[Query],
    truth: GroundTruth,
    knn_grid: Sequence[int] | None = None,
    delta_grid: Sequence[float] | None = None,
    policy: DynamicThresholdPolicy | None = None,
    max_k: int = DEFAULT_MAX_K,
) -> pd.DataFrame:
    """One row per method, each evaluated at its best grid point by F1.

    The chosen grid point of every method is kept in ``frame.attrs["settings"]``.
    """
    if knn_grid is None and delta_grid is None and policy is None:
        raise EvaluationError("Nothing to compare, pass a k-NN grid, a delta grid or a policy")

    check_queries([query.key for query in queries], truth)

    candidates = _ranked_candidates(space, queries, max_k)

    rows = []
    settings: dict[str, str] = {}

    if knn_grid is not None and len(knn_grid) > 0:
        reports = []
        for k in sorted(set(knn_grid)):
            if k > max_k:
                logger.warning("k=%i exceeds max_k=%i, the k-NN lists are capped", k, max_k)

            retrieved = {query: [c.key for c in ranked[:k]] for query, ranked in candidates.items()}
            reports.append((k, set_metrics(retrieved, truth)))

        k, report = _best_by_f1(reports)
        rows.append(_comparison_row("k-NN", report))
        settings["k-NN"] = f"k={k}"

    if delta_grid is not None and len(delta_grid) > 0:
        reports = []
        for delta in sorted(set(delta_grid)):
            retrieved = {q: [c.key for c in ranked if c.similarity >= delta] for q, ranked in candidates.items()}
            reports.append((delta, set_metrics(retrieved, truth)))

        delta, report = _best_by_f1(reports)
        rows.append(_comparison_row("Single Threshold", report))
        settings["Single Threshold"] = f"delta={delta}"

    if policy is not None:
        by_key = {query.key: query for query in queries}

        retrieved = {}
        for key, ranked in candidates.items():
            delta = policy.threshold_for(modularity(space, by_key[key], policy.k).m)
            retrieved[key] = [c.key for c in ranked if c.similarity >= delta]

        rows.append(_comparison_row("Dynamic Threshold", set_metrics(retrieved, truth)))
        settings["Dynamic Threshold"] = f"thresholds={list(policy.group_thresholds)}"

    frame = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    frame.attrs["settings"] = settings
    return frame


def compare_runs(runs: Mapping[str, Mapping[TaggedWord, Sequence[TaggedWord]]], truth: GroundTruth) -> pd.DataFrame:
    """Comparison table over already materialized expansion runs, one row per named run."""
    if len(runs) == 0:
        raise EvaluationError("Nothing to compare, no runs given")

    rows = [_comparison_row(name, set_metrics(ranked, truth)) for name, ranked in runs.items()]
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def threshold_sweep(
    space: BilingualSpace,
    queries: Sequence[Query],
    truth: GroundTruth,
    n_groups: int = 4,
    k: int = DEFAULT_K,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
    max_k: int = DEFAULT_MAX_K,
) -> pd.DataFrame:
    """Precision, recall and F1 per modularity group and per delta, groups ordered by ascending modularity."""
    check_queries([query.key for query in queries], truth)

    if not 1 <= n_groups <= len(queries):
        raise EvaluationError(f"{len(queries)} queries cannot fill {n_groups} groups")

    scores = {query.key: modularity(space, query, k).m for query in queries}
    ordered = sorted(queries, key=lambda query: (scores[query.key], query.key))
    candidates = _ranked_candidates(space, ordered, max_k)

    rows = []
    for group_number, group in enumerate(split_groups(ordered, n_groups), start=1):
        upper = max(scores[query.key] for query in group)

        for delta in sorted(set(delta_grid)):
            retrieved = {query.key: [c.key for c in candidates[query.key] if c.similarity >= delta] for query in group}
            report = set_metrics(retrieved, truth)
            rows.append((group_number, len(group), upper, delta, report.precision, report.recall, report.f1))

    return pd.DataFrame(rows, columns=["group", "queries", "modularity_upper", "delta", "precision", "recall", "f1"])


def translation_precision_at_k(
    space: BilingualSpace, held_out: AnchorSet, k: int = 1, source_tag: LanguageTag | None = None
) -> float:
    """Share of held-out pairs whose target word is among the k nearest target-language words of the source word."""
    source_tag = source_tag or space.source_tag
    target_tag = space.other_language(source_tag)

    hits = []
    for source_word, target_word in held_out:
        if (source_tag, source_word) not in space.index or (target_tag, target_word) not in space.index:
            continue

        ranked = nearest_neighbors(space, Query(source_word, source_tag), k, target_tag)
        hits.append(any(c.word == target_word for c in ranked))

    if len(hits) == 0:
        raise EvaluationError("No held-out pair has both words in the space")

    return float(np.mean(hits))


def paired_first_ranks(
    run_a: Mapping[TaggedWord, Sequence[TaggedWord]],
    run_b: Mapping[TaggedWord, Sequence[TaggedWord]],
    truth: GroundTruth,
) -> pd.DataFrame:
    """First relevant rank of both runs per shared query; a miss counts as the pool size plus one."""
    shared = [query for query in run_a if query in run_b]
    if len(shared) == 0:
        raise EvaluationError("The two runs share no query")

    check_queries(shared, truth)

    rows = []
    for query in shared:
        miss = truth.pool_size(query) + 1
        rank_a = first_relevant_rank(run_a[query], query, truth)
        rank_b = first_relevant_rank(run_b[query], query, truth)
        rows.append((query, rank_a if rank_a is not None else miss, rank_b if rank_b is not None else miss))

    return pd.DataFrame(rows, columns=["query", "rank_a", "rank_b"])


def report_frame(report: EvalReport, baseline_mrr: float | None = None) -> pd.DataFrame:
    rows = [
        ("queries", len(report.per_query_ranks)),
        ("mrr", report.mrr),
        ("mrr_answerable", report.mrr_answerable),
        ("random_baseline_mrr", baseline_mrr),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
        ("correct_ratio", report.correct_ratio),
        ("retrieved", report.retrieved_count),
        ("relevant_retrieved", report.relevant_retrieved),
        ("relevant_total", report.relevant_total),
        ("precision_defined", report.precision_defined),
    ]

    return pd.DataFrame([row for row in rows if row[1] is not None], columns=["metric", "value"])


def rank_frame(report: EvalReport, max_rank: int = DEFAULT_MAX_K) -> pd.DataFrame:
    distribution = rank_distribution(report.per_query_ranks, max_rank)

    frame = distribution.reset_index()
    frame["rank"] = frame["rank"].map(lambda rank: "none" if rank is None or pd.isna(rank) else str(int(rank)))
    return frame
