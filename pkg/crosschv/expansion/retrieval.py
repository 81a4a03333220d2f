"""Exact cosine retrieval over a bilingual space, modularity and dynamic-threshold calibration."""

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from crosschv.analysis.evaluation import set_metrics
from crosschv.datamodel import (
    ANY_LANGUAGE,
    BilingualSpace,
    Candidate,
    DynamicThresholdPolicy,
    GroundTruth,
    LanguageTag,
    ModularityScore,
    Query,
    TaggedWord,
    VectorSpace,
)
from crosschv.embeddings.space import similarities
from crosschv.errors import CalibrationError, ConfigError, NeighborhoodError
from crosschv.text_pipeline import read_documents

logger = logging.getLogger(__name__)

DEFAULT_K = 10
DEFAULT_MAX_K = 100
DEFAULT_DELTA_GRID = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75)
DEFAULT_KNN_GRID = tuple(range(5, 51, 5))


def load_queries(path: str | Path, target_language: LanguageTag | None = None) -> list[Query]:
    queries = []
    for line in read_documents(path):
        line = line.strip()
        if line == "" or line.startswith("#"):
            continue

        queries.append(Query.parse(line, target_language))

    return queries


def rank_rows(space: VectorSpace, scores: np.ndarray, mask: np.ndarray, k: int) -> np.ndarray:
    """Top-k rows of ``mask`` by descending score, ties broken by (word, language) order."""
    rows = np.flatnonzero(mask)

    if k < len(rows):
        values = scores[rows]
        kth_largest = np.partition(values, len(values) - k)[len(values) - k]

        # Everything tied with the k-th score stays in, the tie-break decides below
        rows = rows[values >= kth_largest]

    order = np.lexsort((space.index.lexical_rank[rows], -scores[rows]))
    return rows[order][:k]


def _candidates(space: VectorSpace, scores: np.ndarray, rows: np.ndarray) -> list[Candidate]:
    return [Candidate(space.index.backward[row], space.index.language_of[row], float(scores[row])) for row in rows]


def _check_language(space: VectorSpace, language: LanguageTag) -> None:
    if language != ANY_LANGUAGE and language not in space.index.languages:
        raise ConfigError(f"Language '{language}' is not part of the space, expected one of {space.index.languages}")


def nearest_neighbors(
    space: VectorSpace, q: Query, k: int, target_language: LanguageTag = ANY_LANGUAGE
) -> list[Candidate]:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")

    _check_language(space, target_language)

    row = space.row(q.word, q.language_tag)
    scores = similarities(space, row)

    mask = np.ones(len(space), dtype=bool)
    if target_language != ANY_LANGUAGE:
        mask &= space.index.language_mask(target_language)

    mask[row] = False

    return _candidates(space, scores, rank_rows(space, scores, mask, k))


def _check_delta(delta: float) -> None:
    if not -1.0 <= delta <= 1.0:
        raise ConfigError(f"delta must lie in [-1, 1], got {delta}")


def expand_threshold(space: BilingualSpace, q: Query, delta: float, max_k: int = DEFAULT_MAX_K) -> list[Candidate]:
    """Candidates of the query's target language among its ``max_k`` nearest with cos >= delta."""
    _check_delta(delta)

    _, target_language = q.direction(space)
    return [c for c in nearest_neighbors(space, q, max_k, target_language) if c.similarity >= delta]


def modularity(space: BilingualSpace, q: Query, k: int = DEFAULT_K) -> ModularityScore:
    """Gap between the mean top-k cosine among the query's own language and among the other language.

    The query itself is left out of its own-language neighborhood.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")

    row = space.row(q.word, q.language_tag)
    scores = similarities(space, row)

    own_mask = space.index.language_mask(q.language_tag)
    own_mask[row] = False
    other_language = space.other_language(q.language_tag)
    other_mask = space.index.language_mask(other_language)

    for language, mask in [(q.language_tag, own_mask), (other_language, other_mask)]:
        available = int(mask.sum())
        if available < k:
            raise NeighborhoodError(f"Modularity with k={k} needs {k} {language} neighbors, only {available} exist")

    eta_own = float(np.mean(scores[rank_rows(space, scores, own_mask, k)]))
    eta_other = float(np.mean(scores[rank_rows(space, scores, other_mask, k)]))

    return ModularityScore.of(q, eta_own, eta_other, k)


def split_groups[T](items: Sequence[T], n_groups: int) -> list[list[T]]:
    """Split into ``n_groups`` consecutive groups of equal size, earliest groups take the remainder."""
    size, remainder = divmod(len(items), n_groups)

    groups = []
    start = 0
    for group in range(n_groups):
        end = start + size + (1 if group < remainder else 0)
        groups.append(list(items[start:end]))
        start = end

    return groups


def best_threshold(
    candidates: dict[TaggedWord, list[Candidate]], truth: GroundTruth, delta_grid: Sequence[float]
) -> tuple[float, float]:
    """The delta maximizing pooled F1 over the given candidate lists; ties go to the smallest delta."""
    grid = sorted(set(delta_grid))
    best_delta, best_f1 = grid[0], -1.0

    for delta in grid:
        retrieved = {query: [c.key for c in ranked if c.similarity >= delta] for query, ranked in candidates.items()}
        f1 = set_metrics(retrieved, truth).f1

        if f1 > best_f1:
            best_delta, best_f1 = delta, f1

    return best_delta, best_f1


def calibrate_dynamic_threshold(
    space: BilingualSpace,
    queries: Sequence[Query],
    truth: GroundTruth,
    n_groups: int = 4,
    k: int = DEFAULT_K,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
    max_k: int = DEFAULT_MAX_K,
) -> DynamicThresholdPolicy:
    if len(delta_grid) == 0:
        raise CalibrationError("The delta grid is empty")

    for delta in delta_grid:
        if not -1.0 <= delta <= 1.0:
            raise CalibrationError(f"Grid value {delta} lies outside [-1, 1]")

    if n_groups < 1:
        raise CalibrationError(f"n_groups must be >= 1, got {n_groups}")

    if len(queries) < n_groups:
        raise CalibrationError(f"{len(queries)} queries cannot fill {n_groups} groups")

    unlabeled = [q.key for q in queries if q.key not in truth]
    if len(unlabeled) > 0:
        raise CalibrationError(f"Query '{unlabeled[0]}' has no labels in the ground truth")

    scores = [modularity(space, q, k) for q in queries]
    order = sorted(range(len(queries)), key=lambda i: (scores[i].m, queries[i].key))

    groups: list[list[int]] = []
    for group in split_groups(order, n_groups):
        if len(groups) > 0 and scores[group[-1]].m == scores[groups[-1][-1]].m:
            groups[-1].extend(group)
        else:
            groups.append(group)

    if len(groups) < n_groups:
        logger.warning(
            "%i of %i groups share their largest modularity with a neighbor, calibrating %i merged groups",
            n_groups - len(groups),
            n_groups,
            len(groups),
        )

    boundaries = []
    thresholds = []
    for group_number, group in enumerate(groups, start=1):
        candidates = {}
        for i in group:
            _, target_language = queries[i].direction(space)
            candidates[queries[i].key] = nearest_neighbors(space, queries[i], max_k, target_language)

        delta, f1 = best_threshold(candidates, truth, delta_grid)
        boundary = scores[group[-1]].m

        logger.info(
            "group %i/%i: %i queries, modularity <= %.4f, delta %.2f (F1 %.4f)",
            group_number,
            len(groups),
            len(group),
            boundary,
            delta,
            f1,
        )

        boundaries.append(boundary)
        thresholds.append(delta)

    return DynamicThresholdPolicy(tuple(boundaries), tuple(thresholds), k)


def expand_dynamic(
    space: BilingualSpace, q: Query, policy: DynamicThresholdPolicy, max_k: int = DEFAULT_MAX_K
) -> list[Candidate]:
    score = modularity(space, q, policy.k)
    return expand_threshold(space, q, policy.threshold_for(score.m), max_k)


def save_policy(policy: DynamicThresholdPolicy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(f"k={policy.k}\tn_groups={policy.n_groups}\n")

        for boundary, delta in zip(policy.group_boundaries, policy.group_thresholds):
            file.write(f"{boundary!r}\t{delta!r}\n")


def load_policy(path: str | Path) -> DynamicThresholdPolicy:
    lines = [line for line in read_documents(path) if line.strip() != ""]
    if len(lines) == 0:
        raise CalibrationError(f"{path}: empty policy file")

    header = dict(item.partition("=")[::2] for item in lines[0].split("\t"))
    if "k" not in header or "n_groups" not in header:
        raise CalibrationError(f"{path}: header must read k=<k><TAB>n_groups=<n>")

    rows = [line.split("\t") for line in lines[1:]]
    if len(rows) != int(header["n_groups"]) or any(len(row) != 2 for row in rows):
        raise CalibrationError(f"{path}: expected {header['n_groups']} rows of boundary_upper<TAB>delta")

    return DynamicThresholdPolicy(
        tuple(float(boundary) for boundary, _ in rows),
        tuple(float(delta) for _, delta in rows),
        int(header["k"]),
    )
