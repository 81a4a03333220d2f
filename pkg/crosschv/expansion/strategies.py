import csv
import logging
from abc import abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import pandas as pd

from crosschv.datamodel import BilingualSpace, Candidate, DynamicThresholdPolicy, Query, TaggedWord, tag_word
from crosschv.errors import EvaluationError, OutOfVocabularyError
from crosschv.expansion.retrieval import (
    DEFAULT_MAX_K,
    expand_dynamic,
    expand_threshold,
    modularity,
    nearest_neighbors,
)

logger = logging.getLogger(__name__)

type JSON = dict[str, Any] | list[Any] | str | int | float | bool | None

EXPANSION_COLUMNS = ["query", "rank", "candidate", "language", "similarity"]
TSV_OPTIONS: dict[str, Any] = {"sep": "\t", "quoting": csv.QUOTE_NONE, "escapechar": "\\"}


@dataclass
class ExpansionResult:
    ranked: dict[TaggedWord, list[Candidate]] = field(default_factory=dict)
    rejects: list[tuple[TaggedWord, str]] = field(default_factory=list)

    def keys(self) -> dict[TaggedWord, list[TaggedWord]]:
        return {query: [candidate.key for candidate in ranked] for query, ranked in self.ranked.items()}

    @property
    def retrieved_count(self) -> int:
        return sum(len(ranked) for ranked in self.ranked.values())


class ExpansionStrategy:
    name = "expansion"

    def __init__(self, space: BilingualSpace, max_k: int = DEFAULT_MAX_K) -> None:
        self.space = space
        self.max_k = max_k

    @abstractmethod
    def expand(self, query: Query) -> list[Candidate]:
        raise NotImplementedError()

    def describe(self) -> JSON:
        return {"method": self.name, "max_k": self.max_k}

    def run(self, queries: Sequence[Query]) -> ExpansionResult:
        result = ExpansionResult()

        for query in queries:
            try:
                result.ranked[query.key] = self.expand(query)
            except OutOfVocabularyError as e:
                logger.warning("skipping query %s: %s", query.key, e)
                result.rejects.append((query.key, str(e)))

        return result


class KnnStrategy(ExpansionStrategy):
    name = "k-NN"

    def __init__(self, space: BilingualSpace, k: int) -> None:
        super().__init__(space, k)

        self.k = k

    def expand(self, query: Query) -> list[Candidate]:
        _, target_language = query.direction(self.space)
        return nearest_neighbors(self.space, query, self.k, target_language)

    def describe(self) -> JSON:
        return {"method": self.name, "k": self.k}


class ThresholdStrategy(ExpansionStrategy):
    name = "Single Threshold"

    def __init__(self, space: BilingualSpace, delta: float, max_k: int = DEFAULT_MAX_K) -> None:
        super().__init__(space, max_k)

        self.delta = delta

    def expand(self, query: Query) -> list[Candidate]:
        return expand_threshold(self.space, query, self.delta, self.max_k)

    def describe(self) -> JSON:
        return {"method": self.name, "delta": self.delta, "max_k": self.max_k}


class DynamicThresholdStrategy(ExpansionStrategy):
    name = "Dynamic Threshold"

    def __init__(self, space: BilingualSpace, policy: DynamicThresholdPolicy, max_k: int = DEFAULT_MAX_K) -> None:
        super().__init__(space, max_k)

        self.policy = policy

    def expand(self, query: Query) -> list[Candidate]:
        return expand_dynamic(self.space, query, self.policy, self.max_k)

    def describe(self) -> JSON:
        return {
            "method": self.name,
            "k": self.policy.k,
            "boundaries": list(self.policy.group_boundaries),
            "thresholds": list(self.policy.group_thresholds),
            "max_k": self.max_k,
        }


def modularity_frame(space: BilingualSpace, queries: Sequence[Query], k: int) -> tuple[pd.DataFrame, list]:
    rows = []
    rejects = []

    for query in queries:
        try:
            score = modularity(space, query, k)
        except OutOfVocabularyError as e:
            rejects.append((query.key, str(e)))
            continue

        rows.append((query.key, score.m, score.eta_src, score.eta_tgt, score.k))

    return pd.DataFrame(rows, columns=["query", "modularity", "eta_own", "eta_other", "k"]), rejects


def expansion_frame(result: ExpansionResult) -> pd.DataFrame:
    rows = [
        (query, rank, candidate.word, candidate.language_tag, candidate.similarity)
        for query, ranked in result.ranked.items()
        for rank, candidate in enumerate(ranked, start=1)
    ]

    return pd.DataFrame(rows, columns=EXPANSION_COLUMNS)


def write_expansion(result: ExpansionResult, path: str | Path) -> None:
    expansion_frame(result).to_csv(path, index=False, lineterminator="\n", **TSV_OPTIONS)


def write_rejects(
    rejects: Sequence[tuple[str, ...]], path: str | Path, columns: Sequence[str] = ("query", "reason")
) -> None:
    frame = pd.DataFrame(list(rejects), columns=list(columns))
    frame.to_csv(path, index=False, lineterminator="\n", **TSV_OPTIONS)


def read_expansion(path: str | Path) -> dict[TaggedWord, list[TaggedWord]]:
    """Ranked candidate keys per query, in rank order, from an expansion TSV."""
    frame = pd.read_csv(
        path,
        dtype={"query": str, "candidate": str, "language": str},
        keep_default_na=False,
        **TSV_OPTIONS,
    )

    missing = [column for column in EXPANSION_COLUMNS if column not in frame.columns]
    if len(missing) > 0:
        raise EvaluationError(f"{path}: missing columns {missing}")

    ranked: dict[TaggedWord, list[TaggedWord]] = {}
    for query, group in frame.sort_values(["query", "rank"], kind="stable").groupby("query", sort=False):
        ranked[str(query)] = [tag_word(language, word) for word, language in zip(group["candidate"], group["language"])]

    order = list(dict.fromkeys(frame["query"]))
    return {query: ranked[query] for query in order}
