from abc import abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from crosschv.errors import AlignmentError, CalibrationError, ConfigError, OutOfVocabularyError, SpaceFormatError

Word = str
LanguageTag = str
TaggedWord = str
Bigram = tuple[Word, Word]
Document = tuple[Word, ...]
AnchorPair = tuple[Word, Word]

ANY_LANGUAGE = "any"
TAG_SEPARATOR = ":"


def tag_word(language: LanguageTag, word: Word) -> TaggedWord:
    return f"{language}{TAG_SEPARATOR}{word}"


def split_tagged(token: TaggedWord) -> tuple[LanguageTag, Word]:
    language, separator, word = token.partition(TAG_SEPARATOR)
    if separator == "" or language == "" or word == "":
        raise ConfigError(f"'{token}' is not of the form language_tag:word")

    return language, word


@dataclass(frozen=True)
class TokenizerConfig:
    language_tag: LanguageTag = "en"
    mode: Literal["whitespace", "pretokenized"] = "whitespace"
    stopwords: frozenset[Word] = frozenset()
    lowercase: bool = True
    user_dictionary: tuple[tuple[Word, ...], ...] = ()
    joiner: str = "_"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("whitespace", "pretokenized"):
            raise ConfigError(f"Unknown tokenizer mode '{self.mode}', expected whitespace or pretokenized")

        if self.language_tag == "" or TAG_SEPARATOR in self.language_tag:
            raise ConfigError(f"Invalid language tag '{self.language_tag}'")

        if self.joiner == "" or self.joiner.isspace():
            raise ConfigError("The phrase joiner must be a non-space character sequence")

        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

        for entry in self.user_dictionary:
            if len(entry) == 0:
                raise ConfigError("User dictionary entries must contain at least one token")


@dataclass(frozen=True)
class TokenizedCorpus:
    documents: tuple[Document, ...]
    language_tag: LanguageTag
    token_counts: Counter[Word]

    @classmethod
    def from_documents(cls, documents: Iterable[Sequence[Word]], language_tag: LanguageTag) -> "TokenizedCorpus":
        docs = tuple(tuple(document) for document in documents)
        counts = Counter(token for document in docs for token in document)

        for token in counts:
            if token == "" or any(ch.isspace() for ch in token):
                raise ConfigError(f"Invalid token {token!r}: tokens must be non-empty and contain no whitespace")

        return cls(docs, language_tag, counts)

    @property
    def total_tokens(self) -> int:
        return sum(self.token_counts.values())

    def __len__(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class PhraseModel:
    bigram_scores: Mapping[Bigram, float]
    delta: float
    threshold: float
    joiner: str = "_"
    passes: int = 1

    def __contains__(self, bigram: object) -> bool:
        return bigram in self.bigram_scores

    def __len__(self) -> int:
        return len(self.bigram_scores)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    min_count: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    subsample_t: float = 1e-3
    seed: int = 1
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ["dim", "window", "negatives", "min_count", "epochs", "workers"]:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

        if self.initial_lr <= 0:
            raise ConfigError(f"initial_lr must be > 0, got {self.initial_lr}")

        if self.subsample_t < 0:
            raise ConfigError(f"subsample_t must be >= 0, got {self.subsample_t}")

    @property
    def min_lr(self) -> float:
        return self.initial_lr / 10_000


class WordIndex:
    """Row lookup for a vector space, keyed by (language tag, word)."""

    def __init__(self, words: Sequence[Word], languages: Sequence[LanguageTag]) -> None:
        if len(words) != len(languages):
            raise SpaceFormatError("<index>", None, "words and language tags differ in length")

        self.backward: tuple[Word, ...] = tuple(words)
        self.language_of: tuple[LanguageTag, ...] = tuple(languages)
        self.forward: dict[tuple[LanguageTag, Word], int] = {}

        for row, key in enumerate(zip(self.language_of, self.backward)):
            if key in self.forward:
                raise SpaceFormatError("<index>", None, f"duplicate word '{tag_word(*key)}'")

            self.forward[key] = row

    def __len__(self) -> int:
        return len(self.backward)

    def __contains__(self, key: object) -> bool:
        return key in self.forward

    def row(self, word: Word, language: LanguageTag) -> int:
        row = self.forward.get((language, word))
        if row is None:
            raise OutOfVocabularyError(word, language)

        return row

    @cached_property
    def languages(self) -> tuple[LanguageTag, ...]:
        return tuple(dict.fromkeys(self.language_of))

    @cached_property
    def language_array(self) -> np.ndarray:
        return np.array(self.language_of, dtype=object)

    @cached_property
    def lexical_rank(self) -> np.ndarray:
        # Position of every row in (word, language) order, used as the tie-break key
        order = sorted(range(len(self.backward)), key=lambda row: (self.backward[row], self.language_of[row]))

        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order), dtype=np.int64)
        return rank

    def language_mask(self, language: LanguageTag) -> np.ndarray:
        return self.language_array == language


class VectorSpace:
    vectors: np.ndarray
    normalized: bool

    @property
    @abstractmethod
    def index(self) -> WordIndex:
        raise NotImplementedError()

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def row(self, word: Word, language: LanguageTag) -> int:
        return self.index.row(word, language)

    def vector(self, word: Word, language: LanguageTag) -> np.ndarray:
        return self.vectors[self.row(word, language)]


def _frozen_matrix(vectors: np.ndarray | Sequence[Sequence[float]], rows: int, source: str) -> np.ndarray:
    matrix = np.array(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != rows:
        raise SpaceFormatError(source, None, f"expected a matrix with {rows} rows, got shape {matrix.shape}")

    matrix.flags.writeable = False
    return matrix


@dataclass(frozen=True, eq=False)
class EmbeddingSpace(VectorSpace):
    language_tag: LanguageTag
    words: tuple[Word, ...]
    vectors: np.ndarray
    normalized: bool = False
    config: TrainConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "vectors", _frozen_matrix(self.vectors, len(self.words), self.language_tag))

    @cached_property
    def index(self) -> WordIndex:  # type: ignore[override]
        return WordIndex(self.words, [self.language_tag] * len(self.words))

    def __contains__(self, word: object) -> bool:
        return (self.language_tag, word) in self.index


@dataclass(frozen=True)
class AnchorSet:
    pairs: tuple[AnchorPair, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple((source, target) for source, target in self.pairs))

        if len(set(self.pairs)) != len(self.pairs):
            raise ConfigError("Anchor pairs must be unique")

    @classmethod
    def from_pairs(cls, pairs: Iterable[AnchorPair], provenance: str = "") -> "AnchorSet":
        return cls(tuple(dict.fromkeys((source, target) for source, target in pairs)), provenance)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True, eq=False)
class AlignmentMatrix:
    matrix: np.ndarray
    source_tag: LanguageTag
    target_tag: LanguageTag
    anchor_count: int

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise AlignmentError(f"Alignment matrix must be square, got shape {matrix.shape}")

        error = self.orthogonality_error(matrix)
        if error > 1e-6 * matrix.shape[0]:
            raise AlignmentError(f"Alignment matrix is not orthogonal: ||L^T L - I||_F = {error:.3e}")

        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @staticmethod
    def orthogonality_error(matrix: np.ndarray) -> float:
        return float(np.linalg.norm(matrix.T @ matrix - np.eye(matrix.shape[0]), ord="fro"))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])


@dataclass(frozen=True, eq=False)
class BilingualSpace(VectorSpace):
    words: tuple[Word, ...]
    languages: tuple[LanguageTag, ...]
    vectors: np.ndarray
    source_tag: LanguageTag
    target_tag: LanguageTag
    normalized: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "languages", tuple(self.languages))
        object.__setattr__(self, "vectors", _frozen_matrix(self.vectors, len(self.words), "bilingual space"))

        if self.source_tag == self.target_tag:
            raise ConfigError(f"Source and target language must differ, both are '{self.source_tag}'")

        unknown = set(self.languages) - {self.source_tag, self.target_tag}
        if len(unknown) > 0:
            raise ConfigError(f"Unexpected language tags {sorted(unknown)} in bilingual space")

    @cached_property
    def index(self) -> WordIndex:  # type: ignore[override]
        return WordIndex(self.words, self.languages)

    def other_language(self, language: LanguageTag) -> LanguageTag:
        if language == self.source_tag:
            return self.target_tag

        if language == self.target_tag:
            return self.source_tag

        raise ConfigError(f"Language '{language}' is not part of this bilingual space")

    def tagged_words(self) -> list[TaggedWord]:
        return [tag_word(language, word) for language, word in zip(self.languages, self.words)]


@dataclass(frozen=True)
class Query:
    word: Word
    language_tag: LanguageTag
    target_language: LanguageTag | None = None

    @classmethod
    def parse(cls, token: TaggedWord, target_language: LanguageTag | None = None) -> "Query":
        language, word = split_tagged(token.strip())
        return cls(word, language, target_language)

    @property
    def key(self) -> TaggedWord:
        return tag_word(self.language_tag, self.word)

    def direction(self, space: BilingualSpace) -> tuple[LanguageTag, LanguageTag]:
        target = self.target_language if self.target_language is not None else space.other_language(self.language_tag)
        return self.language_tag, target


@dataclass(frozen=True)
class Candidate:
    word: Word
    language_tag: LanguageTag
    similarity: float

    @property
    def key(self) -> TaggedWord:
        return tag_word(self.language_tag, self.word)


@dataclass(frozen=True)
class ModularityScore:
    query: Query
    m: float
    eta_src: float
    eta_tgt: float
    k: int

    @classmethod
    def of(cls, query: Query, eta_src: float, eta_tgt: float, k: int) -> "ModularityScore":
        return cls(query, abs(eta_src - eta_tgt), eta_src, eta_tgt, k)


@dataclass(frozen=True)
class DynamicThresholdPolicy:
    group_boundaries: tuple[float, ...]
    group_thresholds: tuple[float, ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "group_boundaries", tuple(float(v) for v in self.group_boundaries))
        object.__setattr__(self, "group_thresholds", tuple(float(v) for v in self.group_thresholds))

        if len(self.group_boundaries) == 0 or len(self.group_boundaries) != len(self.group_thresholds):
            raise CalibrationError("A policy needs one boundary and one threshold per group")

        if any(lo >= hi for lo, hi in zip(self.group_boundaries, self.group_boundaries[1:])):
            raise CalibrationError(f"Group boundaries must be strictly increasing, got {self.group_boundaries}")

        if any(not -1.0 <= delta <= 1.0 for delta in self.group_thresholds):
            raise CalibrationError(f"Group thresholds must lie in [-1, 1], got {self.group_thresholds}")

        if self.k < 1:
            raise CalibrationError(f"k must be >= 1, got {self.k}")

    @property
    def n_groups(self) -> int:
        return len(self.group_boundaries)

    def group_of(self, modularity: float) -> int:
        for group, boundary in enumerate(self.group_boundaries):
            if modularity <= boundary:
                return group

        return self.n_groups - 1

    def threshold_for(self, modularity: float) -> float:
        return self.group_thresholds[self.group_of(modularity)]


@dataclass(frozen=True)
class GroundTruth:
    labels: Mapping[tuple[TaggedWord, TaggedWord], bool]
    per_query_relevant: Mapping[TaggedWord, int] = field(init=False)

    def __post_init__(self) -> None:
        relevant = Counter[TaggedWord]()
        for (query, candidate), is_relevant in self.labels.items():
            relevant[query] += int(is_relevant)

        object.__setattr__(self, "per_query_relevant", dict(relevant))

    @property
    def queries(self) -> list[TaggedWord]:
        return list(self.per_query_relevant)

    def __contains__(self, query: object) -> bool:
        return query in self.per_query_relevant

    def is_relevant(self, query: TaggedWord, candidate: TaggedWord) -> bool:
        return self.labels.get((query, candidate), False)

    def relevant_count(self, query: TaggedWord) -> int:
        return self.per_query_relevant.get(query, 0)

    def pool_size(self, query: TaggedWord) -> int:
        return sum(1 for q, _ in self.labels if q == query)


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    correct_ratio: float
    retrieved_count: int
    relevant_retrieved: int
    relevant_total: int
    precision_defined: bool = True
    mrr: float | None = None
    mrr_answerable: float | None = None
    per_query_ranks: Mapping[TaggedWord, int | None] = field(default_factory=dict)
