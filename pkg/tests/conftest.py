from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from crosschv.datamodel import AnchorSet, BilingualSpace, EmbeddingSpace, GroundTruth, Query, tag_word


def unit_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    vectors = rng.standard_normal((rows, dim))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_bilingual_space(seed: int, words_per_language: int = 250, dim: int = 16) -> BilingualSpace:
    rng = np.random.default_rng(seed)
    words = [f"s{i}" for i in range(words_per_language)] + [f"t{i}" for i in range(words_per_language)]
    languages = ["en"] * words_per_language + ["zh"] * words_per_language
    return BilingualSpace(words, languages, unit_rows(rng, len(words), dim), "en", "zh")


@dataclass
class PlantedRotation:
    source: EmbeddingSpace
    target: EmbeddingSpace
    rotation: np.ndarray
    anchors: AnchorSet
    held_out: AnchorSet


def planted_rotation(seed: int, words: int = 200, dim: int = 8, noise: float = 0.0) -> PlantedRotation:
    rng = np.random.default_rng(seed)

    source_vectors = unit_rows(rng, words, dim)
    rotation = random_rotation(rng, dim)

    target_vectors = source_vectors @ rotation
    if noise > 0:
        target_vectors = target_vectors + rng.normal(0.0, noise, target_vectors.shape)
        target_vectors /= np.linalg.norm(target_vectors, axis=1, keepdims=True)

    source = EmbeddingSpace("zh", tuple(f"src{i}" for i in range(words)), source_vectors, normalized=True)
    target = EmbeddingSpace("en", tuple(f"tgt{i}" for i in range(words)), target_vectors, normalized=True)

    pairs = [(f"src{i}", f"tgt{i}") for i in range(words)]
    return PlantedRotation(
        source,
        target,
        rotation,
        AnchorSet(tuple(pairs[: 2 * dim]), "planted"),
        AnchorSet(tuple(pairs[2 * dim :]), "planted held-out"),
    )


@pytest.fixture
def planted() -> PlantedRotation:
    return planted_rotation(seed=7)


@dataclass
class BiasedRegion:
    space: BilingualSpace
    queries: list[Query]
    truth: GroundTruth
    biased: set[str]


def biased_region(seed: int, n_queries: int = 8, shift: float = 0.15) -> BiasedRegion:
    """Every query has three own-language neighbors at cosine 0.8, two relevant and two non-relevant
    other-language words. Half of the queries sit in a region where the other language is ``shift`` farther away.
    """
    rng = np.random.default_rng(seed)

    own_neighbors = 3
    per_query = own_neighbors + 4
    dim = n_queries * (1 + per_query)

    words = []
    languages = []
    vectors = []
    labels = {}
    biased = set()

    def add(word: str, language: str, axis: int, cosine: float, free_axis: int) -> None:
        vector = np.zeros(dim)
        vector[axis] = cosine
        vector[free_axis] = np.sqrt(1.0 - cosine**2)

        words.append(word)
        languages.append(language)
        vectors.append(vector)

    free_axis = n_queries
    for i in range(n_queries):
        query = f"q{i}"
        words.append(query)
        languages.append("en")
        vectors.append(np.eye(dim)[i])

        is_biased = i % 2 == 1
        offset = shift if is_biased else 0.0
        if is_biased:
            biased.add(tag_word("en", query))

        for j in range(own_neighbors):
            add(f"{query}own{j}", "en", i, 0.8, free_axis)
            free_axis += 1

        for j in range(2):
            word = f"{query}rel{j}"
            add(word, "zh", i, 0.70 - offset + rng.uniform(-0.02, 0.02), free_axis)
            labels[(tag_word("en", query), tag_word("zh", word))] = True
            free_axis += 1

        for j in range(2):
            word = f"{query}non{j}"
            add(word, "zh", i, 0.55 - offset + rng.uniform(-0.02, 0.02), free_axis)
            labels[(tag_word("en", query), tag_word("zh", word))] = False
            free_axis += 1

    space = BilingualSpace(words, languages, np.array(vectors), "en", "zh")
    queries = [Query(f"q{i}", "en") for i in range(n_queries)]
    return BiasedRegion(space, queries, GroundTruth(labels), biased)


@pytest.fixture
def biased() -> BiasedRegion:
    return biased_region(seed=3)


def two_cluster_documents(seed: int, sentences: int, words_per_cluster: int = 10, length: int = 10) -> list[str]:
    rng = np.random.default_rng(seed)

    documents = []
    for i in range(sentences):
        prefix = "a" if i % 2 == 0 else "b"
        picks = rng.integers(0, words_per_cluster, size=length)
        documents.append(" ".join(f"{prefix}{pick}" for pick in picks))

    return documents


@dataclass
class CliFixture:
    root: Path
    english_corpus: Path
    chinese_corpus: Path
    anchors: Path
    queries: Path
    truth: Path


def write_lines(path: Path, lines: list[str]) -> Path:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


@pytest.fixture
def cli_fixture(tmp_path: Path) -> CliFixture:
    rng = np.random.default_rng(11)

    english = []
    chinese = []
    for i in range(400):
        topic = i % 4
        picks = rng.integers(0, 6, size=8)
        english.append(" ".join(f"word{topic}x{pick}" for pick in picks) + ".")
        chinese.append(" ".join(f"詞{topic}之{pick}" for pick in picks))

    anchors = [f"word{topic}x{pick}\t詞{topic}之{pick}" for topic in range(4) for pick in range(0, 6, 2)]
    queries = ["en:word0x1", "en:word1x3", "en:word2x5", "en:missing"]

    truth = []
    for query in queries[:3]:
        topic, pick = query[len("en:word") :].split("x")
        for candidate in range(6):
            truth.append(f"{query}\tzh:詞{topic}之{candidate}\t{int(candidate == int(pick))}")

    return CliFixture(
        tmp_path,
        write_lines(tmp_path / "en.txt", english),
        write_lines(tmp_path / "zh.txt", chinese),
        write_lines(tmp_path / "anchors.tsv", ["# synthetic anchors", *anchors]),
        write_lines(tmp_path / "queries.txt", queries),
        write_lines(tmp_path / "truth.tsv", truth),
    )
