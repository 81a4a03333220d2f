import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import jsonpickle
import numpy as np

from crosschv.datamodel import (
    BilingualSpace,
    EmbeddingSpace,
    LanguageTag,
    TrainConfig,
    VectorSpace,
    Word,
    split_tagged,
)
from crosschv.errors import ConfigError, SpaceFormatError
from crosschv.text_pipeline import read_documents

logger = logging.getLogger(__name__)

UNDETERMINED_LANGUAGE = "und"

type SpaceFormat = Literal["word2vec", "bilingual"]


@dataclass(frozen=True)
class SpaceMetadata:
    kind: SpaceFormat
    language_tag: LanguageTag | None
    normalized: bool
    source_tag: LanguageTag | None = None
    target_tag: LanguageTag | None = None
    config: TrainConfig | None = None


def metadata_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_metadata(metadata: SpaceMetadata, path: str | Path) -> None:
    metadata_path(path).write_text(jsonpickle.encode(metadata, unpicklable=False, indent=2), encoding="utf-8")


def load_metadata(path: str | Path) -> SpaceMetadata | None:
    sidecar = metadata_path(path)
    if not sidecar.is_file():
        return None

    data = jsonpickle.decode(sidecar.read_text(encoding="utf-8"))
    config = data.get("config")

    return SpaceMetadata(
        kind=data["kind"],
        language_tag=data.get("language_tag"),
        normalized=bool(data["normalized"]),
        source_tag=data.get("source_tag"),
        target_tag=data.get("target_tag"),
        config=TrainConfig(**config) if config is not None else None,
    )


def save_space(space: EmbeddingSpace | BilingualSpace, path: str | Path) -> None:
    """Write a space in word2vec text format plus its metadata sidecar."""
    if isinstance(space, BilingualSpace):
        words = space.tagged_words()
        metadata = SpaceMetadata("bilingual", None, space.normalized, space.source_tag, space.target_tag)
    else:
        words = list(space.words)
        metadata = SpaceMetadata("word2vec", space.language_tag, space.normalized, config=space.config)

    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(f"{len(space)} {space.dim}\n")

        # repr() is the shortest text that parses back to the identical float
        for word, row in zip(words, space.vectors.tolist()):
            file.write(word + " " + " ".join(map(repr, row)) + "\n")

    save_metadata(metadata, path)
    logger.info("saved %i x %i space to %s", len(space), space.dim, path)


def _read_matrix(path: str | Path) -> tuple[list[Word], np.ndarray]:
    source = str(path)
    lines = read_documents(path)

    header = next(lines, None)
    fields = header.split() if header is not None else []
    if len(fields) != 2 or not all(field.isdigit() for field in fields):
        raise SpaceFormatError(source, 1, f"malformed header {header!r}, expected '<vocab_count> <dim>'")

    count, dim = int(fields[0]), int(fields[1])
    if dim < 1:
        raise SpaceFormatError(source, 1, f"dimension must be >= 1, got {dim}")

    words: list[Word] = []
    seen: set[Word] = set()
    vectors = np.empty((count, dim), dtype=np.float64)

    for line_number, line in enumerate(lines, start=2):
        if line.strip() == "":
            continue

        parts = line.split()
        if len(parts) != dim + 1:
            raise SpaceFormatError(source, line_number, f"expected a word and {dim} values, got {len(parts) - 1}")

        if len(words) == count:
            raise SpaceFormatError(source, line_number, f"more rows than the {count} declared in the header")

        word = parts[0]
        if word in seen:
            raise SpaceFormatError(source, line_number, f"duplicate word '{word}'")

        try:
            vectors[len(words)] = [float(value) for value in parts[1:]]
        except ValueError as e:
            raise SpaceFormatError(source, line_number, f"invalid number: {e}") from e

        seen.add(word)
        words.append(word)

    if len(words) != count:
        raise SpaceFormatError(source, None, f"header declares {count} rows, found {len(words)}")

    return words, vectors


def _looks_normalized(vectors: np.ndarray) -> bool:
    return bool(np.all(np.abs(np.linalg.norm(vectors, axis=1) - 1.0) <= 1e-6))


def load_space(
    path: str | Path,
    expected_format: SpaceFormat = "word2vec",
    language_tag: LanguageTag | None = None,
) -> EmbeddingSpace | BilingualSpace:
    """Load a space in word2vec text format, including files trained by other tools."""
    if expected_format not in ("word2vec", "bilingual"):
        raise ConfigError(f"Unknown space format '{expected_format}'")

    words, vectors = _read_matrix(path)
    metadata = load_metadata(path)
    normalized = metadata.normalized if metadata is not None else _looks_normalized(vectors)

    if expected_format == "word2vec":
        if language_tag is None:
            language_tag = metadata.language_tag if metadata is not None else None

        config = metadata.config if metadata is not None else None
        return EmbeddingSpace(language_tag or UNDETERMINED_LANGUAGE, tuple(words), vectors, normalized, config)

    try:
        tagged = [split_tagged(word) for word in words]
    except ConfigError as e:
        raise SpaceFormatError(str(path), None, f"bilingual spaces need tag-prefixed words: {e}") from e

    languages = list(dict.fromkeys(language for language, _ in tagged))
    if metadata is not None and metadata.source_tag is not None and metadata.target_tag is not None:
        source_tag, target_tag = metadata.source_tag, metadata.target_tag
    elif len(languages) == 2:
        source_tag, target_tag = languages
    else:
        raise SpaceFormatError(str(path), None, f"expected exactly two languages, found {languages}")

    return BilingualSpace(
        tuple(word for _, word in tagged),
        tuple(language for language, _ in tagged),
        vectors,
        source_tag,
        target_tag,
        normalized,
    )


def resolve_row(space: VectorSpace, word: Word) -> int:
    """Row of ``word``; bilingual spaces take tag-prefixed words such as ``en:fever``."""
    if isinstance(space, EmbeddingSpace):
        return space.row(word, space.language_tag)

    language, plain_word = split_tagged(word)
    return space.row(plain_word, language)


def similarities(space: VectorSpace, row: int) -> np.ndarray:
    """Cosine of one row against every row of a normalized space."""
    return space.vectors @ space.vectors[row]


def cosine(space: VectorSpace, word_a: Word, word_b: Word) -> float:
    a = space.vectors[resolve_row(space, word_a)]
    b = space.vectors[resolve_row(space, word_b)]

    if space.normalized:
        return float(a @ b)

    return float((a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))
