"""Corpus ingestion: tokenization, noise filtering and multiword phrase merging."""

import logging
import unicodedata
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from crosschv.datamodel import Bigram, Document, PhraseModel, TokenizedCorpus, TokenizerConfig, Word
from crosschv.errors import ConfigError, DecodingError, EmptyModelError

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 5.0
DEFAULT_THRESHOLD = 10.0
DEFAULT_PASSES = 2


def read_documents(path: str | Path) -> Iterator[str]:
    """Yield one document per line of a UTF-8 file, without the line terminator."""
    offset = 0
    with open(path, "rb") as file:
        for raw_line in file:
            try:
                line = raw_line.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DecodingError(str(path), offset + e.start, e.reason) from e

            if offset == 0:
                line = line.removeprefix("\ufeff")

            offset += len(raw_line)
            yield line.rstrip("\r\n")


def load_stopwords(path: str | Path) -> frozenset[Word]:
    return frozenset(line.strip() for line in read_documents(path) if line.strip() != "")


def default_english_stopwords() -> frozenset[Word]:
    text = resources.files("crosschv").joinpath("data", "stopwords_en.txt").read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip() != "")


def load_user_dictionary(path: str | Path) -> tuple[tuple[Word, ...], ...]:
    return tuple(tuple(line.split()) for line in read_documents(path) if line.strip() != "")


def _is_noise_char(ch: str) -> bool:
    category = unicodedata.category(ch)
    return category.startswith("P") or category.startswith("S")


def _strip_noise(token: str) -> str:
    start, end = 0, len(token)

    while start < end and _is_noise_char(token[start]):
        start += 1

    while end > start and _is_noise_char(token[end - 1]):
        end -= 1

    return token[start:end]


def _is_noise_token(token: str) -> bool:
    return all(_is_noise_char(ch) for ch in token)


def _merge_user_entries(tokens: list[Word], entries: Mapping[Word, list[tuple[Word, ...]]], joiner: str) -> list[Word]:
    merged = []
    i = 0

    while i < len(tokens):
        match = next(
            (entry for entry in entries.get(tokens[i], []) if tuple(tokens[i : i + len(entry)]) == entry),
            None,
        )

        if match is not None and len(match) > 1:
            merged.append(joiner.join(match))
            i += len(match)
        else:
            merged.append(tokens[i])
            i += 1

    return merged


def _dictionary_entries(config: TokenizerConfig) -> dict[Word, list[tuple[Word, ...]]]:
    entries: dict[Word, list[tuple[Word, ...]]] = {}
    for entry in config.user_dictionary:
        if config.mode == "whitespace" and config.lowercase:
            entry = tuple(token.lower() for token in entry)

        entries.setdefault(entry[0], []).append(entry)

    # Longest entry wins when several start with the same token
    for candidates in entries.values():
        candidates.sort(key=len, reverse=True)

    return entries


def tokenize_document(text: str, config: TokenizerConfig) -> Document:
    if config.mode == "whitespace":
        if config.lowercase:
            text = text.lower()

        tokens = [_strip_noise(token) for token in text.split()]
    else:
        tokens = text.split()

    tokens = [token for token in tokens if token != "" and not _is_noise_token(token)]

    if len(config.user_dictionary) > 0:
        tokens = _merge_user_entries(tokens, _dictionary_entries(config), config.joiner)

    return tuple(token for token in tokens if token not in config.stopwords)


def _decode(raw_text: Iterable[str | bytes]) -> Iterator[str]:
    offset = 0
    for document in raw_text:
        if isinstance(document, bytes):
            try:
                text = document.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DecodingError("<document stream>", offset + e.start, e.reason) from e

            offset += len(document)
            yield text
        else:
            offset += len(document.encode("utf-8", errors="surrogatepass"))
            yield document


def tokenize(raw_text: Iterable[str | bytes], config: TokenizerConfig | None = None) -> TokenizedCorpus:
    config = config or TokenizerConfig()
    texts = list(_decode(raw_text))

    if config.workers > 1 and len(texts) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            chunksize = max(len(texts) // (config.workers * 4), 1)
            documents = list(executor.map(partial(tokenize_document, config=config), texts, chunksize=chunksize))
    else:
        documents = [tokenize_document(text, config) for text in texts]

    corpus = TokenizedCorpus.from_documents(documents, config.language_tag)
    logger.info(
        "tokenized %i %s documents into %i tokens (%i types)",
        len(corpus),
        corpus.language_tag,
        corpus.total_tokens,
        len(corpus.token_counts),
    )

    return corpus


def remove_stopwords(corpus: TokenizedCorpus, stopwords: Iterable[Word]) -> TokenizedCorpus:
    stopwords = frozenset(stopwords)
    return TokenizedCorpus.from_documents(
        (tuple(token for token in document if token not in stopwords) for document in corpus.documents),
        corpus.language_tag,
    )


def score_bigram(bigram_count: int, a_count: int, b_count: int, total_tokens: int, delta: float) -> float:
    return (bigram_count - delta) / (a_count * b_count) * total_tokens


def _score_bigrams(documents: Iterable[Document], delta: float, threshold: float) -> dict[Bigram, float]:
    unigrams = Counter[Word]()
    bigrams = Counter[Bigram]()

    for document in documents:
        unigrams.update(document)
        bigrams.update(zip(document, document[1:]))

    total_tokens = sum(unigrams.values())

    scores = {}
    for (a, b), count in sorted(bigrams.items()):
        score = score_bigram(count, unigrams[a], unigrams[b], total_tokens, delta)
        if score > threshold:
            scores[(a, b)] = score

    return scores


def _merge_bigrams(document: Document, bigrams: Mapping[Bigram, float], joiner: str) -> Document:
    merged = []
    i = 0

    while i < len(document):
        if i + 1 < len(document) and (document[i], document[i + 1]) in bigrams:
            merged.append(document[i] + joiner + document[i + 1])
            i += 2
        else:
            merged.append(document[i])
            i += 1

    return tuple(merged)


def learn_phrases(
    corpus: TokenizedCorpus,
    delta: float = DEFAULT_DELTA,
    threshold: float = DEFAULT_THRESHOLD,
    passes: int = DEFAULT_PASSES,
    joiner: str = "_",
) -> PhraseModel:
    if passes < 1:
        raise ConfigError(f"passes must be >= 1, got {passes}")

    if delta < 0:
        raise ConfigError(f"delta must be >= 0, got {delta}")

    if corpus.total_tokens == 0:
        raise EmptyModelError(f"Cannot learn phrases from the empty {corpus.language_tag} corpus")

    scores: dict[Bigram, float] = {}
    documents = corpus.documents

    for current_pass in range(1, passes + 1):
        found = _score_bigrams(documents, delta, threshold)
        logger.info("phrase pass %i/%i found %i bigrams above %s", current_pass, passes, len(found), threshold)

        if len(found) == 0:
            break

        scores.update(found)
        documents = tuple(_merge_bigrams(document, found, joiner) for document in documents)

    return PhraseModel(scores, delta, threshold, joiner, passes)


def apply_phrases(corpus: TokenizedCorpus, model: PhraseModel) -> TokenizedCorpus:
    if len(model) == 0:
        return corpus

    documents = corpus.documents
    for _ in range(model.passes):
        merged = tuple(_merge_bigrams(document, model.bigram_scores, model.joiner) for document in documents)
        if merged == documents:
            break

        documents = merged

    return TokenizedCorpus.from_documents(documents, corpus.language_tag)


def save_phrase_model(model: PhraseModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        params = [f"delta={model.delta!r}", f"threshold={model.threshold!r}", f"passes={model.passes}"]
        file.write("# " + "\t".join([*params, f"joiner={model.joiner}"]) + "\n")

        for (a, b), score in model.bigram_scores.items():
            file.write(f"{a}\t{b}\t{score!r}\n")


def load_phrase_model(path: str | Path) -> PhraseModel:
    params: dict[str, str] = {"delta": str(DEFAULT_DELTA), "threshold": str(DEFAULT_THRESHOLD), "passes": "1"}
    params["joiner"] = "_"
    scores: dict[Bigram, float] = {}

    for line_number, line in enumerate(read_documents(path), start=1):
        if line.startswith("#"):
            for item in line[1:].strip().split("\t"):
                key, _, value = item.partition("=")
                params[key.strip()] = value
            continue

        if line.strip() == "":
            continue

        fields = line.split("\t")
        if len(fields) != 3:
            raise ConfigError(f"{path}:{line_number}: expected token_a<TAB>token_b<TAB>score")

        scores[(fields[0], fields[1])] = float(fields[2])

    return PhraseModel(
        scores,
        float(params["delta"]),
        float(params["threshold"]),
        params["joiner"],
        int(params["passes"]),
    )
