"""Supervised orthogonal alignment of two monolingual spaces into one bilingual space."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from crosschv.datamodel import AlignmentMatrix, AnchorPair, AnchorSet, BilingualSpace, EmbeddingSpace
from crosschv.errors import AlignmentError, ConfigError, EmptyAnchorError
from crosschv.text_pipeline import read_documents

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnchorFilterReport:
    kept: AnchorSet
    dropped: tuple[tuple[AnchorPair, str], ...]

    @property
    def total(self) -> int:
        return len(self.kept) + len(self.dropped)


def load_anchors(path: str | Path) -> AnchorSet:
    pairs = []
    for line_number, line in enumerate(read_documents(path), start=1):
        if line.startswith("#") or line.strip() == "":
            continue

        fields = line.split("\t")
        if len(fields) != 2 or fields[0].strip() == "" or fields[1].strip() == "":
            raise ConfigError(f"{path}:{line_number}: expected source_word<TAB>target_word")

        pairs.append((fields[0].strip(), fields[1].strip()))

    anchors = AnchorSet.from_pairs(pairs, provenance=str(path))
    if len(anchors) < len(pairs):
        logger.warning("dropped %i duplicate anchor pairs from %s", len(pairs) - len(anchors), path)

    return anchors


def save_anchors(anchors: AnchorSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        if anchors.provenance != "":
            file.write(f"# {anchors.provenance}\n")

        for source, target in anchors:
            file.write(f"{source}\t{target}\n")


def subsample_anchors(anchors: AnchorSet, size: int, seed: int) -> AnchorSet:
    """Random subset of ``size`` anchors, kept in their original order."""
    if not 1 <= size <= len(anchors):
        raise ConfigError(f"Cannot sample {size} anchors out of {len(anchors)}")

    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(anchors), size=size, replace=False))
    return AnchorSet(tuple(anchors.pairs[i] for i in chosen), f"{anchors.provenance} (sample of {size}, seed {seed})")


def report_anchors(anchors: AnchorSet, source: EmbeddingSpace, target: EmbeddingSpace) -> AnchorFilterReport:
    kept = []
    dropped = []

    for pair in anchors:
        source_word, target_word = pair
        missing = [
            f"{space.language_tag}:{word} not in vocabulary"
            for space, word in [(source, source_word), (target, target_word)]
            if word not in space
        ]

        if len(missing) == 0:
            kept.append(pair)
        else:
            dropped.append((pair, "; ".join(missing)))

    return AnchorFilterReport(AnchorSet(tuple(kept), anchors.provenance), tuple(dropped))


def filter_anchors(anchors: AnchorSet, source: EmbeddingSpace, target: EmbeddingSpace) -> AnchorSet:
    report = report_anchors(anchors, source, target)
    logger.info("kept %i of %i anchor pairs present in both vocabularies", len(report.kept), report.total)

    if len(report.kept) == 0:
        raise EmptyAnchorError(
            f"None of the {report.total} anchor pairs has its {source.language_tag} word "
            f"and {target.language_tag} word in the spaces"
        )

    return report.kept


def _check_dimensions(source: EmbeddingSpace, target: EmbeddingSpace) -> None:
    if source.dim != target.dim:
        raise AlignmentError(
            f"Dimension mismatch: {source.language_tag} space has d={source.dim}, "
            f"{target.language_tag} space has d={target.dim}"
        )


def solve_procrustes(anchors: AnchorSet, source: EmbeddingSpace, target: EmbeddingSpace) -> AlignmentMatrix:
    """Orthogonal L minimizing ||X L - Y||_F over the stacked anchor vectors X (source) and Y (target)."""
    _check_dimensions(source, target)

    if len(anchors) < 1:
        raise EmptyAnchorError("At least one anchor pair is required to solve the alignment")

    if len(anchors) < source.dim:
        logger.warning("only %i anchors for d=%i, the alignment is underdetermined", len(anchors), source.dim)

    source_rows = [source.row(word, source.language_tag) for word, _ in anchors]
    target_rows = [target.row(word, target.language_tag) for _, word in anchors]

    product = source.vectors[source_rows].T @ target.vectors[target_rows]
    u, _, vt = np.linalg.svd(product)

    return AlignmentMatrix(u @ vt, source.language_tag, target.language_tag, len(anchors))


def build_bilingual_space(source: EmbeddingSpace, target: EmbeddingSpace, alignment: AlignmentMatrix) -> BilingualSpace:
    _check_dimensions(source, target)

    if alignment.dim != source.dim:
        raise AlignmentError(f"Alignment matrix is {alignment.dim}x{alignment.dim}, spaces have d={source.dim}")

    for space in [source, target]:
        if not space.normalized:
            raise AlignmentError(f"The {space.language_tag} space must be normalized before alignment")

    vectors = np.vstack([source.vectors @ alignment.matrix, target.vectors])
    return BilingualSpace(
        source.words + target.words,
        (source.language_tag,) * len(source) + (target.language_tag,) * len(target),
        vectors,
        source.language_tag,
        target.language_tag,
    )


def align(
    source: EmbeddingSpace, target: EmbeddingSpace, anchors: AnchorSet
) -> tuple[AnchorSet, AlignmentMatrix, BilingualSpace]:
    kept = filter_anchors(anchors, source, target)
    alignment = solve_procrustes(kept, source, target)
    return kept, alignment, build_bilingual_space(source, target, alignment)


def save_alignment(alignment: AlignmentMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(f"{alignment.dim}\n")

        for row in alignment.matrix.tolist():
            file.write(" ".join(map(repr, row)) + "\n")


def load_alignment(path: str | Path, source_tag: str, target_tag: str, anchor_count: int = 0) -> AlignmentMatrix:
    lines = [line for line in read_documents(path) if line.strip() != ""]
    if len(lines) == 0 or not lines[0].strip().isdigit():
        raise AlignmentError(f"{path}: first line must hold the dimension d")

    dim = int(lines[0])
    rows = [[float(value) for value in line.split()] for line in lines[1:]]
    if len(rows) != dim or any(len(row) != dim for row in rows):
        raise AlignmentError(f"{path}: expected {dim} rows of {dim} values")

    return AlignmentMatrix(np.array(rows), source_tag, target_tag, anchor_count)
