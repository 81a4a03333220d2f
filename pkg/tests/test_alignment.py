from pathlib import Path

import numpy as np
import pytest

from crosschv.alignment import (
    align,
    build_bilingual_space,
    filter_anchors,
    load_alignment,
    load_anchors,
    report_anchors,
    save_alignment,
    save_anchors,
    solve_procrustes,
    subsample_anchors,
)
from crosschv.analysis.data import translation_precision_at_k
from crosschv.datamodel import AlignmentMatrix, AnchorSet, EmbeddingSpace
from crosschv.errors import AlignmentError, ConfigError, EmptyAnchorError
from tests.conftest import PlantedRotation, planted_rotation, random_rotation, unit_rows


def space_of(language: str, prefix: str, vectors: np.ndarray) -> EmbeddingSpace:
    return EmbeddingSpace(language, tuple(f"{prefix}{i}" for i in range(len(vectors))), vectors, normalized=True)


def test_identical_spaces_align_to_identity():
    vectors = unit_rows(np.random.default_rng(0), 50, 8)
    source = space_of("zh", "w", vectors)
    target = space_of("en", "w", vectors)

    alignment = solve_procrustes(AnchorSet(tuple((f"w{i}", f"w{i}") for i in range(20))), source, target)

    assert np.linalg.norm(alignment.matrix - np.eye(8)) <= 1e-6


def test_planted_rotation_is_recovered(planted: PlantedRotation):
    alignment = solve_procrustes(planted.anchors, planted.source, planted.target)

    assert np.linalg.norm(alignment.matrix - planted.rotation, ord="fro") <= 1e-4
    assert alignment.anchor_count == 16


def test_planted_translations_rank_first(planted: PlantedRotation):
    _, _, bilingual = align(planted.source, planted.target, planted.anchors)

    assert translation_precision_at_k(bilingual, planted.held_out, k=1) == 1.0

    for source_word, target_word in planted.anchors:
        source_vector = bilingual.vector(source_word, "zh")
        target_vector = bilingual.vector(target_word, "en")
        assert source_vector @ target_vector >= 0.99


def test_large_noiseless_rotation_is_recovered():
    large = planted_rotation(seed=17, words=2000, dim=32)

    _, alignment, bilingual = align(large.source, large.target, large.anchors)

    assert np.linalg.norm(alignment.matrix - large.rotation, ord="fro") <= 1e-4
    assert translation_precision_at_k(bilingual, large.held_out, k=1) == 1.0


def test_noisy_planted_rotation_still_translates():
    noisy = planted_rotation(seed=13, words=2000, dim=32, noise=0.05)

    _, _, bilingual = align(noisy.source, noisy.target, noisy.anchors)

    assert translation_precision_at_k(bilingual, noisy.held_out, k=1) >= 0.9


@pytest.mark.parametrize("seed", range(100))
def test_alignments_are_orthogonal(seed: int):
    rng = np.random.default_rng(seed)
    dim = int(rng.choice([8, 32, 100]))
    source = space_of("zh", "s", unit_rows(rng, 3 * dim, dim))
    target = space_of("en", "t", unit_rows(rng, 3 * dim, dim))
    anchors = AnchorSet(tuple((f"s{i}", f"t{i}") for i in range(int(rng.integers(dim, 3 * dim + 1)))))

    alignment = solve_procrustes(anchors, source, target)

    assert AlignmentMatrix.orthogonality_error(alignment.matrix) <= 1e-6 * dim


def test_rank_one_anchors_stay_orthogonal():
    rng = np.random.default_rng(1)
    direction = unit_rows(rng, 1, 8)
    source = space_of("zh", "s", np.vstack([direction, direction, unit_rows(rng, 5, 8)]))
    target = space_of("en", "t", np.vstack([-direction, -direction, unit_rows(rng, 5, 8)]))

    alignment = solve_procrustes(AnchorSet((("s0", "t0"), ("s1", "t1"))), source, target)

    assert AlignmentMatrix.orthogonality_error(alignment.matrix) <= 1e-6 * 8


def test_anchor_order_does_not_matter(planted: PlantedRotation):
    reversed_anchors = AnchorSet(tuple(reversed(planted.anchors.pairs)))

    forward = solve_procrustes(planted.anchors, planted.source, planted.target)
    backward = solve_procrustes(reversed_anchors, planted.source, planted.target)

    assert np.linalg.norm(forward.matrix - backward.matrix) <= 1e-10


def test_mapping_preserves_cosines():
    rng = np.random.default_rng(5)
    source = space_of("zh", "s", unit_rows(rng, 300, 16))
    target = space_of("en", "t", unit_rows(rng, 300, 16))

    _, alignment, bilingual = align(source, target, AnchorSet(tuple((f"s{i}", f"t{i}") for i in range(40))))

    pairs = rng.integers(0, 300, size=(1000, 2))
    before = np.einsum("pd,pd->p", source.vectors[pairs[:, 0]], source.vectors[pairs[:, 1]])
    after = np.einsum("pd,pd->p", bilingual.vectors[pairs[:, 0]], bilingual.vectors[pairs[:, 1]])

    assert np.max(np.abs(after - before)) <= 1e-6
    assert alignment.dim == 16


def test_bilingual_space_stacks_source_first():
    source = space_of("zh", "s", np.eye(3)[:2])
    target = space_of("en", "t", np.eye(3))

    bilingual = build_bilingual_space(source, target, AlignmentMatrix(np.eye(3), "zh", "en", 0))

    assert len(bilingual) == 5
    assert np.array_equal(bilingual.vectors, np.vstack([np.eye(3)[:2], np.eye(3)]))
    assert bilingual.languages == ("zh", "zh", "en", "en", "en")
    assert np.allclose(np.linalg.norm(bilingual.vectors, axis=1), 1.0, atol=1e-6)


def test_same_surface_form_stays_distinct():
    source = space_of("zh", "w", np.eye(2))
    target = space_of("en", "w", np.eye(2)[::-1])

    bilingual = build_bilingual_space(source, target, AlignmentMatrix(np.eye(2), "zh", "en", 0))

    assert bilingual.row("w0", "zh") != bilingual.row("w0", "en")


def test_unnormalized_spaces_are_rejected():
    source = EmbeddingSpace("zh", ("s0", "s1"), 2 * np.eye(2))
    target = space_of("en", "t", np.eye(2))

    with pytest.raises(AlignmentError, match="zh space must be normalized"):
        build_bilingual_space(source, target, AlignmentMatrix(np.eye(2), "zh", "en", 0))

    with pytest.raises(AlignmentError, match="zh space must be normalized"):
        align(source, target, AnchorSet((("s0", "t0"), ("s1", "t1"))))


def test_direction_is_a_parameter(planted: PlantedRotation):
    inverse = AnchorSet(tuple((target, source) for source, target in planted.anchors))

    _, alignment, bilingual = align(planted.target, planted.source, inverse)

    assert np.linalg.norm(alignment.matrix - planted.rotation.T) <= 1e-4
    assert bilingual.source_tag == "en"


def test_filter_anchors_keeps_order():
    source = space_of("zh", "s", np.eye(3))
    target = space_of("en", "t", np.eye(3))
    anchors = AnchorSet((("s2", "t0"), ("s9", "t1"), ("s0", "t2"), ("s1", "t7")))

    kept = filter_anchors(anchors, source, target)
    report = report_anchors(anchors, source, target)

    assert kept.pairs == (("s2", "t0"), ("s0", "t2"))
    assert [pair for pair, _ in report.dropped] == [("s9", "t1"), ("s1", "t7")]
    assert "zh:s9" in report.dropped[0][1]


def test_filter_anchors_identity():
    source = space_of("zh", "s", np.eye(3))
    target = space_of("en", "t", np.eye(3))
    anchors = AnchorSet(tuple((f"s{i}", f"t{i}") for i in range(3)))

    assert filter_anchors(anchors, source, target) == anchors


def test_no_surviving_anchor_is_an_error():
    source = space_of("zh", "s", np.eye(3))
    target = space_of("en", "t", np.eye(3))

    with pytest.raises(EmptyAnchorError):
        filter_anchors(AnchorSet((("x", "y"),)), source, target)


def test_dimension_mismatch():
    source = space_of("zh", "s", np.eye(3))
    target = space_of("en", "t", np.eye(4))

    with pytest.raises(AlignmentError, match="d=3"):
        solve_procrustes(AnchorSet((("s0", "t0"),)), source, target)


def test_empty_anchor_set():
    source = space_of("zh", "s", np.eye(3))

    with pytest.raises(EmptyAnchorError):
        solve_procrustes(AnchorSet(()), source, source)


def test_non_orthogonal_matrix_is_rejected():
    with pytest.raises(AlignmentError):
        AlignmentMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]), "zh", "en", 0)


def test_duplicate_anchor_pairs():
    with pytest.raises(ConfigError):
        AnchorSet((("s0", "t0"), ("s0", "t0")))

    assert len(AnchorSet.from_pairs([("s0", "t0"), ("s0", "t0"), ("s0", "t1")])) == 2


def test_anchor_file_round_trip(tmp_path: Path):
    path = tmp_path / "anchors.tsv"
    lines = ["# langlinks", "高血壓\thypertension", "", "腹瀉\tdiarrhea", "高血壓\thypertension"]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    anchors = load_anchors(path)
    save_anchors(anchors, tmp_path / "copy.tsv")

    assert anchors.pairs == (("高血壓", "hypertension"), ("腹瀉", "diarrhea"))
    assert load_anchors(tmp_path / "copy.tsv").pairs == anchors.pairs


def test_malformed_anchor_line(tmp_path: Path):
    path = tmp_path / "anchors.tsv"
    path.write_text("高血壓 hypertension\n", encoding="utf-8")

    with pytest.raises(ConfigError, match=":1:"):
        load_anchors(path)


def test_subsample_anchors_is_seeded(planted: PlantedRotation):
    first = subsample_anchors(planted.held_out, 10, seed=4)
    second = subsample_anchors(planted.held_out, 10, seed=4)

    assert first.pairs == second.pairs
    assert len(first) == 10
    assert set(first.pairs) <= set(planted.held_out.pairs)

    with pytest.raises(ConfigError):
        subsample_anchors(planted.anchors, 0, seed=4)


def test_alignment_file_round_trip(tmp_path: Path):
    rotation = random_rotation(np.random.default_rng(8), 5)
    alignment = AlignmentMatrix(rotation, "zh", "en", 12)

    save_alignment(alignment, tmp_path / "L.txt")
    loaded = load_alignment(tmp_path / "L.txt", "zh", "en")

    assert np.array_equal(loaded.matrix, alignment.matrix)
    assert (tmp_path / "L.txt").read_text().splitlines()[0] == "5"
