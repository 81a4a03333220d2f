import logging
from pathlib import Path

import numpy as np
import pytest

from crosschv.alignment import align
from crosschv.analysis.evaluation import set_metrics
from crosschv.datamodel import BilingualSpace, Candidate, DynamicThresholdPolicy, GroundTruth, Query
from crosschv.errors import CalibrationError, ConfigError, NeighborhoodError, OutOfVocabularyError
from crosschv.expansion.retrieval import (
    best_threshold,
    calibrate_dynamic_threshold,
    expand_dynamic,
    expand_threshold,
    load_policy,
    load_queries,
    modularity,
    nearest_neighbors,
    save_policy,
    split_groups,
)
from crosschv.expansion.strategies import (
    DynamicThresholdStrategy,
    KnnStrategy,
    ThresholdStrategy,
    modularity_frame,
    read_expansion,
    write_expansion,
)
from tests.conftest import BiasedRegion, PlantedRotation, biased_region, random_bilingual_space, random_rotation


def brute_force_ranking(space: BilingualSpace, query: Query, language: str | None) -> list[tuple[float, str, str]]:
    row = space.row(query.word, query.language_tag)
    scores = space.vectors @ space.vectors[row]

    ranked = [
        (float(scores[i]), space.words[i], space.languages[i])
        for i in range(len(space))
        if i != row and (language is None or space.languages[i] == language)
    ]
    return sorted(ranked, key=lambda item: (-item[0], item[1], item[2]))


def brute_force_modularity(space: BilingualSpace, query: Query, k: int) -> float:
    own = brute_force_ranking(space, query, query.language_tag)[:k]
    other = brute_force_ranking(space, query, space.other_language(query.language_tag))[:k]

    return abs(float(np.mean([score for score, _, _ in own])) - float(np.mean([score for score, _, _ in other])))


def small_space() -> BilingualSpace:
    vectors = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.8, 0.6, 0.0],
            [0.6, 0.8, 0.0],
            [0.8, 0.0, 0.6],
            [0.0, 0.0, 1.0],
        ]
    )
    words = ("fever", "pyrexia", "chills", "發燒", "咳嗽")
    return BilingualSpace(words, ("en", "en", "en", "zh", "zh"), vectors, "en", "zh")


def test_nearest_neighbors_match_brute_force():
    space = random_bilingual_space(seed=0, words_per_language=300, dim=12)

    for word in ["s0", "s17", "s299"]:
        query = Query(word, "en")
        expected = brute_force_ranking(space, query, "zh")[:10]
        result = nearest_neighbors(space, query, 10, "zh")

        assert [(c.similarity, c.word, c.language_tag) for c in result] == expected


def test_nearest_neighbors_any_language_excludes_query():
    space = small_space()

    result = nearest_neighbors(space, Query("fever", "en"), 10)

    assert [c.key for c in result] == ["en:pyrexia", "zh:發燒", "en:chills", "zh:咳嗽"]


def test_single_target_word_is_always_returned():
    space = BilingualSpace(("fever", "cough", "發燒"), ("en", "en", "zh"), np.eye(3), "en", "zh")

    result = nearest_neighbors(space, Query("fever", "en"), 5, "zh")

    assert [c.word for c in result] == ["發燒"]


def test_ties_break_by_word():
    vectors = np.array([[1.0, 0.0], [0.6, 0.8], [0.6, 0.8], [0.6, -0.8]])
    space = BilingualSpace(("q", "b", "a", "c"), ("en", "zh", "zh", "zh"), vectors, "en", "zh")

    result = nearest_neighbors(space, Query("q", "en"), 2, "zh")

    assert [c.word for c in result] == ["a", "b"]


def test_planted_translation_ranks_first(planted: PlantedRotation):
    _, _, bilingual = align(planted.source, planted.target, planted.anchors)

    for i in [0, 50, 199]:
        top = nearest_neighbors(bilingual, Query(f"src{i}", "zh"), 1, "en")[0]
        assert top.word == f"tgt{i}"


def test_out_of_vocabulary_query():
    with pytest.raises(OutOfVocabularyError) as e:
        nearest_neighbors(small_space(), Query("ague", "en"), 3)

    assert (e.value.word, e.value.language) == ("ague", "en")


def test_invalid_k_and_language():
    with pytest.raises(ConfigError):
        nearest_neighbors(small_space(), Query("fever", "en"), 0)

    with pytest.raises(ConfigError):
        nearest_neighbors(small_space(), Query("fever", "en"), 3, "fr")


def test_threshold_keeps_candidates_above_delta():
    result = expand_threshold(small_space(), Query("fever", "en"), 0.5)

    assert [c.word for c in result] == ["發燒"]
    assert all(c.similarity >= 0.5 for c in result)


def test_threshold_extremes():
    space = random_bilingual_space(seed=4, words_per_language=150)
    query = Query("s3", "en")

    assert expand_threshold(space, query, 1.0) == []
    assert len(expand_threshold(space, query, -1.0, max_k=40)) == 40


def test_threshold_filtering_is_monotone():
    space = random_bilingual_space(seed=6, words_per_language=200)
    rng = np.random.default_rng(6)

    for i in rng.choice(200, size=100, replace=False):
        query = Query(f"s{i}", "en")
        low, high = sorted(rng.uniform(-0.2, 0.6, size=2))

        loose = expand_threshold(space, query, low, max_k=50)
        strict = expand_threshold(space, query, high, max_k=50)

        assert [c.key for c in strict] == [c.key for c in loose[: len(strict)]]
        assert all(a.similarity >= b.similarity for a, b in zip(loose, loose[1:]))


def test_invalid_delta():
    with pytest.raises(ConfigError):
        expand_threshold(small_space(), Query("fever", "en"), 1.5)


def test_modularity_arithmetic():
    vectors = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.8, 0.6, 0.0, 0.0],
            [0.5, 0.0, np.sqrt(0.75), 0.0],
        ]
    )
    space = BilingualSpace(("fever", "pyrexia", "發燒"), ("en", "en", "zh"), vectors, "en", "zh")

    score = modularity(space, Query("fever", "en"), 1)

    assert (score.eta_src, score.eta_tgt) == (pytest.approx(0.8), pytest.approx(0.5))
    assert score.m == pytest.approx(0.3)
    assert score.m == abs(score.eta_src - score.eta_tgt)


def test_modularity_is_zero_when_means_agree():
    vectors = np.array([[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [0.6, 0.0, 0.8]])
    space = BilingualSpace(("fever", "pyrexia", "發燒"), ("en", "en", "zh"), vectors, "en", "zh")

    assert modularity(space, Query("fever", "en"), 1).m == 0.0


@pytest.mark.parametrize("k", [1, 5, 10])
def test_modularity_matches_brute_force(k: int):
    for seed in range(50):
        space = random_bilingual_space(seed=seed, words_per_language=250, dim=16)

        for word, language in [("s0", "en"), ("t7", "zh"), ("s111", "en")]:
            query = Query(word, language)
            assert modularity(space, query, k).m == brute_force_modularity(space, query, k)


def test_modularity_survives_global_rotation():
    space = random_bilingual_space(seed=9, words_per_language=100)
    rotation = random_rotation(np.random.default_rng(9), space.dim)
    rotated = BilingualSpace(space.words, space.languages, space.vectors @ rotation, "en", "zh")

    for word in ["s1", "s50"]:
        query = Query(word, "en")
        assert modularity(rotated, query, 5).m == pytest.approx(modularity(space, query, 5).m, abs=1e-9)


def test_modularity_needs_enough_neighbors():
    with pytest.raises(NeighborhoodError):
        modularity(small_space(), Query("fever", "en"), 3)


def test_split_groups_gives_remainder_to_earliest():
    assert [len(group) for group in split_groups(list(range(10)), 4)] == [3, 3, 2, 2]
    assert split_groups([1, 2, 3], 1) == [[1, 2, 3]]


def test_biased_region_fixture_modularity(biased: BiasedRegion):
    scores = {query.key: modularity(biased.space, query, 3).m for query in biased.queries}

    assert max(m for key, m in scores.items() if key not in biased.biased) < min(
        m for key, m in scores.items() if key in biased.biased
    )


@pytest.mark.parametrize("seed", range(10))
def test_low_modularity_group_gets_higher_threshold(seed: int):
    fixture = biased_region(seed)

    policy = calibrate_dynamic_threshold(fixture.space, fixture.queries, fixture.truth, n_groups=2, k=3)

    assert policy.group_thresholds[0] > policy.group_thresholds[1]
    assert policy.group_thresholds == (0.60, 0.50)

    candidates = {q.key: nearest_neighbors(fixture.space, q, 100, "zh") for q in fixture.queries}
    _, single_f1 = best_threshold(candidates, fixture.truth, [0.50, 0.55, 0.60, 0.65, 0.70, 0.75])
    dynamic = {q.key: [c.key for c in expand_dynamic(fixture.space, q, policy)] for q in fixture.queries}

    assert set_metrics(dynamic, fixture.truth).f1 >= single_f1


def test_one_group_is_the_best_global_delta(biased: BiasedRegion):
    policy = calibrate_dynamic_threshold(biased.space, biased.queries, biased.truth, n_groups=1, k=3)

    candidates = {q.key: nearest_neighbors(biased.space, q, 100, "zh") for q in biased.queries}
    delta, _ = best_threshold(candidates, biased.truth, [0.50, 0.55, 0.60, 0.65, 0.70, 0.75])

    assert policy.group_thresholds == (delta,)


def test_calibration_errors(biased: BiasedRegion):
    with pytest.raises(CalibrationError):
        calibrate_dynamic_threshold(biased.space, biased.queries, biased.truth, delta_grid=[], k=3)

    with pytest.raises(CalibrationError):
        calibrate_dynamic_threshold(biased.space, biased.queries[:1], biased.truth, n_groups=2, k=3)

    unlabeled = [*biased.queries, Query("q0own0", "en")]
    with pytest.raises(CalibrationError, match="q0own0"):
        calibrate_dynamic_threshold(biased.space, unlabeled, biased.truth, n_groups=2, k=3)


def shared_modularity_fixture(related: list[float]) -> tuple[BilingualSpace, list[Query], GroundTruth]:
    """Query i has one own-language neighbor at cosine 0.8, one relevant other-language word at
    ``related[i]`` and one non-relevant word 0.15 below it, all on private axes.
    """
    dim = 4 * len(related)

    words = []
    languages = []
    vectors = []
    labels = {}

    def add(word: str, language: str, axis: int, cosine: float, free_axis: int) -> None:
        vector = np.zeros(dim)
        vector[axis] = cosine
        vector[free_axis] = np.sqrt(1.0 - cosine**2)

        words.append(word)
        languages.append(language)
        vectors.append(vector)

    for i, cosine in enumerate(related):
        free_axis = len(related) + 3 * i

        words.append(f"q{i}")
        languages.append("en")
        vectors.append(np.eye(dim)[i])

        add(f"q{i}own", "en", i, 0.8, free_axis)
        add(f"q{i}rel", "zh", i, cosine, free_axis + 1)
        add(f"q{i}non", "zh", i, cosine - 0.15, free_axis + 2)

        labels[(f"en:q{i}", f"zh:q{i}rel")] = True
        labels[(f"en:q{i}", f"zh:q{i}non")] = False

    space = BilingualSpace(words, languages, np.array(vectors), "en", "zh")
    return space, [Query(f"q{i}", "en") for i in range(len(related))], GroundTruth(labels)


def test_identical_modularity_collapses_to_one_group(caplog: pytest.LogCaptureFixture):
    space, queries, truth = shared_modularity_fixture([0.6] * 4)

    with caplog.at_level(logging.WARNING, logger="crosschv.expansion.retrieval"):
        policy = calibrate_dynamic_threshold(space, queries, truth, n_groups=2, k=1, delta_grid=[0.3, 0.5])

    assert policy.n_groups == 1
    assert policy.group_boundaries[0] == pytest.approx(0.2)
    assert policy.group_thresholds == (0.5,)
    assert "merged" in caplog.text


def test_groups_sharing_a_boundary_are_merged():
    space, queries, truth = shared_modularity_fixture([0.6, 0.6, 0.6, 0.6, 0.4, 0.4])

    policy = calibrate_dynamic_threshold(space, queries, truth, n_groups=3, k=1, delta_grid=[0.3, 0.5])

    assert policy.n_groups == 2
    assert policy.group_boundaries == pytest.approx((0.2, 0.4))
    assert policy.group_thresholds == (0.5, 0.3)

    retrieved = {q.key: [c.key for c in expand_dynamic(space, q, policy)] for q in queries}
    assert set_metrics(retrieved, truth).f1 == 1.0


def test_best_threshold_prefers_smallest_delta_on_ties():
    truth = GroundTruth({("en:q", "zh:a"): True})
    candidates = {"en:q": [Candidate("a", "zh", 0.8)]}

    assert best_threshold(candidates, truth, [0.7, 0.5, 0.6]) == (0.5, 1.0)


def test_dynamic_expansion_routes_by_modularity(biased: BiasedRegion):
    policy = calibrate_dynamic_threshold(biased.space, biased.queries, biased.truth, n_groups=2, k=3)

    for query in biased.queries:
        m = modularity(biased.space, query, 3).m
        expected = expand_threshold(biased.space, query, policy.threshold_for(m))

        assert expand_dynamic(biased.space, query, policy) == expected

    retrieved = {q.key: [c.key for c in expand_dynamic(biased.space, q, policy)] for q in biased.queries}
    assert set_metrics(retrieved, biased.truth).f1 == 1.0


def test_single_group_policy_equals_threshold(biased: BiasedRegion):
    policy = DynamicThresholdPolicy((0.2,), (0.58,), 3)

    for query in biased.queries:
        assert expand_dynamic(biased.space, query, policy) == expand_threshold(biased.space, query, 0.58)


def test_policy_group_routing():
    policy = DynamicThresholdPolicy((0.1, 0.2, 0.3), (0.7, 0.6, 0.5), 10)

    assert policy.threshold_for(0.05) == 0.7
    assert policy.threshold_for(0.1) == 0.7
    assert policy.threshold_for(0.25) == 0.5
    assert policy.group_of(0.2) == 1
    assert policy.threshold_for(0.9) == 0.5


def test_policy_validation():
    with pytest.raises(CalibrationError):
        DynamicThresholdPolicy((0.2, 0.2), (0.5, 0.6), 10)

    with pytest.raises(CalibrationError):
        DynamicThresholdPolicy((0.2,), (1.2,), 10)


def test_policy_file_round_trip(tmp_path: Path):
    policy = DynamicThresholdPolicy((0.1234, 0.3), (0.6, 0.5), 10)

    save_policy(policy, tmp_path / "policy.tsv")

    assert load_policy(tmp_path / "policy.tsv") == policy
    assert (tmp_path / "policy.tsv").read_text().splitlines()[0] == "k=10\tn_groups=2"


def test_load_queries(tmp_path: Path):
    path = tmp_path / "queries.txt"
    path.write_text("en:fever\n# comment\n\nzh:發燒\n", encoding="utf-8")

    queries = load_queries(path, target_language="zh")

    assert [q.key for q in queries] == ["en:fever", "zh:發燒"]
    assert queries[0].target_language == "zh"


def test_strategies_collect_rejects(biased: BiasedRegion):
    queries = [*biased.queries[:2], Query("ague", "en")]

    result = ThresholdStrategy(biased.space, 0.6).run(queries)

    assert list(result.ranked) == ["en:q0", "en:q1"]
    assert result.rejects[0][0] == "en:ague"
    assert result.retrieved_count == sum(len(ranked) for ranked in result.ranked.values())


def test_strategies_agree_with_primitives(biased: BiasedRegion):
    policy = DynamicThresholdPolicy((0.2, 0.4), (0.6, 0.5), 3)
    query = biased.queries[0]

    assert KnnStrategy(biased.space, 4).expand(query) == nearest_neighbors(biased.space, query, 4, "zh")
    assert DynamicThresholdStrategy(biased.space, policy).expand(query) == expand_dynamic(biased.space, query, policy)
    assert KnnStrategy(biased.space, 4).describe() == {"method": "k-NN", "k": 4}


def test_expansion_file_round_trip(tmp_path: Path, biased: BiasedRegion):
    result = KnnStrategy(biased.space, 3).run(biased.queries)

    write_expansion(result, tmp_path / "run.tsv")
    header = (tmp_path / "run.tsv").read_text(encoding="utf-8").splitlines()[0]

    assert header == "query\trank\tcandidate\tlanguage\tsimilarity"
    assert read_expansion(tmp_path / "run.tsv") == result.keys()


def test_modularity_frame(biased: BiasedRegion):
    frame, rejects = modularity_frame(biased.space, [*biased.queries, Query("ague", "en")], 3)

    assert list(frame["query"]) == [q.key for q in biased.queries]
    assert len(rejects) == 1
