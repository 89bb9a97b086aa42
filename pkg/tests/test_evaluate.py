import math
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deskorg.catalog import generate_scene, load_catalog, load_ruleset, rule_annotate
from deskorg.core import Direction, SceneGroundings, derive_seed
from deskorg.errors import ConfigurationError, DataError, DimensionError
from deskorg.evaluate import (
    LabeledScene,
    combined_accuracy,
    cross_validate,
    generalized_split,
    grounding_accuracy,
    kfold,
    partition_by_participant,
    random_baseline_exact_match,
    run_ablation,
    score_predictions,
)
from deskorg.features import ModalityMask, all_masks
from deskorg.pipeline import ordered_pairs

CATALOG = load_catalog()
RULES = load_ruleset()
HUV = ModalityMask.parse("HUV")


def labeled(n, k_min=7, k_max=7, seed=0, participant=None):
    out = []
    for i in range(n):
        s = generate_scene(derive_seed(seed, i), CATALOG, k_min, k_max, scene_id=f"s{i}")
        s = replace(s, participant_id=participant)
        out.append(LabeledScene(s, rule_annotate(s, RULES)))
    return out


def uniform_groundings(k, quad=1, rel=Direction.NONE):
    inverse = {Direction.NONE: Direction.IN}
    rels = {}
    for i, j in ordered_pairs(k):
        rels[(i, j)] = rel if i < j else inverse.get(rel, rel)
    return SceneGroundings({i: quad for i in range(k)}, rels)


class TestGroundingAccuracy:
    truth = labeled(1)[0].truth

    def test_identical(self):
        assert grounding_accuracy(self.truth, self.truth) == (1.0, 1.0)

    def test_all_quads_wrong(self):
        wrong = SceneGroundings({o: q % 4 + 1 for o, q in self.truth.quads.items()}, self.truth.rels)
        assert grounding_accuracy(wrong, self.truth) == (0.0, 1.0)

    def test_counting_example(self):
        quads = dict(self.truth.quads)
        quads[0] = quads[0] % 4 + 1
        rels = dict(self.truth.rels)
        for p in list(rels)[:9]:
            rels[p] = Direction.IN if rels[p] is not Direction.IN else Direction.E
        assert grounding_accuracy(SceneGroundings(quads, rels), self.truth) == (6 / 7, 33 / 42)

    def test_object_sets_must_match(self):
        with pytest.raises(DataError):
            grounding_accuracy(uniform_groundings(3), uniform_groundings(4))


class TestCombined:
    def test_perfect(self):
        assert combined_accuracy(1.0, 1.0, 7) == 1.0

    def test_quad_only(self):
        assert combined_accuracy(1.0, 0.0, 7) == 0.25

    def test_plugged_example(self):
        assert combined_accuracy(6 / 7, 33 / 42, 7) == pytest.approx(0.80357, abs=5e-6)
        assert combined_accuracy(6 / 7, 33 / 42, 7) == pytest.approx((6 + 16.5) / 28, abs=1e-15)

    def test_small_k(self):
        with pytest.raises(ConfigurationError):
            combined_accuracy(1.0, 1.0, 1)

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 40))
    def test_convex(self, q, r, k):
        c = combined_accuracy(q, r, k)
        assert min(q, r) - 1e-12 <= c <= max(q, r) + 1e-12

    def test_pooled_fold_score_matches_single_scene(self):
        d = labeled(1)[0]
        res = score_predictions([(d.truth, d.truth)])
        assert (res.quad_acc, res.rel_acc, res.combined) == (1.0, 1.0, 1.0)


class TestKfold:
    items = list(range(30))

    def test_thirty_into_six(self):
        splits = kfold(self.items, 5, 1)
        assert [len(test) for _, test in splits] == [6] * 5

    def test_partition(self):
        splits = kfold(self.items, 5, 2)
        tests = [t for _, t in splits]
        assert sorted(x for t in tests for x in t) == self.items
        for train, test in splits:
            assert set(train).isdisjoint(test) and len(train) + len(test) == 30

    def test_seeded(self):
        assert kfold(self.items, 5, 3) == kfold(self.items, 5, 3)
        assert kfold(self.items, 5, 3) != kfold(self.items, 5, 4)

    def test_too_few(self):
        with pytest.raises(ConfigurationError):
            kfold(list(range(4)), 5)


class TestAblation:
    def test_seven_reports_for_forests(self):
        data = labeled(10)
        reports = run_ablation(data, "forest", k=2, n_trees=3)
        assert [r.mask.name for r in reports] == [m.name for m in all_masks()]
        for r in reports:
            assert len(r.folds) == 2
            assert all(0.0 <= f.combined <= 1.0 for f in r.folds)
            assert min(r.mean_quad, r.mean_rel) - 1e-12 <= r.mean_combined <= max(r.mean_quad, r.mean_rel) + 1e-12

    def test_forest_rejects_mixed_k(self):
        with pytest.raises(DimensionError):
            cross_validate(labeled(10, 6, 9), "forest", HUV)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            cross_validate(labeled(10), "svm", HUV)

    def test_forest_learns_the_rules(self):
        report = cross_validate(labeled(30, seed=7), "forest", HUV, rng_seed=7)
        assert report.mean_combined >= 0.9

    def test_utility_only_report_exists(self):
        (report,) = run_ablation(labeled(10), "forest", [ModalityMask.parse("U")], k=2, n_trees=3)
        assert report.mask.attributes == ("utility",)


class TestParticipants:
    def test_eleven_by_thirty(self):
        data = [d for p in range(11) for d in labeled(30, seed=p, participant=f"p{p}")]
        groups = partition_by_participant(data)
        assert len(groups) == 11 and all(len(g) == 30 for g in groups.values())
        train, held = generalized_split(groups)
        assert len(train) == 275 and all(len(h) == 5 for h in held.values())

    def test_single_participant_is_lossless(self):
        data = labeled(5, participant="solo")
        groups = partition_by_participant(data)
        assert list(groups) == ["solo"]
        assert Counter(id(d) for g in groups.values() for d in g) == Counter(id(d) for d in data)

    def test_missing_participant(self):
        with pytest.raises(DataError):
            partition_by_participant(labeled(2))


class TestRandomBaseline:
    def test_single_object(self):
        assert random_baseline_exact_match(1, 100_000, 0) == pytest.approx(0.25, abs=3 * math.sqrt(0.25 * 0.75 / 1e5))

    def test_empty_scene(self):
        assert random_baseline_exact_match(0, 100_000) == 1.0

    def test_seven_objects(self):
        n, p = 1_000_000, 4.0 ** -7
        assert abs(random_baseline_exact_match(7, n, 5) - p) <= 3 * math.sqrt(p * (1 - p) / n)
