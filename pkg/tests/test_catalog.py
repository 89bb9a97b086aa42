import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskorg.catalog import (
    CatalogEntry,
    Ruleset,
    UtilityProfile,
    canonicalize_subjective,
    catalog_from_json,
    default_utility_profile,
    generate_scene,
    load_catalog,
    load_ruleset,
    perturb_attributes,
    pseudo_participant_rulesets,
    rule_annotate,
    threshold_rigidity,
)
from deskorg.core import (
    ATTRIBUTES,
    DOMAINS,
    AttributeSet,
    Direction,
    ObjectInstance,
    Rigidity,
    Scene,
    Shape,
    Size,
    Weight,
    derive_seed,
    groundings_problems,
    make_scene,
)
from deskorg.errors import ConfigurationError, DataError

CATALOG = load_catalog()
RULES = load_ruleset()


def attrs(color="black", shape="cylinder", utility=4):
    return AttributeSet(color, shape, "small", "light", "hard", utility)


class TestBundledData:
    def test_catalog_has_17_unique_entries(self):
        assert len(CATALOG) == 17
        assert len({e.key for e in CATALOG}) == 17

    def test_named_objects_present(self):
        keys = {e.key for e in CATALOG}
        for k in ("mouse", "paperclip_box", "cellphone", "eraser_cube", "soda_can", "rubiks_cube", "pencil",
                  "dry_erase_marker", "pen_cup"):
            assert k in keys

    def test_cube_rigidity_contrast(self):
        by_key = {e.key: e.attrs for e in CATALOG}
        assert by_key["rubiks_cube"].shape is Shape.CUBE and by_key["rubiks_cube"].rigidity is Rigidity.HARD
        assert by_key["eraser_cube"].shape is Shape.CUBE and by_key["eraser_cube"].rigidity is Rigidity.SOFT

    def test_rigidity_split_is_8_soft_9_hard(self):
        counts = Counter(e.attrs.rigidity for e in CATALOG)
        assert counts == {Rigidity.SOFT: 8, Rigidity.HARD: 9}

    def test_pencil_fits_in_pen_cup(self):
        by_key = {e.key: e.footprint for e in CATALOG}
        assert all(a < b for a, b in zip(by_key["pencil"], by_key["pen_cup"]))

    def test_default_ruleset(self):
        assert RULES.quad_rule == {1: 3, 2: 2, 3: 2, 4: 1, 5: 1, 6: 4, 7: 4}
        assert [c.value for c in RULES.ew_order] == ["red", "blue", "black", "green", "yellow", "other"]
        assert [s.value for s in RULES.ns_order] == ["rectangle", "cylinder", "cube", "other"]

    def test_ruleset_json_round_trip(self):
        assert Ruleset.from_json(json.loads(json.dumps(RULES.to_json()))) == RULES

    def test_duplicate_keys_rejected(self):
        entry = {"key": "a", **{k: v.value if hasattr(v, "value") else v for k, v in attrs().as_dict().items()}}
        with pytest.raises(ConfigurationError):
            catalog_from_json({"entries": [entry, entry]})


class TestRulesetValidation:
    def test_incomplete_quad_rule(self):
        with pytest.raises(ConfigurationError):
            Ruleset({1: 1}, RULES.ew_order, RULES.ns_order)

    def test_order_must_cover_domain(self):
        with pytest.raises(ConfigurationError):
            Ruleset(RULES.quad_rule, RULES.ew_order[:-1], RULES.ns_order)


class TestGenerateScene:
    def test_k_range(self):
        ks = {generate_scene(s, CATALOG, 6, 9).k for s in range(200)}
        assert ks == {6, 7, 8, 9}

    def test_fixed_k(self):
        assert all(generate_scene(s, CATALOG, 7, 7).k == 7 for s in range(50))

    def test_deterministic(self):
        assert generate_scene(11, CATALOG) == generate_scene(11, CATALOG)
        assert generate_scene(11, CATALOG) != generate_scene(12, CATALOG)

    def test_empty_catalog(self):
        with pytest.raises(ConfigurationError):
            generate_scene(0, [])

    def test_utility_profile_overrides_and_tags(self):
        profile = UtilityProfile("p3", {e.key: 2 for e in CATALOG})
        s = generate_scene(5, CATALOG, utilities=profile)
        assert s.participant_id == "p3"
        assert all(o.attrs.utility == 2 for o in s)

    def test_profile_must_cover_catalog(self):
        with pytest.raises(DataError):
            generate_scene(5, CATALOG, utilities=UtilityProfile("p", {"mouse": 3}))

    def test_default_profile_covers(self):
        default_utility_profile(CATALOG).check_covers(CATALOG)


class TestRuleAnnotate:
    def test_all_utility_seven_goes_to_quadrant_four(self):
        s = make_scene("s", [ObjectInstance(0, "x", attrs(utility=7)) for _ in range(5)])
        assert set(rule_annotate(s, RULES).quads.values()) == {4}

    def test_red_is_west_of_blue(self):
        s = Scene("s", (ObjectInstance(0, "r", attrs("red")), ObjectInstance(1, "b", attrs("blue"))))
        g = rule_annotate(s, RULES)
        assert g.rels[(0, 1)] is Direction.W
        assert g.rels[(1, 0)] is Direction.E

    def test_shape_rank_tilts_the_chain(self):
        # cube is later than rectangle in the north-south order
        s = Scene("s", (ObjectInstance(0, "a", attrs("red", "rectangle")), ObjectInstance(1, "b", attrs("blue", "cube"))))
        assert rule_annotate(s, RULES).rels[(1, 0)] is Direction.NE

    def test_single_object(self):
        g = rule_annotate(Scene("s", (ObjectInstance(0, "a", attrs()),)), RULES)
        assert len(g.quads) == 1 and dict(g.rels) == {}

    def test_cross_quadrant_pairs_are_derived(self):
        s = Scene("s", (ObjectInstance(0, "a", attrs(utility=4)), ObjectInstance(1, "b", attrs(utility=7))))
        assert rule_annotate(s, RULES).rels[(0, 1)] is Direction.N  # quadrant 1 over quadrant 4

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_output_is_valid_and_identical_objects_share_quadrants(self, seed):
        s = generate_scene(seed, CATALOG)
        g = rule_annotate(s, RULES)
        assert groundings_problems(g, range(s.k)) == []
        for a in s:
            for b in s:
                if a.attrs == b.attrs:
                    assert g.quads[a.object_id] == g.quads[b.object_id]

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
    def test_permutation_invariance_up_to_relabeling(self, seed, rnd):
        s = generate_scene(seed, CATALOG)
        # objects tied on (color, shape) are ordered by id, so keep their relative order
        order = list(range(s.k))
        rnd.shuffle(order)
        tie = lambda i: (s[i].attrs.color, s[i].attrs.shape)  # noqa: E731
        for group in {tie(i) for i in order}:
            slots = [n for n, i in enumerate(order) if tie(i) == group]
            for n, i in zip(slots, sorted(order[n] for n in slots)):
                order[n] = i
        perm = make_scene("p", [s[i] for i in order])
        g, h = rule_annotate(s, RULES), rule_annotate(perm, RULES)
        new = {old: n for n, old in enumerate(order)}
        assert all(h.quads[new[i]] == q for i, q in g.quads.items())
        assert all(h.rels[(new[i], new[j])] == d for (i, j), d in g.rels.items())


class TestPerturb:
    scene = generate_scene(3, CATALOG, 9, 9)

    def test_p_zero_is_identity(self):
        assert perturb_attributes(self.scene, 0.0, 1) == self.scene

    def test_p_one_flips_everything(self):
        noisy = perturb_attributes(self.scene, 1.0, 1)
        for a, b in zip(self.scene, noisy):
            assert all(a.attrs.get(n) != b.attrs.get(n) for n in ATTRIBUTES)

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_invalid_p(self, p):
        with pytest.raises(ConfigurationError):
            perturb_attributes(self.scene, p, 0)

    def test_flip_rate_matches_p(self):
        flipped = total = 0
        seed = 0
        while total < 10_000:
            s = generate_scene(derive_seed(99, seed), CATALOG, 9, 9)
            noisy = perturb_attributes(s, 0.15, derive_seed(98, seed))
            for a, b in zip(s, noisy):
                for n in ATTRIBUTES:
                    flipped += a.attrs.get(n) != b.attrs.get(n)
                    total += 1
            seed += 1
        assert abs(flipped / total - 0.15) <= 0.02

    @settings(max_examples=50)
    @given(st.floats(0, 1), st.integers(0, 2**32 - 1))
    def test_values_stay_in_domain(self, p, seed):
        for o in perturb_attributes(self.scene, p, seed):
            for n in ATTRIBUTES:
                assert o.attrs.get(n) in DOMAINS[n]

    def test_keeps_ids_and_keys(self):
        noisy = perturb_attributes(self.scene, 0.5, 4)
        assert [(o.object_id, o.catalog_key) for o in noisy] == [(o.object_id, o.catalog_key) for o in self.scene]


class TestSubjective:
    def test_majority(self):
        weights = [{"m": "light"}] * 7 + [{"m": "heavy"}] * 4
        sizes = [{"m": "small"}] * 11
        assert canonicalize_subjective(weights, sizes) == {"m": (Weight.LIGHT, Size.SMALL)}

    def test_unanimous_heavy(self):
        assert canonicalize_subjective([{"m": "heavy"}] * 3, [{"m": "large"}] * 3)["m"] == (Weight.HEAVY, Size.LARGE)

    def test_tie_goes_heavy_and_large(self):
        weights = [{"m": "light"}] * 5 + [{"m": "heavy"}] * 5
        sizes = [{"m": "small"}] * 5 + [{"m": "large"}] * 5
        assert canonicalize_subjective(weights, sizes)["m"] == (Weight.HEAVY, Size.LARGE)

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            canonicalize_subjective([], [])


class TestRigidity:
    def test_one_to_seventeen(self):
        out = threshold_rigidity({f"k{i}": float(i) for i in range(1, 18)})
        assert [out[f"k{i}"] for i in range(1, 18)] == [Rigidity.SOFT] * 8 + [Rigidity.HARD] * 9

    def test_all_equal_is_hard(self):
        assert set(threshold_rigidity({"a": 2.0, "b": 2.0}).values()) == {Rigidity.HARD}

    def test_two_entries(self):
        assert threshold_rigidity({"a": 1.0, "b": 10.0}) == {"a": Rigidity.SOFT, "b": Rigidity.HARD}

    def test_nonpositive(self):
        with pytest.raises(DataError):
            threshold_rigidity({"a": 0.0})


class TestPseudoParticipants:
    def test_distinct_and_deterministic(self):
        rs = pseudo_participant_rulesets(5, 1)
        assert len({tuple(sorted(r.quad_rule.items())) for r in rs}) == 5
        assert rs == pseudo_participant_rulesets(5, 1)

    def test_latin_rows_disagree_everywhere(self):
        rs = pseudo_participant_rulesets(4, 0)
        for a in range(4):
            for b in range(a + 1, 4):
                assert all(rs[a].quad_rule[u] != rs[b].quad_rule[u] for u in range(1, 8))

    def test_bounds(self):
        with pytest.raises(ConfigurationError):
            pseudo_participant_rulesets(25, 0)


def test_catalog_entry_configurations():
    e = CatalogEntry("can", attrs("red"), (attrs("blue"),))
    assert len(e.configurations) == 2
