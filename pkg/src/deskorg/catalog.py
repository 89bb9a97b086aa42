"""Object catalog, synthetic scene generation and attribute noise."""

from __future__ import annotations

import json
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from importlib import resources
from itertools import permutations
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    ATTRIBUTES,
    DOMAINS,
    QUADRANTS,
    UTILITY_VALUES,
    AttributeSet,
    Color,
    Direction,
    ObjectInstance,
    Rigidity,
    Scene,
    SceneGroundings,
    Shape,
    Size,
    Weight,
    coerce_value,
    derived_dir_from_quads,
    opposite,
)
from .errors import ConfigurationError, DataError

DEFAULT_FOOTPRINT = (0.08, 0.08)


@dataclass(frozen=True)
class CatalogEntry:
    key: str
    attrs: AttributeSet
    variants: tuple[AttributeSet, ...] = ()
    footprint: tuple[float, float] = DEFAULT_FOOTPRINT

    @property
    def configurations(self) -> tuple[AttributeSet, ...]:
        return (self.attrs, *self.variants)


@dataclass(frozen=True)
class Ruleset:
    """Deterministic organisational rules used to annotate synthetic scenes."""

    quad_rule: Mapping[int, int]
    ew_order: tuple[Color, ...]
    ns_order: tuple[Shape, ...]
    name: str = "default"

    def __post_init__(self):
        rule = {int(u): int(q) for u, q in dict(self.quad_rule).items()}
        if sorted(rule) != list(UTILITY_VALUES):
            raise ConfigurationError(f"ruleset {self.name!r}: quad_rule must cover utilities 1..7")
        if any(q not in QUADRANTS for q in rule.values()):
            raise ConfigurationError(f"ruleset {self.name!r}: quad_rule targets must be 1..4")
        ew = tuple(Color(c) for c in self.ew_order)
        ns = tuple(Shape(s) for s in self.ns_order)
        if sorted(ew, key=DOMAINS["color"].index) != list(DOMAINS["color"]) or len(ew) != 6:
            raise ConfigurationError(f"ruleset {self.name!r}: ew_order must order every color once")
        if sorted(ns, key=DOMAINS["shape"].index) != list(DOMAINS["shape"]) or len(ns) != 4:
            raise ConfigurationError(f"ruleset {self.name!r}: ns_order must order every shape once")
        object.__setattr__(self, "quad_rule", rule)
        object.__setattr__(self, "ew_order", ew)
        object.__setattr__(self, "ns_order", ns)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "quad_rule": {str(u): q for u, q in sorted(self.quad_rule.items())},
            "ew_order": [c.value for c in self.ew_order],
            "ns_order": [s.value for s in self.ns_order],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Ruleset":
        try:
            return cls(
                quad_rule={int(k): v for k, v in data["quad_rule"].items()},
                ew_order=tuple(data["ew_order"]),
                ns_order=tuple(data["ns_order"]),
                name=data.get("name", "unnamed"),
            )
        except (KeyError, ValueError, TypeError, AttributeError) as exc:
            raise ConfigurationError(f"malformed ruleset: {exc}") from None


@dataclass(frozen=True)
class UtilityProfile:
    participant_id: str
    utilities: Mapping[str, int]

    def check_covers(self, catalog: Sequence[CatalogEntry]) -> None:
        missing = [e.key for e in catalog if e.key not in self.utilities]
        if missing:
            raise DataError(f"utility profile {self.participant_id!r} misses {missing}")
        for key, u in self.utilities.items():
            coerce_value("utility", u)


def _attrs_from_json(data: dict) -> AttributeSet:
    try:
        return AttributeSet(**{name: data[name] for name in ATTRIBUTES})
    except KeyError as exc:
        raise ConfigurationError(f"catalog attribute {exc} missing") from None


def catalog_from_json(data) -> list[CatalogEntry]:
    entries = []
    for item in data["entries"]:
        base = _attrs_from_json(item)
        variants = tuple(_attrs_from_json({**item, **v}) for v in item.get("variants", ()))
        footprint = tuple(float(v) for v in item.get("footprint", DEFAULT_FOOTPRINT))
        entries.append(CatalogEntry(item["key"], base, variants, footprint))
    keys = [e.key for e in entries]
    dupes = [k for k, n in Counter(keys).items() if n > 1]
    if dupes:
        raise ConfigurationError(f"duplicate catalog keys {dupes}")
    return entries


def load_catalog(path: Optional[str | Path] = None) -> list[CatalogEntry]:
    """Load a catalog JSON file; ``None`` loads the bundled 17-object catalog."""
    if path is None:
        text = resources.files("deskorg.data").joinpath("catalog.json").read_text()
    else:
        text = Path(path).read_text()
    return catalog_from_json(json.loads(text))


def load_ruleset(path: Optional[str | Path] = None) -> Ruleset:
    if path is None:
        text = resources.files("deskorg.data").joinpath("default_ruleset.json").read_text()
    else:
        text = Path(path).read_text()
    return Ruleset.from_json(json.loads(text))


def default_utility_profile(catalog: Sequence[CatalogEntry], participant_id="default") -> UtilityProfile:
    return UtilityProfile(participant_id, {e.key: e.attrs.utility for e in catalog})


def generate_scene(
    rng_seed: int,
    catalog: Sequence[CatalogEntry],
    k_min: int = 6,
    k_max: int = 9,
    *,
    utilities: Optional[UtilityProfile] = None,
    scene_id: Optional[str] = None,
) -> Scene:
    """Draw K uniformly from [k_min, k_max], then K entries with replacement.

    Entries with variants pick one configuration uniformly. When a utility
    profile is given, its ratings override the catalog defaults and its
    participant id is attached to the scene.
    """
    if not catalog:
        raise ConfigurationError("cannot generate a scene from an empty catalog")
    if not 1 <= k_min <= k_max:
        raise ConfigurationError(f"need 1 <= k_min <= k_max, got {(k_min, k_max)}")
    if utilities is not None:
        utilities.check_covers(catalog)
    rng = np.random.default_rng(rng_seed)
    k = int(rng.integers(k_min, k_max + 1))
    objects = []
    for object_id in range(k):
        entry = catalog[int(rng.integers(len(catalog)))]
        configs = entry.configurations
        attrs = configs[int(rng.integers(len(configs)))]
        if utilities is not None:
            attrs = attrs.with_value("utility", utilities.utilities[entry.key])
        objects.append(ObjectInstance(object_id, entry.key, attrs))
    return Scene(
        scene_id if scene_id is not None else f"synth-{rng_seed}",
        tuple(objects),
        utilities.participant_id if utilities is not None else None,
    )


def rule_annotate(scene: Scene, rules: Ruleset) -> SceneGroundings:
    """Annotate a scene from attributes alone.

    Quadrants come from utility. Inside a quadrant objects form a west-to-east
    chain sorted by (color rank, shape rank, object id); a later object is E,
    NE or SE of an earlier one as its shape rank is equal, higher or lower.
    """
    quads = {o.object_id: rules.quad_rule[o.attrs.utility] for o in scene}
    ew = {c: r for r, c in enumerate(rules.ew_order)}
    ns = {s: r for r, s in enumerate(rules.ns_order)}
    rels: dict[tuple[int, int], Direction] = {}
    by_quad = defaultdict(list)
    for o in scene:
        by_quad[quads[o.object_id]].append(o)
    for members in by_quad.values():
        chain = sorted(members, key=lambda o: (ew[o.attrs.color], ns[o.attrs.shape], o.object_id))
        for a, earlier in enumerate(chain):
            for later in chain[a + 1:]:
                diff = ns[later.attrs.shape] - ns[earlier.attrs.shape]
                d = Direction.E if diff == 0 else Direction.NE if diff > 0 else Direction.SE
                rels[(later.object_id, earlier.object_id)] = d
                rels[(earlier.object_id, later.object_id)] = opposite(d)
    for i in quads:
        for j in quads:
            if i != j and quads[i] != quads[j]:
                rels[(i, j)] = derived_dir_from_quads(quads[i], quads[j])
    return SceneGroundings(quads, rels)


def perturb_attributes(scene: Scene, p: float, rng_seed: int) -> Scene:
    """Replace each attribute, with probability ``p``, by a different domain value."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"perturbation probability must be in [0, 1], got {p}")
    rng = np.random.default_rng(rng_seed)
    objects = []
    for o in scene:
        values = o.attrs.as_dict()
        for name in ATTRIBUTES:
            flip = rng.random() < p
            if flip:
                others = [v for v in DOMAINS[name] if v != values[name]]
                values[name] = others[int(rng.integers(len(others)))]
        objects.append(ObjectInstance(o.object_id, o.catalog_key, AttributeSet(**values), o.geometry))
    return Scene(scene.scene_id, tuple(objects), scene.participant_id)


def canonicalize_subjective(
    weight_votes: Sequence[Mapping[str, Weight]],
    size_votes: Sequence[Mapping[str, Size]],
) -> dict[str, tuple[Weight, Size]]:
    """Majority vote per object over participants; exact ties go heavy/large."""
    if not weight_votes or not size_votes:
        raise ConfigurationError("need at least one participant's votes for weight and size")
    keys = set(weight_votes[0])
    for votes in (*weight_votes, *size_votes):
        if set(votes) != keys:
            raise DataError("every participant must rate the same set of objects")
    result = {}
    for key in sorted(keys):
        heavy = sum(Weight(v[key]) is Weight.HEAVY for v in weight_votes)
        large = sum(Size(v[key]) is Size.LARGE for v in size_votes)
        weight = Weight.HEAVY if 2 * heavy >= len(weight_votes) else Weight.LIGHT
        size = Size.LARGE if 2 * large >= len(size_votes) else Size.SMALL
        result[key] = (weight, size)
    return result


def threshold_rigidity(stiffness: Mapping[str, float]) -> dict[str, Rigidity]:
    """Split objects at the median stiffness: strictly below is soft."""
    if not stiffness:
        raise DataError("no stiffness measurements")
    for key, value in stiffness.items():
        if not value > 0:
            raise DataError(f"stiffness for {key!r} must be positive, got {value}")
    threshold = statistics.median(stiffness.values())
    return {k: Rigidity.SOFT if v < threshold else Rigidity.HARD for k, v in stiffness.items()}


def pseudo_participant_rulesets(n: int, rng_seed: int, base: Optional[Ruleset] = None) -> list[Ruleset]:
    """``n`` rulesets whose quadrant rules are distinct relabelings of ``base``.

    Permutations are chosen to keep every pair of participants as different
    as possible: the first four are rows of a Latin square.
    """
    base = base if base is not None else load_ruleset()
    if not 1 <= n <= 24:
        raise ConfigurationError("between 1 and 24 distinct quadrant relabelings exist")
    rng = np.random.default_rng(rng_seed)
    latin = [(1, 2, 3, 4), (2, 3, 4, 1), (3, 4, 1, 2), (4, 1, 2, 3)]
    rest = [p for p in permutations(QUADRANTS) if p not in latin]
    rest = [rest[i] for i in rng.permutation(len(rest))]
    chosen = (latin + rest)[:n]
    rulesets = []
    for idx, perm in enumerate(chosen):
        mapping = dict(zip(QUADRANTS, perm))
        rule = {u: mapping[q] for u, q in base.quad_rule.items()}
        rulesets.append(Ruleset(rule, base.ew_order, base.ns_order, name=f"{base.name}-p{idx}"))
    return rulesets
