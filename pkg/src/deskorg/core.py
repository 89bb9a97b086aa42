"""Domain types, desk geometry conventions and the positional annotator.

Desk coordinates live in the unit square. +x points East (the user's right)
and +y points North (away from the seated user). Quadrants use Cartesian
numbering: 1 = NE, 2 = NW, 3 = SW, 4 = SE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    AnnotationAmbiguityError,
    DataError,
    DegeneratePairError,
    InvalidGeometryError,
    NoOppositeError,
    SameQuadrantError,
)


class Color(str, Enum):
    RED = "red"
    BLUE = "blue"
    BLACK = "black"
    GREEN = "green"
    YELLOW = "yellow"
    OTHER = "other"


class Shape(str, Enum):
    RECTANGLE = "rectangle"
    CYLINDER = "cylinder"
    CUBE = "cube"
    OTHER = "other"


class Size(str, Enum):
    SMALL = "small"
    LARGE = "large"


class Weight(str, Enum):
    LIGHT = "light"
    HEAVY = "heavy"


class Rigidity(str, Enum):
    SOFT = "soft"
    HARD = "hard"


UTILITY_VALUES = (1, 2, 3, 4, 5, 6, 7)
QUADRANTS = (1, 2, 3, 4)

# Canonical attribute order; every encoder and template expander follows it.
ATTRIBUTES = ("color", "shape", "size", "weight", "rigidity", "utility")

DOMAINS: dict[str, tuple] = {
    "color": tuple(Color),
    "shape": tuple(Shape),
    "size": tuple(Size),
    "weight": tuple(Weight),
    "rigidity": tuple(Rigidity),
    "utility": UTILITY_VALUES,
}


def domain_index(attribute: str, value) -> int:
    return DOMAINS[attribute].index(value)


def coerce_value(attribute: str, raw):
    """Convert a raw string/int into the domain value for ``attribute``.

    Raises DataError naming the legal values when ``raw`` is out of domain.
    """
    if attribute not in DOMAINS:
        raise DataError(f"unknown attribute {attribute!r}")
    if attribute == "utility":
        try:
            value = int(raw)
        except (TypeError, ValueError):
            value = None
        integral = isinstance(raw, str) or value == raw
        if value is None or not integral or value not in UTILITY_VALUES or isinstance(raw, bool):
            raise DataError(f"utility must be an integer in 1..7, got {raw!r}")
        return value
    enum_cls = type(DOMAINS[attribute][0])
    try:
        return enum_cls(raw)
    except ValueError:
        legal = ", ".join(v.value for v in DOMAINS[attribute])
        raise DataError(f"{attribute} value {raw!r} not in {{{legal}}}") from None


@dataclass(frozen=True)
class AttributeSet:
    color: Color
    shape: Shape
    size: Size
    weight: Weight
    rigidity: Rigidity
    utility: int

    def __post_init__(self):
        for name in ATTRIBUTES:
            object.__setattr__(self, name, coerce_value(name, getattr(self, name)))

    def get(self, attribute: str):
        return getattr(self, attribute)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in ATTRIBUTES}

    def with_value(self, attribute: str, value) -> "AttributeSet":
        return replace(self, **{attribute: value})


@dataclass(frozen=True)
class Geometry:
    """Axis-aligned rectangular footprint centred on ``center``."""

    center: tuple[float, float]
    footprint: tuple[float, float]

    def __post_init__(self):
        x, y = (float(v) for v in self.center)
        w, h = (float(v) for v in self.footprint)
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise InvalidGeometryError(f"center {(x, y)} lies outside the unit desk")
        if not (w > 0.0 and h > 0.0):
            raise InvalidGeometryError(f"footprint {(w, h)} must be strictly positive")
        object.__setattr__(self, "center", (x, y))
        object.__setattr__(self, "footprint", (w, h))

    @property
    def area(self) -> float:
        return self.footprint[0] * self.footprint[1]

    def bounds(self) -> tuple[float, float, float, float]:
        (x, y), (w, h) = self.center, self.footprint
        return x - w / 2, y - h / 2, x + w / 2, y + h / 2


@dataclass(frozen=True)
class ObjectInstance:
    object_id: int
    catalog_key: str
    attrs: AttributeSet
    geometry: Optional[Geometry] = None


@dataclass(frozen=True)
class Scene:
    scene_id: str
    objects: tuple[ObjectInstance, ...]
    participant_id: Optional[str] = None

    def __post_init__(self):
        objects = tuple(self.objects)
        if not objects:
            raise DataError(f"scene {self.scene_id!r} has no objects")
        ids = [o.object_id for o in objects]
        if ids != list(range(len(objects))):
            raise DataError(f"scene {self.scene_id!r}: object ids must be 0..K-1 in order, got {ids}")
        object.__setattr__(self, "objects", objects)

    @property
    def k(self) -> int:
        return len(self.objects)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self) -> Iterator[ObjectInstance]:
        return iter(self.objects)

    def __getitem__(self, object_id: int) -> ObjectInstance:
        return self.objects[object_id]


def make_scene(scene_id: str, objects: Sequence[ObjectInstance], participant_id=None) -> Scene:
    """Build a scene, renumbering objects to 0..K-1 in list order."""
    renumbered = tuple(replace(o, object_id=i) for i, o in enumerate(objects))
    return Scene(scene_id, renumbered, participant_id)


class Direction(str, Enum):
    E = "E"
    NE = "NE"
    N = "N"
    NW = "NW"
    W = "W"
    SW = "SW"
    S = "S"
    SE = "SE"
    IN = "IN"
    NONE = "NONE"

    @property
    def is_cardinal(self) -> bool:
        return self not in (Direction.IN, Direction.NONE)


DIRECTIONS = tuple(Direction)
CARDINALS = DIRECTIONS[:8]


def opposite(d: Direction) -> Direction:
    d = Direction(d)
    if not d.is_cardinal:
        raise NoOppositeError(f"{d.value} has no opposite direction")
    return CARDINALS[(CARDINALS.index(d) + 4) % 8]


@dataclass(frozen=True)
class SceneGroundings:
    """Relational truth (or prediction) for one scene.

    ``quads`` maps object id to quadrant; ``rels`` maps every ordered pair
    (i, j), i != j, to the direction of i relative to j.
    """

    quads: Mapping[int, int]
    rels: Mapping[tuple[int, int], Direction] = field(default_factory=dict)

    @property
    def object_ids(self) -> list[int]:
        return sorted(self.quads)

    def __eq__(self, other):
        if not isinstance(other, SceneGroundings):
            return NotImplemented
        return dict(self.quads) == dict(other.quads) and dict(self.rels) == dict(other.rels)

    __hash__ = None


def groundings_problems(g: SceneGroundings, object_ids: Optional[Sequence[int]] = None) -> list[str]:
    """Return a list of invariant violations (empty when ``g`` is valid)."""
    problems = []
    ids = sorted(g.quads) if object_ids is None else sorted(object_ids)
    if sorted(g.quads) != ids:
        problems.append(f"quads cover {sorted(g.quads)}, expected {ids}")
    for o, q in g.quads.items():
        if q not in QUADRANTS:
            problems.append(f"object {o} has quadrant {q!r}")
    expected_pairs = {(i, j) for i in ids for j in ids if i != j}
    if set(g.rels) != expected_pairs:
        missing = sorted(expected_pairs - set(g.rels))
        extra = sorted(set(g.rels) - expected_pairs)
        problems.append(f"rels pairs mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    for (i, j), d in g.rels.items():
        back = g.rels.get((j, i))
        if back is None:
            continue
        if d.is_cardinal and back != opposite(d):
            problems.append(f"rels[{i},{j}]={d.value} but rels[{j},{i}]={back.value}")
        elif d is Direction.IN and back is not Direction.NONE:
            problems.append(f"rels[{i},{j}]=IN but rels[{j},{i}]={back.value}")
        elif d is Direction.NONE and back not in (Direction.IN, Direction.NONE):
            problems.append(f"rels[{i},{j}]=NONE but rels[{j},{i}]={back.value}")
    return problems


def check_groundings(g: SceneGroundings, object_ids: Optional[Sequence[int]] = None) -> None:
    problems = groundings_problems(g, object_ids)
    if problems:
        raise DataError("invalid groundings: " + "; ".join(problems))


def quadrant_of(center: tuple[float, float]) -> int:
    x, y = center
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise InvalidGeometryError(f"center {(x, y)} lies outside the unit desk")
    if y >= 0.5:
        return 1 if x >= 0.5 else 2
    return 4 if x >= 0.5 else 3


def quadrant_bounds(q: int) -> tuple[float, float, float, float]:
    """(x0, y0, x1, y1) of quadrant ``q``."""
    col, row = _QUAD_CELL[q]
    return col * 0.5, row * 0.5, col * 0.5 + 0.5, row * 0.5 + 0.5


def cardinal_between(center_i, center_j) -> Direction:
    """Direction of ``center_i`` as seen from ``center_j``.

    Sectors are 45 degrees wide and closed on their counter-clockwise edge,
    so E covers (-22.5, 22.5].
    """
    dx = float(center_i[0]) - float(center_j[0])
    dy = float(center_i[1]) - float(center_j[1])
    if dx == 0.0 and dy == 0.0:
        raise DegeneratePairError(f"coincident centers at {tuple(center_i)}")
    theta = math.degrees(math.atan2(dy, dx))
    if theta <= -180.0:
        theta = 180.0
    sector = math.ceil((theta - 22.5) / 45.0) % 8
    return CARDINALS[sector]


# quadrant -> (column, row) with column 1 = east half, row 1 = north half
_QUAD_CELL = {1: (1, 1), 2: (0, 1), 3: (0, 0), 4: (1, 0)}
_SIGN_DIR = {
    (1, 0): Direction.E, (1, 1): Direction.NE, (0, 1): Direction.N, (-1, 1): Direction.NW,
    (-1, 0): Direction.W, (-1, -1): Direction.SW, (0, -1): Direction.S, (1, -1): Direction.SE,
}


def derived_dir_from_quads(q_i: int, q_j: int) -> Direction:
    if q_i not in QUADRANTS or q_j not in QUADRANTS:
        raise DataError(f"quadrants must be in 1..4, got {(q_i, q_j)}")
    if q_i == q_j:
        raise SameQuadrantError(f"both objects in quadrant {q_i}; relation not derivable")
    (ci, ri), (cj, rj) = _QUAD_CELL[q_i], _QUAD_CELL[q_j]
    return _SIGN_DIR[(ci - cj, ri - rj)]


def overlap_area(a: Geometry, b: Geometry) -> float:
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    w = min(ax1, bx1) - max(ax0, bx0)
    h = min(ay1, by1) - max(ay0, by0)
    return w * h if w > 0 and h > 0 else 0.0


IN_OVERLAP_FRACTION = 0.5


def annotate_scene(scene: Scene) -> SceneGroundings:
    """Derive quadrant and pairwise relations from object geometry."""
    for o in scene:
        if o.geometry is None:
            raise InvalidGeometryError(f"object {o.object_id} in {scene.scene_id!r} has no geometry")
    quads = {o.object_id: quadrant_of(o.geometry.center) for o in scene}
    rels: dict[tuple[int, int], Direction] = {}
    objs = scene.objects
    for a in range(len(objs)):
        for b in range(a + 1, len(objs)):
            ga, gb = objs[a].geometry, objs[b].geometry
            inter = overlap_area(ga, gb)
            if inter > 0 and inter >= IN_OVERLAP_FRACTION * min(ga.area, gb.area) and ga.area != gb.area:
                inner, outer = (a, b) if ga.area < gb.area else (b, a)
                rels[(inner, outer)] = Direction.IN
                rels[(outer, inner)] = Direction.NONE
                continue
            if ga.center == gb.center:
                raise AnnotationAmbiguityError(
                    f"objects {a} and {b} in {scene.scene_id!r} share a center and cannot be ordered"
                )
            d = cardinal_between(ga.center, gb.center)
            rels[(a, b)] = d
            rels[(b, a)] = opposite(d)
    return SceneGroundings(quads, rels)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for ``keys`` under ``seed``."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])
