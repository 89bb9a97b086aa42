"""Desk layouts from trained forests: groundings, coordinates and SVG."""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .catalog import DEFAULT_FOOTPRINT, CatalogEntry
from .core import (
    Color,
    Direction,
    Geometry,
    ObjectInstance,
    SceneGroundings,
    annotate_scene,
    cardinal_between,
    check_groundings,
    derived_dir_from_quads,
    make_scene,
    opposite,
    quadrant_bounds,
    quadrant_of,
)
from .errors import CapacityError, DataError, DimensionError
from .features import ModalityMask, scene_quad_matrix, scene_rel_matrix
from .forest import ForestModel, predict_many

log = logging.getLogger(__name__)

# anchor offsets inside a quadrant, as fractions of the desk side
ANCHOR_OFFSETS = (1 / 12, 1 / 4, 5 / 12)
DESK_WIDTH_PX = 800
DESK_HEIGHT_PX = 600


@dataclass(frozen=True)
class LayoutPlan:
    groundings: SceneGroundings
    coordinates: Mapping[int, tuple[float, float]]
    unsatisfied: tuple[tuple[int, int, Direction], ...] = ()
    footprints: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    objects: tuple[ObjectInstance, ...] = ()

    def __post_init__(self):
        for o, xy in self.coordinates.items():
            if quadrant_of(xy) != self.groundings.quads[o]:
                raise DataError(f"object {o} at {xy} lies outside quadrant {self.groundings.quads[o]}")

    def placed_objects(self) -> list[ObjectInstance]:
        """Objects carrying the plan's coordinates as their geometry."""
        if not self.objects:
            raise DataError("plan has no object descriptions")
        return [
            ObjectInstance(
                o.object_id, o.catalog_key, o.attrs, Geometry(self.coordinates[o.object_id], self.footprints[o.object_id])
            )
            for o in self.objects
        ]


def inverse_relation(d: Direction) -> Direction:
    """The relation forced on (j, i) once (i, j) is fixed."""
    if d is Direction.IN:
        return Direction.NONE
    if d is Direction.NONE:
        return Direction.IN
    return opposite(d)


def resolve_relations(quads: Mapping[int, int], predictions: Mapping[tuple[int, int], Direction]) -> SceneGroundings:
    """First-prediction-wins over ascending (i, j); cross-quadrant pairs are derived."""
    ids = sorted(quads)
    rels: dict[tuple[int, int], Direction] = {}
    for i in ids:
        for j in ids:
            if i == j:
                continue
            if quads[i] != quads[j]:
                rels[(i, j)] = derived_dir_from_quads(quads[i], quads[j])
            elif (i, j) not in rels:
                d = Direction(predictions[(i, j)])
                rels[(i, j)] = d
                rels[(j, i)] = inverse_relation(d)
            elif predictions.get((i, j), rels[(i, j)]) != rels[(i, j)]:
                log.debug("discarding %s for (%d, %d); already fixed to %s", predictions[(i, j)], i, j, rels[(i, j)])
    g = SceneGroundings(dict(quads), rels)
    check_groundings(g, ids)
    return g


def organize(
    objects: Sequence[ObjectInstance], rf_quad: ForestModel, rf_rel: ForestModel, mask: Optional[ModalityMask] = None
) -> SceneGroundings:
    """Assign quadrants, then relations between objects sharing a quadrant."""
    mask = mask or rf_quad.mask
    k = rf_quad.k_train
    if rf_rel.k_train != k:
        raise DimensionError(f"quadrant forest expects K={k} but relation forest expects K={rf_rel.k_train}")
    if len(objects) != k:
        raise DimensionError(f"{len(objects)} objects given; models were trained on K={k}")
    scene = make_scene("organize", objects)
    quads = dict(zip(range(k), predict_many(rf_quad, scene_quad_matrix(scene, mask, k))))
    same = [(i, j) for i in range(k) for j in range(k) if i != j and quads[i] == quads[j]]
    predictions = {}
    if same:
        predictions = dict(zip(same, predict_many(rf_rel, scene_rel_matrix(scene, mask, same, k))))
    return resolve_relations(quads, predictions)


def quadrant_anchors(q: int) -> list[tuple[float, float]]:
    """The 3x3 anchor grid of quadrant ``q``, centre first, then row by row."""
    x0, y0, _, _ = quadrant_bounds(q)
    grid = [(x0 + dx, y0 + dy) for dy in ANCHOR_OFFSETS for dx in ANCHOR_OFFSETS]
    return [grid[4], *grid[:4], *grid[5:]]


def _satisfied(d: Direction, xy_i, xy_j) -> bool:
    return xy_i != xy_j and cardinal_between(xy_i, xy_j) == d


def realize(
    groundings: SceneGroundings,
    footprints: Optional[Mapping[int, tuple[float, float]]] = None,
    objects: Sequence[ObjectInstance] = (),
) -> LayoutPlan:
    """Greedy anchor-grid placement honouring as many relations as it can.

    Relations that the final coordinates do not reproduce are returned in
    ``unsatisfied``; cross-quadrant relations are fixed by the quadrants and
    are not checked.
    """
    check_groundings(groundings)
    footprints = dict(footprints or {})
    for o in groundings.quads:
        footprints.setdefault(o, DEFAULT_FOOTPRINT)
    rels = groundings.rels
    members = defaultdict(list)
    for o, q in sorted(groundings.quads.items()):
        members[q].append(o)

    coords: dict[int, tuple[float, float]] = {}
    containers: dict[int, int] = {}
    for q, objs in sorted(members.items()):
        anchors = quadrant_anchors(q)
        if len(objs) > len(anchors):
            raise CapacityError(f"quadrant {q} holds {len(objs)} objects but has only {len(anchors)} anchor cells")
        inner = {}
        for i in objs:
            outer = [j for j in objs if j != i and rels[(i, j)] is Direction.IN]
            if outer:
                inner[i] = outer[0]
        free = [o for o in objs if o not in inner]
        outgoing = {o: sum(rels[(o, p)].is_cardinal for p in objs if p != o) for o in free}
        free.sort(key=lambda o: (-outgoing[o], o))
        open_anchors = list(anchors)
        for o in free:
            placed = [p for p in coords if groundings.quads[p] == q]

            waiting = [u for u in free if u not in coords and u != o and rels[(u, o)].is_cardinal]

            def score(xy):
                now = sum(_satisfied(rels[(o, p)], xy, coords[p]) for p in placed if rels[(o, p)].is_cardinal)
                # tie-break: how many later objects could still honour their relation to o
                rest = [a for a in open_anchors if a != xy]
                room = [sum(_satisfied(rels[(u, o)], a, xy) for a in rest) for u in waiting]
                return now, sum(r > 0 for r in room), sum(room)

            best = max(open_anchors, key=score)  # max keeps the first anchor on ties
            open_anchors.remove(best)
            coords[o] = best
        # contained objects sit on their container's centre; chains resolve outward-in
        pending = dict(inner)
        while pending:
            progressed = False
            for i, j in sorted(pending.items()):
                if j in coords:
                    coords[i] = coords[j]
                    containers[i] = j
                    del pending[i]
                    progressed = True
            if not progressed:
                # cyclic containment cannot be realised; break it at the smallest id
                i = min(pending)
                coords[i] = open_anchors.pop(0)
                del pending[i]
    for i, j in containers.items():
        w, h = footprints[i]
        W, H = footprints[j]
        if not (w < W and h < H):
            footprints[i] = (min(w, W / 2), min(h, H / 2))

    unsatisfied = []
    for (i, j), d in sorted(rels.items()):
        if groundings.quads[i] != groundings.quads[j] or d is Direction.NONE:
            continue
        if d is Direction.IN:
            ok = containers.get(i) == j
        else:
            ok = _satisfied(d, coords[i], coords[j])
        if not ok:
            unsatisfied.append((i, j, d))
    for i, j, d in unsatisfied:
        log.info("relation %s(%d, %d) could not be realised", d.value, i, j)
    return LayoutPlan(groundings, coords, tuple(unsatisfied), footprints, tuple(objects))


def realize_objects(groundings: SceneGroundings, objects: Sequence[ObjectInstance], catalog=None) -> LayoutPlan:
    """``realize`` with footprints looked up from the objects or the catalog."""
    return realize(groundings, object_footprints(objects, catalog), objects)


def object_footprints(objects: Sequence[ObjectInstance], catalog: Optional[Sequence[CatalogEntry]] = None) -> dict:
    by_key = {e.key: e.footprint for e in catalog or ()}
    out = {}
    for n, o in enumerate(objects):
        if o.geometry is not None:
            out[n] = o.geometry.footprint
        else:
            out[n] = by_key.get(o.catalog_key, DEFAULT_FOOTPRINT)
    return out


def random_organize(
    objects: Sequence[ObjectInstance], rng_seed: int, catalog: Optional[Sequence[CatalogEntry]] = None
) -> LayoutPlan:
    """Uniform random centres on the desk, annotated like a real layout."""
    rng = np.random.default_rng(rng_seed)
    footprints = object_footprints(objects, catalog)
    centers = rng.random((len(objects), 2))
    placed = [
        ObjectInstance(n, o.catalog_key, o.attrs, Geometry(tuple(centers[n]), footprints[n]))
        for n, o in enumerate(objects)
    ]
    scene = make_scene("random", placed)
    coords = {o.object_id: o.geometry.center for o in scene}
    return LayoutPlan(annotate_scene(scene), coords, (), footprints, scene.objects)


SVG_COLORS = {
    Color.RED: "#d62728",
    Color.BLUE: "#1f77b4",
    Color.BLACK: "#222222",
    Color.GREEN: "#2ca02c",
    Color.YELLOW: "#e6c229",
    Color.OTHER: "#9a9a9a",
}


def to_screen(xy: tuple[float, float]) -> tuple[float, float]:
    """Desk coordinates to SVG pixels, north up."""
    return xy[0] * DESK_WIDTH_PX, (1.0 - xy[1]) * DESK_HEIGHT_PX


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(plan: Optional[LayoutPlan], catalog: Optional[Sequence[CatalogEntry]] = None) -> str:
    """Top-down SVG of the desk with one labelled rectangle per object."""
    notes = list(plan.unsatisfied) if plan is not None else []
    note_height = 20 * (len(notes) + 1) if notes else 0
    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(DESK_WIDTH_PX),
        height=str(DESK_HEIGHT_PX + note_height),
        viewBox=f"0 0 {DESK_WIDTH_PX} {DESK_HEIGHT_PX + note_height}",
    )
    ET.SubElement(svg, "rect", {"class": "desk", "x": "0", "y": "0", "width": str(DESK_WIDTH_PX),
                                "height": str(DESK_HEIGHT_PX), "fill": "#f4ead5", "stroke": "#333"})
    ET.SubElement(svg, "line", {"class": "grid", "x1": str(DESK_WIDTH_PX // 2), "y1": "0",
                                "x2": str(DESK_WIDTH_PX // 2), "y2": str(DESK_HEIGHT_PX), "stroke": "#888"})
    ET.SubElement(svg, "line", {"class": "grid", "x1": "0", "y1": str(DESK_HEIGHT_PX // 2),
                                "x2": str(DESK_WIDTH_PX), "y2": str(DESK_HEIGHT_PX // 2), "stroke": "#888"})
    if plan is not None:
        by_key = {e.key: e for e in catalog or ()}
        described = {o.object_id: o for o in plan.objects}
        # containers first so contained objects are drawn on top
        order = sorted(plan.coordinates, key=lambda o: (-np.prod(plan.footprints.get(o, DEFAULT_FOOTPRINT)), o))
        for o in order:
            w, h = plan.footprints.get(o, DEFAULT_FOOTPRINT)
            cx, cy = to_screen(plan.coordinates[o])
            obj = described.get(o)
            if obj is not None:
                label, color = obj.catalog_key, obj.attrs.color
            else:
                label, color = f"o{o}", Color.OTHER
            if obj is not None and obj.catalog_key in by_key and o not in plan.footprints:
                w, h = by_key[obj.catalog_key].footprint
            pw, ph = w * DESK_WIDTH_PX, h * DESK_HEIGHT_PX
            g = ET.SubElement(svg, "g", {"class": "object", "data-id": str(o)})
            ET.SubElement(g, "rect", {"x": _fmt(cx - pw / 2), "y": _fmt(cy - ph / 2), "width": _fmt(pw),
                                      "height": _fmt(ph), "fill": SVG_COLORS[color], "fill-opacity": "0.8",
                                      "stroke": "#000"})
            text = ET.SubElement(g, "text", {"x": _fmt(cx), "y": _fmt(cy + 4), "font-size": "11",
                                             "text-anchor": "middle"})
            text.text = label
    if notes:
        note = ET.SubElement(svg, "g", {"class": "unsatisfied"})
        head = ET.SubElement(note, "text", {"x": "8", "y": str(DESK_HEIGHT_PX + 16), "font-size": "12"})
        head.text = "unsatisfied relations:"
        for n, (i, j, d) in enumerate(notes, start=1):
            line = ET.SubElement(note, "text", {"x": "8", "y": str(DESK_HEIGHT_PX + 16 + 20 * n), "font-size": "12"})
            line.text = f"dir(o{i}, o{j}, {d.value})"
    return ET.tostring(svg, encoding="unicode") + "\n"
