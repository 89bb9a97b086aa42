"""Text formats: scene databases, formulas, forest and MLN model files.

Scene files use predicate syntax, one ``pred(args).`` statement at a time,
with ``#`` comments and optional ``scene <id>`` / ``participant <id>`` header
lines. Parse failures raise :class:`ParseError` with a stable code:

E_SYNTAX, E_UNKNOWN_PREDICATE, E_ARITY, E_DOMAIN, E_DUPLICATE, E_DANGLING,
E_MISSING, E_GROUNDINGS, E_MODEL.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import (
    ATTRIBUTES,
    DIRECTIONS,
    DOMAINS,
    QUADRANTS,
    AttributeSet,
    Direction,
    Geometry,
    ObjectInstance,
    Scene,
    SceneGroundings,
    groundings_problems,
)
from .errors import DataError, DeskOrgError, ParseError
from .features import ModalityMask
from .forest import ForestModel, Leaf, Split, TreeNode
from .mln import PREDICATES, FormulaTemplate, GroundedMln, Literal

SCENE_PREDICATES = {
    "object": 2,
    **{a: 2 for a in ATTRIBUTES},
    "quad": 2,
    "dir": 3,
    "pos": 3,
    "size2d": 3,
}
DEFAULT_CATALOG_KEY = "object"

_STATEMENT = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*\.")
_HEADER = re.compile(r"^\s*(scene|participant)\s+(\S+)\s*$")
_OBJECT = re.compile(r"o(0|[1-9][0-9]*)$")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*$")


@dataclass(frozen=True)
class Statement:
    pred: str
    args: tuple[str, ...]
    line: int
    column: int


def _strip_comment(line: str) -> str:
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


def iter_statements(text: str) -> Iterable[Statement | tuple[str, str, int]]:
    """Yield header tuples ``(keyword, value, line)`` and body statements."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        header = _HEADER.match(line)
        if header:
            yield header.group(1), header.group(2), lineno
            continue
        pos = 0
        while True:
            while pos < len(line) and line[pos].isspace():
                pos += 1
            if pos >= len(line):
                break
            m = _STATEMENT.match(line, pos)
            if m is None:
                raise ParseError("E_SYNTAX", f"expected 'pred(args).' near {line[pos:pos + 20]!r}", lineno, pos + 1)
            args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
            if any(not a for a in args):
                raise ParseError("E_SYNTAX", "empty argument", lineno, m.start(2) + 1)
            yield Statement(m.group(1), args, lineno, pos + 1)
            pos = m.end()


def _object_ref(token: str, st: Statement) -> int:
    m = _OBJECT.match(token)
    if m is None:
        raise ParseError("E_SYNTAX", f"expected an object reference like o0, got {token!r}", st.line, st.column)
    return int(m.group(1))


def _domain_value(kind: str, token: str, st: Statement):
    if kind == "utility" or kind == "quad":
        legal = DOMAINS["utility"] if kind == "utility" else QUADRANTS
        if re.fullmatch(r"[0-9]+", token) and int(token) in legal:
            return int(token)
    elif kind == "dir":
        if token in Direction.__members__:
            return Direction[token]
        legal = DIRECTIONS
    else:
        legal = DOMAINS[kind]
        for v in legal:
            if v.value == token:
                return v
    names = ", ".join(_render(v) for v in legal)
    raise ParseError("E_DOMAIN", f"{kind} value {token!r} is not one of {{{names}}}", st.line, st.column)


def _number(token: str, st: Statement) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError("E_DOMAIN", f"expected a number, got {token!r}", st.line, st.column) from None
    if not math.isfinite(v):
        raise ParseError("E_DOMAIN", f"expected a finite number, got {token!r}", st.line, st.column)
    return v


def _render(v) -> str:
    return v.value if hasattr(v, "value") else str(v)


def parse_scene(text: str, scene_id: Optional[str] = None) -> tuple[Scene, Optional[SceneGroundings]]:
    """Parse and fully validate a scene database."""
    header: dict[str, str] = {}
    keys: dict[int, str] = {}
    attrs: dict[int, dict[str, object]] = {}
    quads: dict[int, int] = {}
    rels: dict[tuple[int, int], Direction] = {}
    pos: dict[int, tuple[float, float]] = {}
    sizes: dict[int, tuple[float, float]] = {}
    referenced: dict[int, Statement] = {}
    declared: set[int] = set()

    def assign(table, key, value, st, what):
        if key in table:
            raise ParseError("E_DUPLICATE", f"{what} already set to {_render_tuple(table[key])}", st.line, st.column)
        table[key] = value

    for item in iter_statements(text):
        if isinstance(item, tuple):
            keyword, value, lineno = item
            if keyword in header:
                raise ParseError("E_DUPLICATE", f"second '{keyword}' header", lineno, 1)
            header[keyword] = value
            continue
        st = item
        if st.pred not in SCENE_PREDICATES:
            raise ParseError("E_UNKNOWN_PREDICATE", f"unknown predicate {st.pred!r}", st.line, st.column)
        if len(st.args) != SCENE_PREDICATES[st.pred]:
            raise ParseError(
                "E_ARITY", f"{st.pred} takes {SCENE_PREDICATES[st.pred]} arguments, got {len(st.args)}", st.line, st.column
            )
        o = _object_ref(st.args[0], st)
        if st.pred == "object":
            if not _KEY.match(st.args[1]):
                raise ParseError("E_DOMAIN", f"invalid catalog key {st.args[1]!r}", st.line, st.column)
            assign(keys, o, st.args[1], st, f"object(o{o})")
            declared.add(o)
        elif st.pred in ATTRIBUTES:
            assign(attrs.setdefault(o, {}), st.pred, _domain_value(st.pred, st.args[1], st), st, f"{st.pred}(o{o})")
            declared.add(o)
        elif st.pred == "quad":
            assign(quads, o, _domain_value("quad", st.args[1], st), st, f"quad(o{o})")
            referenced.setdefault(o, st)
        elif st.pred == "dir":
            j = _object_ref(st.args[1], st)
            if j == o:
                raise ParseError("E_DOMAIN", f"dir relates o{o} to itself", st.line, st.column)
            assign(rels, (o, j), _domain_value("dir", st.args[2], st), st, f"dir(o{o}, o{j})")
            referenced.setdefault(o, st)
            referenced.setdefault(j, st)
        else:
            xy = (_number(st.args[1], st), _number(st.args[2], st))
            assign(pos if st.pred == "pos" else sizes, o, xy, st, f"{st.pred}(o{o})")
            referenced.setdefault(o, st)

    for o, st in sorted(referenced.items()):
        if o not in declared:
            raise ParseError("E_DANGLING", f"o{o} is referenced but never described", st.line, st.column)
    if not declared:
        raise ParseError("E_MISSING", "scene describes no objects")
    k = max(declared) + 1
    for o in range(k):
        if o not in declared:
            raise ParseError("E_MISSING", f"object ids must be contiguous; o{o} is missing")
        missing = [a for a in ATTRIBUTES if a not in attrs.get(o, {})]
        if missing:
            raise ParseError("E_MISSING", f"o{o} lacks {', '.join(missing)}")
        if (o in pos) != (o in sizes):
            raise ParseError("E_MISSING", f"o{o} needs both pos and size2d")
    if pos and len(pos) != k:
        raise ParseError("E_MISSING", "either every object or none has a position")

    objects = []
    for o in range(k):
        geometry = None
        if o in pos:
            try:
                geometry = Geometry(pos[o], sizes[o])
            except DeskOrgError as exc:
                raise ParseError("E_DOMAIN", f"o{o}: {exc}") from None
        objects.append(ObjectInstance(o, keys.get(o, DEFAULT_CATALOG_KEY), AttributeSet(**attrs[o]), geometry))
    sid = header.get("scene", scene_id if scene_id is not None else "scene")
    scene = Scene(sid, tuple(objects), header.get("participant"))

    groundings = None
    if quads or rels:
        groundings = SceneGroundings(quads, rels)
        problems = groundings_problems(groundings, range(k))
        if problems:
            raise ParseError("E_GROUNDINGS", "; ".join(problems))
    return scene, groundings


def _render_tuple(v) -> str:
    if isinstance(v, tuple):
        return "(" + ", ".join(_render(x) for x in v) + ")"
    return _render(v)


def serialize_scene(scene: Scene, groundings: Optional[SceneGroundings] = None) -> str:
    """Canonical text: headers, then statements sorted by predicate and arguments."""
    for name in (scene.scene_id, scene.participant_id or "-"):
        if not name or any(c.isspace() or c == "#" for c in name):
            raise DataError(f"identifier {name!r} cannot be written as a scene header")
    rows: list[tuple[str, tuple, str]] = []

    def add(pred, sort_key, args):
        rows.append((pred, sort_key, f"{pred}({', '.join(args)})."))

    for o in scene:
        add("object", (o.object_id,), (f"o{o.object_id}", o.catalog_key))
        for a in ATTRIBUTES:
            add(a, (o.object_id,), (f"o{o.object_id}", _render(o.attrs.get(a))))
        if o.geometry is not None:
            add("pos", (o.object_id,), (f"o{o.object_id}", *map(repr, o.geometry.center)))
            add("size2d", (o.object_id,), (f"o{o.object_id}", *map(repr, o.geometry.footprint)))
    if groundings is not None:
        for o, q in groundings.quads.items():
            add("quad", (o,), (f"o{o}", str(q)))
        for (i, j), d in groundings.rels.items():
            add("dir", (i, j), (f"o{i}", f"o{j}", Direction(d).value))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = [f"scene {scene.scene_id}"]
    if scene.participant_id is not None:
        lines.append(f"participant {scene.participant_id}")
    lines.extend(r[2] for r in rows)
    return "\n".join(lines) + "\n"


# formulas ------------------------------------------------------------------

_LITERAL = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*")


def parse_formula(text: str) -> tuple[Literal, ...]:
    """Parse ``pred(args) ^ pred(args) ...``; ground values are coerced to domains."""
    literals = []
    for n, part in enumerate(text.split("^")):
        m = _LITERAL.fullmatch(part)
        if m is None:
            raise ParseError("E_SYNTAX", f"malformed literal {part.strip()!r}", 1, n + 1)
        pred = m.group(1)
        args = tuple(a.strip() for a in m.group(2).split(","))
        if pred not in PREDICATES:
            raise ParseError("E_UNKNOWN_PREDICATE", f"unknown predicate {pred!r}", 1, n + 1)
        if len(args) != len(PREDICATES[pred].arg_domains):
            raise ParseError("E_ARITY", f"{pred} takes {len(PREDICATES[pred].arg_domains)} arguments", 1, n + 1)
        value = args[-1]
        if not value.startswith("+"):
            st = Statement(pred, args, 1, n + 1)
            value = _domain_value(pred, value, st)
        literals.append(Literal(pred, (*args[:-1], value)))
    return tuple(literals)


def parse_template(text: str) -> FormulaTemplate:
    try:
        return FormulaTemplate(parse_formula(text))
    except ParseError:
        raise
    except DeskOrgError as exc:
        raise ParseError("E_SYNTAX", str(exc)) from None


def format_weighted(weight: float, formula: str) -> str:
    return f"{weight!r}\t{formula}"


def parse_weighted(line: str) -> tuple[float, tuple[Literal, ...]]:
    weight, sep, formula = line.rstrip("\n").partition("\t")
    if not sep:
        raise ParseError("E_SYNTAX", "expected 'weight<TAB>formula'", 1, 1)
    return _number(weight, Statement("weight", (), 1, 1)), parse_formula(formula)


# s-expressions ---------------------------------------------------------------

_SEXP_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")


def parse_sexp(text: str):
    """Nested lists of atom strings."""
    tokens = _SEXP_TOKEN.findall(text)
    if "".join(text.split()) != "".join(tokens):
        raise ParseError("E_SYNTAX", "unexpected characters in s-expression")
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise ParseError("E_SYNTAX", "unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1 or len(stack[0]) != 1:
        raise ParseError("E_SYNTAX", "expected exactly one top-level expression")
    return stack[0][0]


def _tree_sexp(node: TreeNode, out: list[str]) -> None:
    # explicit stack: fully grown trees can be deep
    stack: list = [node]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
        elif isinstance(item, Leaf):
            out.append("(leaf " + " ".join(map(str, item.counts)) + ")")
        else:
            out.append(f"(split {item.feature} ")
            stack.extend([")", item.right, " ", item.left])


FOREST_FORMAT = "deskorg-forest"
FOREST_VERSION = 1


def _mask_sexp(mask: ModalityMask) -> str:
    groups = " ".join(f"({k} {' '.join(v)})" for k, v in mask.modality_map)
    return f"(mask {mask.name} {groups})"


def _mask_from(items) -> ModalityMask:
    return ModalityMask.parse(items[1], {g[0]: tuple(g[1:]) for g in items[2:]})


def serialize_forest(model: ForestModel) -> str:
    labels = " ".join(_render(v) for v in model.label_domain)
    lines = [
        f"({FOREST_FORMAT} {FOREST_VERSION}",
        f" (target {model.target or '-'})",
        f" (k_train {model.k_train if model.k_train is not None else '-'})",
        f" {_mask_sexp(model.mask)}" if model.mask is not None else " (mask -)",
        f" (input_dim {model.input_dim})",
        f" (labels {labels})",
    ]
    for tree in model.trees:
        parts: list[str] = []
        _tree_sexp(tree, parts)
        lines.append(" (tree " + "".join(parts) + ")")
    return "\n".join(lines) + ")\n"


def _label_parser(target: str):
    if target == "quad":
        return int
    if target == "rel":
        return lambda s: Direction[s]
    return str


def _tree_from(expr) -> TreeNode:
    # iterative post-order rebuild
    result: list[TreeNode] = []
    stack = [(expr, False)]
    while stack:
        e, done = stack.pop()
        if e[0] == "leaf":
            result.append(Leaf(tuple(int(c) for c in e[1:])))
        elif e[0] == "split" and len(e) == 4:
            if done:
                right, left = result.pop(), result.pop()
                result.append(Split(int(e[1]), left, right))
            else:
                stack.extend([(e, True), (e[3], False), (e[2], False)])
        else:
            raise ParseError("E_MODEL", f"malformed tree node {e[:2]!r}")
    return result[0]


def parse_forest(text: str) -> ForestModel:
    expr = parse_sexp(text)
    if not isinstance(expr, list) or expr[:1] != [FOREST_FORMAT]:
        raise ParseError("E_MODEL", "not a forest model document")
    if expr[1] != str(FOREST_VERSION):
        raise ParseError("E_MODEL", f"unsupported forest format version {expr[1]}")
    fields = {}
    trees = []
    for item in expr[2:]:
        if item[0] == "tree":
            trees.append(_tree_from(item[1]))
        else:
            fields[item[0]] = item
    try:
        target = fields["target"][1]
        target = "" if target == "-" else target
        k_train = None if fields["k_train"][1] == "-" else int(fields["k_train"][1])
        mask = None if fields["mask"][1] == "-" else _mask_from(fields["mask"])
        labels = tuple(map(_label_parser(target), fields["labels"][1:]))
        return ForestModel(tuple(trees), labels, int(fields["input_dim"][1]), k_train, mask, target)
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError("E_MODEL", f"invalid forest model: {exc}") from None


MLN_FORMAT = "deskorg-mln"
MLN_VERSION = 1


def serialize_mln(mln: GroundedMln) -> str:
    lines = [f"{MLN_FORMAT} {MLN_VERSION}", f"mask {mln.mask.name}"]
    lines += [f"modality {k} {' '.join(v)}" for k, v in mln.mask.modality_map]
    lines += [f"template {t.text()}" for t in mln.templates]
    lines.append(f"weights {mln.n_features}")
    lines += [repr(float(w)) for w in mln.weights]
    return "\n".join(lines) + "\n"


def parse_mln(text: str) -> GroundedMln:
    lines = text.splitlines()
    if not lines or lines[0] != f"{MLN_FORMAT} {MLN_VERSION}":
        raise ParseError("E_MODEL", "not a version-1 MLN model document", 1, 1)
    mask_name = None
    groups = {}
    templates = []
    n = 1
    while n < len(lines):
        key, _, rest = lines[n].partition(" ")
        if key == "mask":
            mask_name = rest
        elif key == "modality":
            letter, *attrs = rest.split()
            groups[letter] = tuple(attrs)
        elif key == "template":
            templates.append(parse_template(rest))
        elif key == "weights":
            count = int(rest)
            values = lines[n + 1:n + 1 + count]
            if len(values) != count:
                raise ParseError("E_MODEL", f"expected {count} weights, found {len(values)}", n + 1, 1)
            weights = np.array([float(v) for v in values])
            try:
                return GroundedMln(tuple(templates), ModalityMask.parse(mask_name, groups or None), weights)
            except DeskOrgError as exc:
                raise ParseError("E_MODEL", str(exc)) from None
        else:
            raise ParseError("E_MODEL", f"unexpected line {lines[n]!r}", n + 1, 1)
        n += 1
    raise ParseError("E_MODEL", "missing weights section")


def read_scene_file(path) -> tuple[Scene, Optional[SceneGroundings]]:
    p = Path(path)
    return parse_scene(p.read_text(encoding="utf-8"), scene_id=p.stem)


def write_scene_file(path, scene: Scene, groundings: Optional[SceneGroundings] = None) -> None:
    Path(path).write_text(serialize_scene(scene, groundings), encoding="utf-8")
