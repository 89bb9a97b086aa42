"""Restricted Markov logic network for desk relations.

Every formula template is a conjunction of attribute atoms plus exactly one
relation atom (``quad`` or ``dir``), and relation atoms are functional. Given
complete attribute evidence the conditional distribution over relation atoms
therefore factorises per atom, so inference is an exact softmax over each
atom's value domain and learning is multinomial logistic regression on the
expanded ground features.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .core import ATTRIBUTES, DIRECTIONS, DOMAINS, QUADRANTS, AttributeSet, Scene, SceneGroundings
from .errors import ConfigurationError, DataError, EvidenceIncompleteError, NumericalError
from .features import ModalityMask

RELATION_DOMAINS = {"quad": QUADRANTS, "dir": DIRECTIONS}
ALL_DOMAINS = {**DOMAINS, **RELATION_DOMAINS}


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    arg_domains: tuple[str, ...]
    functional_slot: Optional[int] = None


PREDICATES: dict[str, PredicateDecl] = {
    **{a: PredicateDecl(a, ("object", a), 1) for a in ATTRIBUTES},
    "quad": PredicateDecl("quad", ("object", "quad"), 1),
    "dir": PredicateDecl("dir", ("object", "object", "dir"), 2),
}


@dataclass(frozen=True)
class Literal:
    """``pred(args)``; object arguments are variables, the value argument is a
    ``+slot`` to be expanded or, in a ground feature, a domain value."""

    pred: str
    args: tuple

    def render(self) -> str:
        return f"{self.pred}({', '.join(_render_value(a) for a in self.args)})"


def _render_value(v) -> str:
    return v.value if hasattr(v, "value") else str(v)


@dataclass(frozen=True)
class FormulaTemplate:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        relations = [lit for lit in self.literals if lit.pred in RELATION_DOMAINS]
        if len(relations) != 1:
            raise ConfigurationError(f"template {self.text()!r} needs exactly one quad/dir atom")
        rel = relations[0]
        decl = PREDICATES[rel.pred]
        if len(rel.args) != len(decl.arg_domains):
            raise ConfigurationError(f"{rel.pred} takes {len(decl.arg_domains)} arguments")
        variables = rel.args[:-1]
        if len(set(variables)) != len(variables):
            raise ConfigurationError(f"relation atom {rel.render()} repeats a variable")
        for lit in self.literals:
            if lit.pred not in PREDICATES:
                raise ConfigurationError(f"unknown predicate {lit.pred!r}")
            if len(lit.args) != len(PREDICATES[lit.pred].arg_domains):
                raise ConfigurationError(f"wrong arity for {lit.render()}")
            if not str(lit.args[-1]).startswith("+"):
                raise ConfigurationError(f"value argument of {lit.render()} must be a +slot")
            if lit is not rel and lit.args[0] not in variables:
                raise ConfigurationError(f"{lit.render()} uses a variable not bound by {rel.render()}")

    @property
    def relation(self) -> Literal:
        return next(lit for lit in self.literals if lit.pred in RELATION_DOMAINS)

    @property
    def relation_kind(self) -> str:
        return self.relation.pred

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.relation.args[:-1])

    @property
    def attribute_slots(self) -> tuple[tuple[str, int], ...]:
        """(attribute, variable position) for each attribute literal, in order."""
        pos = {v: i for i, v in enumerate(self.variables)}
        return tuple((lit.pred, pos[lit.args[0]]) for lit in self.literals if lit.pred not in RELATION_DOMAINS)

    @property
    def size(self) -> int:
        n = len(RELATION_DOMAINS[self.relation_kind])
        for attr, _ in self.attribute_slots:
            n *= len(DOMAINS[attr])
        return n

    def text(self) -> str:
        return " ^ ".join(lit.render() for lit in self.literals)

    def ground(self, values: Sequence) -> str:
        """Render with the expansion slots bound to ``values`` (literal order)."""
        parts = []
        for lit, v in zip(self.literals, values):
            parts.append(Literal(lit.pred, (*lit.args[:-1], v)).render())
        return " ^ ".join(parts)


def _slot_name(attr: str) -> str:
    return {"color": "c", "shape": "s", "size": "z", "weight": "w", "rigidity": "r", "utility": "u"}[attr]


def quad_template(attr: str) -> FormulaTemplate:
    return FormulaTemplate((Literal(attr, ("o1", f"+{_slot_name(attr)}")), Literal("quad", ("o1", "+q"))))


def pair_template(attr_a: str, attr_b: str) -> FormulaTemplate:
    return FormulaTemplate((
        Literal(attr_a, ("o1", f"+{_slot_name(attr_a)}1")),
        Literal(attr_b, ("o2", f"+{_slot_name(attr_b)}2")),
        Literal("dir", ("o1", "o2", "+d")),
    ))


def default_templates(mask: ModalityMask) -> list[FormulaTemplate]:
    """One quad template per enabled attribute and one dir template per
    unordered pair of enabled attributes, self-pairs included."""
    attrs = mask.attributes
    templates = [quad_template(a) for a in attrs]
    templates += [pair_template(a, b) for a, b in itertools.combinations_with_replacement(attrs, 2)]
    return templates


@dataclass(frozen=True)
class GroundFeature:
    template_id: int
    values: tuple  # one value per literal, relation value included
    weight: float


class QueryAtom(NamedTuple):
    pred: str
    args: tuple

    @classmethod
    def quad(cls, i: int) -> "QueryAtom":
        return cls("quad", (i,))

    @classmethod
    def dir(cls, i: int, j: int) -> "QueryAtom":
        return cls("dir", (i, j))


@dataclass(frozen=True)
class LearningTrace:
    objectives: tuple[float, ...]
    step_sizes: tuple[float, ...]
    grad_norm: float
    converged: bool


@dataclass(frozen=True)
class GroundedMln:
    templates: tuple[FormulaTemplate, ...]
    mask: ModalityMask
    weights: np.ndarray
    trace: Optional[LearningTrace] = field(default=None, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (self.n_features,):
            raise DataError(f"expected {self.n_features} weights, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "templates", tuple(self.templates))
        object.__setattr__(self, "weights", w)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(np.cumsum([0] + [t.size for t in self.templates])[:-1].tolist())

    @property
    def n_features(self) -> int:
        return sum(t.size for t in self.templates)

    @property
    def features(self) -> list[GroundFeature]:
        out = []
        idx = 0
        for t_id, t in enumerate(self.templates):
            for values in _template_values(t):
                out.append(GroundFeature(t_id, values, float(self.weights[idx])))
                idx += 1
        return out

    def with_weights(self, weights, trace=None) -> "GroundedMln":
        return GroundedMln(self.templates, self.mask, weights, trace)

    def feature_text(self, index: int) -> str:
        t_id, values = self.locate(index)
        return self.templates[t_id].ground(values)

    def locate(self, index: int) -> tuple[int, tuple]:
        """Template id and bound slot values of feature ``index``."""
        if not 0 <= index < self.n_features:
            raise IndexError(index)
        for t_id, (t, off) in enumerate(zip(self.templates, self.offsets)):
            if index < off + t.size:
                local = index - off
                sizes = [len(DOMAINS[a]) for a, _ in t.attribute_slots] + [len(RELATION_DOMAINS[t.relation_kind])]
                digits = []
                for s in reversed(sizes):
                    digits.append(local % s)
                    local //= s
                digits.reverse()
                attr_doms = [DOMAINS[a] for a, _ in t.attribute_slots] + [RELATION_DOMAINS[t.relation_kind]]
                values = tuple(d[k] for d, k in zip(attr_doms, digits))
                return t_id, _reorder_to_literals(t, values)
        raise IndexError(index)

    def feature_index(self, template_id: int, values: Sequence) -> int:
        """Inverse of :meth:`locate`; ``values`` follow literal order."""
        t = self.templates[template_id]
        ordered = _reorder_from_literals(t, values)
        doms = [DOMAINS[a] for a, _ in t.attribute_slots] + [RELATION_DOMAINS[t.relation_kind]]
        local = 0
        for dom, v in zip(doms, ordered):
            local = local * len(dom) + dom.index(v)
        return self.offsets[template_id] + local


def _relation_position(t: FormulaTemplate) -> int:
    return next(i for i, lit in enumerate(t.literals) if lit.pred in RELATION_DOMAINS)


def _reorder_to_literals(t: FormulaTemplate, values: tuple) -> tuple:
    """(attr values..., relation value) -> literal order."""
    attr_vals = list(values[:-1])
    rel_pos = _relation_position(t)
    return tuple(attr_vals[:rel_pos] + [values[-1]] + attr_vals[rel_pos:])


def _reorder_from_literals(t: FormulaTemplate, values: Sequence) -> tuple:
    values = list(values)
    rel_pos = _relation_position(t)
    rel = values.pop(rel_pos)
    return (*values, rel)


def _template_values(t: FormulaTemplate):
    doms = [DOMAINS[a] for a, _ in t.attribute_slots] + [RELATION_DOMAINS[t.relation_kind]]
    for combo in itertools.product(*doms):
        yield _reorder_to_literals(t, combo)


def expand_templates(templates: Sequence[FormulaTemplate], mask: ModalityMask) -> GroundedMln:
    """Expand every template over its slot domains, with zero weights."""
    enabled = set(mask.attributes)
    for t in templates:
        used = {a for a, _ in t.attribute_slots}
        if not used <= enabled:
            raise ConfigurationError(
                f"template {t.text()!r} uses {sorted(used - enabled)}, which mask {mask} disables"
            )
    size = sum(t.size for t in templates)
    return GroundedMln(tuple(templates), mask, np.zeros(size))


def closed_form_feature_count(templates: Sequence[FormulaTemplate]) -> int:
    return sum(t.size for t in templates)


@dataclass(frozen=True)
class WorldDatabase:
    """Attribute evidence for one scene plus its relational truth."""

    evidence: Mapping[int, Mapping[str, object]]
    truth: Optional[SceneGroundings] = None

    @classmethod
    def from_scene(cls, scene: Scene, truth: Optional[SceneGroundings] = None) -> "WorldDatabase":
        return cls({o.object_id: o.attrs.as_dict() for o in scene}, truth)

    @property
    def objects(self) -> list[int]:
        return sorted(self.evidence)

    def atoms(self) -> list[str]:
        """True attribute groundings in predicate syntax."""
        out = []
        for o in self.objects:
            for attr, v in self.evidence[o].items():
                out.append(f"{attr}(o{o}, {_render_value(v)})")
        return out

    def query_atoms(self) -> list[QueryAtom]:
        objs = self.objects
        return [QueryAtom.quad(i) for i in objs] + [
            QueryAtom.dir(i, j) for i in objs for j in objs if i != j
        ]


def _evidence_value(evidence, obj: int, attr: str):
    attrs = evidence.get(obj)
    if attrs is None:
        raise EvidenceIncompleteError(f"no evidence for object o{obj}")
    if isinstance(attrs, AttributeSet):
        return attrs.get(attr)
    if attr not in attrs:
        raise EvidenceIncompleteError(f"evidence lacks {attr}(o{obj}, ?)")
    return attrs[attr]


def _check_query(query: QueryAtom) -> None:
    if query.pred not in RELATION_DOMAINS:
        raise DataError(f"only quad and dir atoms can be queried, got {query.pred!r}")
    if len(query.args) != len(PREDICATES[query.pred].arg_domains) - 1:
        raise DataError(f"malformed query atom {query}")
    if query.pred == "dir" and query.args[0] == query.args[1]:
        raise DataError(f"dir query needs two distinct objects: {query}")


def _atom_bases(mln: GroundedMln, evidence, query: QueryAtom) -> np.ndarray:
    """Index of each matching template's feature for the first relation value."""
    _check_query(query)
    bases = []
    rel_size = len(RELATION_DOMAINS[query.pred])
    for t, off in zip(mln.templates, mln.offsets):
        if t.relation_kind != query.pred:
            continue
        local = 0
        for attr, pos in t.attribute_slots:
            value = _evidence_value(evidence, query.args[pos], attr)
            local = local * len(DOMAINS[attr]) + DOMAINS[attr].index(value)
        bases.append(off + local * rel_size)
    return np.array(bases, dtype=np.int64)


def _evidence_of(db_or_evidence):
    return db_or_evidence.evidence if isinstance(db_or_evidence, WorldDatabase) else db_or_evidence


def atom_scores(mln: GroundedMln, evidence, query: QueryAtom) -> np.ndarray:
    """Score of every value in the query's domain, in domain order."""
    bases = _atom_bases(mln, _evidence_of(evidence), query)
    rel_size = len(RELATION_DOMAINS[query.pred])
    if bases.size == 0:
        return np.zeros(rel_size)
    return mln.weights[bases[:, None] + np.arange(rel_size)].sum(axis=0)


def score_value(mln: GroundedMln, evidence, query_atom: QueryAtom, candidate_value) -> float:
    domain = RELATION_DOMAINS[query_atom.pred]
    if candidate_value not in domain:
        raise DataError(f"{candidate_value!r} is not a {query_atom.pred} value")
    return float(atom_scores(mln, evidence, query_atom)[domain.index(candidate_value)])


def infer_map(mln: GroundedMln, evidence, query_atom: QueryAtom):
    scores = atom_scores(mln, evidence, query_atom)
    return RELATION_DOMAINS[query_atom.pred][int(np.argmax(scores))]


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def infer_marginal(mln: GroundedMln, evidence, query_atom: QueryAtom) -> dict:
    p = _softmax(atom_scores(mln, evidence, query_atom))
    return dict(zip(RELATION_DOMAINS[query_atom.pred], p.tolist()))


def predict_groundings(mln: GroundedMln, evidence) -> SceneGroundings:
    """Per-atom MAP for every quad atom and every ordered-pair dir atom."""
    ev = _evidence_of(evidence)
    objs = sorted(ev)
    quads = {i: infer_map(mln, ev, QueryAtom.quad(i)) for i in objs}
    rels = {(i, j): infer_map(mln, ev, QueryAtom.dir(i, j)) for i in objs for j in objs if i != j}
    return SceneGroundings(quads, rels)


@dataclass(frozen=True)
class LearningHyper:
    learning_rate: float = 0.1
    l2_lambda: float = 1e-4
    max_iters: int = 500
    grad_tol: float = 1e-6
    step_growth: float = 1.2  # 1.0 gives fixed-step ascent


class _Compiled(NamedTuple):
    bases: np.ndarray  # (n_atoms, n_templates)
    truth: np.ndarray  # (n_atoms,)
    rel_size: int


def _compile(mln: GroundedMln, training: Sequence[WorldDatabase]) -> list[_Compiled]:
    groups = []
    for kind, domain in RELATION_DOMAINS.items():
        n_t = sum(t.relation_kind == kind for t in mln.templates)
        rows, truth = [], []
        for db in training:
            if db.truth is None:
                raise DataError("training databases need relational truth")
            for q in db.query_atoms():
                if q.pred != kind:
                    continue
                rows.append(_atom_bases(mln, db.evidence, q))
                value = db.truth.quads[q.args[0]] if kind == "quad" else db.truth.rels[q.args]
                truth.append(domain.index(value))
        if not rows:
            continue
        groups.append(_Compiled(
            np.array(rows, dtype=np.int64).reshape(len(rows), n_t),
            np.array(truth, dtype=np.int64),
            len(domain),
        ))
    return groups


class _Objective:
    """Mean conditional log-likelihood of relation atoms minus an L2 penalty."""

    def __init__(self, n_features: int, groups: list[_Compiled], l2: float):
        self.n_features = n_features
        self.groups = groups
        self.l2 = l2
        self.n_atoms = sum(len(g.truth) for g in groups)
        observed = np.zeros(n_features)
        for g in groups:
            if g.bases.shape[1]:
                observed += np.bincount((g.bases + g.truth[:, None]).ravel(), minlength=n_features)
        self.observed = observed

    def __call__(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        loglik = 0.0
        expected = np.zeros(self.n_features)
        for g in self.groups:
            n, n_t = g.bases.shape
            if n_t == 0:
                loglik += -n * np.log(g.rel_size)
                continue
            idx = g.bases[:, :, None] + np.arange(g.rel_size)  # (n, T, R)
            scores = w[idx].sum(axis=1)
            shift = scores.max(axis=1, keepdims=True)
            logz = shift[:, 0] + np.log(np.exp(scores - shift).sum(axis=1))
            loglik += float((scores[np.arange(n), g.truth] - logz).sum())
            p = np.exp(scores - logz[:, None])
            expected += np.bincount(
                idx.ravel(), weights=np.broadcast_to(p[:, None, :], idx.shape).ravel(), minlength=self.n_features
            )
        obj = loglik / self.n_atoms - self.l2 * float(w @ w)
        grad = (self.observed - expected) / self.n_atoms - 2.0 * self.l2 * w
        return obj, grad


def objective_and_gradient(mln: GroundedMln, training: Sequence[WorldDatabase], l2_lambda: float, weights=None):
    """Learning objective and its analytic gradient at ``weights`` (default: the model's)."""
    f = _Objective(mln.n_features, _compile(mln, training), l2_lambda)
    return f(np.asarray(mln.weights if weights is None else weights, dtype=np.float64))


def learn_weights(
    mln: GroundedMln,
    training: Sequence[WorldDatabase],
    hyper: LearningHyper = LearningHyper(),
) -> GroundedMln:
    """Batch gradient ascent on the conditional log-likelihood.

    A step that would lower the objective is retried at half the step size,
    so the recorded objective sequence never decreases; accepted steps grow
    the step size by ``step_growth``.
    """
    if not training:
        raise DataError("cannot learn weights from an empty training set")
    f = _Objective(mln.n_features, _compile(mln, training), hyper.l2_lambda)
    w = np.array(mln.weights, dtype=np.float64)
    obj, grad = f(w)
    objectives, steps = [obj], []
    lr = hyper.learning_rate
    converged = False
    for it in range(hyper.max_iters):
        gnorm = float(np.abs(grad).max()) if grad.size else 0.0
        if gnorm < hyper.grad_tol:
            converged = True
            break
        while True:
            w_new = w + lr * grad
            obj_new, grad_new = f(w_new)
            if not np.isfinite(obj_new):
                raise NumericalError("objective became non-finite", iteration=it, objective=obj_new, grad_norm=gnorm)
            if obj_new >= obj:
                break
            lr *= 0.5
            if lr < 1e-12:
                converged = True
                break
        if converged:
            break
        w, obj, grad = w_new, obj_new, grad_new
        objectives.append(obj)
        steps.append(lr)
        lr *= hyper.step_growth
    gnorm = float(np.abs(grad).max()) if grad.size else 0.0
    trace = LearningTrace(tuple(objectives), tuple(steps), gnorm, converged or gnorm < hyper.grad_tol)
    return mln.with_weights(w, trace)


def dump_top_formulas(mln: GroundedMln, n: int) -> list[tuple[str, float]]:
    if n <= 0:
        return []
    order = np.argsort(-mln.weights, kind="stable")[:n]
    return [(mln.feature_text(int(i)), float(mln.weights[i])) for i in order]


def train_mln(
    scenes: Sequence[Scene],
    truths: Sequence[SceneGroundings],
    mask: ModalityMask,
    hyper: LearningHyper = LearningHyper(),
    templates: Optional[Sequence[FormulaTemplate]] = None,
) -> GroundedMln:
    templates = default_templates(mask) if templates is None else templates
    dbs = [WorldDatabase.from_scene(s, t) for s, t in zip(scenes, truths)]
    return learn_weights(expand_templates(templates, mask), dbs, hyper)
