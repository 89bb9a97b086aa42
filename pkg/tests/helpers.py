"""Shared generators for the organize and acceptance tests."""

import itertools
from collections import Counter

import numpy as np

from deskorg.catalog import generate_scene, load_catalog, load_ruleset, rule_annotate
from deskorg.core import DIRECTIONS, QUADRANTS, Geometry, ObjectInstance, annotate_scene, make_scene
from deskorg.features import ModalityMask, object_layout
from deskorg.fileio import parse_formula
from deskorg.forest import fit_forest
from deskorg.mln import QueryAtom, WorldDatabase, objective_and_gradient
from deskorg.organize import realize

CATALOG = load_catalog()
SMALL = (0.03, 0.03)


def geometric_groundings(rng, max_per_quadrant=4, k_max=9):
    """Groundings read off a random layout, so they are conflict-free by construction."""
    while True:
        k = int(rng.integers(2, k_max + 1))
        scene = generate_scene(int(rng.integers(1 << 30)), CATALOG, k, k)
        objs = [ObjectInstance(o.object_id, o.catalog_key, o.attrs, Geometry(tuple(rng.random(2)), SMALL)) for o in scene]
        g = annotate_scene(make_scene("r", objs))
        if max(Counter(g.quads.values()).values()) <= max_per_quadrant:
            return g, objs


def round_trip_counts(g, objs):
    """(reproduced, total) same-quadrant cardinal relations after realize and re-annotation."""
    plan = realize(g, {o.object_id: SMALL for o in objs}, objs)
    back = annotate_scene(make_scene("back", plan.placed_objects()))
    hit = total = 0
    for (i, j), d in g.rels.items():
        if g.quads[i] == g.quads[j] and d.is_cardinal:
            total += 1
            hit += back.rels[(i, j)] == d
    return hit, total


def random_forests(seed, k=4, mask="V", n=40, quads=(1, 2)):
    """A quadrant and a relation forest fitted to noise; the relation forest contradicts itself freely."""
    rng = np.random.default_rng(seed)
    m = ModalityMask.parse(mask)
    dim = len(object_layout(m)) * k
    X = rng.integers(0, 2, size=(n, dim), dtype=np.uint8)
    yq = [int(q) for q in rng.choice(quads, size=n)]
    yr = [DIRECTIONS[i] for i in rng.integers(0, len(DIRECTIONS), size=n)]
    rf_quad = fit_forest(X, yq, 3, seed, label_domain=(1, 2, 3, 4), k_train=k, mask=m, target="quad")
    rf_rel = fit_forest(X, yr, 3, seed + 1, label_domain=DIRECTIONS, k_train=k, mask=m, target="rel")
    return rf_quad, rf_rel


def parsed_features(mln):
    """(weight, literals, variables) for every non-zero feature, parsed from its text."""
    out = []
    for idx in range(mln.n_features):
        if mln.weights[idx] != 0.0:
            literals = parse_formula(mln.feature_text(idx))
            variables = sorted({a for lit in literals for a in lit.args[:-1]})
            out.append((mln.weights[idx], literals, variables))
    return out


def world_log_potential(features, evidence, quads, rels):
    """Sum of weights of every satisfied grounding."""
    objects = sorted(evidence)
    total = 0.0
    for w, literals, variables in features:
        for binding in itertools.permutations(objects, len(variables)):
            env = dict(zip(variables, binding))
            ok = True
            for lit in literals:
                value = lit.args[-1]
                if lit.pred == "quad":
                    ok = quads[env[lit.args[0]]] == value
                elif lit.pred == "dir":
                    ok = rels[(env[lit.args[0]], env[lit.args[1]])] == value
                else:
                    ok = evidence[env[lit.args[0]]][lit.pred] == value
                if not ok:
                    break
            if ok:
                total += w
    return total


def brute_force_marginals(mln, evidence, with_dirs=True):
    objects = sorted(evidence)
    pairs = [(i, j) for i in objects for j in objects if i != j] if with_dirs else []
    features = parsed_features(mln)
    worlds, logp = [], []
    for qs in itertools.product(QUADRANTS, repeat=len(objects)):
        for ds in itertools.product(DIRECTIONS, repeat=len(pairs)):
            quads, rels = dict(zip(objects, qs)), dict(zip(pairs, ds))
            worlds.append((quads, rels))
            logp.append(world_log_potential(features, evidence, quads, rels))
    logp = np.array(logp)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    marg = {}
    for (quads, rels), pw in zip(worlds, p):
        for o, q in quads.items():
            marg.setdefault(QueryAtom.quad(o), dict.fromkeys(QUADRANTS, 0.0))[q] += pw
        for pair, d in rels.items():
            marg.setdefault(QueryAtom.dir(*pair), dict.fromkeys(DIRECTIONS, 0.0))[d] += pw
    return marg


def total_variation(p, q):
    return 0.5 * sum(abs(p[k] - q[k]) for k in p)


def small_training(seed, n_scenes=4):
    rules = load_ruleset()
    out = []
    for i in range(n_scenes):
        s = generate_scene(seed * 100 + i, CATALOG, 3, 4)
        out.append(WorldDatabase.from_scene(s, rule_annotate(s, rules)))
    return out


def gradient_rel_error(mln, dbs, lam, w, step=1e-4):
    _, g = objective_and_gradient(mln, dbs, lam, w)
    fd = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = step
        fd[k] = (objective_and_gradient(mln, dbs, lam, w + e)[0] - objective_and_gradient(mln, dbs, lam, w - e)[0]) / (2 * step)
    return np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
