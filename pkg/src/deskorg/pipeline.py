"""Scene-level training and per-atom prediction for both model kinds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DIRECTIONS, QUADRANTS, Direction, Scene, SceneGroundings, derived_dir_from_quads
from .errors import ConfigurationError, DimensionError
from .features import ModalityMask, scene_quad_matrix, scene_rel_matrix
from .forest import ForestModel, fit_forest, predict_many
from .mln import GroundedMln, LearningHyper, predict_groundings, train_mln, WorldDatabase

MODEL_KINDS = ("forest", "mln")


@dataclass(frozen=True)
class ForestPair:
    rf_quad: ForestModel
    rf_rel: ForestModel

    @property
    def mask(self) -> ModalityMask:
        return self.rf_quad.mask

    @property
    def k_train(self) -> int:
        return self.rf_quad.k_train


def ordered_pairs(k: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(k) for j in range(k) if i != j]


def homogeneous_k(scenes: Sequence[Scene]) -> int:
    ks = sorted({s.k for s in scenes})
    if len(ks) != 1:
        raise DimensionError(f"forest models need scenes with one object count, got K in {ks}")
    return ks[0]


def same_quadrant_pairs(quads: dict, k: int) -> list[tuple[int, int]]:
    return [(i, j) for i, j in ordered_pairs(k) if quads[i] == quads[j]]


def train_forests(
    scenes: Sequence[Scene],
    truths: Sequence[SceneGroundings],
    mask: ModalityMask,
    rng_seed: int = 0,
    n_trees: int = 20,
    **forest_kwargs,
) -> ForestPair:
    """Fit the quadrant forest and the relation forest on the same scenes.

    The relation forest only sees same-quadrant pairs: relations across
    quadrants follow from the quadrants themselves.
    """
    if not scenes:
        raise ConfigurationError("no training scenes")
    k = homogeneous_k(scenes)
    Xq = np.concatenate([scene_quad_matrix(s, mask, k) for s in scenes])
    yq = [t.quads[i] for t in truths for i in range(k)]
    rf_quad = fit_forest(
        Xq, yq, n_trees, rng_seed, label_domain=QUADRANTS, k_train=k, mask=mask, target="quad", **forest_kwargs
    )
    rel_rows, yr = [], []
    for s, t in zip(scenes, truths):
        pairs = same_quadrant_pairs(t.quads, k)
        if pairs:
            rel_rows.append(scene_rel_matrix(s, mask, pairs, k))
            yr.extend(t.rels[p] for p in pairs)
    if rel_rows:
        Xr = np.concatenate(rel_rows)
    else:
        # no same-quadrant pair anywhere in training: a single NONE leaf
        Xr = np.zeros((1, Xq.shape[1]), dtype=np.uint8)
        yr = [Direction.NONE]
    rf_rel = fit_forest(
        Xr, yr, n_trees, rng_seed + 1, label_domain=DIRECTIONS, k_train=k, mask=mask, target="rel", **forest_kwargs
    )
    return ForestPair(rf_quad, rf_rel)


def forest_predict_groundings(models: ForestPair, scene: Scene) -> SceneGroundings:
    """Per-atom predictions without conflict resolution.

    Quadrants come from the quadrant forest; a pair predicted to share a
    quadrant is answered by the relation forest, any other pair by the
    quadrant layout.
    """
    k = models.k_train
    quads = dict(zip(range(scene.k), predict_many(models.rf_quad, scene_quad_matrix(scene, models.mask, k))))
    rels = {}
    same = same_quadrant_pairs(quads, k)
    if same:
        rels = dict(zip(same, predict_many(models.rf_rel, scene_rel_matrix(scene, models.mask, same, k))))
    for i, j in ordered_pairs(k):
        if quads[i] != quads[j]:
            rels[(i, j)] = derived_dir_from_quads(quads[i], quads[j])
    return SceneGroundings(quads, rels)


def fit_model(
    kind: str,
    scenes: Sequence[Scene],
    truths: Sequence[SceneGroundings],
    mask: ModalityMask,
    rng_seed: int = 0,
    *,
    n_trees: int = 20,
    hyper: Optional[LearningHyper] = None,
    forest_kwargs: Optional[dict] = None,
):
    if kind == "forest":
        return train_forests(scenes, truths, mask, rng_seed, n_trees, **(forest_kwargs or {}))
    if kind == "mln":
        return train_mln(scenes, truths, mask, hyper or LearningHyper())
    raise ConfigurationError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def predict_scene(model, scene: Scene) -> SceneGroundings:
    if isinstance(model, ForestPair):
        return forest_predict_groundings(model, scene)
    if isinstance(model, GroundedMln):
        return predict_groundings(model, WorldDatabase.from_scene(scene))
    raise ConfigurationError(f"cannot predict with {type(model).__name__}")
