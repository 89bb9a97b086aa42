"""Cross-validation, grounding accuracy, modality ablation and baselines."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import Scene, SceneGroundings
from .errors import ConfigurationError, DataError
from .features import ModalityMask, all_masks
from .mln import LearningHyper
from .pipeline import fit_model, homogeneous_k, predict_scene


class LabeledScene(NamedTuple):
    scene: Scene
    truth: SceneGroundings


def grounding_accuracy(pred: SceneGroundings, truth: SceneGroundings) -> tuple[float, float]:
    """Fraction of quadrant atoms and of ordered-pair relation atoms predicted right."""
    if sorted(pred.quads) != sorted(truth.quads):
        raise DataError(f"object sets differ: {sorted(pred.quads)} vs {sorted(truth.quads)}")
    if set(pred.rels) != set(truth.rels):
        raise DataError("predicted and true relations cover different pairs")
    quad_acc = sum(pred.quads[o] == q for o, q in truth.quads.items()) / len(truth.quads)
    if truth.rels:
        rel_acc = sum(pred.rels[p] == d for p, d in truth.rels.items()) / len(truth.rels)
    else:
        rel_acc = 1.0
    return quad_acc, rel_acc


def combined_accuracy(quad_acc: float, rel_acc: float, k: int) -> float:
    """Weight quadrant accuracy by K and relation accuracy by C(K, 2)."""
    if k < 2:
        raise ConfigurationError(f"combined accuracy needs K >= 2, got {k}")
    pairs = math.comb(k, 2)
    return (k * quad_acc + pairs * rel_acc) / (k + pairs)


def kfold(items: Sequence, k: int = 5, rng_seed: int = 0) -> list[tuple[list, list]]:
    """Seeded shuffle into ``k`` near-equal disjoint test folds."""
    if k < 2:
        raise ConfigurationError(f"need at least 2 folds, got {k}")
    if len(items) < k:
        raise ConfigurationError(f"{len(items)} items cannot fill {k} folds")
    order = np.random.default_rng(rng_seed).permutation(len(items))
    folds = np.array_split(order, k)
    splits = []
    for f in range(k):
        test_idx = set(folds[f].tolist())
        train = [items[i] for i in order if i not in test_idx]
        test = [items[i] for i in folds[f]]
        splits.append((train, test))
    return splits


@dataclass(frozen=True)
class FoldResult:
    quad_acc: float
    rel_acc: float
    combined: float


@dataclass(frozen=True)
class EvalReport:
    model_kind: str
    mask: ModalityMask
    seed: int
    folds: tuple[FoldResult, ...]

    @property
    def mean_quad(self) -> float:
        return statistics.fmean(f.quad_acc for f in self.folds)

    @property
    def mean_rel(self) -> float:
        return statistics.fmean(f.rel_acc for f in self.folds)

    @property
    def mean_combined(self) -> float:
        return statistics.fmean(f.combined for f in self.folds)

    @property
    def std_combined(self) -> float:
        return statistics.pstdev(f.combined for f in self.folds) if len(self.folds) > 1 else 0.0


def score_predictions(pairs: Sequence[tuple[SceneGroundings, SceneGroundings]]) -> FoldResult:
    """Pool (prediction, truth) pairs; each scene is weighted by its atom counts."""
    q_hit = q_tot = r_hit = r_tot = 0.0
    num = den = 0.0
    for pred, truth in pairs:
        qa, ra = grounding_accuracy(pred, truth)
        k = len(truth.quads)
        q_hit += qa * k
        q_tot += k
        r_hit += ra * len(truth.rels)
        r_tot += len(truth.rels)
        c2 = math.comb(k, 2)
        num += k * qa + c2 * ra
        den += k + c2
    return FoldResult(q_hit / q_tot, r_hit / r_tot if r_tot else 1.0, num / den)


def evaluate_split(model, test: Sequence[LabeledScene]) -> FoldResult:
    return score_predictions([(predict_scene(model, s), t) for s, t in test])


def cross_validate(
    data: Sequence[LabeledScene],
    model_kind: str,
    mask: ModalityMask,
    k: int = 5,
    rng_seed: int = 0,
    *,
    n_trees: int = 20,
    hyper: Optional[LearningHyper] = None,
) -> EvalReport:
    if model_kind == "forest":
        homogeneous_k([d.scene for d in data])
    results = []
    for fold, (train, test) in enumerate(kfold(data, k, rng_seed)):
        model = fit_model(
            model_kind,
            [d.scene for d in train],
            [d.truth for d in train],
            mask,
            rng_seed + fold,
            n_trees=n_trees,
            hyper=hyper,
        )
        results.append(evaluate_split(model, test))
    return EvalReport(model_kind, mask, rng_seed, tuple(results))


def run_ablation(
    data: Sequence[LabeledScene],
    model_kind: str,
    masks: Optional[Sequence[ModalityMask]] = None,
    k: int = 5,
    rng_seed: int = 0,
    **kwargs,
) -> list[EvalReport]:
    """One cross-validated report per modality subset (all seven by default)."""
    masks = all_masks() if masks is None else masks
    return [cross_validate(data, model_kind, m, k, rng_seed, **kwargs) for m in masks]


def partition_by_participant(scenes: Sequence) -> dict[str, list]:
    """Group scenes (or labeled scenes) by participant, preserving order."""
    groups: dict[str, list] = defaultdict(list)
    for item in scenes:
        scene = item.scene if isinstance(item, LabeledScene) else item
        if scene.participant_id is None:
            raise DataError(f"scene {scene.scene_id!r} has no participant id")
        groups[scene.participant_id].append(item)
    return dict(groups)


def generalized_split(groups: dict[str, list], n_holdout: int = 5, rng_seed: int = 0):
    """Hold out ``n_holdout`` scenes per participant; pool the rest for training.

    With 11 participants of 30 scenes this trains on 11 * 25 = 275 scenes.
    """
    rng = np.random.default_rng(rng_seed)
    train, held_out = [], {}
    for pid in sorted(groups):
        items = groups[pid]
        if len(items) <= n_holdout:
            raise ConfigurationError(f"participant {pid!r} has only {len(items)} scenes")
        pick = set(rng.choice(len(items), size=n_holdout, replace=False).tolist())
        held_out[pid] = [it for i, it in enumerate(items) if i in pick]
        train.extend(it for i, it in enumerate(items) if i not in pick)
    return train, held_out


def random_baseline_exact_match(k: int, trials: int, rng_seed: int = 0, chunk: int = 1_000_000) -> float:
    """Frequency with which uniform random quadrants match a fixed truth exactly."""
    if k == 0:
        return 1.0
    rng = np.random.default_rng(rng_seed)
    truth = rng.integers(1, 5, size=k)
    hits = 0
    remaining = trials
    while remaining > 0:
        n = min(chunk, remaining)
        draws = rng.integers(1, 5, size=(n, k), dtype=np.int8)
        hits += int(np.all(draws == truth, axis=1).sum())
        remaining -= n
    return hits / trials
