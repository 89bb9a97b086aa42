"""Command-line interface: ``deskorg <command> [options]``.

Exit status is 0 on success, 1 for usage and validation errors and 2 for
anything unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from .catalog import generate_scene, load_catalog, load_ruleset, perturb_attributes, rule_annotate
from .core import ObjectInstance, Scene, derive_seed
from .errors import DeskOrgError
from .evaluate import EvalReport, LabeledScene, cross_validate, run_ablation
from .features import ModalityMask, all_masks
from .fileio import (
    format_weighted,
    parse_forest,
    parse_mln,
    read_scene_file,
    serialize_forest,
    serialize_mln,
    serialize_scene,
    write_scene_file,
)
from .mln import dump_top_formulas
from .organize import organize, random_organize, realize_objects, render_svg
from .pipeline import MODEL_KINDS, ForestPair, fit_model

log = logging.getLogger("deskorg")

SCENE_SUFFIX = ".db"
EVAL_HEADER = "model\tmask\tfold\tquad_acc\trel_acc\tcombined"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_seed(p):
    p.add_argument("--seed", dest="sub_seed", type=int, default=None, help="random seed (overrides the global --seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deskorg", description="Learn and apply personal desk organisation preferences.")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="generate rule-annotated synthetic scenes")
    _add_seed(p)
    p.add_argument("--count", type=int, default=30)
    p.add_argument("--k-min", type=int, default=6)
    p.add_argument("--k-max", type=int, default=9)
    p.add_argument("--ruleset", help="ruleset JSON (default: bundled ruleset)")
    p.add_argument("--catalog", help="catalog JSON (default: bundled catalog)")
    p.add_argument("--participant", help="participant id recorded in every scene")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("perturb", help="flip attributes with probability p, keeping the annotations")
    _add_seed(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="train a model on annotated scenes")
    _add_seed(p)
    _add_model_args(p)
    p.add_argument("--mask", default="HUV")
    p.add_argument("--out", required=True, help="MLN model file, or directory for the two forests")

    p = sub.add_parser("eval", help="k-fold cross-validation")
    _add_seed(p)
    _add_model_args(p)
    p.add_argument("--mask", default="HUV")
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("ablation", help="cross-validate every modality subset")
    _add_seed(p)
    _add_model_args(p)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("organize", help="lay out objects with trained forests")
    p.add_argument("--model-quad", required=True)
    p.add_argument("--model-rel", required=True)
    p.add_argument("--objects", required=True, help="scene file describing the objects")
    p.add_argument("--catalog", help="catalog JSON for footprints")
    p.add_argument("--svg-out")
    p.add_argument("--out", help="scene file with groundings and goal positions (default: stdout)")

    p = sub.add_parser("baseline-random", help="uniformly random layout")
    _add_seed(p)
    p.add_argument("--objects", required=True)
    p.add_argument("--catalog", help="catalog JSON for footprints")
    p.add_argument("--svg-out")
    p.add_argument("--out")

    p = sub.add_parser("inspect-mln", help="print the highest-weighted ground formulas")
    p.add_argument("--model", required=True)
    p.add_argument("--top", type=int, default=10)
    return parser


def _add_model_args(p):
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--scenes", nargs="+", required=True, help="scene files or directories of *.db files")
    p.add_argument("--k", type=int, help="forest only: use scenes with this many objects")
    p.add_argument("--trees", type=int, default=20)


def scene_paths(items: Sequence[str]) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob(f"*{SCENE_SUFFIX}")))
        else:
            paths.append(p)
    if not paths:
        raise DeskOrgError(f"no scene files found in {list(items)}")
    return paths


def load_labeled(items: Sequence[str]) -> list[LabeledScene]:
    out = []
    for path in scene_paths(items):
        scene, truth = read_scene_file(path)
        if truth is None:
            raise DeskOrgError(f"{path} has no quad/dir annotations")
        out.append(LabeledScene(scene, truth))
    return out


def select_k(data: list[LabeledScene], k: Optional[int], model: str) -> list[LabeledScene]:
    """Forests need one object count; keep the requested or most common K."""
    if model != "forest":
        return data
    counts = Counter(d.scene.k for d in data)
    if k is None:
        if len(counts) == 1:
            return data
        k = min(counts, key=lambda n: (-counts[n], n))
        print(f"note: forest uses K={k} ({counts[k]} of {len(data)} scenes); pass --k to choose", file=sys.stderr)
    chosen = [d for d in data if d.scene.k == k]
    if not chosen:
        raise DeskOrgError(f"no scenes with K={k}; available: {sorted(counts)}")
    return chosen


def _seed(args) -> int:
    return args.sub_seed if getattr(args, "sub_seed", None) is not None else args.seed


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _report_rows(report: EvalReport, per_fold: bool) -> list[str]:
    rows = []
    if per_fold:
        for n, f in enumerate(report.folds):
            rows.append(f"{report.model_kind}\t{report.mask.name}\t{n}\t{f.quad_acc:.6f}\t{f.rel_acc:.6f}\t{f.combined:.6f}")
    rows.append(
        f"{report.model_kind}\t{report.mask.name}\tmean\t{report.mean_quad:.6f}\t{report.mean_rel:.6f}\t{report.mean_combined:.6f}"
    )
    return rows


def cmd_gen_synthetic(args) -> None:
    catalog = load_catalog(args.catalog)
    rules = load_ruleset(args.ruleset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args)
    width = max(3, len(str(args.count - 1)))
    for i in range(args.count):
        sid = f"scene{i:0{width}d}"
        scene = generate_scene(derive_seed(seed, i), catalog, args.k_min, args.k_max, scene_id=sid)
        if args.participant:
            scene = Scene(scene.scene_id, scene.objects, args.participant)
        path = out / f"{sid}{SCENE_SUFFIX}"
        write_scene_file(path, scene, rule_annotate(scene, rules))
        print(path)


def cmd_perturb(args) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args)
    for i, path in enumerate(scene_paths(args.scenes)):
        scene, truth = read_scene_file(path)
        noisy = perturb_attributes(scene, args.p, derive_seed(seed, i))
        target = out / path.name
        write_scene_file(target, noisy, truth)
        print(target)


def cmd_train(args) -> None:
    data = select_k(load_labeled(args.scenes), args.k, args.model)
    mask = ModalityMask.parse(args.mask)
    model = fit_model(
        args.model, [d.scene for d in data], [d.truth for d in data], mask, _seed(args), n_trees=args.trees
    )
    if isinstance(model, ForestPair):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "quad.forest").write_text(serialize_forest(model.rf_quad), encoding="utf-8")
        (out / "rel.forest").write_text(serialize_forest(model.rf_rel), encoding="utf-8")
        print(out / "quad.forest")
        print(out / "rel.forest")
    else:
        Path(args.out).write_text(serialize_mln(model), encoding="utf-8")
        print(args.out)


def cmd_eval(args) -> None:
    data = select_k(load_labeled(args.scenes), args.k, args.model)
    report = cross_validate(data, args.model, ModalityMask.parse(args.mask), args.folds, _seed(args), n_trees=args.trees)
    print(EVAL_HEADER)
    print("\n".join(_report_rows(report, per_fold=True)))


def cmd_ablation(args) -> None:
    data = select_k(load_labeled(args.scenes), args.k, args.model)
    reports = run_ablation(data, args.model, all_masks(), args.folds, _seed(args), n_trees=args.trees)
    print(EVAL_HEADER)
    for r in reports:
        print("\n".join(_report_rows(r, per_fold=False)))


def _load_objects(path) -> list[ObjectInstance]:
    scene, _ = read_scene_file(path)
    return list(scene.objects)


def _export(plan, scene_id: str, out: Optional[str]) -> None:
    scene = Scene(scene_id, tuple(plan.placed_objects()))
    _write(out, serialize_scene(scene, plan.groundings))


def cmd_organize(args) -> None:
    rf_quad = parse_forest(Path(args.model_quad).read_text(encoding="utf-8"))
    rf_rel = parse_forest(Path(args.model_rel).read_text(encoding="utf-8"))
    objects = _load_objects(args.objects)
    catalog = load_catalog(args.catalog)
    groundings = organize(objects, rf_quad, rf_rel, rf_quad.mask)
    bare = [ObjectInstance(o.object_id, o.catalog_key, o.attrs) for o in objects]
    plan = realize_objects(groundings, bare, catalog)
    for i, j, d in plan.unsatisfied:
        print(f"unsatisfied: dir(o{i}, o{j}, {d.value})", file=sys.stderr)
    if args.svg_out:
        Path(args.svg_out).write_text(render_svg(plan, catalog), encoding="utf-8")
    _export(plan, "organized", args.out)


def cmd_baseline_random(args) -> None:
    objects = _load_objects(args.objects)
    catalog = load_catalog(args.catalog)
    bare = [ObjectInstance(o.object_id, o.catalog_key, o.attrs) for o in objects]
    plan = random_organize(bare, _seed(args), catalog)
    if args.svg_out:
        Path(args.svg_out).write_text(render_svg(plan, catalog), encoding="utf-8")
    _export(plan, "random", args.out)


def cmd_inspect_mln(args) -> None:
    mln = parse_mln(Path(args.model).read_text(encoding="utf-8"))
    for text, weight in dump_top_formulas(mln, args.top):
        print(format_weighted(weight, text))


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "perturb": cmd_perturb,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablation": cmd_ablation,
    "organize": cmd_organize,
    "baseline-random": cmd_baseline_random,
    "inspect-mln": cmd_inspect_mln,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (DeskOrgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - reported, not hidden
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def run() -> None:
    sys.exit(main())
