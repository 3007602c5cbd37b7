"""Command-line interface.

Subcommands cover the full benchmark loop: synthesize a dataset, fabricate
pseudo-anomalies, build specification-change scenario manifests, train the
patch-bank detector, and evaluate it. Evaluation commands write a JSON
report, a CSV table, and rendered PNG figures side by side. Every command
is deterministic for a fixed seed: rerunning produces byte-identical
artifacts.

SPECSHIFT_THREADS caps worker threads used for scoring (0 or unset: auto).
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, detector, metrics, pseudo, report, scenario
from ._util import thread_count
from .core import LABEL_ANOMALOUS, Image, PixelMask
from .dataset_io import (
    DefectSpec,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    read_image,
    read_mask,
    resize_image,
    resize_mask,
)
from .repaste import RepasteConfig


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _parse_area_range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"expected LO:HI area range, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_defect(text: str) -> DefectSpec:
    parts = text.split(":")
    if len(parts) != 5:
        raise ValueError(f"expected NAME:KIND:COUNT:LO:HI, got {text!r}")
    name, kind, count, lo, hi = parts
    return DefectSpec(
        name=name, kind=kind, count=int(count), area_fraction_range=(float(lo), float(hi))
    )


_DEFAULT_DEFECTS = (
    DefectSpec(name="spot", kind="spot", count=12, area_fraction_range=(0.002, 0.008)),
    DefectSpec(name="scratch", kind="scratch", count=12, area_fraction_range=(0.012, 0.03)),
    DefectSpec(name="blob", kind="blob", count=12, area_fraction_range=(0.02, 0.05)),
)


def _load_sized_image(path: Path, width: int, height: int) -> Image:
    img = read_image(path)
    if (img.width, img.height) != (width, height):
        img = resize_image(img, width, height)
    return img


def _load_sized_mask(path: Path, width: int, height: int) -> PixelMask:
    mask = read_mask(path)
    if (mask.width, mask.height) != (width, height):
        mask = resize_mask(mask, width, height)
    return mask


def _score_records(model, class_root: Path, records):
    """Score records in parallel; returns {id: (image_score, map)}."""

    def run(record):
        img = _load_sized_image(
            class_root / record.image_path, model.image_width, model.image_height
        )
        amap, value = detector.score(model, img)
        return record.id, (value, amap)

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return dict(pool.map(run, records))


def _manifest_class_root(args, manifest) -> Path:
    return Path(args.dataset) / manifest.class_name


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_synthetic(args) -> int:
    defects = tuple(_parse_defect(d) for d in args.defect) if args.defect else _DEFAULT_DEFECTS
    spec = SyntheticSpec(
        seed=args.seed,
        image_size=args.image_size,
        n_train_normal=args.train_normals,
        n_test_normal=args.test_normals,
        defect_specs=defects,
        class_name=args.class_name,
    )
    index = generate_synthetic(spec, args.out)
    train = len(index.train_records())
    test = len(index.test_records())
    print(f"wrote class {index.class_name!r} under {args.out}: {train} train, {test} test")
    for stat in index.defect_classes:
        print(f"  defect {stat.name}: {stat.count} samples, mean area {stat.mean_area_fraction:.4f}")
    return 0


def cmd_gen_pseudo(args) -> int:
    index = load_dataset(args.dataset, args.class_name)
    out = Path(args.out) if args.out else Path(index.root) / "pseudo"
    spec = pseudo.PseudoSpec(
        seed=args.seed,
        count=args.count,
        mask_kind=args.mask_kind,
        area_fraction_range=_parse_area_range(args.area),
        fill_kind=args.fill,
        source=index.train_records(),
        source_root=index.root,
    )
    records = pseudo.generate_pseudo_set(spec, out)
    sidecar = {
        "source": "train_normals",
        "dataset_class": args.class_name,
        "seed": spec.seed,
        "count": spec.count,
        "mask_kind": spec.mask_kind,
        "fill_kind": spec.fill_kind,
        "area_fraction_range": list(spec.area_fraction_range),
    }
    (out / "pseudo_spec.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(records)} pseudo-anomalous samples under {out}")
    return 0


def _write_pair(changed, standard, out_dir: Path) -> None:
    scenario.write_manifest(changed, out_dir / "changed.json")
    scenario.write_manifest(standard, out_dir / "standard.json")
    print(
        f"wrote {changed.scenario} manifests for target {changed.target_class!r} "
        f"under {out_dir}"
    )


def cmd_build_scenario(args) -> int:
    index = load_dataset(args.dataset, args.class_name)
    out = Path(args.out)
    if args.scenario == "a2n":
        if args.target == "auto":
            targets = scenario.select_targets(index, args.max_area_fraction)
            if not targets:
                lines = [
                    f"  {s.name}: mean area {s.mean_area_fraction:.4f} "
                    f">= {args.max_area_fraction:.4f}"
                    for s in index.defect_classes
                ]
                return _fail(
                    "no defect class qualifies as a change target:\n" + "\n".join(lines)
                )
            rule = {"kind": "auto", "max_area_fraction": args.max_area_fraction}
        else:
            targets = [args.target]
            rule = {"kind": "explicit"}
        for target in targets:
            changed, standard = scenario.build_a2n(index, target, target_rule=rule)
            _write_pair(changed, standard, out if len(targets) == 1 else out / target)
        return 0

    pseudo_root = Path(args.pseudo) if args.pseudo else Path(index.root) / "pseudo"
    if not (pseudo_root / "test" / pseudo.PSEUDO_CLASS).is_dir():
        return _fail(
            f"no pseudo set at {pseudo_root}; generate one first with "
            f"'specshift gen-pseudo --dataset {args.dataset} --class-name {args.class_name}'"
        )
    records = pseudo.load_pseudo_set(pseudo_root)
    records = pseudo.rebase_records(records, pseudo_root, index.root)
    changed, standard = scenario.build_n2a(index, records)
    _write_pair(changed, standard, out)
    return 0


def cmd_train(args) -> int:
    manifest = scenario.read_manifest(args.manifest)
    class_root = _manifest_class_root(args, manifest)
    size = args.image_size
    images = [
        _load_sized_image(class_root / record.image_path, size, size)
        for record in manifest.train
    ]
    train_cfg = detector.TrainConfig(
        epochs=args.epochs,
        repaste=RepasteConfig(tau=args.tau, mode=args.repaste),
        shuffle_seed=args.seed,
    )
    model_cfg = detector.ModelConfig(
        patch_size=args.patch_size,
        stride=args.stride,
        k_neighbors=args.k_neighbors,
        coreset_fraction=args.coreset,
        seed=args.seed,
    )
    provenance = dict(manifest.provenance)
    provenance.update(
        scenario=manifest.scenario,
        sub_scenario=manifest.sub_scenario,
        class_name=manifest.class_name,
        target_class=manifest.target_class,
        image_size=size,
        epochs=args.epochs,
        repaste=args.repaste,
        tau=args.tau,
        seed=args.seed,
    )
    model = detector.fit(images, train_cfg, model_cfg, trained_on=provenance)
    detector.save_model(model, args.out)
    print(
        f"trained on {len(images)} images "
        f"({manifest.scenario}/{manifest.sub_scenario}, repaste={args.repaste}); "
        f"bank {model.bank.shape[0]}x{model.bank.shape[1]} -> {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    manifest = scenario.read_manifest(args.manifest)
    model = detector.load_model(args.model)
    class_root = _manifest_class_root(args, manifest)
    requested = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    scores = _score_records(model, class_root, manifest.test)
    masks = {}
    need_masks = "p_auroc" in requested or "pro" in requested
    if need_masks:
        for record in manifest.test:
            if record.label == LABEL_ANOMALOUS:
                if record.mask_path is None:
                    return _fail(f"test sample {record.id!r} has no ground-truth mask")
                masks[record.id] = _load_sized_mask(
                    class_root / record.mask_path, model.image_width, model.image_height
                )
    result = metrics.evaluate_manifest(
        scores, manifest, masks=masks, fpr_limit=args.fpr_limit, metrics=requested
    )
    out = Path(args.out)
    metrics.write_report(result, out)
    values = result.metric_values()
    report.write_table(sorted(values.items()), out.with_suffix(".csv"))
    report.render_metric_bars(
        values,
        out.with_suffix(".png"),
        title=f"{manifest.scenario}/{manifest.sub_scenario} target={manifest.target_class}",
    )
    shown = ", ".join(f"{k}={v:.4f}" for k, v in values.items())
    print(f"evaluated {result.n_test} test samples: {shown}")
    print(f"report -> {out}, table -> {out.with_suffix('.csv')}, figure -> {out.with_suffix('.png')}")
    return 0


def cmd_s_auroc(args) -> int:
    changed = scenario.read_manifest(args.manifest_changed)
    standard = scenario.read_manifest(args.manifest_standard)
    if changed.sub_scenario != scenario.SUB_CHANGED:
        return _fail(f"{args.manifest_changed} is not a changed-specification manifest")
    if standard.sub_scenario != scenario.SUB_STANDARD:
        return _fail(f"{args.manifest_standard} is not a standard-specification manifest")
    for field in ("scenario", "class_name", "target_class"):
        if getattr(changed, field) != getattr(standard, field):
            return _fail(
                f"manifest pair disagrees on {field}: "
                f"{getattr(changed, field)!r} vs {getattr(standard, field)!r}"
            )
    pre_model = detector.load_model(args.pre)
    post_model = detector.load_model(args.post)
    if (pre_model.image_width, pre_model.image_height) != (
        post_model.image_width,
        post_model.image_height,
    ):
        return _fail("pre and post models were trained at different image sizes")

    target_ids = {s.id for s in changed.test_targets()}
    contrast_ids = metrics.manifest_contrast_ids(changed)
    class_root = _manifest_class_root(args, changed)
    by_id = changed.by_id()
    wanted = [by_id[i] for i in sorted(target_ids | contrast_ids)]

    def scoreset(model) -> "metrics.ScoreSet":
        scored = _score_records(model, class_root, wanted)
        from .core import ScoreSet

        return ScoreSet.from_items(
            (i, scored[i][0], 1 if by_id[i].label == LABEL_ANOMALOUS else 0) for i in sorted(scored)
        )

    result = metrics.s_auroc(
        scoreset(pre_model),
        scoreset(post_model),
        target_ids,
        contrast_ids,
        metrics.manifest_target_role(changed),
        target_class=changed.target_class,
        scenario=changed.scenario,
    )
    out = Path(args.out)
    metrics.write_s_auroc_report(result, out)
    report.write_table(
        [
            ("pre_change_auroc", result.pre_change_auroc),
            ("post_change_auroc", result.post_change_auroc),
            ("delta", result.delta),
        ],
        out.with_suffix(".csv"),
    )
    report.render_s_auroc(result, out.with_suffix(".png"))
    print(
        f"S-AUROC ({result.scenario}, target {result.target_class!r}): "
        f"pre={result.pre_change_auroc:.4f} post={result.post_change_auroc:.4f} "
        f"delta={result.delta:+.4f}"
    )
    print(f"report -> {out}, table -> {out.with_suffix('.csv')}, figure -> {out.with_suffix('.png')}")
    return 0


def cmd_render(args) -> int:
    manifest = scenario.read_manifest(args.manifest)
    model = detector.load_model(args.model)
    class_root = _manifest_class_root(args, manifest)
    if args.ids:
        wanted_ids = [i.strip() for i in args.ids.split(",") if i.strip()]
        by_id = manifest.by_id()
        missing = [i for i in wanted_ids if i not in by_id]
        if missing:
            return _fail(f"unknown sample id {missing[0]!r}")
        records = [by_id[i] for i in wanted_ids]
    else:
        records = list(manifest.test[: args.limit])
    out_dir = Path(args.out_dir)
    for record in records:
        img = _load_sized_image(
            class_root / record.image_path, model.image_width, model.image_height
        )
        amap, value = detector.score(model, img)
        mask = None
        if record.mask_path is not None:
            mask = _load_sized_mask(
                class_root / record.mask_path, model.image_width, model.image_height
            )
        name = record.id.replace("/", "__") + ".png"
        report.render_heatmap(
            img,
            amap,
            mask,
            out_dir / name,
            title=f"{record.id} [{record.label}] score={value:.4f}",
        )
    print(f"rendered {len(records)} heatmaps under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specshift",
        description="Anomaly detection benchmarking under specification changes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a deterministic synthetic dataset class")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--class-name", default="synthetic")
    p.add_argument("--train-normals", type=int, default=20)
    p.add_argument("--test-normals", type=int, default=10)
    p.add_argument(
        "--defect",
        action="append",
        metavar="NAME:KIND:COUNT:LO:HI",
        help="defect class spec (kind: spot|scratch|blob, LO:HI area fractions); repeatable",
    )
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("gen-pseudo", help="fabricate pseudo-anomalies from training normals")
    p.add_argument("--dataset", required=True)
    p.add_argument("--class-name", required=True)
    p.add_argument("--out", help="output root (default: <dataset>/<class>/pseudo)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=40)
    p.add_argument("--mask-kind", choices=pseudo.MASK_KINDS, default="blob")
    p.add_argument("--fill", choices=pseudo.FILL_KINDS, default="texture_shuffle")
    p.add_argument("--area", default="0.004:0.03", metavar="LO:HI")
    p.set_defaults(func=cmd_gen_pseudo)

    p = sub.add_parser("build-scenario", help="build changed/standard manifest pairs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--class-name", required=True)
    p.add_argument("--scenario", choices=("a2n", "n2a"), required=True)
    p.add_argument(
        "--target",
        default="auto",
        help="a2n target defect class, or 'auto' to select small-area classes",
    )
    p.add_argument("--pseudo", help="n2a pseudo set root (default: <dataset>/<class>/pseudo)")
    p.add_argument("--max-area-fraction", type=float, default=0.01)
    p.add_argument("--out", required=True, help="directory for changed.json / standard.json")
    p.set_defaults(func=cmd_build_scenario)

    p = sub.add_parser("train", help="train the patch-bank detector on a manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--repaste", choices=("mixup", "hard", "off"), default="mixup")
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--k-neighbors", type=int, default=3)
    p.add_argument("--coreset", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a manifest's test set")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="JSON report path (CSV/PNG written alongside)")
    p.add_argument("--metrics", default="i_auroc,p_auroc,pro")
    p.add_argument("--fpr-limit", type=float, default=metrics.DEFAULT_FPR_LIMIT)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("s-auroc", help="specification-change AUROC for a pre/post model pair")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pre", required=True, help="model trained on the standard manifest")
    p.add_argument("--post", required=True, help="model trained on the changed manifest")
    p.add_argument("--manifest-changed", required=True)
    p.add_argument("--manifest-standard", required=True)
    p.add_argument("--out", required=True, help="JSON report path (CSV/PNG written alongside)")
    p.set_defaults(func=cmd_s_auroc)

    p = sub.add_parser("render", help="render anomaly heatmaps for test samples")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ids", help="comma-separated sample ids (default: first --limit test samples)")
    p.add_argument("--limit", type=int, default=8)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
