"""Command-line entry point: synth, encode, represent, infer, iterate, eval,
overlay, plan. Flags override values from an optional line-oriented config
file (`--config pipeline.cfg`, lines of `key value` or `key = value` named
after the long flags)."""
from __future__ import annotations

import argparse
import colorsys
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus, evalmetrics, featio, figures, inferlabel, iterate, represent, synthscene
from .catalog import load_catalog
from .errors import PixelSeedError
from .featio import IGNORE, LabelMap, make_slice_plan, write_slice_plan


def _load_config(path) -> dict:
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("=", " ", 1).split(None, 1)
        if len(parts) != 2:
            raise PixelSeedError(f"{path}:{lineno}: expected 'key value'")
        cfg[parts[0].replace("-", "_")] = parts[1].strip()
    return cfg


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixelseed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    cfg = config or {}

    def add(sp, flag, **kw):
        key = flag.lstrip("-").replace("-", "_")
        if key in cfg:
            if kw.get("action") == "store_true":
                kw["default"] = cfg[key].lower() in ("1", "true", "yes")
            else:
                kw["default"] = kw.get("type", str)(cfg[key])
        sp.add_argument(flag, **kw)

    p = sub.add_parser("plan", help="write the 15-slice plan for given dims")
    add(p, "--height", type=int, required=True)
    add(p, "--width", type=int, required=True)
    add(p, "--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    add(p, "--out", required=True)
    add(p, "--train", type=int, default=10)
    add(p, "--val", type=int, default=0)
    add(p, "--seed", type=int, default=0)
    add(p, "--height", type=int, default=64)
    add(p, "--width", type=int, default=96)
    add(p, "--sigma-h", type=float, default=0.0)
    add(p, "--sigma-c", type=float, default=0.0)
    add(p, "--sigma-s", type=float, default=0.0)
    add(p, "--heat-channels", type=int, default=32)
    add(p, "--jobs", type=int, default=1)

    p = sub.add_parser("encode", help="fuse heat, segment, describe, build context")
    add(p, "--root", required=True)
    add(p, "--splits", default="train,val")
    add(p, "--target-k", type=int, default=corpus.DEFAULT_TARGET_K)
    add(p, "--bins", type=int, default=32)
    add(p, "--compactness", type=float, default=0.05)
    add(p, "--jobs", type=int, default=1)

    p = sub.add_parser("represent", help="fit class representations from seeds")
    add(p, "--root", required=True)
    add(p, "--out", default="")
    add(p, "--top-fraction", type=float, default=represent.TOP_FRACTION)
    add(p, "--g-max", type=int, default=represent.G_MAX)

    p = sub.add_parser("infer", help="emit pseudo labels for a split")
    add(p, "--root", required=True)
    add(p, "--registry", default="")
    add(p, "--split", default="train")
    add(p, "--mode", choices=("initial", "iteration"), default="initial")
    add(p, "--theta", type=float, default=None)
    add(p, "--pred", default="", help="pred dir name for iteration mode")
    add(p, "--out-name", default="labels_initial")
    add(p, "--no-context", action="store_true")
    add(p, "--no-location", action="store_true")
    add(p, "--jobs", type=int, default=1)

    p = sub.add_parser("iterate", help="alternate training and relabeling")
    add(p, "--root", required=True)
    add(p, "--split", default="train")
    add(p, "--labels", default="labels_initial")
    add(p, "--rounds", type=int, default=iterate.DEFAULT_ROUNDS)
    add(p, "--theta-iter", type=float, default=inferlabel.THETA_ITERATION)
    add(p, "--learner", default="baseline")
    add(p, "--no-clr", action="store_true")
    add(p, "--no-location", action="store_true")
    add(p, "--report-dir", default="")

    p = sub.add_parser("eval", help="score labels against ground truth")
    add(p, "--root", required=True)
    add(p, "--split", default="train")
    add(p, "--labels", default="labels_initial")
    add(p, "--out-dir", default="")

    p = sub.add_parser("overlay", help="render label maps as color images")
    add(p, "--root", required=True)
    add(p, "--split", default="train")
    add(p, "--labels", default="labels_initial")
    add(p, "--out-dir", default="")
    add(p, "--blend", type=float, default=0.5)

    return parser


def class_color(cid: int) -> tuple[int, int, int]:
    """Fixed palette: golden-angle hue walk; the ignore label is black."""
    if cid == IGNORE:
        return (0, 0, 0)
    hue = (cid * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return (int(r * 255), int(g * 255), int(b * 255))


def _resolve_labels(root: Path, split: str, scene: str, name: str) -> Path:
    round_dir = root / name
    if round_dir.is_dir():
        return round_dir / f"{scene}.pgm"
    return root / split / scene / f"{name}.pgm"


def _cmd_plan(args) -> int:
    write_slice_plan(make_slice_plan(args.height, args.width), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_synth(args) -> int:
    catalog = synthscene.toy_catalog()
    train = [
        synthscene.random_spec(
            i, args.seed, catalog, args.height, args.width,
            args.sigma_h, args.sigma_c, args.sigma_s, args.heat_channels,
            force_all_objects=(i == 0),
        )
        for i in range(args.train)
    ]
    val = [
        synthscene.random_spec(
            1_000_000 + i, args.seed, catalog, args.height, args.width,
            args.sigma_h, args.sigma_c, args.sigma_s, args.heat_channels,
        )
        for i in range(args.val)
    ]
    corpus.build_corpus(args.out, catalog, train, val, jobs=args.jobs)
    print(f"wrote {args.train} train + {args.val} val scenes under {args.out}")
    return 0


def _cmd_encode(args) -> int:
    splits = tuple(s for s in args.splits.split(",") if s)
    done = corpus.encode_corpus(
        args.root, splits, args.target_k, args.bins, args.compactness, jobs=args.jobs
    )
    print(f"encoded {len(done)} scenes")
    return 0


def _cmd_represent(args) -> int:
    root = Path(args.root)
    catalog = load_catalog(root / "catalog.txt")
    images = {}
    for c in catalog.classes:
        name = c.seed[0]
        if name not in images:
            enc = corpus.load_encoded(root / name)
            images[name] = (enc.regions, enc.desc, enc.ctx)
    reg = represent.fit_all(catalog, images, args.top_fraction, args.g_max)
    out = args.out or str(root / "reps.bin")
    represent.save_registry(reg, out)
    print(f"fitted {len(reg.objects)} object + {len(reg.scenes)} scene classes -> {out}")
    return 0


def _infer_one(task) -> str:
    root, split, scene, registry_path, mode, theta, pred, out_name, no_ctx, no_loc = task
    root = Path(root)
    catalog = load_catalog(root / "catalog.txt")
    enc = corpus.load_encoded(root / split / scene)
    joint = None
    registry = None
    if mode == "iteration":
        dense = featio.read_labelmap(root / pred / f"{scene}.pgm")
        joint = iterate.aggregate_distribution(dense, enc.regions, catalog)
    else:
        registry = represent.load_registry(registry_path)
    labels = inferlabel.infer_image(
        enc.regions, enc.desc, enc.ctx, registry, catalog,
        mode=mode, theta=theta, joint_field=joint,
        use_context=not no_ctx, use_location=not no_loc,
    )
    featio.write_labelmap(labels, root / split / scene / f"{out_name}.pgm")
    return scene


def _cmd_infer(args) -> int:
    root = Path(args.root)
    if args.mode == "iteration" and not args.pred:
        raise PixelSeedError("iteration mode needs --pred <dir name>")
    registry_path = args.registry or str(root / "reps.bin")
    scenes = [d.name for d in corpus.scene_dirs(root, args.split)]
    tasks = [
        (str(root), args.split, s, registry_path, args.mode, args.theta,
         args.pred, args.out_name, args.no_context, args.no_location)
        for s in scenes
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(_infer_one, tasks))
    else:
        done = [_infer_one(t) for t in tasks]
    print(f"labeled {len(done)} scenes ({args.out_name})")
    return 0


def _cmd_iterate(args) -> int:
    root = Path(args.root)
    catalog = load_catalog(root / "catalog.txt")
    items = []
    for d in corpus.scene_dirs(root, args.split):
        enc = corpus.load_encoded(d)
        labels = featio.read_labelmap(_resolve_labels(root, args.split, d.name, args.labels))
        items.append(iterate.CorpusItem(d.name, enc.regions, enc.desc, enc.ctx, labels, enc.gt))
    if args.learner == "baseline":
        learner = iterate.BaselineLearner()
    elif args.learner.startswith("external:"):
        learner = iterate.ExternalLearner(args.learner.split(":", 1)[1], str(root))
    else:
        raise PixelSeedError(f"unknown learner {args.learner!r}")

    def on_round(r, items_, preds):
        lab_dir = root / f"labels_round_{r}"
        pred_dir = root / f"pred_round_{r}"
        lab_dir.mkdir(exist_ok=True)
        pred_dir.mkdir(exist_ok=True)
        for it, pred in zip(items_, preds):
            featio.write_labelmap(it.labels, lab_dir / f"{it.name}.pgm")
            featio.write_labelmap(pred, pred_dir / f"{it.name}.pgm")

    reports, _ = iterate.run_iterations(
        items, catalog, learner, args.rounds, args.theta_iter,
        use_clr=not args.no_clr, use_location=not args.no_location,
        on_round=on_round,
    )
    report_dir = Path(args.report_dir) if args.report_dir else root / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    lines = ["METRICS v1"]
    for r in reports:
        lines.append(
            f"round\t{r.round}\tmiou_class\t{r.miou_class:.6f}\tmiou_category\t{r.miou_category:.6f}"
            f"\tprecision\t{r.precision:.6f}\trecall\t{r.recall:.6f}\tignore\t{r.ignore_fraction:.6f}"
        )
    (report_dir / "iteration.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    figures.save_iteration_trend(reports, report_dir / "iteration_trend.png")
    final = reports[-1]
    print(f"round {final.round}: mIoU class {final.miou_class:.4f}, ignore {final.ignore_fraction:.4f}")
    return 0


def _cmd_eval(args) -> int:
    root = Path(args.root)
    catalog = load_catalog(root / "catalog.txt")
    cm = None
    preds, gts = [], []
    for d in corpus.scene_dirs(root, args.split):
        gt_path = d / "gt.pgm"
        if not gt_path.exists():
            continue
        gt = featio.read_labelmap(gt_path)
        pred = featio.read_labelmap(_resolve_labels(root, args.split, d.name, args.labels))
        c = evalmetrics.confusion(pred, gt, catalog)
        cm = c if cm is None else cm + c
        preds.append(pred.labels.ravel())
        gts.append(gt.labels.ravel())
    if cm is None:
        raise PixelSeedError(f"no scenes with ground truth under {root / args.split}")
    joint_pred = LabelMap(np.concatenate(preds)[None, :])
    joint_gt = LabelMap(np.concatenate(gts)[None, :])
    miou_c, table_c = evalmetrics.miou(cm, catalog, "class")
    miou_g, table_g = evalmetrics.miou(cm, catalog, "category")
    prec, rec = evalmetrics.macro_pr(joint_pred, joint_gt, catalog)
    per_class = evalmetrics.per_class_pr(joint_pred, joint_gt, catalog)

    out_dir = Path(args.out_dir) if args.out_dir else root / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    name = {cid: catalog.by_id(cid).name for cid in catalog.ids()}
    lines = ["METRICS v1"]
    lines.append(f"miou_class\t{miou_c:.6f}")
    lines.append(f"miou_category\t{miou_g:.6f}")
    lines.append(f"macro_precision\t{prec:.6f}")
    lines.append(f"macro_recall\t{rec:.6f}")
    for cid, v in table_c.items():
        lines.append(f"iou\t{name[cid]}\t{v:.6f}")
    for cat, v in table_g.items():
        lines.append(f"iou_category\t{cat}\t{v:.6f}")
    for cid, (p, r) in per_class.items():
        lines.append(f"pr\t{name[cid]}\t{p:.6f}\t{r:.6f}")
    out = out_dir / f"metrics_{args.split}_{args.labels}.txt"
    out.write_text("\n".join(lines) + "\n", encoding="ascii")

    figures.save_iou_bars({name[c]: v for c, v in table_c.items()}, out_dir / f"iou_{args.split}_{args.labels}.png", "per-class IoU")
    figures.save_iou_bars(table_g, out_dir / f"iou_cat_{args.split}_{args.labels}.png", "per-category IoU")
    figures.save_pr_bars({name[c]: pr for c, pr in per_class.items()}, out_dir / f"pr_{args.split}_{args.labels}.png", "precision / recall")
    print(f"mIoU class {miou_c:.4f} | category {miou_g:.4f} | P {prec:.4f} R {rec:.4f} -> {out}")
    return 0


def _cmd_overlay(args) -> int:
    root = Path(args.root)
    out_dir = Path(args.out_dir) if args.out_dir else root / "overlays"
    out_dir.mkdir(parents=True, exist_ok=True)
    palette = np.zeros((256, 3), dtype=np.float64)
    for cid in range(256):
        palette[cid] = class_color(cid)
    count = 0
    for d in corpus.scene_dirs(root, args.split):
        labels = featio.read_labelmap(_resolve_labels(root, args.split, d.name, args.labels))
        rgb = palette[labels.labels]
        color_path = d / "color.fmap"
        if color_path.exists() and 0.0 < args.blend < 1.0:
            img = featio.read_fmap(color_path).data.astype(np.float64) * 255.0
            rgb = args.blend * rgb + (1.0 - args.blend) * img
        featio.write_ppm(np.clip(rgb, 0, 255).astype(np.uint8), out_dir / f"{args.split}_{d.name}.ppm")
        count += 1
    print(f"wrote {count} overlays to {out_dir}")
    return 0


_COMMANDS = {
    "plan": _cmd_plan,
    "synth": _cmd_synth,
    "encode": _cmd_encode,
    "represent": _cmd_represent,
    "infer": _cmd_infer,
    "iterate": _cmd_iterate,
    "eval": _cmd_eval,
    "overlay": _cmd_overlay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config = None
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            print("--config needs a path", file=sys.stderr)
            return 2
        try:
            config = _load_config(argv[i + 1])
        except (PixelSeedError, OSError) as e:
            print(f"{type(e).__name__}: {e}", file=sys.stderr)
            return 2
        del argv[i : i + 2]
    parser = build_parser(config)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PixelSeedError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
