"""Command-line entry point: ``fusecat <subcommand> ...``."""

import argparse
import json
import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import svm
from .bench import bench, default_threads
from .descriptor import load_descriptors, pooled_size, save_descriptors
from .errors import FusecatError, ManifestError
from .fusion import FusionPlan, PlanMember, early_fuse_sets, layer_taps, load_plan
from .modelio import PreprocessSpec, open_model, read_manifest, save_model
from .network import infer_shapes
from .pipeline import extract_dataset, extract_videos, late_fuse_sets, run_plan
from .presets import preset
from .video import KeyframePlan, frame_plan_lines, read_frame_manifest, vote


def _means(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected one value or three comma-separated values")
    return tuple(parts)


def _normalize(text):
    return None if text == "none" else text


def _print_json(obj, out=None):
    out = out or sys.stdout
    json.dump(obj, out, indent=2, sort_keys=True, default=_jsonable)
    out.write("\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [None if (isinstance(x, float) and np.isnan(x)) else x for x in v.tolist()]
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v)}")


def shape_rows(net):
    rows = []
    for name, shape in infer_shapes(net).items():
        if name == net.layers[0].name:
            continue
        rows.append((name, shape, pooled_size(shape, "flat"), pooled_size(shape, "max")))
    return rows


def cmd_shapes(args):
    net = preset(args.preset, args.scale)
    rows = shape_rows(net)
    if args.taps_only:
        keep = set(net.meta.get("top_taps", []))
        rows = [r for r in rows if r[0] in keep]
    for name, (c, h, w), linear, pooled in rows:
        print(f"{name} {c}x{h}x{w} linear={linear} pooled={pooled}")
    if args.figure:
        from .plotting import plot_layer_sizes
        plot_layer_sizes(rows, args.figure, f"{args.preset} @ {net.input_shape[1]}")
    return 0


def _taps_for(net, args):
    if args.layers:
        return layer_taps(net, args.layers)
    if args.tap:
        return args.tap
    return [tuple(net.meta["best_tap"])]


def cmd_extract(args):
    records = read_manifest(args.manifest)
    if args.split:
        records = [r for r in records if r.split == args.split]
    if not records:
        raise ManifestError("empty manifest")
    net, weights = open_model(args.model, args.seed)
    prep = PreprocessSpec(net.input_shape[1], args.means, args.resize)
    taps = _taps_for(net, args)
    root = args.root or Path(args.manifest).parent
    normalize = _normalize(args.normalize)
    if args.frames:
        frames = read_frame_manifest(args.frames)
        dset = extract_videos(net, weights, records, frames, root, taps, prep, normalize,
                              args.aggregate, args.per_frame, args.threads)
    else:
        dset = extract_dataset(net, weights, records, root, taps, prep, normalize, args.threads)
    save_descriptors(args.out, dset)
    print(f"rows={len(dset)} dim={dset.dim} out={args.out}")
    return 0


def cmd_train(args):
    dset = load_descriptors(args.desc).subset(args.split)
    if dset.labels is None:
        raise ManifestError(f"{args.desc} carries no labels")
    C = args.C
    if args.grid:
        C, scores = svm.grid_search(dset.values, dset.labels, seed=args.seed)
        for c, s in scores.items():
            print(f"grid C={c:g} cv_accuracy={s:.4f}")
    model = svm.train(dset.values, dset.labels, C, args.tol, args.max_iter, args.seed)
    svm.save_svm(args.out, model)
    acc = svm.evaluate(model, dset.values, dset.labels)["accuracy"]
    print(f"classes={len(model.labels)} dim={model.dim} C={C:g} train_accuracy={acc:.4f}")
    return 0


def _report_lines(report):
    yield f"accuracy={report['accuracy']:.4f} sample_accuracy={report['sample_accuracy']:.4f}"
    for lab, acc in zip(report["labels"], report["per_class_accuracy"]):
        yield f"class\t{lab}\t{acc:.4f}"


def _emit_report(report, args):
    if args.json:
        _print_json({k: report[k] for k in ("accuracy", "sample_accuracy", "per_class_accuracy",
                                           "confusion", "labels")})
    else:
        for line in _report_lines(report):
            print(line)
    if args.figure:
        from .plotting import plot_confusion
        plot_confusion(report["confusion"], report["labels"], args.figure)


def cmd_eval(args):
    model = svm.load_svm(args.model)
    dset = load_descriptors(args.desc).subset(args.split)
    if dset.labels is None:
        raise ManifestError(f"{args.desc} carries no labels")
    if args.vote:
        groups = dset.meta.get("groups")
        if not groups:
            raise ManifestError("--vote needs per-frame descriptors (extract --per-frame)")
        if args.split and dset.splits is not None:
            full = load_descriptors(args.desc)
            groups = [g for g, s in zip(full.meta["groups"], full.splits) if s == args.split]
        frame_pred = svm.predict(model, dset.values)
        videos = OrderedDict()
        for g, p, lab in zip(groups, frame_pred, dset.labels):
            videos.setdefault(g, ([], lab))[0].append(p)
        truth = model.label_index([lab for _, lab in videos.values()])
        pred = model.label_index([vote(ps) for ps, _ in videos.values()])
        report = svm.confusion_report(truth, pred, len(model.labels))
        report["labels"] = list(model.labels)
    else:
        report = svm.evaluate(model, dset.values, dset.labels)
    _emit_report(report, args)
    return 0


def _write_predictions(path, result):
    with open(path, "w", encoding="utf-8") as fh:
        for item, lab in zip(result["ids"], result["predictions"]):
            fh.write(f"{item}\t{lab}\n")


def cmd_fuse(args):
    if args.plan in ("early", "late", "layer"):
        if not args.inputs:
            raise ManifestError(f"--plan {args.plan} needs descriptor files via --in")
        sets = [load_descriptors(p) for p in args.inputs]
        if args.plan == "early":
            FusionPlan("early", [PlanMember(p) for p in args.inputs])
            fused = early_fuse_sets(sets)
            if args.out:
                save_descriptors(args.out, fused)
            print(f"rows={len(fused)} dim={fused.dim}")
            return 0
        if args.plan == "layer":
            raise ManifestError("layer fusion runs from a plan file or `extract --layers K`")
        models = [svm.load_svm(p) for p in args.models] if args.models else None
        if models is not None and len(models) != len(sets):
            raise ManifestError("give one --model per --in descriptor file")
        result = late_fuse_sets(sets, models, C=args.C, method=args.method,
                                weights=args.weights, split=args.split)
    else:
        plan = load_plan(args.plan)
        if plan.mode != "late" and args.method != "mean":
            raise ManifestError("--method only applies to late fusion")
        if not args.manifest:
            raise ManifestError("a plan file needs --manifest")
        records = read_manifest(args.manifest)
        if not records:
            raise ManifestError("empty manifest")
        root = args.root or Path(args.manifest).parent
        result = run_plan(plan, records, root, args.means, args.resize,
                          _normalize(args.normalize), args.C, args.threads)
        if "set" in result:
            dset = result["set"]
            if args.out:
                save_descriptors(args.out, dset)
            print(f"rows={len(dset)} dim={dset.dim}")
            return 0
    if args.out:
        _write_predictions(args.out, result)
    if "report" in result:
        report = dict(result["report"], labels=result["labels"])
        _emit_report(report, args)
    else:
        for item, lab in zip(result["ids"], result["predictions"]):
            print(f"{item}\t{lab}")
    return 0


def cmd_keyframes(args):
    plan = KeyframePlan(args.interval, args.offset, args.max_frames)
    videos = []
    for i, d in enumerate(args.duration or []):
        videos.append((f"video{i}", d))
    if args.durations:
        with open(args.durations, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.rstrip("\r\n").split("\t")
                if len(parts) != 2:
                    raise ManifestError(f"{args.durations}:{lineno}: expected video-id<TAB>seconds")
                videos.append((parts[0], float(parts[1])))
    if not videos:
        raise ManifestError("no durations given (use --duration or --durations)")
    lines = [l for vid, d in videos for l in frame_plan_lines(vid, d, plan, args.pattern)]
    text = "".join(l + "\n" for l in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args):
    report = bench(args.model, args.iterations, args.warmup, args.threads, args.seed)
    if args.json:
        _print_json(report.to_dict())
    else:
        print(report.table())
        print(f"# cpu: {report.environment['cpu']}  threads: {report.environment['threads']}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            _print_json(report.to_dict(), fh)
    if args.figure:
        from .plotting import plot_throughput
        plot_throughput(report, args.figure)
    return 0


def cmd_init(args):
    net, weights = open_model(args.model, args.seed)
    save_model(args.out, net, weights)
    print(f"layers={len(net.layers)} weighted={len(weights)} out={args.out}")
    return 0


def cmd_synth(args):
    from .synthetic import write_dataset
    manifest = write_dataset(args.out, args.train, args.test, args.size, args.seed)
    print(f"manifest={manifest}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fusecat", description="CNN descriptor extraction, fusion and linear SVM toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for weights and sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shapes", parents=[common], help="layer dimension table for a preset")
    p.add_argument("--preset", required=True)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--taps-only", action="store_true", help="only the canonical top taps")
    p.add_argument("--figure", help="write a size comparison plot to this file")
    p.set_defaults(func=cmd_shapes)

    def model_args(p):
        p.add_argument("--means", type=_means, default=(0.0, 0.0, 0.0),
                       help="channel means to subtract, R,G,B")
        p.add_argument("--resize", choices=("warp", "crop"), default="warp")
        p.add_argument("--normalize", choices=("whole", "block", "none"), default="whole")
        p.add_argument("--threads", type=int, default=default_threads())

    p = sub.add_parser("extract", parents=[common], help="manifest + model -> descriptor file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", help="image root (default: manifest directory)")
    p.add_argument("--model", required=True, help="code name (M1..M7), preset[@scale] or .fcm")
    taps = p.add_mutually_exclusive_group()
    taps.add_argument("--tap", action="append", help="layer[:max|sum|flat], repeatable")
    taps.add_argument("--layers", type=int, help="ground-up layer fusion of K top layers")
    p.add_argument("--split", choices=("train", "test"))
    p.add_argument("--frames", help="frame manifest; manifest paths are then video ids")
    p.add_argument("--aggregate", choices=("mean", "max"), default="mean")
    p.add_argument("--per-frame", action="store_true", help="keep one row per frame")
    p.add_argument("--out", required=True)
    model_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="descriptors -> linear SVM")
    p.add_argument("--desc", required=True)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--grid", action="store_true", help="choose C from {0.01,0.1,1,10} by CV")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="SVM + descriptors -> accuracy report")
    p.add_argument("--model", required=True)
    p.add_argument("--desc", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--vote", action="store_true", help="per-frame majority vote per video")
    p.add_argument("--json", action="store_true")
    p.add_argument("--figure", help="write a confusion matrix plot to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", parents=[common], help="early/late/layer fusion")
    p.add_argument("--plan", required=True, help="early, late, or a plan file")
    p.add_argument("--in", dest="inputs", nargs="+", help="descriptor files")
    p.add_argument("--model", dest="models", nargs="+", help="per-input .fsv files (late)")
    p.add_argument("--weights", type=float, nargs="+", help="late fusion weights")
    p.add_argument("--method", choices=("mean", "vote"), default="mean")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--C", type=float, default=None, help="SVM C (default: grid search)")
    p.add_argument("--manifest", help="manifest for plan files")
    p.add_argument("--root")
    p.add_argument("--json", action="store_true")
    p.add_argument("--figure")
    p.add_argument("--out")
    model_args(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("keyframes", parents=[common], help="keyframe timestamp plan")
    p.add_argument("--duration", type=float, action="append", help="clip length in seconds")
    p.add_argument("--durations", help="file of video-id<TAB>seconds lines")
    p.add_argument("--interval", type=float, default=2.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--max-frames", type=int)
    p.add_argument("--pattern", default="{vid}/frame_{i:05d}.jpg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_keyframes)

    p = sub.add_parser("bench", parents=[common], help="end-to-end throughput")
    p.add_argument("--model", nargs="+", default=["M1"])
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--figure", help="write an fps bar chart to this file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("init", parents=[common], help="write a seeded model file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("synth", parents=[common], help="write the synthetic image set")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=300)
    p.add_argument("--test", type=int, default=150)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FusecatError, ValueError, OSError) as exc:
        print(f"fusecat {args.command}: error: {exc}", file=sys.stderr)
        return 1


def run():
    sys.exit(main())
