"""Dataset-level glue: manifests in, descriptor sets and fused predictions out."""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import svm
from .descriptor import DescriptorSet, extract_descriptor, resolve_taps
from .errors import ManifestError
from .fusion import early_fuse_sets, late_fuse, member_taps
from .modelio import PreprocessSpec, open_model, preprocess
from .video import aggregate_matrix


def _describe(net, taps, normalize, prep, extra=None):
    meta = {"model": net.meta.get("code", net.meta.get("arch", "")),
            "taps": [list(t) for t in taps], "scale": net.input_shape[1],
            "normalize": normalize or "none", "resize": prep.resize_mode,
            "means": list(prep.channel_means)}
    meta.update(extra or {})
    return meta


def extract_images(net, weights, sources, taps, prep, normalize="whole", threads=1):
    """Descriptor matrix for image sources (paths or arrays), rows in input order."""
    taps = resolve_taps(taps, net.meta.get("top_taps"))

    def one(src):
        return extract_descriptor(net, weights, preprocess(src, prep), taps, normalize).values

    sources = list(sources)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, sources))
    else:
        rows = [one(s) for s in sources]
    if not rows:
        raise ManifestError("empty manifest")
    return np.stack(rows), taps


def extract_dataset(net, weights, records, root, taps, prep, normalize="whole", threads=1):
    if not records:
        raise ManifestError("empty manifest")
    root = Path(root)
    values, taps = extract_images(net, weights, [root / r.path for r in records], taps, prep,
                                  normalize, threads)
    return DescriptorSet(values, [r.path for r in records], [r.label for r in records],
                         [r.split for r in records], _describe(net, taps, normalize, prep))


def extract_videos(net, weights, records, frames, root, taps, prep, normalize="whole",
                   aggregate="mean", per_frame=False, threads=1):
    """One row per video (aggregated), or one row per frame with ``meta['groups']``.

    ``records`` is a dataset manifest whose path column holds video ids;
    ``frames`` maps video id to its frame records.
    """
    if not records:
        raise ManifestError("empty manifest")
    root = Path(root)
    rows, ids, labels, splits, groups = [], [], [], [], []
    used = None
    for rec in records:
        clip = frames.get(rec.path)
        if not clip:
            raise ManifestError(f"video {rec.path!r} has no frames in the frame manifest")
        values, used = extract_images(net, weights, [root / f.path for f in clip], taps, prep,
                                      normalize, threads)
        if per_frame:
            rows.extend(values)
            ids.extend(f.path for f in clip)
            labels.extend([rec.label] * len(clip))
            splits.extend([rec.split] * len(clip))
            groups.extend([rec.path] * len(clip))
        else:
            rows.append(aggregate_matrix(values, aggregate))
            ids.append(rec.path)
            labels.append(rec.label)
            splits.append(rec.split)
    extra = {"aggregate": "per-frame" if per_frame else aggregate}
    if per_frame:
        extra["groups"] = groups
    return DescriptorSet(np.stack(rows), ids, labels, splits,
                         _describe(net, used, normalize, prep, extra))


def run_plan(plan, records, root, means=(0.0, 0.0, 0.0), resize="warp", normalize="whole",
             C=None, threads=1):
    """Execute a fusion plan over a manifest.

    Returns ``{"set": DescriptorSet}`` for layer and early plans. Late plans
    train one classifier per member on the train split, fuse test-split
    scores and return ``{"predictions", "report", "labels", "ids"}``.
    """
    sets = []
    for member in plan.members:
        net, weights = open_model(member.model, plan.seed)
        prep = PreprocessSpec(net.input_shape[1], tuple(means), resize)
        taps = member_taps(net, member, plan.layer_count if plan.mode == "layer" else 0)
        sets.append(extract_dataset(net, weights, records, root, taps, prep, normalize, threads))
        del weights
    if plan.mode == "layer":
        return {"set": sets[0]}
    if plan.mode == "early":
        return {"set": early_fuse_sets(sets)}
    return late_fuse_sets(sets, C=C, method=plan.method)


def fit_classifier(dset, C=None, seed=0):
    """Train on the train split; ``C=None`` selects C by cross-validated grid search."""
    train = dset.subset("train") if dset.splits else dset
    if C is None:
        C, _ = svm.grid_search(train.values, train.labels, seed=seed)
    return svm.train(train.values, train.labels, C, seed=seed)


def late_fuse_sets(sets, models=None, C=None, method="mean", weights=None, split="test"):
    if models is None:
        models = [fit_classifier(s, C) for s in sets]
    tests = [s.subset(split) for s in sets]
    labels = models[0].labels
    for m in models[1:]:
        if m.labels != labels:
            raise ValueError("late fusion needs classifiers over the same label set")
    scores = [svm.decision_scores(m, t.values) for m, t in zip(models, tests)]
    pred_idx, fused = late_fuse(scores, weights, method)
    out = {"predictions": [labels[i] for i in pred_idx], "scores": fused,
           "ids": tests[0].ids, "labels": labels}
    if tests[0].labels is not None:
        truth = models[0].label_index(tests[0].labels)
        out["report"] = svm.confusion_report(truth, pred_idx, len(labels))
    return out
