"""Layer, early and late fusion of descriptors and classifier scores.

Dataset fusion has no code path of its own: it is an early or late plan
whose members share an architecture but carry different weight sets
(for instance ``M1`` and ``M6``).
"""

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from .descriptor import (Descriptor, DescriptorSet, default_pool_modes, extract_descriptor,
                         resolve_taps)
from .errors import ProvenanceMismatchError, ShapeMismatchError

MAX_LAYERS = 8


def layer_taps(net, k):
    """The ``k`` lowest taps of the net's canonical top list, with pool modes."""
    top = list(net.meta.get("top_taps") or [])
    limit = min(MAX_LAYERS, len(top))
    if not 1 <= k <= limit:
        raise ValueError(f"layer count must be between 1 and {limit}, got {k}")
    chosen = top[:k]
    return list(zip(chosen, default_pool_modes(chosen, top)))


def layer_fuse(net, weights, image, k, normalize="whole", image_id=None):
    """Ground-up fusion of the ``k`` lowest layers among the top eight."""
    return extract_descriptor(net, weights, image, layer_taps(net, k), normalize, image_id)


def early_fuse(descriptors):
    """Concatenate descriptors of one image in member order."""
    descriptors = list(descriptors)
    if not descriptors:
        raise ValueError("early_fuse needs at least one descriptor")
    ids = {d.image_id for d in descriptors if d.image_id is not None}
    if len(ids) > 1:
        raise ProvenanceMismatchError(f"descriptors come from different images: {sorted(ids)}")
    if len(descriptors) == 1:
        return descriptors[0]
    values = np.concatenate([d.values for d in descriptors]).astype(np.float32)
    return Descriptor(values, "+".join(d.model for d in descriptors),
                      [t for d in descriptors for t in d.taps],
                      max(d.scale for d in descriptors),
                      ids.pop() if ids else None,
                      [d.provenance() for d in descriptors])


def early_fuse_sets(sets):
    """Row-wise early fusion of descriptor sets that cover the same items."""
    sets = list(sets)
    if not sets:
        raise ValueError("early_fuse_sets needs at least one descriptor set")
    first = sets[0]
    for s in sets[1:]:
        if s.ids != first.ids:
            raise ProvenanceMismatchError("descriptor sets list different items or orders")
    members = [dict(s.meta) for s in sets]
    meta = {"fusion": "early", "members": members,
            "model": "+".join(str(m.get("model", "?")) for m in members)}
    return DescriptorSet(np.hstack([s.values for s in sets]), list(first.ids),
                         first.labels, first.splits, meta)


def late_fuse(score_matrices, weights=None, method="mean"):
    """Fuse per-model decision scores; returns ``(labels, fused_scores)``.

    ``mean`` takes the weighted mean of the raw scores, ``vote`` the
    weighted count of per-model argmax votes. Ties go to the lowest class.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in score_matrices]
    if not mats:
        raise ValueError("late_fuse needs at least one score matrix")
    shape = mats[0].shape
    if len(shape) != 2 or any(m.shape != shape for m in mats):
        raise ShapeMismatchError(f"score matrices must share one 2-D shape, got "
                                 f"{[m.shape for m in mats]}")
    if weights is None:
        weights = np.full(len(mats), 1.0 / len(mats))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(mats),) or np.any(weights < 0) or not np.isclose(weights.sum(), 1):
        raise ValueError("weights must be nonnegative, one per model, and sum to 1")
    if method == "mean":
        fused = sum(w * m for w, m in zip(weights, mats))
    elif method == "vote":
        fused = np.zeros(shape)
        rows = np.arange(shape[0])
        for w, m in zip(weights, mats):
            fused[rows, np.argmax(m, axis=1)] += w
    else:
        raise ValueError(f"unknown late fusion method {method!r}")
    return np.argmax(fused, axis=1), fused


@dataclass
class PlanMember:
    model: str
    taps: list = field(default_factory=list)
    name: str = ""


@dataclass
class FusionPlan:
    """What to fuse and how; ``members`` reference models by code, preset or file."""

    mode: str
    members: list
    layer_count: int = 0
    method: str = "mean"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("layer", "early", "late"):
            raise ValueError(f"fusion mode must be layer, early or late, got {self.mode!r}")
        n = len(self.members)
        if self.mode == "layer":
            if n != 1:
                raise ValueError("a layer fusion plan has exactly one member")
            if not 1 <= self.layer_count <= MAX_LAYERS:
                raise ValueError(f"layer_count must be 1..{MAX_LAYERS}")
        elif n < 2:
            raise ValueError(f"{self.mode} fusion needs at least two members")

    def to_text(self):
        cp = configparser.ConfigParser()
        cp["fusion"] = {"mode": self.mode, "method": self.method, "seed": str(self.seed)}
        if self.mode == "layer":
            cp["fusion"]["layer_count"] = str(self.layer_count)
        for i, m in enumerate(self.members):
            section = {"model": m.model}
            if m.taps:
                section["taps"] = " ".join(t if isinstance(t, str) else ":".join(t)
                                           for t in m.taps)
            cp[f"member {m.name or i}"] = section
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_plan(text):
    """Read a plan from INI text: a ``[fusion]`` section and ``[member ...]`` sections."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(text)
    if "fusion" not in cp:
        raise ValueError("plan has no [fusion] section")
    head = cp["fusion"]
    unknown = set(head) - {"mode", "layer_count", "method", "seed"}
    if unknown:
        raise ValueError(f"[fusion] has unknown keys: {', '.join(sorted(unknown))}")
    members = []
    for section in cp.sections():
        if not section.startswith("member"):
            continue
        body = cp[section]
        if "model" not in body:
            raise ValueError(f"[{section}] has no model")
        members.append(PlanMember(body["model"].strip(), body.get("taps", "").split(),
                                  section[len("member"):].strip()))
    return FusionPlan(head.get("mode", "").strip(), members,
                      head.getint("layer_count", 0), head.get("method", "mean").strip(),
                      head.getint("seed", 0))


def load_plan(path):
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())


def member_taps(net, member, layer_count=0):
    if layer_count:
        return layer_taps(net, layer_count)
    if member.taps:
        return resolve_taps(member.taps, net.meta.get("top_taps"))
    return [tuple(net.meta["best_tap"])]
