"""Keyframe sampling and per-video aggregation of frame descriptors.

Frames are not decoded here. An external dumper (ffmpeg, for instance)
writes one image per planned timestamp, and the toolkit reads them back
through a frame manifest of ``video-id<TAB>frame-path<TAB>timestamp`` lines.
"""

import math
from collections import Counter, OrderedDict
from dataclasses import dataclass

import numpy as np

from .descriptor import Descriptor, l2_normalize
from .errors import ManifestError, ShapeMismatchError


@dataclass(frozen=True)
class KeyframePlan:
    interval: float = 2.0
    offset: float = 0.0
    max_frames: int = None

    def __post_init__(self):
        if not self.interval > 0:
            raise ValueError(f"interval must be positive, got {self.interval}")
        if self.offset < 0:
            raise ValueError(f"offset must be nonnegative, got {self.offset}")


def sample_timestamps(duration, plan=KeyframePlan()):
    """Timestamps ``offset + i*interval`` strictly inside ``[0, duration)``.

    A clip with positive duration always yields at least one keyframe.
    """
    if duration < 0:
        raise ValueError(f"duration must be nonnegative, got {duration}")
    if duration == 0:
        return []
    steps = (duration - plan.offset) / plan.interval
    # a ratio within rounding noise of an integer means the last stamp would sit on the end
    nearest = round(steps)
    count = nearest if abs(steps - nearest) <= 1e-9 * max(1.0, abs(steps)) else math.ceil(steps)
    stamps = [plan.offset + i * plan.interval for i in range(max(0, count))]
    if not stamps:
        stamps = [0.0]
    if plan.max_frames is not None:
        stamps = stamps[:plan.max_frames]
    return stamps


def aggregate_video(frames, mode="mean"):
    """Pool frame descriptors (elementwise mean or max) and L2-normalize."""
    frames = list(frames)
    if not frames:
        raise ValueError("cannot aggregate an empty list of frames")
    dims = {f.dim for f in frames}
    if len(dims) != 1:
        raise ShapeMismatchError(f"frame descriptors differ in dimension: {sorted(dims)}")
    provenance = {(f.model, tuple(map(tuple, f.taps))) for f in frames}
    if len(provenance) != 1:
        raise ShapeMismatchError("frame descriptors come from different extractors")
    stack = np.stack([f.values.astype(np.float64) for f in frames])
    if mode == "mean":
        pooled = stack.mean(axis=0)
    elif mode == "max":
        pooled = stack.max(axis=0)
    else:
        raise ValueError(f"aggregation mode must be mean or max, got {mode!r}")
    first = frames[0]
    return Descriptor(l2_normalize(pooled), first.model, list(first.taps), first.scale,
                      first.image_id)


def aggregate_matrix(rows, mode="mean"):
    rows = np.asarray(rows, dtype=np.float64)
    pooled = rows.mean(axis=0) if mode == "mean" else rows.max(axis=0)
    return l2_normalize(pooled)


def vote(frame_labels):
    """Majority label over frames; ties go to the label seen first."""
    counts = Counter(frame_labels)
    best = max(counts.values())
    for lab in frame_labels:
        if counts[lab] == best:
            return lab


@dataclass(frozen=True)
class FrameRecord:
    video_id: str
    path: str
    timestamp: float


def read_frame_manifest(path):
    """Return ``{video_id: [FrameRecord, ...]}`` in file order."""
    videos = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 tab-separated fields")
            vid, frame, stamp = fields
            try:
                t = float(stamp)
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: bad timestamp {stamp!r}") from None
            videos.setdefault(vid, []).append(FrameRecord(vid, frame, t))
    return videos


def frame_plan_lines(video_id, duration, plan=KeyframePlan(), pattern="{vid}/frame_{i:05d}.jpg"):
    """Frame manifest lines an external dumper should fill for one video."""
    return [f"{video_id}\t{pattern.format(vid=video_id, i=i)}\t{t:.3f}"
            for i, t in enumerate(sample_timestamps(duration, plan))]
