"""Fixed-length image descriptors built from tapped feature maps."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import CorruptFileError, ShapeMismatchError
from .network import forward
from .tensor import as_tensor

POOL_MODES = ("max", "sum", "flat")
DESC_MAGIC = b"FDS1"


def spatial_max_pool(fmap):
    x = as_tensor(fmap)
    return x.reshape(x.shape[0], -1).max(axis=1)


def spatial_sum_pool(fmap):
    x = as_tensor(fmap)
    return x.reshape(x.shape[0], -1).sum(axis=1, dtype=np.float64).astype(np.float32)


def flatten_concat(fmap):
    return as_tensor(fmap).reshape(-1).copy()


_POOLERS = {"max": spatial_max_pool, "sum": spatial_sum_pool, "flat": flatten_concat}


def pool(fmap, mode):
    try:
        return _POOLERS[mode](fmap)
    except KeyError:
        raise ValueError(f"pool mode must be one of {POOL_MODES}, got {mode!r}") from None


def pooled_size(shape, mode):
    c, h, w = shape
    return c * h * w if mode == "flat" else c


def descriptor_dim(net, taps):
    """Descriptor length for ``taps`` on ``net``, from symbolic shapes alone."""
    from .network import infer_shapes

    shapes = infer_shapes(net)
    taps = resolve_taps(taps, net.meta.get("top_taps"))
    return sum(pooled_size(shapes[name], mode) for name, mode in taps)


def l2_normalize(v):
    v = np.asarray(v, dtype=np.float32)
    norm = np.linalg.norm(v.astype(np.float64))
    if norm == 0:
        return v.copy()
    return (v / norm).astype(np.float32)


def default_pool_modes(taps, reference=None):
    """Sum-pool the lower half of a tap list and max-pool the upper half.

    ``reference`` is the ordered list that defines depth (a preset's
    canonical top taps); it defaults to ``taps`` itself.
    """
    ref = list(reference or taps)
    half = len(ref) / 2
    modes = []
    for t in taps:
        depth = ref.index(t) if t in ref else len(ref)
        modes.append("sum" if depth < half else "max")
    return modes


def resolve_taps(taps, reference=None):
    """Accept ``"name"``, ``"name:mode"`` or ``(name, mode)`` entries."""
    names, modes = [], []
    for t in taps:
        if isinstance(t, str):
            name, _, mode = t.partition(":")
        else:
            name, mode = t
        names.append(name)
        modes.append(mode or None)
    defaults = default_pool_modes(names, reference)
    resolved = []
    for name, mode, d in zip(names, modes, defaults):
        mode = mode or d
        if mode not in POOL_MODES:
            raise ValueError(f"tap {name!r}: pool mode must be one of {POOL_MODES}")
        resolved.append((name, mode))
    return resolved


@dataclass
class Descriptor:
    values: np.ndarray
    model: str = ""
    taps: list = field(default_factory=list)
    scale: int = 0
    image_id: str = None
    members: list = field(default_factory=list)

    @property
    def dim(self):
        return int(self.values.shape[0])

    def provenance(self):
        return {"model": self.model, "taps": [list(t) for t in self.taps], "scale": self.scale}


def normalize_blocks(blocks, normalize):
    if normalize == "block":
        return np.concatenate([l2_normalize(b) for b in blocks])
    values = np.concatenate(blocks).astype(np.float32)
    if normalize == "whole":
        return l2_normalize(values)
    if normalize in (None, "none"):
        return values
    raise ValueError(f"normalize must be 'whole', 'block' or None, got {normalize!r}")


def extract_descriptor(net, weights, image, taps, normalize="whole", image_id=None,
                       reference=None, timings=None):
    """Pool each tap of one forward pass and concatenate in tap order."""
    taps = resolve_taps(taps, reference or net.meta.get("top_taps"))
    maps = forward(net, weights, image, [t for t, _ in taps], timings=timings)
    blocks = [pool(maps[name], mode) for name, mode in taps]
    return Descriptor(normalize_blocks(blocks, normalize), net.meta.get("code", ""),
                      taps, net.input_shape[1], image_id)


def extract_batch(net, weights, tensors, taps, normalize="whole", threads=1, ids=None):
    """Descriptor matrix for a sequence of input tensors, rows in input order."""
    tensors = list(tensors)
    ids = list(ids) if ids is not None else [None] * len(tensors)

    def one(args):
        x, i = args
        return extract_descriptor(net, weights, x, taps, normalize, image_id=i).values

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool_:
            rows = list(pool_.map(one, zip(tensors, ids)))
    else:
        rows = [one(a) for a in zip(tensors, ids)]
    return np.stack(rows) if rows else np.zeros((0, 0), np.float32)


@dataclass
class DescriptorSet:
    """A row-per-item descriptor matrix with ids, labels, splits and provenance."""

    values: np.ndarray
    ids: list
    labels: list = None
    splits: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ShapeMismatchError("descriptor matrix must be 2-D")
        n = self.values.shape[0]
        self.ids = [str(i) for i in self.ids]
        for name in ("ids", "labels", "splits"):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ShapeMismatchError(f"{name} has {len(col)} entries for {n} rows")

    @property
    def dim(self):
        return int(self.values.shape[1])

    def __len__(self):
        return int(self.values.shape[0])

    def subset(self, split):
        if split is None or self.splits is None:
            return self
        keep = [i for i, s in enumerate(self.splits) if s == split]
        pick = lambda col: None if col is None else [col[i] for i in keep]
        return DescriptorSet(self.values[keep], pick(self.ids), pick(self.labels),
                             pick(self.splits), dict(self.meta))


def save_descriptors(path, dset):
    header = {"dim": dset.dim, "meta": dset.meta, "ids": dset.ids,
              "labels": dset.labels, "splits": dset.splits}
    write_container(path, DESC_MAGIC, len(dset), header, {"values": dset.values})


def load_descriptors(path):
    count, header, arrays = read_container(path, DESC_MAGIC)
    try:
        values = arrays["values"]
        if values.shape != (count, header["dim"]):
            raise CorruptFileError(f"{path}: matrix shape {values.shape} disagrees with header")
        return DescriptorSet(values, header["ids"], header.get("labels"),
                             header.get("splits"), header.get("meta") or {})
    except CorruptFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path}: malformed descriptor header ({exc})") from exc
