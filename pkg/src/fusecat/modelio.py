"""Model files, image loading, preprocessing and dataset manifests."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import CorruptFileError, DecodeError, FusecatError, ManifestError
from .network import WEIGHTED, NetworkSpec
from .weights import WeightStore

MODEL_MAGIC = b"FCM1"


def save_model(path, net, weights):
    arrays = {}
    for layer in net.layers:
        if layer.kind in WEIGHTED and layer.name in weights:
            w, b = weights[layer.name]
            arrays[f"{layer.name}/weights"] = w
            arrays[f"{layer.name}/bias"] = b
    write_container(path, MODEL_MAGIC, len(net.layers), {"network": net.to_dict()}, arrays)


def load_model(path):
    """Read a ``.fcm`` file and return ``(NetworkSpec, WeightStore)``.

    The weights are checked against the network before returning, so a
    mismatched file fails here and never reaches a forward pass.
    """
    count, header, arrays = read_container(path, MODEL_MAGIC)
    try:
        net = NetworkSpec.from_dict(header["network"])
    except (KeyError, TypeError, ValueError, FusecatError) as exc:
        raise CorruptFileError(f"{path}: invalid network section ({exc})") from exc
    if count != len(net.layers):
        raise CorruptFileError(f"{path}: header says {count} layers, network has {len(net.layers)}")
    entries = {}
    for name in list(arrays):
        if name.endswith("/weights"):
            layer = name[: -len("/weights")]
            if f"{layer}/bias" not in arrays:
                raise CorruptFileError(f"{path}: layer {layer!r} has no bias blob")
            entries[layer] = (arrays[name], arrays[f"{layer}/bias"])
    store = WeightStore(entries, copy=False)
    try:
        store.validate(net)
    except FusecatError as exc:
        raise CorruptFileError(f"{path}: weights do not match network ({exc})") from exc
    return net, store


@dataclass(frozen=True)
class PreprocessSpec:
    target_scale: int
    channel_means: tuple = (0.0, 0.0, 0.0)
    resize_mode: str = "warp"  # or "crop": shorter side to scale, then center crop

    def __post_init__(self):
        if self.resize_mode not in ("warp", "crop"):
            raise ValueError(f"resize_mode must be 'warp' or 'crop', got {self.resize_mode!r}")


def load_image(path):
    """Decode an image file into an ``(H, W, 3)`` float32 array in [0, 255]."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            return np.asarray(rgb, dtype=np.float32)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc


def _linear_axis(n_in, n_out):
    # half-pixel centres, clamped at the borders
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, (src - i0)


def resize_bilinear(image, out_h, out_w):
    """Bilinear resize of an ``(H, W, C)`` array, separable rows then columns."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    r0, r1, fr = _linear_axis(h, out_h)
    img = img[r0] * (1 - fr)[:, None, None] + img[r1] * fr[:, None, None]
    c0, c1, fc = _linear_axis(w, out_w)
    return img[:, c0] * (1 - fc)[None, :, None] + img[:, c1] * fc[None, :, None]


def preprocess(image, spec):
    """Turn an RGB raster (array, PIL image or file path) into a ``3 x S x S`` tensor."""
    if isinstance(image, (str, Path)):
        image = load_image(image)
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3 or min(img.shape[:2]) < 1:
        raise DecodeError(f"expected an RGB raster, got array of shape {img.shape}")
    s = int(spec.target_scale)
    h, w = img.shape[:2]
    if spec.resize_mode == "warp":
        out = resize_bilinear(img, s, s)
    else:
        short = min(h, w)
        nh = max(s, int(round(h * s / short)))
        nw = max(s, int(round(w * s / short)))
        out = resize_bilinear(img, nh, nw)
        top, left = (nh - s) // 2, (nw - s) // 2
        out = out[top:top + s, left:left + s]
    out = out - np.asarray(spec.channel_means, dtype=np.float64)
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32)


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: str
    split: str


def read_manifest(path):
    """Parse ``relative-path<TAB>label<TAB>split`` lines; ``#`` starts a comment."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rel, label, split = fields
            if split not in ("train", "test"):
                raise ManifestError(f"{path}:{lineno}: split must be train or test, got {split!r}")
            records.append(ManifestRecord(rel, label, split))
    return records


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.path}\t{r.label}\t{r.split}\n")


def scale_for(net):
    return net.input_shape[1]


def default_preprocess(net, means=(0.0, 0.0, 0.0), mode="warp"):
    return PreprocessSpec(scale_for(net), tuple(means), mode)



def open_model(ref, seed=0):
    """Resolve a model reference to ``(NetworkSpec, WeightStore)``.

    ``ref`` may be a ``.fcm`` path, a code name (``M1``..``M7``), or a
    preset name with optional scale (``alexnet`` or ``alexnet@451``).
    Presets and code names get seeded random weights.
    """
    from .errors import UnknownPresetError
    from .presets import CODE_NAMES, from_code, preset
    from .weights import random_weights

    ref = str(ref)
    if ref.endswith(".fcm") or Path(ref).is_file():
        return load_model(ref)
    if ref.upper() in CODE_NAMES:
        net = from_code(ref)
    else:
        name, _, scale = ref.partition("@")
        try:
            net = preset(name, int(scale) if scale else None)
        except ValueError as exc:
            if isinstance(exc, FusecatError):
                raise
            raise UnknownPresetError(f"bad model reference {ref!r}") from None
    return net, random_weights(net, seed)
