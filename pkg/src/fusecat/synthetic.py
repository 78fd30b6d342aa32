"""Procedurally generated image classes for desk-scale end-to-end runs.

Three classes that differ only in colour and texture statistics:

* 0 - smooth blobs in warm hues
* 1 - smooth blobs in cool hues
* 2 - fine-grained stripes and speckle in arbitrary hues

Brightness, contrast, blob layout, stripe orientation and pixel noise vary
per image, so no single pixel or mean colour separates all three classes.
"""

from pathlib import Path

import numpy as np

from .modelio import ManifestRecord, write_manifest

CLASS_NAMES = ("warm", "cool", "texture")


def _smooth_field(rng, size, cells=4):
    coarse = rng.random((cells, cells))
    idx = np.linspace(0, cells - 1, size)
    i0 = np.floor(idx).astype(int)
    i1 = np.minimum(i0 + 1, cells - 1)
    f = idx - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i1] * f[None, :]


def _hue_rgb(h):
    # hue in [0, 1) to a saturated RGB triple
    k = (np.array([5.0, 3.0, 1.0]) + h * 6.0) % 6.0
    return 1.0 - np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)


def make_image(label, rng, size=32):
    """One ``(size, size, 3)`` uint8 image of class ``label``."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    if label == 0:
        hue = rng.uniform(-0.06, 0.12) % 1.0
    elif label == 1:
        hue = rng.uniform(0.45, 0.68)
    else:
        hue = rng.random()
    if label in (0, 1):
        pattern = _smooth_field(rng, size, cells=rng.integers(3, 6))
    else:
        angle = rng.uniform(0, np.pi)
        freq = rng.uniform(5.0, 9.0)
        stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)))
        pattern = 0.6 * stripes + 0.4 * rng.random((size, size))
    colour = _hue_rgb(hue)
    grey = np.full(3, 0.5)
    sat = rng.uniform(0.5, 0.9)
    tint = grey + sat * (colour - grey)
    brightness = rng.uniform(0.6, 1.0)
    contrast = rng.uniform(0.5, 1.0)
    img = brightness * (tint[None, None, :] * (0.5 + contrast * (pattern[..., None] - 0.5)))
    img = img + rng.normal(0.0, 0.03, img.shape)
    return (np.clip(img, 0.0, 1.0) * 255).round().astype(np.uint8)


def make_dataset(n_train=300, n_test=150, n_classes=3, size=32, seed=0):
    """Balanced train/test sets: ``(train_images, train_labels, test_images, test_labels)``."""
    rng = np.random.default_rng(seed)

    def split(n):
        labels = np.arange(n) % n_classes
        rng.shuffle(labels)
        return [make_image(int(l), rng, size) for l in labels], [int(l) for l in labels]

    tr_x, tr_y = split(n_train)
    te_x, te_y = split(n_test)
    return tr_x, tr_y, te_x, te_y


def write_dataset(root, n_train=300, n_test=150, size=32, seed=0):
    """Write PNGs plus a ``manifest.tsv`` under ``root``; returns the manifest path."""
    from PIL import Image

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tr_x, tr_y, te_x, te_y = make_dataset(n_train, n_test, size=size, seed=seed)
    records = []
    for split, xs, ys in (("train", tr_x, tr_y), ("test", te_x, te_y)):
        for i, (img, lab) in enumerate(zip(xs, ys)):
            rel = f"{split}/{CLASS_NAMES[lab]}_{i:04d}.png"
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(img).save(root / rel)
            records.append(ManifestRecord(rel, CLASS_NAMES[lab], split))
    manifest = root / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest
