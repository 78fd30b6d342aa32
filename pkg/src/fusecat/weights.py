"""Per-layer weight storage and seeded random initialization."""

import zlib
from collections.abc import Mapping

import numpy as np

from .network import WEIGHTED, check_weights, expected_weight_shapes

INIT_RANGE = 0.05


class WeightStore(Mapping):
    """Read-only mapping ``layer name -> (weights, bias)`` of float32 arrays."""

    def __init__(self, entries=None, copy=True):
        self._entries = {}
        for name, (w, b) in dict(entries or {}).items():
            conv = np.array if copy else np.asarray
            w = conv(w, dtype=np.float32)
            b = conv(b, dtype=np.float32).reshape(-1)
            w.flags.writeable = False
            b.flags.writeable = False
            self._entries[name] = (w, b)

    def __getitem__(self, name):
        return self._entries[name]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __repr__(self):
        return f"WeightStore({len(self)} layers)"

    def equals(self, other):
        """Bit-exact comparison of names, shapes and values."""
        if set(self) != set(other):
            return False
        for name in self:
            for a, b in zip(self[name], other[name]):
                if a.shape != b.shape or a.tobytes() != b.tobytes():
                    return False
        return True

    def validate(self, net):
        check_weights(net, self)
        return self


def derive_seed(seed, label):
    """Stable per-label seed so that e.g. two weight sets of one architecture differ."""
    return np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])


def random_weights(net, seed=0, label=None):
    """Uniform weights in [-0.05, 0.05] for every weighted layer, in declaration order.

    ``label`` names the weight set (defaults to the architecture name), so that
    M1 and M2 share weights while M1 and M6 do not.
    """
    label = label or net.meta.get("weight_set") or net.meta.get("arch", "net")
    rng = np.random.default_rng(derive_seed(seed, label))
    shapes = expected_weight_shapes(net)
    entries = {}
    for layer in net.layers:
        if layer.kind not in WEIGHTED:
            continue
        forms, bias_shape = shapes[layer.name]
        # converted fc layers keep the fc matrix so native and dense nets share weights
        wshape = forms[-1]
        w = rng.random(wshape, dtype=np.float32)
        w *= 2 * INIT_RANGE
        w -= INIT_RANGE
        b = rng.random(bias_shape, dtype=np.float32) * (2 * INIT_RANGE) - INIT_RANGE
        entries[layer.name] = (w, b)
    return WeightStore(entries, copy=False)
