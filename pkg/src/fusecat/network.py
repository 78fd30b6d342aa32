"""Layer graphs, symbolic shape inference and the forward pass with taps."""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import (InvalidGeometryError, ShapeMismatchError, StructuralError,
                     UnknownTapError, WeightShapeError)

KINDS = ("input", "conv", "relu", "maxpool", "avgpool", "lrn", "fc", "softmax",
         "concat", "dropout")
WEIGHTED = ("conv", "fc")


@dataclass(frozen=True)
class LayerSpec:
    """One named node of a network.

    ``params`` holds the kind-specific geometry, e.g. ``out_channels``,
    ``kernel_h``/``kernel_w``, ``stride``, ``pad`` and ``activation`` for a
    conv layer. ``inputs`` names upstream layers; an empty tuple means
    "the previous layer".
    """

    name: str
    kind: str
    params: dict = field(default_factory=dict)
    inputs: tuple = ()

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "params": dict(self.params),
                "inputs": list(self.inputs)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], dict(d.get("params", {})), tuple(d.get("inputs", ())))


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_shape: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        self._validate()

    def _validate(self):
        seen = set()
        sources = 0
        for i, layer in enumerate(self.layers):
            if layer.kind not in KINDS:
                raise StructuralError(f"layer {layer.name!r} has unknown kind {layer.kind!r}")
            if layer.name in seen:
                raise StructuralError(f"duplicate layer name {layer.name!r}")
            if layer.kind == "input":
                sources += 1
                if i != 0:
                    raise StructuralError("the input layer must be declared first")
            for src in layer.inputs:
                if src not in seen:
                    raise StructuralError(
                        f"layer {layer.name!r} reads {src!r} before it is declared")
            if layer.kind == "concat" and not layer.inputs:
                raise StructuralError(f"concat layer {layer.name!r} needs explicit inputs")
            seen.add(layer.name)
        if sources != 1:
            raise StructuralError(f"network must have exactly one input layer, found {sources}")

    @property
    def dense(self):
        """True for convolutionalized nets, which accept inputs above native scale."""
        return bool(self.meta.get("dense", False))

    def index(self, name):
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise UnknownTapError(f"no layer named {name!r}")

    def layer(self, name):
        return self.layers[self.index(name)]

    def sources(self, i):
        """Names of the layers feeding layer ``i``."""
        layer = self.layers[i]
        if layer.inputs:
            return layer.inputs
        if i == 0:
            return ()
        return (self.layers[i - 1].name,)

    def to_dict(self):
        return {"input_shape": list(self.input_shape), "meta": self.meta,
                "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(LayerSpec.from_dict(l) for l in d["layers"]),
                   tuple(d["input_shape"]), dict(d.get("meta", {})))

    def with_input_shape(self, shape):
        return replace(self, input_shape=tuple(shape))


def _kernel(p):
    return p["kernel_h"], p["kernel_w"]


def layer_output_shape(layer, in_shapes):
    p = layer.params
    kind = layer.kind
    if kind == "concat":
        spatial = {s[1:] for s in in_shapes}
        if len(spatial) != 1:
            raise ShapeMismatchError(f"layer {layer.name!r}: concat inputs differ spatially")
        return (sum(s[0] for s in in_shapes),) + in_shapes[0][1:]
    (shape,) = in_shapes
    if kind == "conv":
        kh, kw = _kernel(p)
        return T.conv_output_shape(shape, p["out_channels"], kh, kw,
                                   p.get("stride", 1), p.get("pad", 0))
    if kind in ("maxpool", "avgpool"):
        return T.pool_output_shape(shape, p["window"], p["stride"], p.get("pad", 0),
                                   p.get("ceil_mode", False))
    if kind == "fc":
        return (p["out_dim"], 1, 1)
    return shape


def infer_shapes(net, input_shape=None):
    """Map every layer name to its output shape without running any arithmetic."""
    shapes = {}
    for i, layer in enumerate(net.layers):
        if layer.kind == "input":
            shapes[layer.name] = tuple(input_shape or net.input_shape)
            continue
        ins = [shapes[s] for s in net.sources(i)]
        try:
            shapes[layer.name] = layer_output_shape(layer, ins)
        except InvalidGeometryError as exc:
            raise InvalidGeometryError(f"layer {layer.name!r}: {exc}") from None
    return shapes


def expected_weight_shapes(net):
    """Map each weighted layer to ``(weight_shapes, bias_shape)``.

    A conv layer converted from an fc layer accepts either the 4-D kernel
    or the original fc matrix, so both forms are listed.
    """
    shapes = infer_shapes(net)
    out = {}
    for i, layer in enumerate(net.layers):
        if layer.kind not in WEIGHTED:
            continue
        (src,) = net.sources(i)
        c, h, w = shapes[src]
        p = layer.params
        if layer.kind == "fc":
            out[layer.name] = ([(p["out_dim"], c * h * w)], (p["out_dim"],))
        else:
            kh, kw = _kernel(p)
            n = p["out_channels"]
            forms = [(n, c, kh, kw)]
            if p.get("from_fc"):
                forms.append((n, c * kh * kw))
            out[layer.name] = (forms, (n,))
    return out


def check_weights(net, weights, upto=None):
    """Raise WeightShapeError naming the first weighted layer whose blobs don't fit."""
    limit = len(net.layers) if upto is None else upto + 1
    names = {l.name for l in net.layers[:limit]}
    for name, (forms, bias_shape) in expected_weight_shapes(net).items():
        if name not in names:
            continue
        if name not in weights:
            raise WeightShapeError(name, "no weights stored for this layer")
        w, b = weights[name]
        if tuple(w.shape) not in [tuple(f) for f in forms]:
            raise WeightShapeError(name, f"weight shape {tuple(w.shape)}, expected {forms[0]}")
        if tuple(b.shape) != tuple(bias_shape):
            raise WeightShapeError(name, f"bias shape {tuple(b.shape)}, expected {bias_shape}")


def _check_input(net, x):
    if not net.dense:
        if x.shape != net.input_shape:
            raise ShapeMismatchError(
                f"input shape {x.shape} does not match network input {net.input_shape}")
        return
    native = net.meta.get("native_scale", net.input_shape[1])
    if x.shape[0] != net.input_shape[0] or min(x.shape[1:]) < native:
        raise ShapeMismatchError(
            f"dense network needs {net.input_shape[0]} channels and spatial size >= {native}, "
            f"got {x.shape}")


def _apply(layer, ins, weights):
    p = layer.params
    kind = layer.kind
    if kind == "conv":
        w, b = weights[layer.name]
        if w.ndim == 2:
            w = w.reshape(p["out_channels"], ins[0].shape[0], p["kernel_h"], p["kernel_w"])
        out = T.conv2d(ins[0], w, b, p.get("stride", 1), p.get("pad", 0))
    elif kind == "fc":
        w, b = weights[layer.name]
        out = T.fully_connected(ins[0], w, b)
    elif kind == "maxpool":
        return T.maxpool2d(ins[0], p["window"], p["stride"], p.get("pad", 0),
                           p.get("ceil_mode", False))
    elif kind == "avgpool":
        return T.avgpool2d(ins[0], p["window"], p["stride"], p.get("pad", 0),
                           p.get("ceil_mode", False))
    elif kind == "relu":
        return T.relu(ins[0])
    elif kind == "lrn":
        return T.lrn(ins[0], p.get("local_size", 5), p.get("alpha", 1e-4),
                     p.get("beta", 0.75), p.get("k", 1.0))
    elif kind == "softmax":
        return T.softmax(ins[0])
    elif kind == "concat":
        return T.concat_channels(ins)
    elif kind == "dropout":
        return ins[0]
    else:
        raise StructuralError(f"cannot execute layer kind {kind!r}")
    if p.get("activation") == "relu":
        np.maximum(out, 0, out=out)
    return out


def forward(net, weights, x, taps, timings=None):
    """Run one forward pass and return ``{tap: tensor}`` for the requested taps.

    Layers after the deepest tap are never evaluated, and intermediate
    tensors are released as soon as no later layer reads them. When
    ``timings`` is a dict, per-layer wall time (seconds) is added to it.
    """
    taps = list(taps)
    if not taps:
        raise UnknownTapError("at least one tap is required")
    positions = {l.name: i for i, l in enumerate(net.layers)}
    for t in taps:
        if t not in positions:
            raise UnknownTapError(f"no layer named {t!r}")
    x = T.as_tensor(x)
    _check_input(net, x)
    last = max(positions[t] for t in taps)
    check_weights(net, weights, upto=last)

    last_use = {}
    for i in range(last + 1):
        for src in net.sources(i):
            last_use[src] = i
    wanted = set(taps)

    values = {}
    result = {}
    for i, layer in enumerate(net.layers[:last + 1]):
        if layer.kind == "input":
            out = x
        else:
            ins = [values[s] for s in net.sources(i)]
            t0 = time.perf_counter() if timings is not None else 0.0
            out = _apply(layer, ins, weights)
            if timings is not None:
                timings[layer.name] = timings.get(layer.name, 0.0) + time.perf_counter() - t0
            for s in net.sources(i):
                if last_use.get(s) == i and s not in wanted:
                    del values[s]
        values[layer.name] = out
        if layer.name in wanted:
            result[layer.name] = out
    return {t: result[t] for t in taps}


def convolutionalize(net):
    """Return an equivalent network whose fc layers are convolutions.

    Each fc layer becomes a conv whose kernel covers the full spatial extent
    of its input at native scale (fc6 of an AlexNet-shaped net becomes a
    6x6 conv). The stored fc weight matrices are reused as-is; the kernel
    view is taken at run time. The result accepts any input at least as
    large as the native scale.
    """
    fc_at = [i for i, l in enumerate(net.layers) if l.kind == "fc"]
    if not fc_at:
        raise StructuralError("network has no fc layer to convolutionalize")
    spatial = ("conv", "maxpool", "avgpool", "lrn", "concat")
    for i in range(fc_at[0] + 1, len(net.layers)):
        if net.layers[i].kind in spatial:
            raise StructuralError(
                f"fc layer feeds spatial layer {net.layers[i].name!r}; fc layers must form a suffix")
    shapes = infer_shapes(net)
    layers = []
    for i, layer in enumerate(net.layers):
        if layer.kind != "fc":
            layers.append(layer)
            continue
        (src,) = net.sources(i)
        c, h, w = shapes[src]
        params = {"out_channels": layer.params["out_dim"], "kernel_h": h, "kernel_w": w,
                  "stride": 1, "pad": 0, "from_fc": True}
        if layer.params.get("activation"):
            params["activation"] = layer.params["activation"]
        layers.append(LayerSpec(layer.name, "conv", params, layer.inputs))
    meta = dict(net.meta)
    meta["dense"] = True
    meta.setdefault("native_scale", net.input_shape[1])
    return NetworkSpec(tuple(layers), net.input_shape, meta)
