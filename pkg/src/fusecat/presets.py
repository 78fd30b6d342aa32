"""Architecture presets: AlexNet, VGG16, VGG19 and GoogleNet shapes, plus a tiny net.

Conv and fc layers carry a fused ReLU (``activation="relu"``) so that the
tap named ``conv1`` holds the rectified map, as with Caffe's in-place ReLU.
GoogleNet's auxiliary classifiers are left out; they never feed the
inception outputs.
"""

from .errors import InvalidGeometryError, UnknownPresetError
from .network import LayerSpec, NetworkSpec, convolutionalize, infer_shapes


class _Builder:
    def __init__(self):
        self.layers = [LayerSpec("data", "input")]

    @property
    def last(self):
        return self.layers[-1].name

    def add(self, name, kind, inputs=(), **params):
        self.layers.append(LayerSpec(name, kind, params, tuple(inputs)))
        return name

    def conv(self, name, out, k, stride=1, pad=0, relu=True, inputs=()):
        params = dict(out_channels=out, kernel_h=k, kernel_w=k, stride=stride, pad=pad)
        if relu:
            params["activation"] = "relu"
        return self.add(name, "conv", inputs, **params)

    def fc(self, name, out, relu=True, inputs=()):
        params = {"out_dim": out}
        if relu:
            params["activation"] = "relu"
        return self.add(name, "fc", inputs, **params)

    def maxpool(self, name, window, stride, pad=0, ceil_mode=False, inputs=()):
        return self.add(name, "maxpool", inputs, window=window, stride=stride, pad=pad,
                        ceil_mode=ceil_mode)

    def lrn(self, name, size=5, alpha=1e-4, beta=0.75, k=1.0):
        return self.add(name, "lrn", local_size=size, alpha=alpha, beta=beta, k=k)


def _classifier_head(b, hidden=4096, classes=1000):
    b.fc("fc6", hidden)
    b.add("drop6", "dropout")
    b.fc("fc7", hidden)
    b.add("drop7", "dropout")
    b.fc("fc8", classes, relu=False)
    b.add("prob", "softmax")


def alexnet():
    b = _Builder()
    b.conv("conv1", 96, 11, stride=4)
    b.lrn("norm1")
    b.maxpool("pool1", 3, 2)
    b.conv("conv2", 256, 5, pad=2)
    b.lrn("norm2")
    b.maxpool("pool2", 3, 2)
    b.conv("conv3", 384, 3, pad=1)
    b.conv("conv4", 384, 3, pad=1)
    b.conv("conv5", 256, 3, pad=1)
    b.maxpool("pool5", 3, 2)
    _classifier_head(b)
    meta = {"arch": "alexnet", "native_scale": 227,
            "top_taps": ["conv1", "conv2", "conv3", "conv4", "conv5", "fc6", "fc7", "fc8"],
            "best_tap": ["fc7", "sum"]}
    return NetworkSpec(b.layers, (3, 227, 227), meta)


def _vgg(name, blocks):
    b = _Builder()
    widths = (64, 128, 256, 512, 512)
    convs = []
    for stage, (count, width) in enumerate(zip(blocks, widths), start=1):
        for j in range(1, count + 1):
            convs.append(b.conv(f"conv{stage}-{j}", width, 3, pad=1))
        b.maxpool(f"pool{stage}", 2, 2)
    _classifier_head(b)
    fc = ["fc6", "fc7", "fc8"]
    meta = {"arch": name, "native_scale": 224, "top_taps": convs[-5:] + fc,
            "best_tap": ["fc7", "sum"]}
    return NetworkSpec(b.layers, (3, 224, 224), meta)


def vgg16():
    return _vgg("vgg16", (2, 2, 3, 3, 3))


def vgg19():
    return _vgg("vgg19", (2, 2, 4, 4, 4))


# (1x1, 3x3 reduce, 3x3, 5x5 reduce, 5x5, pool proj)
INCEPTION = {
    "3a": (64, 96, 128, 16, 32, 32),
    "3b": (128, 128, 192, 32, 96, 64),
    "4a": (192, 96, 208, 16, 48, 64),
    "4b": (160, 112, 224, 24, 64, 64),
    "4c": (128, 128, 256, 24, 64, 64),
    "4d": (112, 144, 288, 32, 64, 64),
    "4e": (256, 160, 320, 32, 128, 128),
    "5a": (256, 160, 320, 32, 128, 128),
    "5b": (384, 192, 384, 48, 128, 128),
}


def _inception(b, tag, src):
    n1, n3r, n3, n5r, n5, pp = INCEPTION[tag]
    p = f"inception-{tag}"
    one = b.conv(f"{p}/1x1", n1, 1, inputs=(src,))
    b.conv(f"{p}/3x3_reduce", n3r, 1, inputs=(src,))
    three = b.conv(f"{p}/3x3", n3, 3, pad=1)
    b.conv(f"{p}/5x5_reduce", n5r, 1, inputs=(src,))
    five = b.conv(f"{p}/5x5", n5, 5, pad=2)
    b.maxpool(f"{p}/pool", 3, 1, pad=1, inputs=(src,))
    proj = b.conv(f"{p}/pool_proj", pp, 1)
    return b.add(f"{p}/output", "concat", inputs=(one, three, five, proj))


def googlenet():
    b = _Builder()
    b.conv("conv1/7x7_s2", 64, 7, stride=2, pad=3)
    b.maxpool("pool1/3x3_s2", 3, 2, ceil_mode=True)
    b.lrn("pool1/norm1")
    b.conv("conv2/3x3_reduce", 64, 1)
    b.conv("conv2/3x3", 192, 3, pad=1)
    b.lrn("conv2/norm2")
    src = b.maxpool("pool2/3x3_s2", 3, 2, ceil_mode=True)
    outputs = []
    for tag in ("3a", "3b", "4a", "4b", "4c", "4d", "4e", "5a", "5b"):
        src = _inception(b, tag, src)
        outputs.append(src)
        if tag in ("3b", "4e"):
            src = b.maxpool(f"pool{tag[0]}/3x3_s2", 3, 2, ceil_mode=True)
    b.add("pool5/7x7_s1", "avgpool", window=7, stride=1)
    b.add("pool5/drop", "dropout")
    b.fc("loss3/classifier", 1000, relu=False)
    b.add("prob", "softmax")
    meta = {"arch": "googlenet", "native_scale": 224, "top_taps": outputs[-8:],
            "best_tap": ["inception-5b/output", "max"]}
    return NetworkSpec(b.layers, (3, 224, 224), meta)


def tiny():
    """Four weight layers on 32x32 input; used for desk-scale end-to-end runs."""
    b = _Builder()
    b.conv("conv1", 16, 5, pad=2)
    b.maxpool("pool1", 2, 2)
    b.conv("conv2", 32, 3, pad=1)
    b.maxpool("pool2", 2, 2)
    b.conv("conv3", 64, 3, pad=1)
    b.maxpool("pool3", 2, 2)
    b.fc("fc4", 128)
    meta = {"arch": "tiny", "native_scale": 32, "top_taps": ["conv1", "conv2", "conv3", "fc4"],
            "best_tap": ["fc4", "sum"]}
    return NetworkSpec(b.layers, (3, 32, 32), meta)


BUILDERS = {"alexnet": alexnet, "vgg16": vgg16, "vgg19": vgg19, "googlenet": googlenet,
            "tiny": tiny}

# code name -> (architecture, input scale, weight set)
CODE_NAMES = {
    "M1": ("alexnet", 227, "alexnet-imagenet"),
    "M2": ("alexnet", 451, "alexnet-imagenet"),
    "M3": ("vgg16", 224, "vgg16-imagenet"),
    "M4": ("vgg19", 224, "vgg19-imagenet"),
    "M5": ("googlenet", 224, "googlenet-imagenet"),
    "M6": ("alexnet", 227, "alexnet-places"),
    "M7": ("vgg16", 448, "vgg16-imagenet"),
}


def preset(name, scale=None):
    """Build a preset network at ``scale``.

    The native scale returns the plain network; a larger scale returns the
    convolutionalized (dense-evaluation) variant sized for that input.
    """
    try:
        net = BUILDERS[name]()
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; choose from {', '.join(BUILDERS)}") from None
    native = net.meta["native_scale"]
    scale = native if scale is None else int(scale)
    meta = dict(net.meta, code=_code_for(name, scale), weight_set=f"{name}-imagenet")
    net = NetworkSpec(net.layers, net.input_shape, meta)
    if scale == native:
        return net
    if scale < native:
        raise InvalidGeometryError(f"{name} cannot run below its native scale {native}")
    dense = convolutionalize(net).with_input_shape((3, scale, scale))
    infer_shapes(dense)
    return dense


def _code_for(name, scale):
    for code, (arch, s, _) in CODE_NAMES.items():
        if arch == name and s == scale:
            return code
    return f"{name}@{scale}"


def from_code(code):
    """Network for a code name such as ``M2``; meta records its weight set."""
    try:
        arch, scale, weight_set = CODE_NAMES[code.upper()]
    except KeyError:
        raise UnknownPresetError(f"unknown model code {code!r}") from None
    net = preset(arch, scale)
    meta = dict(net.meta, code=code.upper(), weight_set=weight_set)
    return NetworkSpec(net.layers, net.input_shape, meta)
