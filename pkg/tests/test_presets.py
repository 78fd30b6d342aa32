import pytest

from fusecat import from_code, infer_shapes, preset
from fusecat.descriptor import pooled_size
from fusecat.errors import InvalidGeometryError, UnknownPresetError
from fusecat.presets import CODE_NAMES
from fusecat.weights import random_weights

# (preset, layer, shape, flattened length, pooled length)
LAYER_TABLE = [
    ("alexnet", "conv1", (96, 55, 55), 290400, 96),
    ("alexnet", "conv2", (256, 27, 27), 186624, 256),
    ("vgg19", "conv4-1", (512, 28, 28), 401408, 512),
    ("vgg19", "conv5-1", (512, 14, 14), 100352, 512),
    ("googlenet", "inception-5a/output", (832, 7, 7), 40768, 832),
    ("googlenet", "inception-5b/output", (1024, 7, 7), 50176, 1024),
]


@pytest.mark.parametrize("name,layer,shape,linear,pooled", LAYER_TABLE)
def test_layer_table(name, layer, shape, linear, pooled):
    s = infer_shapes(preset(name))[layer]
    assert s == shape
    assert pooled_size(s, "flat") == linear
    assert pooled_size(s, "max") == pooled


def test_alexnet_layout():
    net = preset("alexnet")
    weighted = [l.name for l in net.layers if l.kind in ("conv", "fc")]
    assert weighted == ["conv1", "conv2", "conv3", "conv4", "conv5", "fc6", "fc7", "fc8"]
    shapes = infer_shapes(net)
    assert shapes["pool5"] == (256, 6, 6)
    assert shapes["fc7"] == (4096, 1, 1)


def test_vgg_and_googlenet_widths():
    assert infer_shapes(preset("vgg16"))["fc7"] == (4096, 1, 1)
    assert infer_shapes(preset("vgg16"))["pool5"] == (512, 7, 7)
    assert infer_shapes(preset("googlenet"))["loss3/classifier"] == (1000, 1, 1)


@pytest.mark.parametrize("name,scale,grid", [("alexnet", 451, 8), ("vgg16", 448, 8),
                                             ("vgg19", 448, 8)])
def test_dense_grids(name, scale, grid):
    net = preset(name, scale)
    assert net.dense
    assert net.input_shape == (3, scale, scale)
    assert infer_shapes(net)["fc8"] == (1000, grid, grid)


def test_below_native_rejected():
    with pytest.raises(InvalidGeometryError):
        preset("alexnet", 200)


def test_unknown_names():
    with pytest.raises(UnknownPresetError):
        preset("resnet")
    with pytest.raises(UnknownPresetError):
        from_code("M9")


def test_every_preset_lists_top_taps():
    for name in ("alexnet", "vgg16", "vgg19", "googlenet"):
        net = preset(name)
        top = net.meta["top_taps"]
        assert len(top) == 8
        shapes = infer_shapes(net)
        assert all(t in shapes for t in top)
        assert net.meta["best_tap"][0] in top


@pytest.mark.parametrize("code", sorted(CODE_NAMES))
def test_codes(code):
    arch, scale, weight_set = CODE_NAMES[code]
    net = from_code(code)
    assert net.input_shape == (3, scale, scale)
    assert net.meta["code"] == code and net.meta["weight_set"] == weight_set


def test_weight_sets_shared_and_distinct():
    tiny = preset("tiny")
    a = random_weights(tiny, 0, "alexnet-imagenet")
    b = random_weights(tiny, 0, "alexnet-imagenet")
    c = random_weights(tiny, 0, "alexnet-places")
    d = random_weights(tiny, 1, "alexnet-imagenet")
    assert a.equals(b)
    assert not a.equals(c) and not a.equals(d)
    w, _ = a["conv1"]
    assert w.min() >= -0.05 and w.max() <= 0.05
