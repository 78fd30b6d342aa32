import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import naive
from fusecat import preset, random_weights
from fusecat.descriptor import (DescriptorSet, default_pool_modes, descriptor_dim,
                                extract_descriptor, flatten_concat, l2_normalize,
                                load_descriptors, pool, resolve_taps, save_descriptors,
                                spatial_max_pool, spatial_sum_pool)
from fusecat.errors import CorruptFileError, ShapeMismatchError

fmaps = arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)),
               elements=st.floats(-100, 100, width=32))


def test_pool_examples():
    x = np.arange(12, dtype=np.float32).reshape(3, 2, 2)
    assert spatial_max_pool(x).tolist() == [3, 7, 11]
    assert spatial_sum_pool(x).tolist() == [6, 22, 38]
    assert flatten_concat(x).tolist() == list(range(12))


@pytest.mark.parametrize("seed", range(120))
def test_pools_match_loop_oracles(seed):
    rng = np.random.default_rng(4000 + seed)
    x = rng.uniform(-10, 10, rng.integers(1, 9, size=3)).astype(np.float32)
    assert naive.rel_err(spatial_max_pool(x), naive.spatial_max(x)) < 1e-5
    assert naive.rel_err(spatial_sum_pool(x), naive.spatial_sum(x)) < 1e-5


@given(fmaps, st.randoms())
def test_pooling_ignores_spatial_order(x, rnd):
    c, h, w = x.shape
    perm = list(range(h * w))
    rnd.shuffle(perm)
    y = x.reshape(c, -1)[:, perm].reshape(c, h, w)
    assert np.array_equal(spatial_max_pool(x), spatial_max_pool(y))
    assert np.allclose(spatial_sum_pool(x), spatial_sum_pool(y), rtol=1e-6, atol=1e-3)


@given(fmaps)
def test_max_at_most_sum_for_nonnegative(x):
    x = np.abs(x)
    assert np.all(spatial_max_pool(x) <= spatial_sum_pool(x) * (1 + 1e-6) + 1e-6)


def test_pool_mode_validation():
    with pytest.raises(ValueError):
        pool(np.zeros((1, 1, 1)), "mean")


def test_l2_normalize():
    v = l2_normalize(np.array([3.0, 4.0]))
    assert np.allclose(v, [0.6, 0.8])
    assert np.array_equal(l2_normalize(np.zeros(5)), np.zeros(5))


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e3, 1e3)))
def test_l2_normalize_unit_or_zero(v):
    n = np.linalg.norm(l2_normalize(v).astype(np.float64))
    assert abs(n - 1) < 1e-5 or (n == 0 and not np.any(v.astype(np.float32)))


def test_default_pool_modes_split_at_half():
    top = ["a", "b", "c", "d", "e", "f", "g", "h"]
    assert default_pool_modes(top) == ["sum"] * 4 + ["max"] * 4
    assert default_pool_modes(["a", "h"], top) == ["sum", "max"]
    assert resolve_taps(["a:max", ("b", "flat"), "h"], top) == [
        ("a", "max"), ("b", "flat"), ("h", "max")]


@pytest.fixture(scope="module")
def alexnet():
    net = preset("alexnet")
    x = np.random.default_rng(0).uniform(-50, 50, (3, 227, 227)).astype(np.float32)
    return net, random_weights(net), x


def test_fc7_flat_is_4096(alexnet):
    net, w, x = alexnet
    d = extract_descriptor(net, w, x, ["fc7:flat"])
    assert d.dim == 4096
    assert abs(np.linalg.norm(d.values) - 1) < 1e-5


def test_conv1_conv2_max_is_352(alexnet):
    net, w, x = alexnet
    d = extract_descriptor(net, w, x, ["conv1:max", "conv2:max"], normalize=None)
    assert d.dim == 352 == descriptor_dim(net, ["conv1:max", "conv2:max"])


def test_tap_order_permutes_blocks(alexnet):
    net, w, x = alexnet
    a = extract_descriptor(net, w, x, ["conv5:max", "fc6:max"], normalize=None).values
    b = extract_descriptor(net, w, x, ["fc6:max", "conv5:max"], normalize=None).values
    assert np.array_equal(a, np.concatenate([b[4096:], b[:4096]]))


def test_block_normalization(alexnet):
    net, w, x = alexnet
    d = extract_descriptor(net, w, x, ["conv5:sum", "fc7:max"], normalize="block").values
    assert abs(np.linalg.norm(d[:256]) - 1) < 1e-5
    assert abs(np.linalg.norm(d[256:]) - 1) < 1e-5


@pytest.mark.slow
def test_dense_fc7_sum_is_4096():
    net = preset("alexnet", 451)
    w = random_weights(net)
    x = np.random.default_rng(1).uniform(-1, 1, (3, 451, 451)).astype(np.float32)
    assert extract_descriptor(net, w, x, ["fc7:sum"]).dim == 4096


def test_descriptor_set_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    ds = DescriptorSet(rng.normal(size=(5, 7)).astype(np.float32), list("abcde"),
                       ["x", "y", "x", "y", "x"], ["train"] * 3 + ["test"] * 2,
                       {"model": "M1", "taps": [["fc7", "sum"]]})
    save_descriptors(tmp_path / "d.desc", ds)
    back = load_descriptors(tmp_path / "d.desc")
    assert back.values.tobytes() == ds.values.tobytes()
    assert (back.ids, back.labels, back.splits, back.meta) == (ds.ids, ds.labels, ds.splits,
                                                              ds.meta)
    assert len(back.subset("test")) == 2


def test_descriptor_truncation_fuzz(tmp_path):
    ds = DescriptorSet(np.ones((20, 64), np.float32), [str(i) for i in range(20)])
    save_descriptors(tmp_path / "d.desc", ds)
    raw = (tmp_path / "d.desc").read_bytes()
    for n in np.random.default_rng(0).choice(len(raw), 1000, replace=False):
        (tmp_path / "c.desc").write_bytes(raw[:n])
        with pytest.raises(CorruptFileError):
            load_descriptors(tmp_path / "c.desc")


def test_descriptor_set_validation():
    with pytest.raises(ShapeMismatchError):
        DescriptorSet(np.zeros((2, 3)), ["a"])
