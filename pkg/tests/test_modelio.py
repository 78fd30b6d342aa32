import json
import struct
import zlib

import cv2
import numpy as np
import pytest
from PIL import Image

from fusecat import forward, load_model, preprocess, preset, save_model
from fusecat.errors import CorruptFileError, DecodeError, ManifestError
from fusecat.modelio import PreprocessSpec, load_image, open_model, read_manifest
from fusecat.weights import WeightStore, random_weights


def test_roundtrip_bit_exact(tmp_path):
    net = preset("tiny")
    w = random_weights(net, seed=3)
    save_model(tmp_path / "t.fcm", net, w)
    net2, w2 = load_model(tmp_path / "t.fcm")
    assert net2 == net
    assert w2.equals(w)
    x = np.random.default_rng(0).uniform(-1, 1, (3, 32, 32)).astype(np.float32)
    assert forward(net, w, x, ["fc4"])["fc4"].tobytes() == \
        forward(net2, w2, x, ["fc4"])["fc4"].tobytes()


@pytest.mark.slow
def test_roundtrip_alexnet(tmp_path):
    net = preset("alexnet")
    w = random_weights(net, seed=0)
    save_model(tmp_path / "a.fcm", net, w)
    net2, w2 = load_model(tmp_path / "a.fcm")
    assert net2 == net and w2.equals(w)


def handwritten_model(path, W1, b1, W2, b2):
    """Emit a two-layer model file using only struct/json, following the documented layout."""
    net = {"input_shape": [2, 3, 3], "meta": {"arch": "handmade"}, "layers": [
        {"name": "data", "kind": "input", "params": {}, "inputs": []},
        {"name": "c", "kind": "conv", "params": {"out_channels": 2, "kernel_h": 2,
                                                 "kernel_w": 2, "activation": "relu"},
         "inputs": []},
        {"name": "f", "kind": "fc", "params": {"out_dim": 3}, "inputs": []}]}
    blobs, payload = [], b""
    for name, arr in (("c/weights", W1), ("c/bias", b1), ("f/weights", W2), ("f/bias", b2)):
        data = arr.astype("<f4").tobytes()
        blobs.append({"name": name, "dtype": "f4", "shape": list(arr.shape),
                      "offset": len(payload), "nbytes": len(data)})
        payload += data
    head = json.dumps({"network": net, "blobs": blobs}).encode()
    crc = zlib.crc32(head + payload)
    fixed = struct.pack("<4sHHIIIQI", b"FCM1", 1, 0, 3, len(head), 0, len(payload), crc)
    path.write_bytes(fixed + head + payload)


def test_independent_writer_and_oracle(tmp_path):
    rng = np.random.default_rng(7)
    W1 = rng.uniform(-1, 1, (2, 2, 2, 2)).astype(np.float32)
    b1 = rng.uniform(-1, 1, 2).astype(np.float32)
    W2 = rng.uniform(-1, 1, (3, 8)).astype(np.float32)
    b2 = rng.uniform(-1, 1, 3).astype(np.float32)
    handwritten_model(tmp_path / "h.fcm", W1, b1, W2, b2)
    net, w = load_model(tmp_path / "h.fcm")
    x = rng.uniform(-1, 1, (2, 3, 3)).astype(np.float32)
    conv = np.zeros((2, 2, 2))
    for f in range(2):
        for i in range(2):
            for j in range(2):
                conv[f, i, j] = max(0.0, (x[:, i:i + 2, j:j + 2] * W1[f]).sum() + b1[f])
    want = W2.astype(np.float64) @ conv.reshape(-1) + b2
    got = forward(net, w, x, ["f"])["f"].reshape(-1)
    assert np.allclose(got, want, rtol=1e-5, atol=1e-6)


def test_mismatched_weights_rejected_at_load(tmp_path):
    net = preset("tiny")
    w = dict(random_weights(net, seed=0))
    w["conv2"] = (np.zeros((32, 15, 3, 3)), np.zeros(32))
    save_model(tmp_path / "bad.fcm", net, WeightStore(w))
    with pytest.raises(CorruptFileError, match="conv2"):
        load_model(tmp_path / "bad.fcm")


def test_truncation_fuzz(tmp_path):
    net = preset("tiny")
    save_model(tmp_path / "t.fcm", net, random_weights(net))
    raw = (tmp_path / "t.fcm").read_bytes()
    cuts = np.random.default_rng(0).choice(len(raw), 1000, replace=False)
    target = tmp_path / "cut.fcm"
    for n in cuts:
        target.write_bytes(raw[:n])
        with pytest.raises(CorruptFileError):
            load_model(target)


def test_bit_flips_detected(tmp_path):
    net = preset("tiny")
    save_model(tmp_path / "t.fcm", net, random_weights(net))
    raw = bytearray((tmp_path / "t.fcm").read_bytes())
    rng = np.random.default_rng(1)
    for pos in rng.choice(len(raw), 50, replace=False):
        flipped = bytearray(raw)
        flipped[pos] ^= 1 << int(rng.integers(8))
        (tmp_path / "f.fcm").write_bytes(bytes(flipped))
        with pytest.raises(CorruptFileError):
            load_model(tmp_path / "f.fcm")


def test_missing_file():
    with pytest.raises(CorruptFileError):
        load_model("/nonexistent/model.fcm")


# --- preprocessing --------------------------------------------------------

def test_mean_cancels_constant_image():
    img = np.empty((50, 70, 3), np.uint8)
    img[:] = (104, 117, 123)
    out = preprocess(img, PreprocessSpec(227, (104, 117, 123)))
    assert out.shape == (3, 227, 227)
    assert np.array_equal(out, np.zeros_like(out))


def test_native_size_is_identity():
    img = np.random.default_rng(0).integers(0, 256, (227, 227, 3)).astype(np.uint8)
    out = preprocess(img, PreprocessSpec(227))
    assert np.array_equal(out, img.transpose(2, 0, 1).astype(np.float32))


@pytest.mark.parametrize("mode", ["warp", "crop"])
def test_resize_matches_opencv(mode):
    img = np.random.default_rng(1).integers(0, 256, (480, 640, 3)).astype(np.uint8)
    out = preprocess(img, PreprocessSpec(227, resize_mode=mode))
    f = img.astype(np.float32)
    if mode == "warp":
        ref = cv2.resize(f, (227, 227), interpolation=cv2.INTER_LINEAR)
    else:
        ref = cv2.resize(f, (303, 227), interpolation=cv2.INTER_LINEAR)[:, 38:265]
    # one 8-bit intensity level
    assert np.abs(out.transpose(1, 2, 0) - ref).max() <= 1.0


def test_grayscale_promoted():
    out = preprocess(np.full((10, 10), 9, np.uint8), PreprocessSpec(8))
    assert out.shape == (3, 8, 8) and np.allclose(out, 9)


def test_load_image_and_decode_error(tmp_path):
    img = np.random.default_rng(2).integers(0, 256, (12, 9, 3)).astype(np.uint8)
    Image.fromarray(img).save(tmp_path / "a.png")
    assert np.array_equal(load_image(tmp_path / "a.png"), img.astype(np.float32))
    (tmp_path / "junk.jpg").write_bytes(b"not an image at all")
    with pytest.raises(DecodeError):
        load_image(tmp_path / "junk.jpg")


def test_bad_resize_mode():
    with pytest.raises(ValueError):
        PreprocessSpec(227, resize_mode="stretch")


# --- manifests and model references ----------------------------------------

def test_manifest(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("# comment\na.png\tcat\ttrain\n\nb.png\tdog\ttest\n")
    recs = read_manifest(p)
    assert [(r.path, r.label, r.split) for r in recs] == [("a.png", "cat", "train"),
                                                          ("b.png", "dog", "test")]
    p.write_text("a.png\tcat\tvalidation\n")
    with pytest.raises(ManifestError, match=":1:"):
        read_manifest(p)
    p.write_text("a.png cat train\n")
    with pytest.raises(ManifestError):
        read_manifest(p)


def test_open_model_references(tmp_path):
    net, w = open_model("tiny")
    assert net.input_shape == (3, 32, 32)
    net, _ = open_model("alexnet@451")
    assert net.dense
    save_model(tmp_path / "t.fcm", *open_model("tiny", seed=4))
    net2, w2 = open_model(str(tmp_path / "t.fcm"))
    assert w2.equals(open_model("tiny", seed=4)[1])
