import gzip
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homodyne_opu.device import DeviceConfig
from homodyne_opu.errors import FormatError, ShapeError
from homodyne_opu.fixtures import data_dir, load_fixture_model, mnist_test
from homodyne_opu.numerics import QuantSpec
from homodyne_opu.workloads import (
    LayerSpec,
    attention_model,
    im2col,
    load_mnist_idx,
    load_model,
    lower_weight,
    read_idx,
    run_inference,
    run_layers,
    save_model,
    synthetic_operands,
    write_idx,
)

# byte sum of the bundled 1000-image test split, precomputed with a plain gzip read
FIXTURE_PIXEL_SUM = 26_450_498


def four_image_fixture(tmp_path):
    imgs = np.arange(4 * 3 * 5, dtype=np.uint8).reshape(4, 3, 5)
    labels = np.array([3, 1, 4, 1], np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx.gz"
    ip.write_bytes(struct.pack(">IIII", 0x803, 4, 3, 5) + imgs.tobytes())
    lp.write_bytes(gzip.compress(struct.pack(">II", 0x801, 4) + labels.tobytes()))
    return ip, lp, imgs, labels


def test_four_image_fixture(tmp_path):
    ip, lp, imgs, labels = four_image_fixture(tmp_path)
    data = load_mnist_idx(ip, lp)
    assert len(data) == 4 and data.images.shape == (4, 3, 5)
    np.testing.assert_allclose(data.images * 255, imgs)
    np.testing.assert_array_equal(data.labels, labels)
    assert data.flat().shape == (15, 4)


def test_truncated_and_bad_files(tmp_path):
    ip, lp, _, _ = four_image_fixture(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-1])
    with pytest.raises(FormatError):
        read_idx(ip)
    (tmp_path / "bad").write_bytes(struct.pack(">II", 0x999, 0))
    with pytest.raises(FormatError):
        read_idx(tmp_path / "bad")
    (tmp_path / "short").write_bytes(b"\x00\x00")
    with pytest.raises(FormatError):
        read_idx(tmp_path / "short")
    with pytest.raises(FormatError):
        load_mnist_idx(lp, lp)


def test_writer_round_trip(tmp_path):
    a = np.random.default_rng(0).integers(0, 256, (3, 4, 4), dtype=np.uint8)
    write_idx(tmp_path / "a.idx.gz", a)
    np.testing.assert_array_equal(read_idx(tmp_path / "a.idx.gz"), a)


def test_bundled_fixture_checksum():
    raw = gzip.decompress((data_dir() / "mnist-test-images.idx.gz").read_bytes())
    assert sum(raw[16:]) == FIXTURE_PIXEL_SUM
    data = mnist_test()
    assert len(data) == 1000
    assert int(np.rint(data.images * 255).sum()) == FIXTURE_PIXEL_SUM
    assert np.bincount(data.labels).tolist() == [100] * 10


def direct_conv(x, w, stride, padding):
    """Nested-loop oracle: (C,H,W) input, (O,C,kh,kw) kernel."""
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((o, oh, ow))
    for oc in range(o):
        for i in range(oh):
            for j in range(ow):
                s = 0.0
                for ic in range(c):
                    for di in range(kh):
                        for dj in range(kw):
                            s += w[oc, ic, di, dj] * xp[ic, i * stride + di, j * stride + dj]
                out[oc, i, j] = s
    return out


def test_im2col_1x1_identity():
    x = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    np.testing.assert_array_equal(im2col(x, 1), x.reshape(2, 12))


def test_im2col_small_integers():
    x = np.arange(25, dtype=float).reshape(1, 5, 5)
    w = np.array([[[[1, 0, -1], [2, 0, -2], [1, 0, -1]]]], float)
    got = (lower_weight(w) @ im2col(x, 3)).reshape(1, 3, 3)
    np.testing.assert_array_equal(got, direct_conv(x, w, 1, 0))
    np.testing.assert_array_equal(got, -8.0)


@given(st.integers(1, 3), st.integers(1, 3), st.integers(4, 9), st.integers(1, 4), st.integers(1, 2),
       st.integers(0, 2), st.integers(0, 2**31))
def test_im2col_matches_direct_conv(c, o, size, k, stride, padding, seed):
    if k > size + 2 * padding:
        return
    gen = np.random.default_rng(seed)
    x, w = gen.standard_normal((c, size, size)), gen.standard_normal((o, c, k, k))
    ref = direct_conv(x, w, stride, padding)
    got = (lower_weight(w) @ im2col(x, k, stride, padding)).reshape(ref.shape)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_im2col_errors():
    with pytest.raises(ShapeError):
        im2col(np.zeros((3, 3)), 1)
    with pytest.raises(ShapeError):
        im2col(np.zeros((1, 3, 3)), 5)


def test_conv_layer_lowering_matches_direct_conv():
    gen = np.random.default_rng(2)
    w = gen.standard_normal((4, 2, 3, 3))
    dims = {"in_channels": 2, "height": 7, "width": 7, "kernel": [3, 3], "stride": 2, "padding": 1}
    layer = LayerSpec("conv2d", lower_weight(w), dims=dims)
    batch = gen.standard_normal((2, 7, 7, 3))
    out = run_layers([layer], batch.reshape(-1, 3))[0].logits
    for b in range(3):
        ref = direct_conv(batch[..., b], w, 2, 1)
        np.testing.assert_allclose(out[:, b].reshape(ref.shape), ref, atol=1e-10)


def test_model_save_load(tmp_path):
    model = load_fixture_model("mnist_conv")
    back = load_model(save_model(tmp_path, model, "copy"))
    assert [(l.kind, l.activation, l.dims) for l in back] == [(l.kind, l.activation, l.dims) for l in model]
    for a, b in zip(model, back):
        np.testing.assert_array_equal(a.weight, b.weight)
    (tmp_path / "copy.json").write_text('{"format": "other"}')
    with pytest.raises(FormatError):
        load_model(tmp_path / "copy.json")


def test_layer_validation():
    with pytest.raises(ShapeError):
        LayerSpec("linear", np.ones((3, 4)), bias=np.ones(2))
    with pytest.raises(ValueError):
        LayerSpec("pool", np.ones((3, 4)))
    with pytest.raises(ShapeError):
        run_layers([LayerSpec("linear", np.ones((3, 4)))], np.ones((5, 2)))


@pytest.mark.parametrize("name,digital", [("mnist_mlp", 0.944), ("mnist_conv", 0.955)])
def test_fixture_models_digital_accuracy(name, digital):
    rep = run_inference(load_fixture_model(name), mnist_test(), mode="digital")
    assert rep.digital_accuracy == pytest.approx(digital, abs=1e-9)


@pytest.mark.parametrize("name", ["mnist_mlp", "mnist_conv"])
def test_noiseless_optical_agrees_on_margin_safe_samples(name):
    cfg = DeviceConfig(8, 8, max_integration_len=100, adc=QuantSpec(14))
    rep = run_inference(load_fixture_model(name), mnist_test().head(300), cfg)
    assert rep.margin_safe_count > 50
    assert rep.margin_safe_agree == rep.margin_safe_count


def test_ideal_device_reproduces_digital_predictions():
    cfg = DeviceConfig.ideal(8, 8, max_integration_len=100)
    rep = run_inference(load_fixture_model("mnist_mlp"), mnist_test().head(200), cfg)
    np.testing.assert_array_equal(rep.optical_predictions, rep.digital_predictions)
    assert rep.margin_safe_count == 200


def test_attention_chain_digital():
    kr_t, v, qr = synthetic_operands(1)
    traces = run_layers(attention_model(kr_t, qr), v)
    np.testing.assert_allclose(traces[-1].output, qr @ (kr_t @ v), rtol=1e-10, atol=1e-12)
    assert traces[0].output.shape == (128, 64) and traces[1].output.shape == (64, 64)


@pytest.mark.slow
def test_optical_accuracy_non_increasing_in_noise():
    from homodyne_opu.noise import NoiseRatios

    cfg = DeviceConfig(8, 8, max_integration_len=100, adc=QuantSpec(14))
    model, data = load_fixture_model("mnist_mlp"), mnist_test().head(150)
    acc = []
    for jitter in (0.0, 0.4, 0.8, 1.2, 1.6):
        runs = [run_inference(model, data, cfg, NoiseRatios().model(jitter, seed) if jitter else None,
                              mode="optical").optical_accuracy for seed in (0, 1)]
        acc.append(np.mean(runs))
    assert all(a >= b for a, b in zip(acc, acc[1:])), acc
