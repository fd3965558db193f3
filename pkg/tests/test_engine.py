import io

import numpy as np
import pytest

from helpers import GRADIENT_CASES, brute_conv, check_conv, rel_error
from vpx.engine import (
    LayerSpec,
    OptimizerState,
    ShapeError,
    TDFError,
    backend,
    conv_backward,
    conv_forward,
    conv_method,
    load_archive,
    load_tdf,
    maxpool_backward,
    maxpool_forward,
    mse_loss,
    read_tdf,
    save_archive,
    save_tdf,
    sgd_step,
    write_tdf,
)


@pytest.mark.parametrize("op", sorted(GRADIENT_CASES))
def test_gradients_match_finite_differences(op):
    rng = np.random.default_rng(11)
    for case in GRADIENT_CASES[op]:
        assert case(rng) < 1e-3


@pytest.mark.parametrize("route", ["direct", "fft"])
def test_both_conv_routes_pass_the_gradient_check(route):
    rng = np.random.default_rng(3)
    with conv_method(route):
        assert check_conv(rng, 2, 2, 2, 2, 6, 3) < 1e-3
        assert check_conv(rng, 3, 1, 2, 2, 5, 5, stride=2) < 1e-3


@pytest.mark.parametrize("rank,k,stride,pad", [(2, 3, 1, 1), (2, 5, 2, 2), (3, 3, 1, 0), (3, 5, 1, 2), (3, 7, 1, 3)])
def test_conv_matches_loop_reference(rank, k, stride, pad):
    rng = np.random.default_rng(rank * 10 + k)
    x = rng.standard_normal((2, 3) + (8,) * rank)
    w = rng.standard_normal((4, 3) + (k,) * rank)
    b = rng.standard_normal(4)
    spec = LayerSpec.conv(3, 4, k, rank=rank, stride=stride, padding=pad)
    want = brute_conv(x, w, b, stride, pad)
    for route in ("direct", "fft"):
        with conv_method(route):
            got = conv_forward(x, spec, w, b)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)


def test_conv_float32_routes_agree():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 10, 10, 10)).astype(np.float32)
    w = rng.standard_normal((3, 2, 5, 5, 5)).astype(np.float32)
    spec = LayerSpec.conv(2, 3, 5, rank=3)
    with conv_method("direct"):
        a = conv_forward(x, spec, w, None)
    with conv_method("fft"):
        b = conv_forward(x, spec, w, None)
    assert a.dtype == b.dtype == np.float32
    np.testing.assert_allclose(a, b, atol=1e-4)


def test_conv_shape_errors_name_the_axis():
    spec = LayerSpec.conv(3, 4, 3, rank=2)
    w = np.zeros((4, 3, 3, 3))
    with pytest.raises(ShapeError, match="axis 1"):
        conv_forward(np.zeros((1, 2, 5, 5)), spec, w, None)


def test_conv_backward_shape_error():
    spec = LayerSpec.conv(1, 1, 3, rank=2)
    x = np.zeros((1, 1, 5, 5))
    with pytest.raises(ShapeError, match="axis"):
        conv_backward(np.zeros((1, 1, 4, 5)), x, spec, np.zeros((1, 1, 3, 3)))


def test_maxpool_ties_pick_lowest_index():
    x = np.zeros((1, 1, 2, 2))
    _, arg = maxpool_forward(x, 2)
    assert arg.ravel().tolist() == [0]


def test_mse_loss_scaling():
    pred = np.ones((2, 3, 2, 2))
    target = np.zeros_like(pred)
    loss, g = mse_loss(pred, target, 3, 2)
    assert loss == pytest.approx(24 / 6)
    np.testing.assert_allclose(g, 2 / 6)
    with pytest.raises(ShapeError):
        mse_loss(pred, target[:, :2], 3, 2)


def test_sgd_step_torch_ordering():
    p = {"w": np.array([1.0, -2.0])}
    st = OptimizerState(learning_rate=0.1, momentum=0.9, weight_decay=0.5)
    sgd_step(p, {"w": np.array([0.2, 0.4])}, st)
    # v = g + wd p = [0.7, -0.6]
    np.testing.assert_allclose(p["w"], [1.0 - 0.07, -2.0 + 0.06])
    sgd_step(p, {"w": np.array([0.0, 0.0])}, st)
    v = 0.9 * np.array([0.7, -0.6]) + 0.5 * np.array([0.93, -1.94])
    np.testing.assert_allclose(st.velocity["w"], v)


def test_sgd_shape_mismatch():
    with pytest.raises(ShapeError):
        sgd_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState())


def test_tdf_round_trip_is_byte_exact(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4, 5)).astype(np.float32)
    save_tdf(tmp_path / "a.tdf", a)
    raw = (tmp_path / "a.tdf").read_bytes()
    b = load_tdf(tmp_path / "a.tdf")
    assert b.tobytes() == a.tobytes() and b.shape == a.shape
    save_tdf(tmp_path / "b.tdf", b)
    assert (tmp_path / "b.tdf").read_bytes() == raw
    assert raw[:4] == b"TDF1"


def test_tdf_rejects_bad_data(tmp_path):
    buf = io.BytesIO()
    write_tdf(buf, np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(TDFError, match="truncated"):
        read_tdf(io.BytesIO(buf.getvalue()[:-3]))
    with pytest.raises(TDFError, match="magic"):
        read_tdf(io.BytesIO(b"XXXX" + buf.getvalue()[4:]))
    with pytest.raises(TDFError):
        write_tdf(io.BytesIO(), np.zeros(2, dtype=np.int32))


def test_archive_round_trip(tmp_path):
    entries = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([1, 2], dtype=np.uint8)}
    save_archive(tmp_path / "x.tdf", entries, header={"k": [1, 2]})
    header, got = load_archive(tmp_path / "x.tdf")
    assert header == {"k": [1, 2]}
    for k in entries:
        assert got[k].tobytes() == entries[k].tobytes()


@pytest.mark.skipif(not backend.compiled_available(), reason="compiled kernels not built")
def test_backends_bit_identical():
    outs = {}
    for which in ("python", "compiled"):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 6, 6, 4)).astype(np.float32)
        with backend.using(which):
            y, arg = maxpool_forward(x, 2)
            g = maxpool_backward(np.ones_like(y), arg, x.shape)
            spec = LayerSpec.conv(3, 2, 3, rank=3)
            w = rng.standard_normal((2, 3, 3, 3, 3)).astype(np.float32)
            cache = {}
            with conv_method("direct"):
                c = conv_forward(x, spec, w, None, cache=cache)
                gx = conv_backward(np.ones_like(c), x, spec, w, cache)[0]
            outs[which] = (y.tobytes(), arg.tobytes(), g.tobytes(), c.tobytes(), gx.tobytes())
    assert outs["python"] == outs["compiled"]


def test_backend_select_rejects_unknown():
    with pytest.raises(ValueError):
        backend.select("gpu")


def test_rel_error_helper_is_symmetric():
    a, b = np.array([1.0, 2.0]), np.array([1.0, 2.2])
    assert rel_error(a, b) == rel_error(b, a)
