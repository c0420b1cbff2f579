import numpy as np
import pytest

import slicessl.tensorcore as tc
from slicessl.errors import NumericError, ShapeError, TruncationError
from slicessl.tensorcore import checkpoint

from gradcheck import run_all
from oracles import fd_gradient, rel_err


def test_matmul_identity():
    a = np.arange(9, dtype=np.float32).reshape(3, 3)
    out = tc.matmul(tc.tensor(np.eye(3, dtype=np.float32)), tc.tensor(a))
    np.testing.assert_array_equal(out.data, a)


def test_softmax_uniform():
    out = tc.softmax(tc.tensor([0.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [0.25] * 4, atol=1e-7)


def test_softmax_rows_sum_to_one(rng):
    x = tc.tensor(rng.normal(size=(6, 9)).astype(np.float32) * 4)
    s = tc.softmax(x, axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-6)


def test_log_softmax_matches_log_of_softmax(rng):
    x = tc.tensor(rng.normal(size=(5, 7)).astype(np.float32))
    ls = tc.log_softmax(x, axis=-1).data
    np.testing.assert_allclose(ls, np.log(tc.softmax(x, axis=-1).data), atol=1e-5)


def test_backward_sum_gives_ones():
    x = tc.tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    tc.backward(tc.sum_(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3), np.float32))


def test_backward_mean_of_square():
    # d/dx_i mean(x^2) = 2 x_i / n -> [1, 2] for x = [1, 2]
    x = tc.tensor([1.0, 2.0], requires_grad=True)
    tc.backward(tc.mean(tc.mul(x, x)))
    np.testing.assert_allclose(x.grad, [1.0, 2.0], atol=1e-6)


def test_backward_rejects_nonscalar():
    x = tc.tensor([1.0, 2.0], requires_grad=True)
    y = tc.mul(x, x)
    with pytest.raises(ShapeError):
        tc.backward(y)


def test_backward_composite_vs_fd(rng):
    w = rng.normal(size=(5, 4)).astype(np.float32)
    r = rng.normal(size=(3, 4)).astype(np.float32)
    x0 = rng.normal(size=(3, 5)).astype(np.float32)

    def f_tensor(xt):
        p = tc.softmax(tc.matmul(xt, tc.tensor(w)), axis=-1)
        return tc.mean(tc.mul(tc.log(p), tc.tensor(r)))

    xt = tc.tensor(x0.copy(), requires_grad=True)
    tc.backward(f_tensor(xt))

    def f(x):
        with tc.no_grad():
            return f_tensor(tc.tensor(x)).item()

    fd = fd_gradient(f, x0.copy(), 1e-3)
    assert rel_err(xt.grad, fd) < 1e-3


def test_layer_norm_gradcheck_fixture(rng):
    x0 = rng.normal(size=(4, 8)).astype(np.float32)
    gamma = tc.tensor(np.ones(8, np.float32))
    beta = tc.tensor(np.zeros(8, np.float32))
    proj = rng.normal(size=(4, 8)).astype(np.float32)

    xt = tc.tensor(x0.copy(), requires_grad=True)
    tc.backward(tc.sum_(tc.mul(tc.layer_norm(xt, gamma, beta), tc.tensor(proj))))

    def f(x):
        with tc.no_grad():
            y = tc.layer_norm(tc.tensor(x), gamma, beta)
            return tc.sum_(tc.mul(y, tc.tensor(proj))).item()

    fd = fd_gradient(f, x0.copy(), 1e-3)
    assert rel_err(xt.grad, fd) < 1e-3


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_gradcheck_all_primitives(dtype):
    failures = run_all(dtype, seeds=range(5))
    assert not failures, failures


def test_shape_error_names_both_shapes():
    a = tc.tensor(np.zeros((2, 3), np.float32))
    b = tc.tensor(np.zeros((4, 5), np.float32))
    with pytest.raises(ShapeError) as exc:
        tc.matmul(a, b)
    assert "(2, 3)" in str(exc.value) and "(4, 5)" in str(exc.value)
    with pytest.raises(ShapeError):
        tc.add(a, tc.tensor(np.zeros((3, 3), np.float32)))


def test_strict_mode_rejects_nonfinite():
    with pytest.raises(NumericError):
        tc.tensor([np.nan, 1.0])
    with pytest.raises(NumericError):
        tc.exp(tc.tensor([1e30], dtype=np.float32))
    with tc.strict_mode(False):
        out = tc.exp(tc.tensor([1e30], dtype=np.float32))
        assert np.isinf(out.data[0])


def test_forward_deterministic(rng):
    x = rng.normal(size=(4, 4)).astype(np.float32)
    w = rng.normal(size=(4, 4)).astype(np.float32)

    def run():
        with tc.no_grad():
            return tc.gelu(tc.softmax(tc.matmul(tc.tensor(x), tc.tensor(w)))).data

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_tape_cleared_after_backward():
    x = tc.tensor([1.0, 2.0], requires_grad=True)
    tc.backward(tc.sum_(tc.mul(x, x)))
    assert tc.tape_size() == 0


def test_no_grad_records_nothing():
    x = tc.tensor([1.0, 2.0], requires_grad=True)
    with tc.no_grad():
        y = tc.mul(x, x)
    assert tc.tape_size() == 0 and not y.requires_grad


# ------------------------------------------------------------------ optimizer

def test_adamw_zero_grad_no_motion():
    p = np.array([1.0, -2.0], np.float32)
    m = np.zeros(2, np.float32)
    v = np.zeros(2, np.float32)
    tc.adamw_update(p, np.zeros(2, np.float32), m, v, t=1, lr=0.1, weight_decay=0.0)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adamw_single_step_hand_value():
    # p=1, g=1: mhat=vhat=1 after bias correction -> p' = 1 - lr/(1+eps)
    p = np.array([1.0], np.float64)
    m = np.zeros(1)
    v = np.zeros(1)
    tc.adamw_update(p, np.array([1.0]), m, v, t=1, lr=0.1, betas=(0.9, 0.999),
                    eps=1e-8, weight_decay=0.0)
    assert abs(p[0] - 0.9) < 1e-7


def test_adamw_decoupled_decay_term():
    p = np.array([2.0], np.float64)
    m = np.zeros(1)
    v = np.zeros(1)
    tc.adamw_update(p, np.array([0.0]), m, v, t=1, lr=0.1, weight_decay=0.04)
    # zero gradient, so the whole update is the decay term -lr*wd*p
    assert abs(p[0] - (2.0 - 0.1 * 0.04 * 2.0)) < 1e-12


def test_clip_by_global_norm(rng):
    grads = [rng.normal(size=(3, 3)).astype(np.float32),
             rng.normal(size=(5,)).astype(np.float32)]
    norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads))
    clipped, reported = tc.clip_by_global_norm(grads, max_norm=norm / 2)
    new_norm = np.sqrt(sum(float((g ** 2).sum()) for g in clipped))
    assert abs(reported - norm) < 1e-4
    assert new_norm <= norm / 2 + 1e-5

    same, _ = tc.clip_by_global_norm(grads, max_norm=norm * 2)
    assert all(a is b for a, b in zip(same, grads))


# ----------------------------------------------------------------- checkpoint

def test_checkpoint_roundtrip(tmp_path, rng):
    params = {
        "blocks.0.w": tc.tensor(rng.normal(size=(4, 5)).astype(np.float32)),
        "head.b": tc.tensor(rng.normal(size=(7,)).astype(np.float64)),
    }
    path = tmp_path / "ckpt.bin"
    checkpoint.save(path, params, meta={"seed": 3})
    loaded, meta = checkpoint.load(path)
    assert meta == {"seed": 3}
    for k, p in params.items():
        assert loaded[k].dtype == p.data.dtype
        np.testing.assert_array_equal(loaded[k], p.data)


def test_checkpoint_header_prefix(rng):
    blob = checkpoint.dumps({"w": tc.tensor(np.zeros(3, np.float32))})
    import struct
    (hlen,) = struct.unpack("<Q", blob[:8])
    header = blob[8:8 + hlen].decode("utf-8")
    assert '"tensors"' in header and '"w"' in header


def test_checkpoint_truncation_error():
    blob = checkpoint.dumps({"w": tc.tensor(np.ones(8, np.float32))})
    with pytest.raises(TruncationError):
        checkpoint.loads(blob[:-4])
    with pytest.raises(TruncationError):
        checkpoint.loads(blob[:4])
