import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latamr.tensor import (
    ShapeError,
    Tensor,
    backward,
    build_tape,
    concat,
    dropout,
    einsum,
    flip,
    grad_check,
    grad_errors,
    load_parameters,
    log_softmax,
    logsumexp,
    lstm,
    matmul,
    no_grad,
    parameter,
    relu,
    save_parameters,
    softmax,
    stack,
    take,
    tensor,
)


def test_identity_matmul():
    m = np.array([[1.5, -2.0], [0.25, 3.0]])
    out = matmul(tensor(np.eye(2)), tensor(m))
    np.testing.assert_array_equal(out.data, m)


def test_matmul_hand_computed():
    out = tensor([[1.0, 2.0], [3.0, 4.0]]) @ tensor([[0.0], [1.0]])
    np.testing.assert_array_equal(out.data, [[2.0], [4.0]])


def test_matmul_dimension_mismatch():
    with pytest.raises(ShapeError):
        tensor(np.ones((2, 3))) @ tensor(np.ones((2, 3)))


def test_zero_extent_rejected():
    with pytest.raises(ShapeError):
        tensor(np.ones((0, 3)))


def test_logsumexp_cases():
    assert logsumexp(tensor([0.0, 0.0])).item() == pytest.approx(math.log(2), abs=1e-15)
    big = logsumexp(tensor([1000.0, 1000.0])).item()
    assert big == pytest.approx(1000 + math.log(2), abs=1e-12)
    assert logsumexp(tensor([-3.25])).item() == -3.25


def test_backward_linear():
    w = parameter(np.arange(6.0).reshape(2, 3))
    x = np.array([[1.0], [-2.0], [0.5]])
    loss = (w @ tensor(x)).sum()
    grads = backward(loss, [w])
    np.testing.assert_allclose(grads[w], np.tile(x.T, (2, 1)))


def test_backward_unreached_parameter_is_zero():
    w = parameter(np.ones((2, 2)))
    p = parameter(np.ones(3))
    grads = backward((w * w).sum(), [w, p])
    np.testing.assert_array_equal(grads[p], np.zeros(3))
    assert grads[w].shape == w.shape


def test_logsumexp_gradient_is_softmax():
    v = parameter([0.3, -1.2, 2.0, 0.0])
    grads = backward(logsumexp(v), [v])
    e = np.exp(v.data - v.data.max())
    np.testing.assert_allclose(grads[v], e / e.sum(), atol=1e-15)


def test_tape_is_topological():
    a = parameter([1.0, 2.0])
    b = (a * a).exp()
    loss = (b + a).sum()
    tape = build_tape(loss)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    for n in tape.nodes:
        for p in n._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(n)]
    assert tape.nodes[-1] is loss


def test_grad_check_quadratic():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    x = parameter(rng.normal(size=(3, 1)))
    f = lambda: (x.T @ tensor(a) @ x).sum() + (x * x).sum()
    assert grad_check(f, [x]) < 1e-8


def test_grad_check_constant():
    x = parameter([1.0, 2.0])
    assert grad_check(lambda: tensor(3.0) + 0.0 * x.sum(), [x]) == 0.0


def test_grad_check_rejects_bad_eps_and_nonfinite():
    x = parameter([1.0])
    with pytest.raises(ValueError):
        grad_check(lambda: x.sum(), [x], eps=0.0)
    y = parameter([1e-6])
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
        grad_check(lambda: y.log().sum(), [y], eps=1e-5)


def test_grad_errors_scaled_never_exceeds_relative():
    rng = np.random.default_rng(1)
    x = parameter(rng.normal(size=4))
    r = grad_errors(lambda: (x.exp() * 1e3).sum() + (x * 1e-9).sum(), [x])
    assert r["scaled"] <= r["relative"]
    assert r["coords"] == 4


# every differentiable operation, random small inputs
_rng = np.random.default_rng(7)
_A = _rng.normal(size=(3, 4))
_B = _rng.normal(size=(4, 2))
_P = _rng.uniform(0.5, 2.0, size=(3, 4))
_W = _rng.normal(scale=0.5, size=(3 + 2, 4 * 2))
_BIAS = _rng.normal(scale=0.1, size=4 * 2)
_MIX = tensor(_rng.normal(size=(3, 4)))

OPS = {
    "add": (lambda a: (a + a * 2.0) * _MIX, [_A]),
    "sub": (lambda a: (3.0 - a) * _MIX, [_A]),
    "div": (lambda a: (_MIX / a), [_P]),
    "pow": (lambda a: a**3 * _MIX, [_P]),
    "exp": (lambda a: a.exp() * _MIX, [_A]),
    "log": (lambda a: a.log() * _MIX, [_P]),
    "tanh": (lambda a: a.tanh() * _MIX, [_A]),
    "sigmoid": (lambda a: a.sigmoid() * _MIX, [_A]),
    "matmul": (lambda a, b: a @ b, [_A, _B]),
    "sum_axis": (lambda a: a.sum(axis=0) * _MIX[0], [_A]),
    "mean": (lambda a: a.mean(axis=1, keepdims=True) * _MIX, [_A]),
    "reshape": (lambda a: a.reshape(4, 3) @ _MIX, [_A]),
    "transpose": (lambda a: a.T @ _MIX, [_A]),
    "getitem": (lambda a: a[1:, ::2] * 1.5, [_A]),
    "logsumexp": (lambda a: logsumexp(a, axis=1), [_A]),
    "log_softmax": (lambda a: log_softmax(a, axis=0) * _MIX, [_A]),
    "softmax": (lambda a: softmax(a, axis=1) * _MIX, [_A]),
    "concat": (lambda a, b: concat([a, b.T * 2.0], axis=0), [_A, _B]),
    "stack": (lambda a: stack([a, a * a], axis=0).sum(axis=0) * _MIX, [_A]),
    "take": (lambda a: take(a, [2, 0, 2]) * 1.3, [_A]),
    "flip": (lambda a: flip(a, 0) * _MIX, [_A]),
    "relu": (lambda a: relu(a + 0.05) * _MIX, [_A]),
    "einsum": (lambda a, b: einsum("ij,jk->ik", a, b), [_A, _B]),
    "lstm": (lambda x, w, b: lstm(x, w, b), [_rng.normal(size=(2, 3, 3)), _W, _BIAS]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_operation_gradients(name):
    fn, inputs = OPS[name]
    params = [parameter(np.array(x)) for x in inputs]
    weights = None

    def f():
        nonlocal weights
        out = fn(*params)
        if weights is None:
            weights = tensor(np.random.default_rng(3).normal(size=out.shape))
        return (out * weights).sum()

    assert grad_check(f, params) < 1e-6


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    s = softmax(tensor(x), axis=1).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(s))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-20, 20)))
def test_forward_bitwise_deterministic(x):
    run = lambda: (logsumexp(tensor(x)) + (tensor(x).tanh() * tensor(x)).sum()).item()
    assert run() == run()


def test_no_grad_records_nothing():
    x = parameter([1.0, 2.0])
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


def test_dropout_seeded_and_scaled():
    x = tensor(np.ones((50, 40)))
    a = dropout(x, 0.2, np.random.default_rng(5)).data
    b = dropout(x, 0.2, np.random.default_rng(5)).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.25}
    assert dropout(x, 0.2, None) is x


def test_concat_shape_mismatch():
    with pytest.raises(ShapeError):
        concat([tensor(np.ones((3, 4))), tensor(np.ones((2, 3)))], axis=0)


def test_checkpoint_round_trip(tmp_path):
    params = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([0.5, -1.0]), "s": np.array(3.0)}
    path = tmp_path / "p.bin"
    save_parameters(path, params)
    back = load_parameters(path)
    assert list(back) == sorted(params)
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])
        assert back[k].shape == params[k].shape


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_parameters(path)


def test_tensor_accepts_tensor_operands_on_right():
    out = np.float64(2.0) * tensor([1.0, 2.0])
    assert isinstance(out, Tensor)
    np.testing.assert_array_equal(out.data, [2.0, 4.0])
