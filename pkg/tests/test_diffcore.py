import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scar import diffcore as dc
from scar.diffcore import Tensor


def test_square_sum_gradient():
    x = Tensor([3.0], requires_grad=True)
    (x * x).sum().backward()
    assert x.grad[0] == pytest.approx(6.0)


def test_constant_loss_has_zero_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * 0.0).sum() + 5.0
    loss.backward()
    assert np.all(x.grad == 0)


def test_backward_on_vector_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(dc.ShapeError):
        (x * x).backward()


def test_broadcast_gradient_is_reduced():
    w = Tensor(np.ones((1, 3)), requires_grad=True)
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    (x * w).sum().backward()
    np.testing.assert_allclose(w.grad, [[3.0, 5.0, 7.0]])


def test_shared_node_accumulates():
    x = Tensor([2.0], requires_grad=True)
    y = x * x
    (y + y).sum().backward()
    assert x.grad[0] == pytest.approx(8.0)


def test_softmax_examples():
    np.testing.assert_allclose(dc.softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    big = dc.softmax(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] < 1e-30


def test_softmax_rejects_non_2d():
    with pytest.raises(dc.ShapeError):
        dc.softmax(Tensor([1.0, 2.0]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (4, 3), elements=st.floats(-50, 50, width=32)))
def test_softmax_rows_sum_to_one(z):
    p = dc.softmax(Tensor(z)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_cross_entropy_one_hot_is_zero():
    p = Tensor([[1.0, 0.0], [0.0, 1.0]])
    assert dc.cross_entropy(p, [0, 1]).item() == pytest.approx(0.0, abs=1e-6)


def test_cross_entropy_value():
    p = Tensor([[0.5, 0.5], [1.0, 0.0]])
    assert dc.cross_entropy(p, [0, 0]).item() == pytest.approx(np.log(2) / 2, rel=1e-5)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        dc.cross_entropy(Tensor([[0.5, 0.5]]), [2])


def test_cross_entropy_clamps_zero_probability():
    val = dc.cross_entropy(Tensor([[0.0, 1.0]]), [0]).item()
    assert np.isfinite(val) and val == pytest.approx(-np.log(1e-12), rel=1e-4)


def test_fused_gradient_survives_saturation():
    z = Tensor([[40.0, 0.0]], requires_grad=True)
    dc.cross_entropy(dc.softmax(z), [1]).backward()
    np.testing.assert_allclose(z.grad, [[1.0, -1.0]], atol=1e-6)


def test_kl_self_is_zero_and_shape_checked():
    p = Tensor([[0.2, 0.8], [0.6, 0.4]])
    assert dc.kl_divergence(p, p).item() == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(ValueError):
        dc.kl_divergence(p, Tensor([[0.5, 0.5]]))


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float32, (3, 4), elements=st.floats(-5, 5, width=32)),
    arrays(np.float32, (3, 4), elements=st.floats(-5, 5, width=32)),
)
def test_kl_nonnegative(a, b):
    p, q = dc.softmax(Tensor(a)), dc.softmax(Tensor(b))
    assert dc.kl_divergence(p, q).item() >= -1e-6


def test_grad_check_detects_wrong_gradient():
    point = np.array([0.3, -1.2, 2.0], dtype=np.float32)

    def f(x):
        return (x * x).sum()

    assert dc.grad_check(f, point).passed
    bad = dc.grad_check(f, point, analytic=4 * point)
    assert not bad.passed and bad.worst_index is not None
    assert bad.max_error == pytest.approx(0.5, abs=1e-3)


def test_grad_check_zero_function():
    rep = dc.grad_check(lambda x: (x * 0.0).sum(), np.ones(3, dtype=np.float32))
    assert rep.passed and rep.max_error == 0.0


def test_grad_check_non_finite():
    with pytest.raises(dc.NonFiniteError):
        dc.grad_check(lambda x: (x * np.float32(np.inf)).sum(), np.ones(2, dtype=np.float32))


@pytest.mark.parametrize(
    "name,fn",
    [
        ("add", lambda x: dc.add(x, x * 2.0).sum()),
        ("sub", lambda x: dc.sub(x * 3.0, x * x).sum()),
        ("mul", lambda x: dc.mul(x, x + 1.0).sum()),
        ("relu", lambda x: (dc.relu(x) * x).sum()),
        ("log", lambda x: dc.log(x * x + 1.0).sum()),
        ("mean", lambda x: dc.mean(x * x)),
        ("mse", lambda x: dc.mse(x, Tensor(np.full(x.shape, 0.5, np.float32)))),
    ],
)
def test_primitive_grad_checks(name, fn, rng):
    point = rng.uniform(0.2, 1.5, size=(3, 2)).astype(np.float32) * rng.choice([-1, 1], size=(3, 2))
    rep = dc.grad_check(fn, point)
    assert rep.passed, f"{name}: {rep.max_error}"


def test_matmul_and_softmax_chain_grad_check(rng):
    w = rng.normal(size=(3, 4)).astype(np.float32)
    x = rng.normal(size=(5, 3)).astype(np.float32)
    y = rng.integers(0, 4, size=5)
    rep = dc.grad_check(lambda t: dc.cross_entropy(dc.softmax(dc.matmul(Tensor(x), t)), y), w)
    assert rep.passed, rep.max_error
    rep = dc.grad_check(lambda t: dc.kl_divergence(dc.softmax(Tensor(x @ w)), dc.softmax(dc.matmul(Tensor(x), t))), w)
    assert rep.passed, rep.max_error
