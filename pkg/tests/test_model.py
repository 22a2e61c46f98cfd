import numpy as np
import pytest

from scar.diffcore import Tensor
from scar.model import Classifier, MlpSpec, freeze, init_classifier, predict_class, predict_proba, sgd_step


def zero_model(sizes=(2, 4, 3)):
    m = init_classifier(MlpSpec(sizes), seed=0)
    for p in m.params:
        p.data[...] = 0
    return m


def test_spec_validation_and_counts():
    assert MlpSpec((2, 16, 2)).n_params() == 2 * 16 + 16 + 16 * 2 + 2
    for bad in [(2,), (2, 0, 2), (2, 4, 1)]:
        with pytest.raises(ValueError):
            MlpSpec(bad)


def test_init_is_seeded():
    spec = MlpSpec((2, 8, 2))
    a, b, c = init_classifier(spec, 5), init_classifier(spec, 5), init_classifier(spec, 6)
    assert all(np.array_equal(x, y) for x, y in zip(a.param_arrays(), b.param_arrays()))
    assert not np.array_equal(a.param_arrays()[0], c.param_arrays()[0])


def test_predict_proba_rows_and_uniform(small_model, rng):
    x = rng.uniform(size=(20, 2)).astype(np.float32)
    np.testing.assert_allclose(predict_proba(small_model, x).sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(predict_proba(zero_model(), x), 1 / 3, atol=1e-7)
    with pytest.raises(ValueError):
        predict_proba(small_model, np.zeros((3, 5), dtype=np.float32))


def test_predict_class_tie_and_argmax():
    m = zero_model((2, 2))
    assert predict_class(m, np.zeros((2, 2), np.float32)).tolist() == [0, 0]
    m.params[1].data[...] = [0.1, 0.9]
    assert predict_class(m, np.zeros((1, 2), np.float32)).tolist() == [1]


def test_sgd_step_arithmetic():
    m = zero_model((1, 2))
    m.params[0].data[...] = 1.0
    grads = [np.full_like(p.data, 2.0) for p in m.params]
    sgd_step(m, grads, 0.1)
    np.testing.assert_allclose(m.params[0].data, 0.8)
    before = [a.copy() for a in m.param_arrays()]
    sgd_step(m, grads, 0.0)
    sgd_step(m, [np.zeros_like(g) for g in grads], 0.5)
    assert all(np.array_equal(a, b) for a, b in zip(before, m.param_arrays()))
    with pytest.raises(ValueError):
        sgd_step(m, grads[:1], 0.1)


def test_freeze_is_detached(small_model, rng):
    x = rng.uniform(size=(16, 2)).astype(np.float32)
    frozen = freeze(small_model)
    assert np.array_equal(frozen.predict_proba(x), small_model.predict_proba(x))
    again = freeze(small_model)
    assert all(np.array_equal(a, b) for a, b in zip(frozen.param_arrays(), again.param_arrays()))
    before = frozen.predict_proba(x)
    for _ in range(10):
        grads = [np.ones_like(p.data) for p in small_model.params]
        sgd_step(small_model, grads, 0.1)
    assert np.array_equal(frozen.predict_proba(x), before)
    with pytest.raises(ValueError):
        frozen.param_arrays()[0][0, 0] = 1.0


def test_thaw_round_trip(small_model):
    thawed = freeze(small_model).thaw()
    assert isinstance(thawed, Classifier)
    assert all(np.array_equal(a, b) for a, b in zip(thawed.param_arrays(), small_model.param_arrays()))
    thawed.params[0].data[0, 0] += 1
    assert thawed.params[0].data[0, 0] != small_model.params[0].data[0, 0]


def test_forward_without_param_tracking_leaves_grads_alone(small_model):
    x = Tensor(np.full((3, 2), 0.5, np.float32), requires_grad=True)
    out = small_model.forward(x, track_params=False)
    out.sum().backward()
    assert x.grad is not None
    assert all(p.grad is None or not np.any(p.grad) for p in small_model.params)
