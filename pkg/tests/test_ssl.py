import numpy as np
import pytest

from scar.data import AugmentationSpec, Dataset
from scar.model import MlpSpec, init_classifier
from scar.ssl import (
    FixMatchLite,
    MixMatchLite,
    Supervised,
    TrainConfig,
    VatLite,
    loss_fixmatch_lite,
    loss_mixmatch_lite,
    loss_supervised,
    loss_total,
    loss_vat,
    mixup,
    sharpen,
    train_ssl,
    train_supervised,
)


def constant_model(probs):
    """Model whose output ignores the input: zero weights, log-prob biases."""
    m = init_classifier(MlpSpec((2, len(probs))), 0)
    m.params[0].data[...] = 0
    m.params[1].data[...] = np.log(np.asarray(probs, np.float32))
    return m


def test_loss_total_weights():
    assert loss_total(2.0, 3.0, 0.0) == 2.0
    assert loss_total(2.0, 3.0, 1.0) == 5.0
    assert loss_total(2.0, 4.0, 0.75) == 5.0
    with pytest.raises(ValueError):
        loss_total(1.0, 1.0, -0.1)


def test_supervised_loss_examples(small_model, rng):
    x = rng.uniform(size=(6, 2)).astype(np.float32)
    y = rng.integers(0, 2, 6)
    batch = loss_supervised(small_model, x, y).item()
    single = [loss_supervised(small_model, x[i : i + 1], y[i : i + 1]).item() for i in range(6)]
    assert batch == pytest.approx(np.mean(single), rel=1e-5)
    sure = constant_model([1 - 1e-7, 1e-7])
    assert loss_supervised(sure, x, np.zeros(6, int)).item() == pytest.approx(0.0, abs=1e-5)
    with pytest.raises(ValueError):
        loss_supervised(small_model, np.zeros((0, 2), np.float32), [])


def test_vat_loss_constant_model_and_nonnegative(small_model, rng):
    x = rng.uniform(size=(12, 2)).astype(np.float32)
    assert loss_vat(constant_model([0.3, 0.7]), x, 0.05, 1e-6, 1, rng).item() == pytest.approx(0.0, abs=1e-7)
    for _ in range(5):
        assert loss_vat(small_model, x, 0.05, 1e-6, 2, rng).item() >= 0


def test_vat_gradient_reaches_parameters(small_model, rng):
    x = rng.uniform(size=(12, 2)).astype(np.float32)
    small_model.zero_grad()
    loss_vat(small_model, x, 0.2, 1e-6, 1, rng).backward()
    assert any(np.any(g) for g in small_model.gradients())


def test_sharpen_examples():
    p = np.array([0.2, 0.3, 0.5], np.float32)
    np.testing.assert_allclose(sharpen(p, 1.0), p, rtol=1e-6)
    np.testing.assert_allclose(sharpen(np.full(4, 0.25), 0.5), 0.25)
    sharp = sharpen(p, 0.5)
    assert sharp.sum() == pytest.approx(1.0) and sharp[2] > p[2]


def test_mixup_examples(rng):
    xa, xb = np.array([1.0, 0.0], np.float32), np.array([0.0, 1.0], np.float32)
    pa, pb = np.array([1.0, 0.0], np.float32), np.array([0.2, 0.8], np.float32)
    x, p = mixup((xa, pa), (xb, pb), 0.75, lam=1.0)
    assert np.array_equal(x, xa) and np.array_equal(p, pa)
    x, p = mixup((xa, pa), (xb, pb), 0.75, lam=0.7)
    np.testing.assert_array_equal(x, np.float32(0.7) * xa + np.float32(0.3) * xb)
    _, p = mixup((np.stack([xa] * 5), np.stack([pa] * 5)), (np.stack([xb] * 5), np.stack([pb] * 5)), 0.75, rng)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_mixmatch_lambda_zero_is_labeled_ce(small_model, rng):
    x_l = rng.uniform(size=(4, 2)).astype(np.float32)
    y_l = np.array([0, 1, 0, 1])
    x_u = rng.uniform(size=(8, 2)).astype(np.float32)
    rep = loss_mixmatch_lite(small_model, x_l, y_l, x_u, MixMatchLite(lam=0.0), rng)
    assert rep.total == pytest.approx(rep.labeled_loss, abs=1e-7)
    assert rep.unlabeled_loss >= 0
    with pytest.raises(ValueError):
        MixMatchLite(K=0)


def test_fixmatch_threshold_examples(rng):
    x_l = np.full((2, 2), 0.5, np.float32)
    x_u = rng.uniform(size=(5, 2)).astype(np.float32)
    aug = AugmentationSpec()
    sure = loss_fixmatch_lite(constant_model([0.97, 0.03]), x_l, [0, 0], x_u, 0.95, aug, rng)
    assert sure.mask_rate == 1.0
    assert sure.unlabeled_loss == pytest.approx(-np.log(0.97), rel=1e-4)
    unsure = loss_fixmatch_lite(constant_model([0.90, 0.10]), x_l, [0, 0], x_u, 0.95, aug, rng)
    assert unsure.mask_rate == 0.0 and unsure.unlabeled_loss == 0.0


def test_fixmatch_tau_near_one_masks_everything(small_model, rng):
    x_u = rng.uniform(size=(20, 2)).astype(np.float32)
    rep = loss_fixmatch_lite(small_model, x_u[:2], [0, 1], x_u, 0.999999, AugmentationSpec(), rng)
    assert rep.unlabeled_loss == 0.0


def _tiny(epochs=3, seed=0):
    return TrainConfig(epochs=epochs, batch_size=16, batches_per_epoch=2, seed=seed)


def test_train_zero_epochs_is_identity(moons_split, small_model):
    before = [a.copy() for a in small_model.param_arrays()]
    model, hist = train_ssl(small_model, moons_split.labeled, moons_split.unlabeled, FixMatchLite(), _tiny(0))
    assert hist == [] and all(np.array_equal(a, b) for a, b in zip(before, model.param_arrays()))


@pytest.mark.parametrize("method", [VatLite(), MixMatchLite(), FixMatchLite()])
def test_train_is_deterministic(moons_split, method):
    runs = []
    for _ in range(2):
        m = init_classifier(MlpSpec((2, 8, 2)), 4)
        m, hist = train_ssl(m, moons_split.labeled, moons_split.unlabeled, method, _tiny())
        runs.append((m.param_arrays(), [h.total for h in hist]))
    assert runs[0][1] == runs[1][1]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][0], runs[1][0]))


@pytest.mark.parametrize("method", [Supervised(), VatLite(lam=0.0), FixMatchLite(lam=0.0)])
def test_lambda_zero_matches_supervised_trainer(moons_split, method):
    cfg = _tiny(epochs=5)
    a, ha = train_ssl(init_classifier(MlpSpec((2, 8, 2)), 4), moons_split.labeled, moons_split.unlabeled, method, cfg)
    b, hb = train_supervised(init_classifier(MlpSpec((2, 8, 2)), 4), moons_split.labeled, cfg)
    assert np.max(np.abs(np.array([h.total for h in ha]) - [h.total for h in hb])) <= 1e-6
    assert all(np.array_equal(x, y) for x, y in zip(a.param_arrays(), b.param_arrays()))


def test_train_rejects_empty_labeled(moons_split, small_model):
    empty = Dataset(np.zeros((0, 2), np.float32), np.zeros(0, int), 2)
    with pytest.raises(ValueError):
        train_ssl(small_model, empty, moons_split.unlabeled, FixMatchLite(), _tiny())

