import numpy as np
import pytest

from scar.attacks import AttackConfig
from scar.model import MlpSpec, freeze, init_classifier
from scar.procedure import (
    ScarConfig,
    SelectionRecord,
    build_augmented_labeled,
    pseudo_label_all,
    scar_finetune,
    select_robust,
)
from scar.ssl import FixMatchLite, TrainConfig


def test_zero_model_pseudo_labels_are_zero(moons_split):
    m = init_classifier(MlpSpec((2, 4, 3)), 0)
    for p in m.params:
        p.data[...] = 0
    assert set(pseudo_label_all(freeze(m), moons_split.unlabeled).tolist()) == {0}


def test_pseudo_labels_match_predict_class(moons_split, small_model):
    frozen = freeze(small_model)
    a = pseudo_label_all(frozen, moons_split.unlabeled)
    b = pseudo_label_all(frozen, moons_split.unlabeled)
    assert np.array_equal(a, b)
    assert np.array_equal(a, frozen.predict_class(moons_split.unlabeled.features))


def test_eps_zero_selects_everything(moons_split, small_model):
    records = select_robust(freeze(small_model), moons_split.unlabeled, AttackConfig(eps=0.0))
    assert all(r.robust for r in records) and len(records) == len(moons_split.unlabeled)


def test_selection_is_order_free(moons_split, small_model):
    frozen = freeze(small_model)
    cfg = AttackConfig(eps=0.1)
    batch = select_robust(frozen, moons_split.unlabeled, cfg)
    x = moons_split.unlabeled.features
    one_by_one = [select_robust(frozen, x[i : i + 1], cfg)[0] for i in range(len(x))]
    assert [r.robust for r in batch] == [r.robust for r in one_by_one]


def test_build_augmented_extremes(moons_split):
    lab, unl = moons_split.labeled, moons_split.unlabeled
    none = build_augmented_labeled(lab, [SelectionRecord(i, 0, 1) for i in range(len(unl))], unl)
    assert len(none.dataset) == len(lab) and np.array_equal(none.dataset.features, lab.features)
    every = build_augmented_labeled(lab, [SelectionRecord(i, 1, 1) for i in range(len(unl))], unl)
    assert len(every.dataset) == len(lab) + len(unl)
    assert np.array_equal(every.dataset.features[: len(lab)], lab.features)
    assert np.array_equal(every.dataset.labels[: len(lab)], lab.labels)
    assert not every.pseudo_mask[: len(lab)].any() and every.pseudo_mask[len(lab):].all()


def _cfg(eps, epochs):
    return ScarConfig(AttackConfig(eps=eps), TrainConfig(epochs=epochs, batch_size=16, batches_per_epoch=2), FixMatchLite())


def test_zero_epochs_returns_pretrained(moons_split, small_model):
    res = scar_finetune(small_model, moons_split.labeled, moons_split.unlabeled, _cfg(0.05, 0))
    assert res.history == []
    assert all(np.array_equal(a, b) for a, b in zip(res.model.param_arrays(), small_model.param_arrays()))


def test_eps_zero_is_self_training_on_all(moons_split, small_model):
    res = scar_finetune(small_model, moons_split.labeled, moons_split.unlabeled, _cfg(0.0, 1))
    aug = res.augmented
    assert len(aug.dataset) == len(moons_split.labeled) + len(moons_split.unlabeled)
    expected = freeze(small_model).predict_class(moons_split.unlabeled.features)
    assert np.array_equal(aug.dataset.labels[aug.n_original:], expected)


def test_finetune_does_not_touch_pretrained(moons_split, small_model):
    before = [a.copy() for a in small_model.param_arrays()]
    scar_finetune(small_model, moons_split.labeled, moons_split.unlabeled, _cfg(0.05, 2))
    assert all(np.array_equal(a, b) for a, b in zip(before, small_model.param_arrays()))
