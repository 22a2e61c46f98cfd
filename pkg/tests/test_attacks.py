import numpy as np
import pytest

from scar.attacks import AttackConfig, fgsm, parse_eps, parse_eps_list, pgd, project_linf
from scar.model import MlpSpec, freeze, init_classifier


def test_parse_eps_fractions():
    assert parse_eps("4/255") == pytest.approx(4 / 255)
    assert parse_eps("0.1") == pytest.approx(0.1)
    assert parse_eps_list("1/255, 2/255") == pytest.approx([1 / 255, 2 / 255])
    with pytest.raises(ValueError):
        parse_eps("-0.1")


def test_project_examples():
    assert project_linf(np.float32(0.75), np.float32(0.5), 0.1) == pytest.approx(0.6)
    assert project_linf(np.float32(1.2), np.float32(1.0), 0.5) == pytest.approx(1.0)
    assert project_linf(np.float32(0.55), np.float32(0.5), 0.1) == pytest.approx(0.55)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(eps=-1)
    with pytest.raises(ValueError):
        AttackConfig(eps=0.1, kind="cw")
    assert AttackConfig(eps=0.1, alpha=0.02, kind="pgd", steps=5).with_eps(0.2).alpha == pytest.approx(0.04)
    with pytest.raises(ValueError):
        AttackConfig(eps=0.1, kind="pgd", steps=5)


def _one_feature_model(sign):
    m = init_classifier(MlpSpec((2, 2)), 0)
    m.params[0].data[...] = [[sign, -sign], [0.0, 0.0]]
    m.params[1].data[...] = 0
    return freeze(m)


def test_fgsm_zero_eps_and_boundary_clip():
    model = _one_feature_model(-1.0)
    x = np.array([[0.95, 0.5]], np.float32)
    assert np.array_equal(fgsm(model, x, [0], 0.0), x)
    # label 0 logit falls as x0 rises, so the ascent direction on x0 is positive
    adv = fgsm(model, x, [0], 0.1)
    assert adv[0, 0] == 1.0 and adv[0, 1] == pytest.approx(0.5)


def test_pgd_single_step_equals_fgsm(rng):
    model = freeze(init_classifier(MlpSpec((3, 8, 3)), 2))
    x = rng.uniform(size=(40, 3)).astype(np.float32)
    y = rng.integers(0, 3, 40)
    a = fgsm(model, x, y, 0.05)
    b = pgd(model, x, y, AttackConfig(eps=0.05, alpha=0.05, steps=1, kind="pgd"))
    assert np.array_equal(a, b)


def test_pgd_iterates_stay_in_ball(rng):
    model = freeze(init_classifier(MlpSpec((3, 8, 3)), 2))
    x = rng.uniform(size=(40, 3)).astype(np.float32)
    trace = []
    pgd(model, x, rng.integers(0, 3, 40), AttackConfig(eps=0.07, alpha=0.03, steps=6, kind="pgd"), trace=trace)
    assert len(trace) == 7  # start point plus one per step
    for it in trace:
        assert np.max(np.abs(it - x)) <= 0.07 + 1e-6
        assert it.min() >= 0 and it.max() <= 1


def test_attack_dimension_mismatch():
    model = freeze(init_classifier(MlpSpec((3, 4, 2)), 0))
    with pytest.raises(ValueError):
        fgsm(model, np.zeros((2, 4), np.float32), [0, 1], 0.1)
