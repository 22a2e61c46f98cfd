"""Adversarially robust pseudo-labeling and fine-tuning.

A pre-trained model is frozen.  Every unlabeled point gets the frozen
model's argmax as pseudo-label, is attacked towards leaving that class,
and is kept only if the frozen model still predicts the same class on the
attacked point.  Kept points join the labeled set and training resumes from
the frozen parameters with the same semi-supervised objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, attack
from .data import Dataset, UnlabeledSet
from .model import Classifier, FrozenClassifier, freeze
from .ssl import EpochCallback, EpochRecord, SslMethod, TrainConfig, train_ssl


@dataclass(frozen=True)
class SelectionRecord:
    index: int
    pseudo_label: int
    adv_label: int

    @property
    def robust(self) -> bool:
        return self.pseudo_label == self.adv_label


@dataclass(frozen=True)
class ScarConfig:
    attack: AttackConfig
    train: TrainConfig
    method: SslMethod
    reselect_each_epoch: bool = False


@dataclass(frozen=True, eq=False)
class AugmentedLabeled:
    """Labeled set plus robust pseudo-labeled rows appended after it.

    ``source`` is -1 for original rows and the unlabeled index otherwise.
    """

    dataset: Dataset
    source: np.ndarray
    n_original: int

    @property
    def pseudo_mask(self) -> np.ndarray:
        return self.source >= 0


@dataclass
class ScarResult:
    model: Classifier
    history: list[EpochRecord]
    records: list[SelectionRecord]
    augmented: AugmentedLabeled
    frozen: FrozenClassifier = field(repr=False)


def _features(unlabeled) -> np.ndarray:
    return unlabeled.features if isinstance(unlabeled, (Dataset, UnlabeledSet)) else np.asarray(unlabeled)


def pseudo_label_all(frozen, unlabeled) -> np.ndarray:
    return frozen.predict_class(_features(unlabeled))


def adversarial_labels(frozen, unlabeled, config: AttackConfig, pseudo: np.ndarray | None = None):
    x = _features(unlabeled)
    if pseudo is None:
        pseudo = frozen.predict_class(x)
    if len(x) == 0:
        return pseudo, pseudo.copy()
    x_adv = attack(frozen, x, pseudo, config)
    return pseudo, frozen.predict_class(x_adv)


def select_robust(frozen, unlabeled, config: AttackConfig) -> list[SelectionRecord]:
    """One record per unlabeled row: pseudo-label, label after attack, robustness."""
    pseudo, adv = adversarial_labels(frozen, unlabeled, config)
    return [SelectionRecord(j, int(p), int(a)) for j, (p, a) in enumerate(zip(pseudo, adv))]


def build_augmented_labeled(labeled: Dataset, records: list[SelectionRecord], unlabeled) -> AugmentedLabeled:
    """Append every robust unlabeled point with its pseudo-label."""
    x_u = _features(unlabeled)
    keep = [r for r in records if r.robust]
    idx = np.array([r.index for r in keep], dtype=np.int64)
    labels = np.array([r.pseudo_label for r in keep], dtype=np.int64)
    feats = np.concatenate([labeled.features, x_u[idx].reshape(len(idx), labeled.n_features)])
    merged = Dataset(feats, np.concatenate([labeled.labels, labels]), labeled.n_classes)
    source = np.concatenate([np.full(len(labeled), -1, dtype=np.int64), idx])
    return AugmentedLabeled(merged, source, len(labeled))


def scar_finetune(
    pretrained: Classifier,
    labeled: Dataset,
    unlabeled,
    cfg: ScarConfig,
    on_epoch: EpochCallback | None = None,
) -> ScarResult:
    """Freeze, select robust pseudo-labels once, then train on the enlarged set.

    Selection only depends on the frozen snapshot and the deterministic
    attack, so ``reselect_each_epoch`` would reproduce the same set every
    epoch; it is accepted and the single selection reused.
    """
    frozen = freeze(pretrained)
    records = select_robust(frozen, unlabeled, cfg.attack)
    augmented = build_augmented_labeled(labeled, records, unlabeled)
    model = frozen.thaw()
    model.momentum = pretrained.momentum
    model, history = train_ssl(model, augmented.dataset, unlabeled, cfg.method, cfg.train, on_epoch)
    return ScarResult(model, history, records, augmented, frozen)
