"""Robust pseudo-label selection for semi-supervised learning, on a small numpy autodiff core."""

from .attacks import AttackConfig, fgsm, pgd
from .config import ExperimentConfig, load_config, parse_config
from .model import Classifier, FrozenClassifier, MlpSpec, init_classifier
from .procedure import ScarConfig, scar_finetune
from .ssl import FixMatchLite, MixMatchLite, Supervised, TrainConfig, VatLite, train_ssl

__all__ = [
    "AttackConfig", "Classifier", "ExperimentConfig", "FixMatchLite", "FrozenClassifier", "MixMatchLite",
    "MlpSpec", "ScarConfig", "Supervised", "TrainConfig", "VatLite", "fgsm", "init_classifier", "load_config",
    "parse_config", "pgd", "scar_finetune", "train_ssl",
]
__version__ = "0.1.0"
