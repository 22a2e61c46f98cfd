"""Experiment configuration: sectioned ``key = value`` files.

Every key has a type and a default.  Unknown sections or keys, and values
that fail to parse, raise :class:`ConfigError` naming ``section.key``.
``resolve`` fills in defaults and applies the seed override; the resolved
config is written next to every run so the run can be repeated exactly.

Example::

    [dataset]
    source = two_moons
    n = 2000
    n_labeled = 10

    [method]
    name = fixmatch
    lambda = 1.0

    [attack]
    eps = 4/255
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .attacks import AttackConfig, parse_eps, parse_eps_list
from .data import AugmentationSpec
from .ssl import METHODS, FixMatchLite, MixMatchLite, Supervised, TrainConfig, VatLite

SEED_ENV = "SCAR_SEED"


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _opt_float(text: str) -> float | None:
    return None if text.strip() in ("", "none") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip() in ("", "none") else int(text)


def _str(text: str) -> str:
    return text.strip()


def _eps_list_text(text: str) -> str:
    parse_eps_list(text)
    return ",".join(p.strip() for p in text.split(",") if p.strip())


def _eps_text(text: str) -> str:
    parse_eps(text)
    return text.strip()


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "dataset": {
        "source": (_str, "two_moons"),
        "n": (int, 2000),
        "n_test": (int, 1000),
        "noise": (float, 0.1),
        "n_labeled": (int, 10),
        "n_classes": (int, 3),
        "n_features": (int, 2),
        "cluster_std": (float, 1.0),
        "path": (_str, ""),
        "seed": (_opt_int, None),
    },
    "model": {
        "hidden": (_ints, (64, 64)),
        "seed": (int, 0),
    },
    "method": {
        "name": (_str, "fixmatch"),
        "lambda": (_opt_float, None),
        "eps_vat": (float, 0.05),
        "xi": (float, 1e-6),
        "power_iters": (int, 1),
        "k": (int, 2),
        "t_sharp": (float, 0.5),
        "alpha_mix": (float, 0.2),
        "tau": (float, 0.95),
        "weak_noise": (float, 0.02),
        "strong_noise": (float, 0.10),
        "strong_dropout": (float, 0.1),
    },
    "attack": {
        "kind": (_str, "fgsm"),
        "eps": (_eps_text, "0.02"),
        "alpha": (_opt_float, None),
        "steps": (int, 1),
        "eps_list": (_eps_list_text, "0,0.01,0.02,0.03,0.04,0.06"),
    },
    "train": {
        "epochs": (int, 200),
        "batch_size": (int, 128),
        "batches_per_epoch": (int, 8),
        "learning_rate": (float, 0.1),
        "momentum": (float, 0.0),
    },
    "scar": {
        "epochs": (_opt_float, None),
        "reselect_each_epoch": (_bool, False),
    },
    "output": {
        "dir": (_str, "runs/experiment"),
    },
}

DEFAULT_LAMBDA = {"supervised": 0.0, "vat": 1.0, "mixmatch": 0.75, "fixmatch": 1.0}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict[str, dict[str, Any]]
    source_path: Path | None = None

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["model"]["seed"]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output"]["dir"])

    @property
    def method_name(self) -> str:
        return self.values["method"]["name"]

    def layer_sizes(self, n_features: int, n_classes: int) -> tuple[int, ...]:
        return (n_features, *self.values["model"]["hidden"], n_classes)

    def method(self):
        m = self.values["method"]
        lam = m["lambda"]
        name = m["name"]
        aug = AugmentationSpec(m["weak_noise"], m["strong_noise"], m["strong_dropout"])
        if name == "supervised":
            return Supervised()
        if name == "vat":
            return VatLite(m["eps_vat"], m["xi"], m["power_iters"], lam)
        if name == "mixmatch":
            return MixMatchLite(m["k"], m["t_sharp"], m["alpha_mix"], lam, aug)
        return FixMatchLite(m["tau"], lam, aug)

    def train(self, seed_offset: int = 0, epochs: int | None = None) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            epochs=t["epochs"] if epochs is None else epochs,
            batch_size=t["batch_size"],
            batches_per_epoch=t["batches_per_epoch"],
            learning_rate=t["learning_rate"],
            seed=self.seed + seed_offset,
            momentum=t["momentum"],
        )

    def scar_epochs(self) -> int:
        e = self.values["scar"]["epochs"]
        return self.values["train"]["epochs"] if e is None else int(e)

    def attack(self) -> AttackConfig:
        a = self.values["attack"]
        return AttackConfig(parse_eps(a["eps"]), a["alpha"], a["steps"], a["kind"])

    def eps_list(self) -> list[float]:
        return parse_eps_list(self.values["attack"]["eps_list"])

    def to_text(self) -> str:
        """Canonical resolved form; parsing it back gives the same config."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_render(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, seed: int | None = None, out: str | Path | None = None) -> "ExperimentConfig":
        values = {s: dict(v) for s, v in self.values.items()}
        if seed is not None:
            values["model"]["seed"] = int(seed)
        if out is not None:
            values["output"]["dir"] = str(out)
        return ExperimentConfig(values, self.source_path)


def _render(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, source_path: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=str(source_path or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}")
    for section, keys in SCHEMA.items():
        values[section] = {k: default for k, (_, default) in keys.items()}
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
            conv = keys[key][0]
            try:
                values[section][key] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"invalid value for {section}.{key}: {raw!r} ({exc})") from None
    return _validate(ExperimentConfig(values, source_path))


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    v = cfg.values
    if v["dataset"]["source"] not in ("two_moons", "blobs", "csv"):
        raise ConfigError(f"dataset.source must be two_moons, blobs or csv, got {v['dataset']['source']!r}")
    if v["dataset"]["source"] == "csv" and not v["dataset"]["path"]:
        raise ConfigError("dataset.path is required when dataset.source = csv")
    if v["method"]["name"] not in METHODS:
        raise ConfigError(f"method.name must be one of {', '.join(METHODS)}, got {v['method']['name']!r}")
    if v["method"]["lambda"] is None:
        v["method"]["lambda"] = DEFAULT_LAMBDA[v["method"]["name"]]
    if v["scar"]["epochs"] is not None:
        v["scar"]["epochs"] = int(v["scar"]["epochs"])
    checks = [
        ("dataset", "n_labeled", lambda x: x >= 1),
        ("dataset", "n", lambda x: x >= 2),
        ("dataset", "n_test", lambda x: x >= 0),
        ("model", "hidden", lambda x: all(h >= 1 for h in x)),
    ]
    for section, key, ok in checks:
        if not ok(v[section][key]):
            raise ConfigError(f"invalid value for {section}.{key}: {v[section][key]!r}")
    builders = [("method", cfg.method), ("train", cfg.train), ("attack", cfg.attack)]
    for section, build in builders:
        try:
            build()
        except ValueError as exc:
            raise ConfigError(f"invalid [{section}] block: {exc}") from None
    return cfg


def load_config(path, seed: int | None = None, out: str | Path | None = None) -> ExperimentConfig:
    """Read, validate and apply overrides (explicit seed > $SCAR_SEED > file)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = parse_config(path.read_text(), path)
    env_seed = os.environ.get(SEED_ENV)
    if seed is None and env_seed not in (None, ""):
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    return cfg.with_overrides(seed=seed, out=out)
