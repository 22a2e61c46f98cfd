"""Pretrain / SCAR / trade-off runs: data assembly, training and file output.

Each run writes into its output directory:

* ``config.resolved.ini``: the fully resolved config (re-runnable as is)
* CSVs with fixed headers (values formatted deterministically)
* checkpoints in the ``SCARCKPT1`` format
* ``run.json``: paths and wall-clock duration (the only non-deterministic file)
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import Dataset, SemiSplit, gen_blobs, gen_two_moons, load_csv, split_semi, train_test_split
from .metrics import format_tradeoff_table, tradeoff_table, write_tradeoff_csv
from .model import MlpSpec, freeze, init_classifier
from .procedure import ScarConfig, scar_finetune
from .ssl import EpochRecord, accuracy, train_ssl
from .svg import line_chart

log = logging.getLogger(__name__)

SCAR_SEED_OFFSET = 1000
DISPLAY_NAMES = {"supervised": "Supervised", "vat": "VAT", "mixmatch": "MixMatch", "fixmatch": "FixMatch"}

HISTORY_COLUMNS = ["epoch", "labeled_loss", "unlabeled_loss", "total", "mask_rate", "test_acc"]
SUMMARY_COLUMNS = [
    "method", "seed", "eps", "n_labeled", "n_unlabeled", "n_selected", "pseudo_label_acc", "pre_acc", "post_acc",
]
SELECTION_COLUMNS = ["index", "pseudo_label", "adv_label", "robust"]


@dataclass
class RunArtifact:
    out_dir: Path
    checkpoint: Path | None = None
    metrics: Path | None = None
    config_snapshot: Path | None = None
    duration_s: float = 0.0
    extra: dict[str, Path] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ExperimentData:
    train: Dataset
    test: Dataset
    split: SemiSplit


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    d = cfg["dataset"]
    data_seed = d["seed"] if d["seed"] is not None else cfg.seed
    total = d["n"] + d["n_test"]
    if d["source"] == "two_moons":
        full = gen_two_moons(total + total % 2, d["noise"], data_seed)
    elif d["source"] == "blobs":
        full = gen_blobs(total, d["n_classes"], d["n_features"], d["cluster_std"], data_seed)
    else:
        path = Path(d["path"])
        if not path.exists():
            raise FileNotFoundError(f"dataset file not found: {path}")
        full = load_csv(path)
        if full.labels is None:
            raise ValueError(f"{path}: a label column is required for semi-supervised runs")
    train, test = train_test_split(full, min(d["n_test"], len(full) - 1), data_seed)
    split = split_semi(train, d["n_labeled"], cfg.seed)
    return ExperimentData(train, test, split)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.8g}"
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _history_rows(history: list[EpochRecord], test_accs: list[float]) -> list[dict]:
    return [
        {
            "epoch": r.epoch,
            "labeled_loss": r.labeled_loss,
            "unlabeled_loss": r.unlabeled_loss,
            "total": r.total,
            "mask_rate": r.mask_rate,
            "test_acc": acc,
        }
        for r, acc in zip(history, test_accs)
    ]


def _prepare_out(cfg: ExperimentConfig) -> tuple[Path, Path]:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    snapshot = out / "config.resolved.ini"
    snapshot.write_text(cfg.to_text())
    return out, snapshot


def _finish(artifact: RunArtifact, started: float, name: str) -> RunArtifact:
    artifact.duration_s = time.perf_counter() - started
    info = {
        "command": name,
        "checkpoint": str(artifact.checkpoint) if artifact.checkpoint else None,
        "metrics": str(artifact.metrics) if artifact.metrics else None,
        "config_snapshot": str(artifact.config_snapshot) if artifact.config_snapshot else None,
        "duration_s": round(artifact.duration_s, 3),
        **{k: str(v) for k, v in artifact.extra.items()},
    }
    (artifact.out_dir / f"run_{name}.json").write_text(json.dumps(info, indent=2) + "\n")
    return artifact


def model_spec(cfg: ExperimentConfig, data: ExperimentData) -> MlpSpec:
    return MlpSpec(cfg.layer_sizes(data.train.n_features, data.train.n_classes))


def cmd_pretrain(cfg: ExperimentConfig) -> RunArtifact:
    """Semi-supervised pre-training; writes ``pretrain.ckpt`` and ``pretrain_metrics.csv``."""
    started = time.perf_counter()
    out, snapshot = _prepare_out(cfg)
    data = build_data(cfg)
    model = init_classifier(model_spec(cfg, data), cfg.seed)
    accs: list[float] = []
    model, history = train_ssl(
        model,
        data.split.labeled,
        data.split.unlabeled,
        cfg.method(),
        cfg.train(),
        on_epoch=lambda m, _: accs.append(accuracy(m, data.test)),
    )
    log.info("pretrain %s seed=%d test_acc=%.4f", cfg.method_name, cfg.seed, accuracy(model, data.test))
    ckpt = save_checkpoint(model, out / "pretrain.ckpt", epoch=len(history), method=cfg.method_name)
    metrics = write_csv(out / "pretrain_metrics.csv", HISTORY_COLUMNS, _history_rows(history, accs))
    return _finish(RunArtifact(out, ckpt, metrics, snapshot), started, "pretrain")


def cmd_scar(cfg: ExperimentConfig, checkpoint: Path | None = None) -> RunArtifact:
    """Fine-tune a pre-trained checkpoint with robust pseudo-labels."""
    started = time.perf_counter()
    out, snapshot = _prepare_out(cfg)
    data = build_data(cfg)
    checkpoint = Path(checkpoint) if checkpoint else out / "pretrain.ckpt"
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    pretrained, meta = load_checkpoint(checkpoint, expected=model_spec(cfg, data))
    pre_acc = accuracy(pretrained, data.test)

    scar_cfg = ScarConfig(
        attack=cfg.attack(),
        train=cfg.train(seed_offset=SCAR_SEED_OFFSET, epochs=cfg.scar_epochs()),
        method=cfg.method(),
        reselect_each_epoch=cfg["scar"]["reselect_each_epoch"],
    )
    accs: list[float] = []
    result = scar_finetune(
        pretrained,
        data.split.labeled,
        data.split.unlabeled,
        scar_cfg,
        on_epoch=lambda m, _: accs.append(accuracy(m, data.test)),
    )
    post_acc = accuracy(result.model, data.test)

    aug = result.augmented
    picked = aug.source[aug.n_original:]
    truth = data.split.unlabeled.withheld_labels()[picked]
    pseudo_acc = float(np.mean(aug.dataset.labels[aug.n_original:] == truth)) if picked.size else None
    log.info("scar %s seed=%d pre=%.4f post=%.4f selected=%d", cfg.method_name, cfg.seed, pre_acc, post_acc, picked.size)

    ckpt = save_checkpoint(
        result.model, out / "scar.ckpt", epoch=int(meta.get("epoch", 0)) + len(result.history), method=cfg.method_name
    )
    selection = write_csv(
        out / "selection.csv",
        SELECTION_COLUMNS,
        [{"index": r.index, "pseudo_label": r.pseudo_label, "adv_label": r.adv_label, "robust": int(r.robust)}
         for r in result.records],
    )
    history = write_csv(out / "scar_metrics.csv", HISTORY_COLUMNS, _history_rows(result.history, accs))
    summary = write_csv(
        out / "scar_summary.csv",
        SUMMARY_COLUMNS,
        [{
            "method": cfg.method_name,
            "seed": cfg.seed,
            "eps": scar_cfg.attack.eps,
            "n_labeled": len(data.split.labeled),
            "n_unlabeled": len(data.split.unlabeled),
            "n_selected": int(picked.size),
            "pseudo_label_acc": pseudo_acc,
            "pre_acc": pre_acc,
            "post_acc": post_acc,
        }],
    )
    artifact = RunArtifact(out, ckpt, summary, snapshot, extra={"selection": selection, "history": history})
    return _finish(artifact, started, "scar")


def cmd_tradeoff(cfg: ExperimentConfig, checkpoint: Path | None = None, eps_list: list[float] | None = None) -> RunArtifact:
    """Sensitivity/specificity sweep over eps on the unlabeled pool."""
    started = time.perf_counter()
    eps_list = cfg.eps_list() if eps_list is None else list(eps_list)
    if not eps_list:
        raise ValueError("empty eps list")
    out, snapshot = _prepare_out(cfg)
    data = build_data(cfg)
    checkpoint = Path(checkpoint) if checkpoint else out / "pretrain.ckpt"
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    model, _ = load_checkpoint(checkpoint, expected=model_spec(cfg, data))
    unlabeled = data.split.unlabeled
    rows = tradeoff_table(freeze(model), unlabeled, unlabeled.withheld_labels(), eps_list, cfg.attack())
    csv_path = write_tradeoff_csv(rows, out / "tradeoff.csv")
    label = DISPLAY_NAMES.get(cfg.method_name, cfg.method_name)
    (out / "tradeoff.txt").write_text(format_tradeoff_table(rows, label) + "\n")
    series = {
        "sensitivity": [(r.eps, r.sensitivity.value) for r in rows],
        "specificity": [(r.eps, r.specificity.value) for r in rows],
    }
    svg = out / "tradeoff.svg"
    svg.write_text(line_chart(series, title=f"{label}: selection trade-off", x_label="eps", y_label="rate"))
    artifact = RunArtifact(out, checkpoint, csv_path, snapshot, extra={"chart": svg})
    return _finish(artifact, started, "tradeoff")


def _mean_std(values: list[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), (float(arr.std(ddof=1)) if arr.size > 1 else None)


def emit_report(summary_paths: list[Path], out_dir: Path | None = None) -> tuple[list[dict], str]:
    """Group SCAR summaries by method into "Method" / "Method + SCAR" rows.

    Accuracies are read from the CSVs by column name and averaged; nothing
    is recomputed.  Standard deviation is left empty for a single seed.
    """
    if not summary_paths:
        raise ValueError("emit_report needs at least one run")
    by_method: dict[str, list[dict[str, str]]] = {}
    for path in summary_paths:
        path = Path(path)
        if path.is_dir():
            path = path / "scar_summary.csv"
        for row in read_csv(path):
            by_method.setdefault(row["method"], []).append(row)
    order = [m for m in ("supervised", "vat", "mixmatch", "fixmatch") if m in by_method]
    order += sorted(m for m in by_method if m not in order)
    rows = []
    for method in order:
        group = by_method[method]
        name = DISPLAY_NAMES.get(method, method)
        for label, column in ((name, "pre_acc"), (f"{name} + SCAR", "post_acc")):
            mean, std = _mean_std([float(r[column]) for r in group])
            rows.append({"method": label, "acc_mean": mean, "acc_std": std, "n_seeds": len(group)})
    lines = [f"{'Method':<20} | {'Acc. (%)':>16} | seeds", "-" * 48]
    for r in rows:
        acc = f"{100 * r['acc_mean']:.2f}"
        if r["acc_std"] is not None:
            acc += f" ± {100 * r['acc_std']:.2f}"
        lines.append(f"{r['method']:<20} | {acc:>16} | {r['n_seeds']}")
    text = "\n".join(lines) + "\n"
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "report.csv", ["method", "acc_mean", "acc_std", "n_seeds"], rows)
        (out_dir / "report.txt").write_text(text)
    return rows, text
