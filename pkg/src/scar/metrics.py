"""Sensitivity/specificity of the robustness-based selection rule.

Sensitivity is the fraction of attack-robust samples whose pseudo-label is
correct; specificity is the fraction of attack-fragile samples whose
pseudo-label is wrong.  Counts are kept next to the ratios so tables can be
printed as ``"92.22 (7587/8227)"``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackConfig
from .procedure import adversarial_labels


@dataclass(frozen=True)
class Rate:
    num: int
    den: int

    @property
    def value(self) -> float | None:
        return self.num / self.den if self.den else None

    def __str__(self) -> str:
        return format_ratio(self.num, self.den)


@dataclass(frozen=True)
class TradeoffRow:
    eps: float
    sensitivity: Rate
    specificity: Rate

    @property
    def n_selected(self) -> int:
        return self.sensitivity.den


def format_ratio(num: int, den: int) -> str:
    """Percentage with two decimals and the raw counts, e.g. ``92.22 (7587/8227)``."""
    if den == 0:
        return f"n/a ({num}/{den})"
    return f"{100.0 * num / den:.2f} ({num}/{den})"


def _vectors(true_labels, clean_preds, adv_preds):
    y, f, fa = (np.asarray(v).reshape(-1) for v in (true_labels, clean_preds, adv_preds))
    if not (y.shape == f.shape == fa.shape):
        raise ValueError(f"length mismatch: {y.shape[0]}, {f.shape[0]}, {fa.shape[0]}")
    return y, f, fa


def sensitivity(true_labels, clean_preds, adv_preds) -> Rate:
    y, f, fa = _vectors(true_labels, clean_preds, adv_preds)
    robust = f == fa
    return Rate(int(np.count_nonzero(robust & (y == f))), int(np.count_nonzero(robust)))


def specificity(true_labels, clean_preds, adv_preds) -> Rate:
    y, f, fa = _vectors(true_labels, clean_preds, adv_preds)
    fragile = f != fa
    return Rate(int(np.count_nonzero(fragile & (y != f))), int(np.count_nonzero(fragile)))


def tradeoff_table(frozen, unlabeled, true_labels, eps_list, template: AttackConfig | None = None) -> list[TradeoffRow]:
    """Sensitivity and specificity of the selection at each radius in ``eps_list``."""
    eps_list = list(eps_list)
    if not eps_list:
        raise ValueError("eps_list is empty")
    template = template or AttackConfig(eps=0.0)
    rows = []
    pseudo = None
    for eps in eps_list:
        pseudo, adv = adversarial_labels(frozen, unlabeled, template.with_eps(eps), pseudo)
        rows.append(TradeoffRow(float(eps), sensitivity(true_labels, pseudo, adv), specificity(true_labels, pseudo, adv)))
    return rows


TRADEOFF_COLUMNS = ["eps", "sensitivity", "sens_num", "sens_den", "specificity", "spec_num", "spec_den", "n_selected"]


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def write_tradeoff_csv(rows: list[TradeoffRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRADEOFF_COLUMNS)
        for r in rows:
            writer.writerow([
                f"{r.eps:.6g}",
                _fmt(r.sensitivity.value), r.sensitivity.num, r.sensitivity.den,
                _fmt(r.specificity.value), r.specificity.num, r.specificity.den,
                r.n_selected,
            ])
    return path


def format_tradeoff_table(rows: list[TradeoffRow], label: str = "") -> str:
    head = f"{'setting':<24} | {'Sensitivity (%)':<22} | Specificity (%)"
    lines = [head, "-" * len(head)]
    for r in rows:
        name = f"{label} (eps={r.eps:.4g})".strip()
        lines.append(f"{name:<24} | {str(r.sensitivity):<22} | {r.specificity}")
    return "\n".join(lines)
