"""L-infinity FGSM and PGD against a frozen classifier.

Both attacks ascend the cross-entropy of the given labels (pseudo-labels
during selection) and keep every iterate inside the eps-ball around the
clean input and inside the [0, 1] input domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .diffcore import DTYPE, ShapeError, Tensor, cross_entropy, sign, softmax


@dataclass(frozen=True)
class AttackConfig:
    eps: float
    alpha: float | None = None
    steps: int = 1
    kind: str = "fgsm"
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd"):
            raise ValueError(f"attack kind must be fgsm or pgd, got {self.kind!r}")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.kind == "pgd" and (self.alpha is None or self.alpha <= 0):
            raise ValueError("pgd needs a positive step size alpha")
        if self.lower >= self.upper:
            raise ValueError("domain lower bound must be below the upper bound")

    def with_eps(self, eps: float) -> "AttackConfig":
        alpha = self.alpha
        if self.kind == "pgd" and self.alpha is not None and self.eps > 0:
            # keep alpha/eps fixed across a sweep
            alpha = self.alpha * eps / self.eps if eps > 0 else self.alpha
        return AttackConfig(eps, alpha, self.steps, self.kind, self.lower, self.upper)


def parse_eps(text: str) -> float:
    """Parse ``"0.03"``, ``"4/255"`` or ``"4 / 255"`` into a float radius."""
    text = str(text).strip()
    try:
        value = float(Fraction(text.replace(" ", ""))) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse eps value {text!r}") from None
    if not value >= 0:
        raise ValueError(f"eps must be non-negative, got {text!r}")
    return value


def parse_eps_list(text: str) -> list[float]:
    parts = [p for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValueError("empty eps list")
    return [parse_eps(p) for p in parts]


def project_linf(candidate, center, eps: float, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    """Nearest point to ``candidate`` in the eps-ball around ``center`` and the box."""
    candidate = np.asarray(candidate, dtype=DTYPE)
    center = np.asarray(center, dtype=DTYPE)
    if candidate.shape != center.shape:
        raise ShapeError(f"candidate {candidate.shape} and center {center.shape} differ")
    eps32 = DTYPE(eps)
    out = np.clip(candidate, center - eps32, center + eps32)
    return np.clip(out, DTYPE(lower), DTYPE(upper)).astype(DTYPE)


def input_gradient(model, x: np.ndarray, y) -> np.ndarray:
    """d/dx of the summed cross-entropy; row i depends on sample i only."""
    leaf = Tensor(x, requires_grad=True)
    loss = cross_entropy(softmax(model.forward(leaf, track_params=False)), y, reduction="sum")
    loss.backward()
    return leaf.grad if leaf.grad is not None else np.zeros_like(x)


def _prepare(model, x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.array(x, dtype=DTYPE, copy=True)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.spec.n_features:
        raise ShapeError(f"expected inputs of shape (n, {model.spec.n_features}), got {x.shape}")
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"{y.shape[0]} labels for {x.shape[0]} inputs")
    return x, y


def fgsm(model, x, y, eps: float, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    """One signed-gradient step of size eps, projected to ball and domain."""
    x, y = _prepare(model, x, y)
    if eps == 0:
        return x
    step = DTYPE(eps) * sign(input_gradient(model, x, y))
    return project_linf(x + step, x, eps, lower, upper)


def pgd(model, x, y, config: AttackConfig, trace: list | None = None) -> np.ndarray:
    """Projected signed-gradient ascent from the clean input (no random start).

    If ``trace`` is a list, every iterate (including the start) is appended.
    """
    x, y = _prepare(model, x, y)
    alpha = config.eps if config.alpha is None else config.alpha
    current = x.copy()
    if trace is not None:
        trace.append(current.copy())
    for _ in range(config.steps):
        if config.eps == 0:
            break
        step = DTYPE(alpha) * sign(input_gradient(model, current, y))
        current = project_linf(current + step, x, config.eps, config.lower, config.upper)
        if trace is not None:
            trace.append(current.copy())
    return current


def attack(model, x, y, config: AttackConfig) -> np.ndarray:
    if config.kind == "fgsm":
        return fgsm(model, x, y, config.eps, config.lower, config.upper)
    return pgd(model, x, y, config)
