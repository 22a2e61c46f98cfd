"""Semi-supervised objectives and the mini-batch trainer.

All methods share the two-term objective ``labeled + lam * unlabeled``.
The unlabeled targets (guessed labels, pseudo-labels, clean predictions)
are computed outside the graph, so no gradient flows through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .data import AugmentationSpec, Dataset, UnlabeledSet, augment
from .diffcore import DTYPE, Tensor, cross_entropy, kl_divergence, mse, softmax
from .model import Classifier, sgd_step


@dataclass(frozen=True)
class Supervised:
    lam: float = 0.0
    name: str = field(default="supervised", init=False)


@dataclass(frozen=True)
class VatLite:
    eps_vat: float = 0.05
    xi: float = 1e-6
    power_iters: int = 1
    lam: float = 1.0
    name: str = field(default="vat", init=False)

    def __post_init__(self):
        if self.eps_vat <= 0:
            raise ValueError("eps_vat must be positive")
        if self.power_iters < 1:
            raise ValueError("power_iters must be >= 1")
        _check_lam(self.lam)


@dataclass(frozen=True)
class MixMatchLite:
    K: int = 2
    T_sharp: float = 0.5
    alpha_mix: float = 0.2
    lam: float = 0.75
    aug: AugmentationSpec = AugmentationSpec()
    name: str = field(default="mixmatch", init=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0 < self.T_sharp <= 1:
            raise ValueError("T_sharp must lie in (0, 1]")
        if self.alpha_mix <= 0:
            raise ValueError("alpha_mix must be positive")
        _check_lam(self.lam)


@dataclass(frozen=True)
class FixMatchLite:
    tau: float = 0.95
    lam: float = 1.0
    aug: AugmentationSpec = AugmentationSpec()
    name: str = field(default="fixmatch", init=False)

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        _check_lam(self.lam)


SslMethod = Union[Supervised, VatLite, MixMatchLite, FixMatchLite]

METHODS = {"supervised": Supervised, "vat": VatLite, "mixmatch": MixMatchLite, "fixmatch": FixMatchLite}


def _check_lam(lam: float) -> None:
    if lam < 0:
        raise ValueError("lambda must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    batches_per_epoch: int = 8
    learning_rate: float = 0.1
    seed: int = 0
    momentum: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1 or self.batches_per_epoch < 1:
            raise ValueError("batch_size and batches_per_epoch must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class LossReport:
    labeled_loss: float
    unlabeled_loss: float
    total: float
    lam: float
    mask_rate: float | None = None
    loss: Tensor | None = field(default=None, repr=False, compare=False)


def loss_total(labeled_loss, unlabeled_loss, lam: float):
    """``labeled + lam * unlabeled``; works on floats and tensors."""
    _check_lam(lam)
    return labeled_loss + unlabeled_loss * DTYPE(lam)


def _report(labeled: Tensor, unlabeled: Tensor, lam: float, mask_rate=None) -> LossReport:
    total = loss_total(labeled, unlabeled, lam)
    return LossReport(labeled.item(), unlabeled.item(), total.item(), lam, mask_rate, total)


def loss_supervised(model: Classifier, x, y) -> Tensor:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] == 0:
        raise ValueError("empty labeled batch")
    return cross_entropy(softmax(model.forward(x)), y)


def _normalize_rows(d: np.ndarray) -> np.ndarray:
    # max-abs rescale first so tiny gradients survive the L2 step in float32
    d = d / (1e-12 + np.abs(d).max(axis=1, keepdims=True))
    return (d / np.sqrt(1e-6 + (d * d).sum(axis=1, keepdims=True))).astype(DTYPE)


def vat_direction(model, x: np.ndarray, xi: float, power_iters: int, rng: np.random.Generator) -> np.ndarray:
    """Unit rows approximating the most KL-sensitive direction at each x."""
    p_clean = Tensor(model.predict_proba(x))
    d = _normalize_rows(rng.standard_normal(size=x.shape).astype(DTYPE))
    for _ in range(power_iters):
        r = Tensor(DTYPE(xi) * d, requires_grad=True)
        q = softmax(model.forward(Tensor(x) + r, track_params=False))
        kl = kl_divergence(p_clean, q) * DTYPE(x.shape[0])
        kl.backward()
        g = r.grad if r.grad is not None else np.zeros_like(x)
        d = _normalize_rows(g)
    return d


def loss_vat(model: Classifier, x_u, eps_vat: float, xi: float, power_iters: int, rng: np.random.Generator) -> Tensor:
    """Mean KL between clean predictions (held fixed) and predictions at x + eps_vat * r."""
    if power_iters < 1:
        raise ValueError("power_iters must be >= 1")
    x_u = np.asarray(x_u, dtype=DTYPE)
    d = vat_direction(model, x_u, xi, power_iters, rng)
    p_clean = Tensor(model.predict_proba(x_u))
    x_adv = x_u + DTYPE(eps_vat) * d
    return kl_divergence(p_clean, softmax(model.forward(x_adv)))


def sharpen(p, T_sharp: float) -> np.ndarray:
    """``p**(1/T) / sum(p**(1/T))`` row-wise."""
    if T_sharp <= 0:
        raise ValueError("T_sharp must be positive")
    p = np.asarray(p, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    # work in log space so tiny entries do not underflow to an all-zero row
    logp = np.log(np.maximum(p, 1e-300)) / T_sharp
    logp -= logp.max(axis=1, keepdims=True)
    out = np.exp(logp)
    out /= out.sum(axis=1, keepdims=True)
    out = out.astype(DTYPE)
    return out[0] if squeeze else out


def mixup(a, b, alpha_mix: float, rng: np.random.Generator | int | None = None, lam=None):
    """Convex combination of ``(x_a, p_a)`` and ``(x_b, p_b)`` row by row.

    The weight per row is ``max(l, 1 - l)`` with ``l ~ Beta(alpha, alpha)``,
    so the result stays closer to the first argument.  Pass ``lam`` (scalar
    or per-row) to fix the weight instead of sampling it.
    """
    if alpha_mix <= 0:
        raise ValueError("alpha_mix must be positive")
    x_a, p_a = (np.asarray(v, dtype=DTYPE) for v in a)
    x_b, p_b = (np.asarray(v, dtype=DTYPE) for v in b)
    single = x_a.ndim == 1
    x_a, x_b, p_a, p_b = (np.atleast_2d(v) for v in (x_a, x_b, p_a, p_b))
    n = x_a.shape[0]
    if lam is None:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        lam = rng.beta(alpha_mix, alpha_mix, size=n)
        lam = np.maximum(lam, 1 - lam)
    lam = np.broadcast_to(np.asarray(lam, dtype=DTYPE), (n,))[:, None]
    x = lam * x_a + (1 - lam) * x_b
    p = lam * p_a + (1 - lam) * p_b
    if single:
        return x[0], p[0]
    return x, p


def loss_mixmatch_lite(
    model: Classifier,
    x_l,
    y_l,
    x_u,
    method: MixMatchLite,
    rng: np.random.Generator,
    mix_lambda=None,
) -> LossReport:
    """Label guessing + sharpening + MixUp, CE on labeled and MSE on unlabeled rows."""
    if method.K < 1:
        raise ValueError("K must be >= 1")
    x_l = np.asarray(x_l, dtype=DTYPE)
    x_u = np.asarray(x_u, dtype=DTYPE)
    if len(x_l) == 0 or len(x_u) == 0:
        raise ValueError("MixMatch needs non-empty labeled and unlabeled batches")
    n_classes = model.spec.n_classes
    n_l = x_l.shape[0]

    views = [augment(x_u, method.aug, "weak", int(rng.integers(2**63))) for _ in range(method.K)]
    guess = np.mean([model.predict_proba(v) for v in views], axis=0)
    q = sharpen(guess, method.T_sharp)

    onehot = np.zeros((n_l, n_classes), dtype=DTYPE)
    onehot[np.arange(n_l), np.asarray(y_l, dtype=np.int64)] = 1
    all_x = np.concatenate([x_l, *views])
    all_p = np.concatenate([onehot, *([q] * method.K)])
    partner = rng.permutation(all_x.shape[0])
    mixed_x, mixed_p = mixup(
        (all_x, all_p), (all_x[partner], all_p[partner]), method.alpha_mix, rng, lam=mix_lambda
    )
    labeled = cross_entropy(softmax(model.forward(mixed_x[:n_l])), mixed_p[:n_l])
    unlabeled = mse(softmax(model.forward(mixed_x[n_l:])), Tensor(mixed_p[n_l:]))
    return _report(labeled, unlabeled, method.lam)


def loss_fixmatch_lite(
    model: Classifier,
    x_l,
    y_l,
    x_u,
    tau: float,
    aug_spec: AugmentationSpec,
    rng: np.random.Generator,
    lam: float = 1.0,
) -> LossReport:
    """Confident weak-view predictions become hard targets for the strong view."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    x_u = np.asarray(x_u, dtype=DTYPE)
    labeled = loss_supervised(model, x_l, y_l)
    weak = augment(x_u, aug_spec, "weak", int(rng.integers(2**63)))
    strong = augment(x_u, aug_spec, "strong", int(rng.integers(2**63)))
    q = model.predict_proba(weak)
    mask = (q.max(axis=1) >= tau).astype(DTYPE)
    pseudo = q.argmax(axis=1)
    unlabeled = cross_entropy(softmax(model.forward(strong)), pseudo, weights=mask)
    return _report(labeled, unlabeled, lam, float(mask.mean()))


def method_loss(model: Classifier, method: SslMethod, x_l, y_l, x_u, rng: np.random.Generator) -> LossReport:
    if isinstance(method, Supervised):
        labeled = loss_supervised(model, x_l, y_l)
        return LossReport(labeled.item(), 0.0, labeled.item(), method.lam, None, labeled)
    if len(x_u) == 0:
        raise ValueError(f"{method.name} needs unlabeled samples")
    if isinstance(method, VatLite):
        labeled = loss_supervised(model, x_l, y_l)
        unlabeled = loss_vat(model, x_u, method.eps_vat, method.xi, method.power_iters, rng)
        return _report(labeled, unlabeled, method.lam)
    if isinstance(method, MixMatchLite):
        return loss_mixmatch_lite(model, x_l, y_l, x_u, method, rng)
    if isinstance(method, FixMatchLite):
        return loss_fixmatch_lite(model, x_l, y_l, x_u, method.tau, method.aug, rng, method.lam)
    raise TypeError(f"unknown method {method!r}")


# -- training ----------------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    labeled_loss: float
    unlabeled_loss: float
    total: float
    mask_rate: float | None = None


def labeled_batches(rng: np.random.Generator, n: int, batch_size: int, n_batches: int) -> np.ndarray:
    """Index matrix ``n_batches x batch_size``; with replacement when n is too small."""
    need = batch_size * n_batches
    if n < need:
        return rng.integers(0, n, size=(n_batches, batch_size))
    return rng.permutation(n)[:need].reshape(n_batches, batch_size)


def unlabeled_batches(rng: np.random.Generator, n: int, batch_size: int, n_batches: int) -> np.ndarray:
    """Without replacement; reshuffled passes are chained if one pass is too short."""
    need = batch_size * n_batches
    chunks, have = [], 0
    while have < need:
        chunks.append(rng.permutation(n))
        have += n
    return np.concatenate(chunks)[:need].reshape(n_batches, batch_size)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    lab, unl, method = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(lab), np.random.default_rng(unl), np.random.default_rng(method)


def _labeled_arrays(labeled: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if labeled.labels is None:
        raise ValueError("labeled set has no labels")
    if len(labeled) == 0:
        raise ValueError("empty labeled set")
    return labeled.features, labeled.labels


def _unlabeled_features(unlabeled) -> np.ndarray:
    if unlabeled is None:
        return np.zeros((0, 0), dtype=DTYPE)
    if isinstance(unlabeled, (Dataset, UnlabeledSet)):
        return unlabeled.features
    return np.asarray(unlabeled, dtype=DTYPE)


EpochCallback = Callable[[Classifier, EpochRecord], None]


def train_ssl(
    model: Classifier,
    labeled: Dataset,
    unlabeled,
    method: SslMethod,
    cfg: TrainConfig,
    on_epoch: EpochCallback | None = None,
) -> tuple[Classifier, list[EpochRecord]]:
    """Mini-batch SGD on ``labeled + lam * unlabeled`` for ``cfg.epochs`` epochs.

    Each step draws one labeled and one unlabeled batch of ``batch_size``.
    Labeled batches, unlabeled batches and method randomness (augmentation,
    MixUp, VAT directions) use three independent streams derived from
    ``cfg.seed``, so the labeled batch sequence does not depend on the method.
    """
    x_l, y_l = _labeled_arrays(labeled)
    x_u = _unlabeled_features(unlabeled)
    if cfg.momentum:
        model.momentum = cfg.momentum
    lab_rng, unl_rng, method_rng = _streams(cfg.seed)
    K, B = cfg.batch_size, cfg.batches_per_epoch
    history: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        lab_idx = labeled_batches(lab_rng, len(x_l), K, B)
        unl_idx = unlabeled_batches(unl_rng, len(x_u), K, B) if len(x_u) else None
        reports = []
        for b in range(B):
            xb_u = x_u[unl_idx[b]] if unl_idx is not None else x_u
            model.zero_grad()
            rep = method_loss(model, method, x_l[lab_idx[b]], y_l[lab_idx[b]], xb_u, method_rng)
            rep.loss.backward()
            sgd_step(model, model.gradients(), cfg.learning_rate)
            reports.append(rep)
        record = _summarize(epoch, reports)
        history.append(record)
        if on_epoch is not None:
            on_epoch(model, record)
    model.zero_grad()
    return model, history


def train_supervised(
    model: Classifier, labeled: Dataset, cfg: TrainConfig, on_epoch: EpochCallback | None = None
) -> tuple[Classifier, list[EpochRecord]]:
    """Plain cross-entropy SGD on the labeled set with the same batch schedule."""
    x_l, y_l = _labeled_arrays(labeled)
    if cfg.momentum:
        model.momentum = cfg.momentum
    lab_rng, _, _ = _streams(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        idx = labeled_batches(lab_rng, len(x_l), cfg.batch_size, cfg.batches_per_epoch)
        losses = []
        for rows in idx:
            model.zero_grad()
            loss = cross_entropy(softmax(model.forward(x_l[rows])), y_l[rows])
            loss.backward()
            sgd_step(model, model.gradients(), cfg.learning_rate)
            losses.append(loss.item())
        mean_loss = float(np.mean(losses))
        record = EpochRecord(epoch, mean_loss, 0.0, mean_loss)
        history.append(record)
        if on_epoch is not None:
            on_epoch(model, record)
    model.zero_grad()
    return model, history


def _summarize(epoch: int, reports: list[LossReport]) -> EpochRecord:
    rates = [r.mask_rate for r in reports if r.mask_rate is not None]
    return EpochRecord(
        epoch,
        float(np.mean([r.labeled_loss for r in reports])),
        float(np.mean([r.unlabeled_loss for r in reports])),
        float(np.mean([r.total for r in reports])),
        float(np.mean(rates)) if rates else None,
    )


def with_lambda(method: SslMethod, lam: float) -> SslMethod:
    if isinstance(method, Supervised):
        return method
    return replace(method, lam=lam)


def accuracy(model, data: Dataset) -> float:
    if data.labels is None or len(data) == 0:
        raise ValueError("accuracy needs a labeled, non-empty dataset")
    return float(np.mean(model.predict_class(data.features) == data.labels))
