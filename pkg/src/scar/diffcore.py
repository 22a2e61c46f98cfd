"""Minimal reverse-mode autodiff over float32 numpy arrays.

Every operation on :class:`Tensor` values records its parents and a local
backward rule.  Calling :meth:`Tensor.backward` on a scalar walks the graph
in reverse topological order and accumulates gradients into every tensor
created with ``requires_grad=True``.

Only the primitives needed by small MLP classifiers, L-infinity attacks and
the semi-supervised losses are provided::

    add, sub, mul, matmul, relu, softmax, log, sum, mean,
    mse, cross_entropy, kl_divergence, sign (forward only)

Example:
    >>> x = Tensor([3.0], requires_grad=True)
    >>> (x * x).sum().backward()
    >>> float(x.grad[0])
    6.0
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float32
LOG_CLAMP = 1e-12

# Set SCAR_DEBUG_FINITE=1 to raise on the first non-finite forward value.
DEBUG_FINITE = os.environ.get("SCAR_DEBUG_FINITE", "") not in ("", "0")


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class NonFiniteError(FloatingPointError):
    """Raised when a forward value or finite-difference probe is NaN/Inf."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=DTYPE)
    if arr.ndim == 0:
        arr = arr.reshape(())
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float32 array node in a differentiation graph.

    Tensors built from other tensors only keep a link to their parents when
    at least one parent needs a gradient, so inference on constants costs
    no more than plain numpy.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "_saved")

    def __init__(self, data, requires_grad: bool = False, *, _parents: tuple = (), op: str = "leaf"):
        self.data = _as_array(data)
        if DEBUG_FINITE and not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite value produced by {op}")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op
        self._saved = None

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, cut from the graph (a stop-gradient)."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def relu(self) -> "Tensor":
        return relu(self)

    def log(self) -> "Tensor":
        return log(self)

    def sum(self, axis: int | None = None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        return mean(self, axis)

    # -- backward -------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every grad leaf."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg.astype(DTYPE, copy=False), parent.shape)
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def tensor(value, requires_grad: bool = False) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=requires_grad)


def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    """Build a result node; links parents only if any of them needs grads."""
    tracked = tuple(p for p in parents if p.requires_grad)
    if not tracked:
        return Tensor(data, op=op)
    out = Tensor(data, requires_grad=True, _parents=tuple(parents), op=op)
    out._backward = backward
    return out


# -- primitives ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: ((a, g), (b, g)), "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: ((a, g), (b, -g)), "sub")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _make(a.data * b.data, (a, b), lambda g: ((a, g * b.data), (b, g * a.data)), "mul")


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    return _make(a.data @ b.data, (a, b), lambda g: ((a, g @ b.data.T), (b, a.data.T @ g)), "matmul")


def relu(a) -> Tensor:
    a = tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, DTYPE(0)), (a,), lambda g: ((a, g * mask),), "relu")


def log(a) -> Tensor:
    """Natural log with the argument clamped at ``LOG_CLAMP``."""
    a = tensor(a)
    clamped = np.maximum(a.data, DTYPE(LOG_CLAMP))
    live = a.data >= LOG_CLAMP
    return _make(np.log(clamped), (a,), lambda g: ((a, np.where(live, g / clamped, 0)),), "log")


def tsum(a, axis: int | None = None) -> Tensor:
    a = tensor(a)
    # accumulate in float64, round once
    out = a.data.sum(axis=axis, dtype=np.float64).astype(DTYPE)

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.shape)),)
        return ((a, np.broadcast_to(np.expand_dims(g, axis), a.shape)),)

    return _make(out, (a,), backward, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    out = (a.data.sum(axis=axis, dtype=np.float64) / count).astype(DTYPE)
    scale = DTYPE(1.0 / count)

    def backward(g):
        g = g * scale
        if axis is None:
            return ((a, np.broadcast_to(g, a.shape)),)
        return ((a, np.broadcast_to(np.expand_dims(g, axis), a.shape)),)

    return _make(out, (a,), backward, "mean")


def sign(a) -> np.ndarray:
    """Elementwise sign with sign(0) = 0.  Forward only, no graph node."""
    data = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=DTYPE)
    return np.sign(data).astype(DTYPE)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(logits) -> Tensor:
    """Row-wise softmax of an ``n x C`` tensor, stabilized by the row max."""
    logits = tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"softmax expects a 2-D n x C tensor, got shape {logits.shape}")
    if logits.shape[1] < 2:
        raise ShapeError("softmax needs at least two classes")
    p = _softmax_rows(logits.data)

    def backward(g):
        return ((logits, p * (g - (g * p).sum(axis=1, keepdims=True))),)

    out = _make(p, (logits,), backward, "softmax")
    out._saved = logits
    return out


def _check_distribution_pair(p: Tensor, q: Tensor, what: str) -> None:
    if p.ndim != 2 or p.shape != q.shape:
        raise ShapeError(f"{what} shape mismatch: {p.shape} vs {q.shape}")


def _targets_matrix(labels, n: int, n_classes: int) -> np.ndarray:
    labels = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != (n, n_classes):
            raise ShapeError(f"soft targets shape {labels.shape} does not match ({n}, {n_classes})")
        return labels.astype(DTYPE, copy=False)
    labels = labels.astype(np.int64, copy=False).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"label out of range 0..{n_classes - 1}")
    onehot = np.zeros((n, n_classes), dtype=DTYPE)
    onehot[np.arange(n), labels] = 1
    return onehot


def _stable_logit_grad(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``p * sum(t) - t`` per row, computed without cancellation near p = 1.

    For a one-hot row, the entry at the hot class is rewritten as minus the
    mass on the other classes, which stays informative after ``p`` rounds
    to exactly 1 in float32.
    """
    row_mass = t.sum(axis=1, keepdims=True)
    grad = p * row_mass - t
    hot = t.max(axis=1) == row_mass[:, 0]
    if np.any(hot):
        idx = np.nonzero(hot)[0]
        cls = t[idx].argmax(axis=1)
        rest = p[idx].copy()
        rest[np.arange(idx.size), cls] = 0
        grad[idx, cls] = -rest.sum(axis=1) * row_mass[idx, 0]
    return grad


def cross_entropy(probs, labels, weights=None, reduction: str = "mean") -> Tensor:
    """Cross-entropy ``-sum_c t_c log p_c`` averaged over rows.

    ``labels`` is either a class-index vector or an ``n x C`` matrix of soft
    targets.  ``weights`` scales each row's term (rows with weight 0 drop
    out but still count in the mean).  With ``reduction="sum"`` the rows are
    summed instead of averaged.

    When ``probs`` comes straight from :func:`softmax` the gradient is sent
    directly to the logits as ``p - t``, which avoids the float32
    cancellation in ``p * (g - <g, p>)`` for confident rows.
    """
    probs = tensor(probs)
    if probs.ndim != 2:
        raise ShapeError(f"cross_entropy expects n x C probabilities, got shape {probs.shape}")
    n, n_classes = probs.shape
    t = _targets_matrix(labels, n, n_classes)
    w = np.ones(n, dtype=DTYPE) if weights is None else np.asarray(weights, dtype=DTYPE).reshape(-1)
    if w.shape[0] != n:
        raise ShapeError(f"{w.shape[0]} weights for {n} rows")
    scale = DTYPE(1.0 / n) if reduction == "mean" else DTYPE(1.0)
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    clamped = np.maximum(probs.data, DTYPE(LOG_CLAMP))
    per_row = -(t * np.log(clamped)).sum(axis=1, dtype=np.float64)
    value = DTYPE((w * per_row).sum() * float(scale))
    logits = probs._saved if probs.op == "softmax" else None

    def backward(g):
        coef = (g * scale * w)[:, None]
        if logits is not None:
            return ((logits, coef * _stable_logit_grad(probs.data, t)),)
        live = probs.data >= LOG_CLAMP
        return ((probs, np.where(live, -coef * t / clamped, 0)),)

    parents = (logits,) if logits is not None else (probs,)
    return _make(value, parents, backward, "cross_entropy")


def kl_divergence(p, q) -> Tensor:
    """Mean over rows of ``sum_c p_c log(p_c / q_c)``, log args clamped.

    Gradients flow into both arguments.  As with :func:`cross_entropy`, a
    ``q`` produced by :func:`softmax` receives its gradient on the logits.
    """
    p, q = tensor(p), tensor(q)
    _check_distribution_pair(p, q, "kl_divergence")
    n = p.shape[0]
    pc = np.maximum(p.data, DTYPE(LOG_CLAMP))
    qc = np.maximum(q.data, DTYPE(LOG_CLAMP))
    log_ratio = np.log(pc) - np.log(qc)
    value = DTYPE((p.data * log_ratio).sum(dtype=np.float64) / n)
    q_logits = q._saved if q.op == "softmax" else None
    scale = DTYPE(1.0 / n)

    def backward(g):
        g = g * scale
        p_live = p.data >= LOG_CLAMP
        gp = g * (log_ratio + np.where(p_live, 1, 0))
        if q_logits is not None:
            gq = g * _stable_logit_grad(q.data, p.data)
            return ((p, gp), (q_logits, gq))
        q_live = q.data >= LOG_CLAMP
        return ((p, gp), (q, np.where(q_live, -g * p.data / qc, 0)))

    parents = (p, q_logits) if q_logits is not None else (p, q)
    return _make(value, parents, backward, "kl_divergence")


def mse(a, b) -> Tensor:
    """Mean of squared differences over every entry."""
    a, b = tensor(a), tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return mean(diff * diff)


def grad(loss: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` with respect to ``wrt``; zeros where unreached."""
    wrt = list(wrt)
    for leaf in wrt:
        leaf.grad = None
    loss.backward()
    return [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad for leaf in wrt]


# -- gradient checking -----------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    max_error: float
    worst_index: tuple[int, ...] | None
    analytic: np.ndarray
    numeric: np.ndarray


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point,
    h: float = 1e-3,
    tol: float = 1e-3,
    analytic: np.ndarray | None = None,
) -> GradCheckReport:
    """Compare the backward-pass gradient of ``fn`` with central differences.

    The error at each coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    The numeric slope divides by the float32 distance actually travelled
    between the two probes, not by ``2h``.  Passing ``analytic`` replaces
    the backward pass (useful for checking hand-derived gradients).
    """
    x0 = _as_array(point).copy()
    if analytic is None:
        leaf = Tensor(x0.copy(), requires_grad=True)
        out = fn(leaf)
        out.backward()
        analytic = np.zeros_like(x0) if leaf.grad is None else leaf.grad
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x0.shape)
    numeric = np.zeros(x0.shape, dtype=np.float64)
    for idx in np.ndindex(*x0.shape):
        hi, lo = x0.copy(), x0.copy()
        hi[idx] = x0[idx] + DTYPE(h)
        lo[idx] = x0[idx] - DTYPE(h)
        f_hi = float(fn(Tensor(hi)).item())
        f_lo = float(fn(Tensor(lo)).item())
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise NonFiniteError(f"function is not finite near coordinate {idx}")
        step = float(hi[idx]) - float(lo[idx])
        numeric[idx] = (f_hi - f_lo) / step
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    if err.size == 0:
        return GradCheckReport(True, 0.0, None, analytic, numeric)
    worst = np.unravel_index(int(np.argmax(err)), err.shape)
    max_error = float(err[worst])
    return GradCheckReport(max_error <= tol, max_error, tuple(int(i) for i in worst), analytic, numeric)
