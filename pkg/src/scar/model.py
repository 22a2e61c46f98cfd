"""Small ReLU MLP classifiers: logits, probabilities, argmax and SGD."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .diffcore import DTYPE, ShapeError, Tensor, matmul, relu, softmax, tensor

DEFAULT_HIDDEN = (64, 64)


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths ``[d, h_1, ..., h_k, C]``; ReLU between hidden layers."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError(f"need at least input and output sizes, got {list(sizes)}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {list(sizes)}")
        if sizes[-1] < 2:
            raise ValueError("a classifier needs at least 2 classes")

    @classmethod
    def default(cls, n_features: int, n_classes: int) -> "MlpSpec":
        return cls((n_features, *DEFAULT_HIDDEN, n_classes))

    @property
    def n_features(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())


class _Mlp:
    spec: MlpSpec
    params: list[Tensor]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.spec.n_features:
            raise ShapeError(f"expected inputs of shape (n, {self.spec.n_features}), got {x.shape}")
        return x

    def forward(self, x, track_params: bool = True) -> Tensor:
        """Logits ``f(x)`` as a graph node.

        With ``track_params=False`` the parameters enter as constants, so a
        backward pass only reaches ``x`` (used for input-space gradients).
        """
        x = tensor(x)
        self._check_input(x.data)
        params = self.params if track_params else [Tensor(p.data) for p in self.params]
        return _mlp_forward(x, params)

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=DTYPE)
        self._check_input(x)
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = h @ self.params[2 * i].data + self.params[2 * i + 1].data
            if i < n_layers - 1:
                h = np.maximum(h, 0)
        return h

    def predict_proba(self, x) -> np.ndarray:
        return softmax(Tensor(self.logits(x))).data

    def predict_class(self, x) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. ties go to the lowest class.
        return np.argmax(self.logits(x), axis=1)

    def param_arrays(self) -> list[np.ndarray]:
        return [p.data for p in self.params]


def _mlp_forward(x: Tensor, params: list[Tensor]) -> Tensor:
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        h = matmul(h, params[2 * i]) + params[2 * i + 1]
        if i < n_layers - 1:
            h = relu(h)
    return h


@dataclass(eq=False)
class Classifier(_Mlp):
    """Trainable MLP.  ``params`` alternate weight matrix and bias vector."""

    spec: MlpSpec
    params: list[Tensor]
    seed: int = 0
    momentum: float = 0.0
    _velocity: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        shapes = self.spec.param_shapes()
        if len(self.params) != len(shapes):
            raise ShapeError(f"expected {len(shapes)} parameter arrays, got {len(self.params)}")
        for i, (p, shape) in enumerate(zip(self.params, shapes)):
            if p.shape != shape:
                raise ShapeError(f"parameter {i} has shape {p.shape}, expected {shape}")
            if not np.all(np.isfinite(p.data)):
                raise ValueError(f"parameter {i} is not finite")
            p.requires_grad = True

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def gradients(self) -> list[np.ndarray]:
        return [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]

    def copy(self) -> "Classifier":
        return Classifier(
            self.spec,
            [Tensor(p.data.copy()) for p in self.params],
            seed=self.seed,
            momentum=self.momentum,
            _velocity=copy.deepcopy(self._velocity),
        )


class FrozenClassifier(_Mlp):
    """Immutable snapshot of a classifier for pseudo-labeling and attacks."""

    def __init__(self, spec: MlpSpec, arrays: list[np.ndarray], seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.params = []
        for a in arrays:
            a = np.array(a, dtype=DTYPE, copy=True)
            a.setflags(write=False)
            self.params.append(Tensor(a))

    def thaw(self) -> Classifier:
        """A fresh trainable copy starting from the frozen parameters."""
        return Classifier(self.spec, [Tensor(p.data.copy()) for p in self.params], seed=self.seed)


def init_classifier(spec: MlpSpec, seed: int, momentum: float = 0.0) -> Classifier:
    """He-uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    if not isinstance(spec, MlpSpec):
        spec = MlpSpec(tuple(spec))
    rng = np.random.default_rng(seed)
    params: list[Tensor] = []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        params.append(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
        params.append(Tensor(np.zeros(fan_out)))
    return Classifier(spec, params, seed=seed, momentum=momentum)


def predict_proba(model: _Mlp, x) -> np.ndarray:
    return model.predict_proba(x)


def predict_class(model: _Mlp, x) -> np.ndarray:
    return model.predict_class(x)


def sgd_step(model: Classifier, gradients: list[np.ndarray], lr: float) -> Classifier:
    """In-place ``theta <- theta - lr * grad`` (heavy-ball if momentum > 0)."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if len(gradients) != len(model.params):
        raise ShapeError(f"{len(gradients)} gradients for {len(model.params)} parameters")
    for i, (p, g) in enumerate(zip(model.params, gradients)):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
    step_dirs = list(gradients)
    if model.momentum > 0:
        if model._velocity is None:
            model._velocity = [np.zeros_like(p.data) for p in model.params]
        for v, g in zip(model._velocity, gradients):
            v *= DTYPE(model.momentum)
            v += g
        step_dirs = model._velocity
    lr32 = DTYPE(lr)
    for p, d in zip(model.params, step_dirs):
        p.data -= lr32 * d.astype(DTYPE, copy=False)
    return model


def freeze(model: _Mlp) -> FrozenClassifier:
    return FrozenClassifier(model.spec, [p.data for p in model.params], seed=getattr(model, "seed", 0))
