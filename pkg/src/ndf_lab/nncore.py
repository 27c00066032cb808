"""Dense feed-forward classifier with manual backprop, plus its optimizers.

Weights are stored as ``(in, out)`` float64 arrays and applied as ``x @ W + b``.
Hidden layers use tanh; the output layer is a softmax.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class InputError(ValueError):
    pass


class MlpModel:
    def __init__(self, layers):
        self.layers = [(np.ascontiguousarray(w, dtype=np.float64),
                        np.ascontiguousarray(b, dtype=np.float64)) for w, b in layers]
        for k, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {k}: weights {w.shape} vs biases {b.shape}")
            if k and w.shape[0] != self.layers[k - 1][0].shape[1]:
                raise ShapeError(f"layer {k} input {w.shape[0]} does not chain "
                                 f"from {self.layers[k - 1][0].shape[1]}")

    @classmethod
    def init(cls, sizes, seed, scale=0.05):
        """Uniform(-scale, scale) weights, zero biases."""
        rng = np.random.default_rng(seed)
        layers = [(rng.uniform(-scale, scale, size=(n_in, n_out)), np.zeros(n_out))
                  for n_in, n_out in zip(sizes[:-1], sizes[1:])]
        return cls(layers)

    @property
    def sizes(self):
        return [self.layers[0][0].shape[0]] + [w.shape[1] for w, _ in self.layers]

    @property
    def num_classes(self):
        return self.layers[-1][0].shape[1]

    def params(self):
        return [p for layer in self.layers for p in layer]

    def copy(self):
        return MlpModel([(w.copy(), b.copy()) for w, b in self.layers])


def _hidden_pass(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.sizes[0]:
        raise ShapeError(f"expected (n, {model.sizes[0]}) features, got {x.shape}")
    acts = [x]
    for w, b in model.layers[:-1]:
        acts.append(np.tanh(acts[-1] @ w + b))
    w, b = model.layers[-1]
    return acts, acts[-1] @ w + b


def forward(model, x):
    """Class probabilities for each row of ``x``."""
    _, logits = _hidden_pass(model, x)
    return kernels.softmax_rows(logits)


def predict_with_losses(model, x, labels):
    """Probabilities and per-instance losses without computing gradients."""
    labels = _check_labels(labels, model.num_classes, len(x))
    _, logits = _hidden_pass(model, x)
    probs, losses, _ = kernels.softmax_xent(logits, labels)
    return probs, losses


def _check_labels(labels, num_classes, n):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise InputError("empty batch")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise InputError(f"labels must lie in [0, {num_classes})")
    return labels


def loss_and_grad(model, x, labels):
    """Per-instance cross-entropy, its mean, and gradients of the mean.

    Gradients come back as a list parallel to ``model.params()``.
    """
    labels = _check_labels(labels, model.num_classes, len(x))
    acts, logits = _hidden_pass(model, x)
    _, losses, delta = kernels.softmax_xent(logits, labels)
    grads = [None] * (2 * len(model.layers))
    for k in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[k]
        a_in = acts[k]
        grads[2 * k] = a_in.T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ w.T) * (1.0 - a_in * a_in)
    return losses, float(losses.mean()), grads


def evaluate_accuracy(model, x, labels):
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("cannot evaluate accuracy on an empty dataset")
    probs = forward(model, x)
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def _check_shapes(params, grads):
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"parameter {np.shape(p)} vs gradient {np.shape(g)}")


class MomentumSGD:
    """``v <- mu*v - lr*g; W <- W + v``. With ``mu=0`` this is plain SGD."""

    kind = "momentum-sgd"

    def __init__(self, params, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        _check_shapes(params, grads)
        _check_shapes(self.velocity, grads)
        for p, v, g in zip(params, self.velocity, grads):
            kernels.momentum_step(p, v, g, self.lr, self.momentum)


class Adam:
    kind = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        """Descend along ``grads`` (negate them to ascend)."""
        _check_shapes(params, grads)
        _check_shapes(self.m, grads)
        self.t += 1
        for p, m, v, g in zip(params, self.m, self.v, grads):
            kernels.adam_step(p, m, v, g, self.lr, self.beta1, self.beta2, self.eps, self.t)
