"""Per-instance state features for the filtration policy.

Layout for ``C`` classes (``2C + 5`` values, 25 for MNIST):

====================  =============================================
``[0, C)``            one-hot label
``[C, 2C)``           predicted class probabilities
``2C``                instance loss, ``min(loss, cap) / cap``
``2C + 1``            margin ``p(y|x) - max_{y' != y} p(y'|x)``
``2C + 2``            iteration / horizon, clipped to 1
``2C + 3``            running mean training loss, normalized like the loss
``2C + 4``            latest dev accuracy
====================  =============================================

The loss cap is ``2 ln C`` so a uniform prediction maps to 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .nncore import ShapeError


def feature_dim(num_classes):
    return 2 * num_classes + 5


def loss_cap(num_classes):
    return 2.0 * math.log(num_classes)


@dataclass(frozen=True)
class ModelHistory:
    horizon: int
    iteration: int = 0
    instances_seen: int = 0
    loss_sum: float = 0.0
    latest_dev_accuracy: float = 0.0

    @property
    def running_mean_train_loss(self):
        return self.loss_sum / self.instances_seen if self.instances_seen else 0.0


def update_history(history, losses, dev_accuracy=None):
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("update_history needs at least one loss")
    return replace(
        history,
        iteration=history.iteration + 1,
        instances_seen=history.instances_seen + losses.size,
        loss_sum=history.loss_sum + float(losses.sum()),
        latest_dev_accuracy=(history.latest_dev_accuracy if dev_accuracy is None
                             else float(dev_accuracy)),
    )


def _history_terms(history, num_classes):
    cap = loss_cap(num_classes)
    iter_feat = min(history.iteration / history.horizon, 1.0)
    mean_feat = min(history.running_mean_train_loss, cap) / cap
    return cap, iter_feat, mean_feat


def featurize_batch(labels, probs, losses, history):
    """Feature matrix, one row per instance of the arrived mini-batch."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ShapeError(f"probabilities {probs.shape} do not match {labels.shape[0]} labels")
    num_classes = probs.shape[1]
    cap, iter_feat, mean_feat = _history_terms(history, num_classes)
    return kernels.state_features(probs, labels, np.asarray(losses, dtype=np.float64), cap,
                                  iter_feat, mean_feat, history.latest_dev_accuracy)


def featurize(label, prediction, loss, history, num_classes=10):
    """Feature vector for a single instance."""
    prediction = np.asarray(prediction, dtype=np.float64)
    if prediction.shape != (num_classes,):
        raise ShapeError(f"prediction has shape {prediction.shape}, expected ({num_classes},)")
    return featurize_batch([label], prediction[None, :], [loss], history)[0]
