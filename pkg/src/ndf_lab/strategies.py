"""Filtration strategies and the bookkeeping shared by all of them.

A strategy sees one arrived mini-batch at a time and returns a boolean keep
mask. Kept instances go through an :class:`AccumulationBuffer` so that
every model update consumes exactly ``M`` instances, whatever the strategy.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .features import featurize_batch
from .policy import TrajectoryLog, decide

NUM_BUCKETS = 5


@dataclass
class BatchContext:
    batch: object  # data.MiniBatch
    losses: np.ndarray
    probs: np.ndarray
    history: object  # features.ModelHistory
    epoch: int


class FiltrationStrategy:
    name = "base"

    def select(self, ctx):
        raise NotImplementedError


class Unfiltered(FiltrationStrategy):
    name = "unfiltered"

    def select(self, ctx):
        return np.ones(len(ctx.losses), dtype=bool)


def spl_threshold(batch_size, spl_epochs, epoch):
    """How many of the largest-loss instances SPL filters in ``epoch``.

    Falls linearly from ``M - 1`` at epoch 0 to 0 at epoch ``S``; rounds half up.
    """
    if spl_epochs < 1:
        raise ValueError("spl_epochs must be >= 1")
    raw = (batch_size - 1) * (1.0 - epoch / spl_epochs)
    return max(0, math.floor(raw + 0.5))


def spl_mask(losses, k):
    """Filter the ``k`` largest losses; on ties the earlier instance goes first."""
    losses = np.asarray(losses, dtype=np.float64)
    if not 0 <= k < len(losses):
        raise ValueError(f"k={k} must lie in [0, {len(losses)})")
    return kernels.loss_ranks(losses) > k


class SelfPacedLearning(FiltrationStrategy):
    name = "spl"

    def __init__(self, batch_size, spl_epochs):
        self.batch_size = batch_size
        self.spl_epochs = spl_epochs

    def select(self, ctx):
        return spl_mask(ctx.losses, spl_threshold(self.batch_size, self.spl_epochs, ctx.epoch))


def randdrop_mask(batch_size, ratio, rng):
    """Filter each instance independently with probability ``ratio``."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"drop ratio {ratio} outside [0, 1]")
    return rng.random(batch_size) >= ratio


class RandDrop(FiltrationStrategy):
    """Replays per-epoch filter ratios with uniform random filtering.

    Epochs past the end of the log reuse its last ratio.
    """

    name = "randdrop"

    def __init__(self, ratios, rng):
        if not ratios:
            raise ValueError("RandDrop needs at least one logged ratio")
        self.ratios = dict(ratios)
        self.rng = rng

    def ratio_for(self, epoch):
        earlier = [e for e in self.ratios if e <= epoch]
        return self.ratios[max(earlier) if earlier else min(self.ratios)]

    def select(self, ctx):
        return randdrop_mask(len(ctx.losses), self.ratio_for(ctx.epoch), self.rng)


class NeuralDataFilter(FiltrationStrategy):
    """Keeps instances according to a learned policy.

    When ``record`` is set, every (features, action) pair is appended to
    ``self.trajectory`` for a later REINFORCE update.
    """

    name = "ndf"

    def __init__(self, policy, rng, deterministic=False, record=False):
        self.policy = policy
        self.rng = rng
        self.deterministic = deterministic
        self.trajectory = TrajectoryLog() if record else None

    def select(self, ctx):
        feats = featurize_batch(ctx.batch.labels, ctx.probs, ctx.losses, ctx.history)
        decision = decide(self.policy, feats, self.rng, deterministic=self.deterministic)
        if self.trajectory is not None:
            self.trajectory.record(feats, decision.keep_mask)
        return decision.keep_mask


class AccumulationBuffer:
    """FIFO of kept rows that releases them in groups of exactly ``capacity``."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._pending = np.empty(0, dtype=np.int64)

    @property
    def pending(self):
        return len(self._pending)

    def push(self, rows):
        queue = np.concatenate([self._pending, np.asarray(rows, dtype=np.int64)])
        n_full = len(queue) // self.capacity
        cut = n_full * self.capacity
        self._pending = queue[cut:]
        return [queue[k * self.capacity:(k + 1) * self.capacity] for k in range(n_full)]


def bucket_of_rank(rank, batch_size):
    return (rank - 1) * NUM_BUCKETS // batch_size


def bucket_names(batch_size):
    """Rank range labels such as ``1-4`` for each of the five buckets."""
    names = []
    for b in range(NUM_BUCKETS):
        ranks = [r for r in range(1, batch_size + 1) if bucket_of_rank(r, batch_size) == b]
        names.append(f"{ranks[0]}-{ranks[-1]}" if ranks else "empty")
    return names


class HardnessHistogram:
    """Per-epoch counts of filtered instances by within-batch loss rank."""

    def __init__(self, batch_size):
        self.batch_size = batch_size
        self.counts = defaultdict(lambda: np.zeros(NUM_BUCKETS, dtype=np.int64))
        self.filtered = defaultdict(int)

    def record(self, losses, keep_mask, epoch):
        keep_mask = np.asarray(keep_mask, dtype=bool)
        counts = self.counts[epoch]
        if keep_mask.all():
            return self
        ranks = kernels.loss_ranks(np.asarray(losses, dtype=np.float64))[~keep_mask]
        np.add.at(counts, bucket_of_rank(ranks, self.batch_size), 1)
        self.filtered[epoch] += int((~keep_mask).sum())
        return self

    def rows(self):
        names = bucket_names(self.batch_size)
        for epoch in sorted(self.counts):
            for b, name in enumerate(names):
                yield epoch, name, int(self.counts[epoch][b])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "bucket", "filtered_count"])
            w.writerows(self.rows())


class DropLog:
    """Fraction of arrived instances filtered in each epoch."""

    def __init__(self):
        self.arrived = defaultdict(int)
        self.dropped = defaultdict(int)

    def record(self, epoch, arrived, dropped):
        self.arrived[epoch] += arrived
        self.dropped[epoch] += dropped

    def ratios(self):
        return {e: self.dropped[e] / self.arrived[e] for e in sorted(self.arrived)}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "ratio"])
            for epoch, ratio in self.ratios().items():
                w.writerow([epoch, f"{ratio:.6g}"])


def read_droplog(path):
    ratios = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            ratio = float(row["ratio"])
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"{path}: ratio {ratio} outside [0, 1]")
            ratios[int(row["epoch"])] = ratio
    if not ratios:
        raise ValueError(f"{path}: no epochs logged")
    return ratios
