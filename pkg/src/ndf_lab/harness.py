"""Policy training episodes, full-data application and run bookkeeping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (DataError, SplitSpec, epoch_stream, generate_blobs, load_mnist_dir,
                   split, subsample)
from .features import ModelHistory, feature_dim, update_history
from .nncore import InputError, MlpModel, MomentumSGD, evaluate_accuracy, loss_and_grad
from .nncore import predict_with_losses
from .policy import RewardBaseline, init_policy, load_policy, reinforce_update, save_policy
from .strategies import (AccumulationBuffer, BatchContext, DropLog, HardnessHistogram,
                         NeuralDataFilter, RandDrop, SelfPacedLearning, Unfiltered,
                         read_droplog)

log = logging.getLogger(__name__)


def derive_seed(*keys):
    """Stable 63-bit seed from a mix of ints and strings."""
    words = []
    for k in keys:
        if isinstance(k, str):
            words.extend(k.encode())
        else:
            words.append(int(k))
    return int(np.random.SeedSequence(words).generate_state(2, np.uint64)[0] >> np.uint64(1))


def fmt(x):
    return f"{x:.6g}"


def reward_for(i_tau, horizon):
    if not 1 <= i_tau <= horizon:
        raise ValueError(f"i_tau={i_tau} outside [1, {horizon}]")
    return -math.log(i_tau / horizon)


@dataclass
class EpisodeRecord:
    episode: int
    i_tau: int
    reward: float
    baseline: float = 0.0
    length: int = 0


@dataclass(frozen=True)
class CurvePoint:
    effective_instances: int
    test_accuracy: float


@dataclass
class RunResult:
    run_id: int
    strategy: str
    curve: list
    hardness: HardnessHistogram
    droplog: DropLog
    updates: int = 0
    arrivals: int = 0
    filtered: int = 0
    pending: int = 0


class StreamTrainer:
    """Feeds arriving mini-batches through a strategy into the base model."""

    def __init__(self, model, optimizer, strategy, dataset, batch_size, horizon):
        self.model = model
        self.optimizer = optimizer
        self.strategy = strategy
        self.dataset = dataset
        self.batch_size = batch_size
        self.buffer = AccumulationBuffer(batch_size)
        self.history = ModelHistory(horizon=horizon)
        self.hardness = HardnessHistogram(batch_size)
        self.droplog = DropLog()
        self.arrivals = 0
        self.updates = 0
        self.filtered = 0

    def set_dev_accuracy(self, acc):
        self.history = replace(self.history, latest_dev_accuracy=float(acc))

    def arrive(self, batch, epoch):
        """Process one arrived batch; yields the update count after each update."""
        probs, losses = predict_with_losses(self.model, batch.features, batch.labels)
        mask = np.asarray(self.strategy.select(
            BatchContext(batch, losses, probs, self.history, epoch)), dtype=bool)
        if mask.shape != (len(batch),):
            raise RuntimeError(f"strategy returned mask of shape {mask.shape}")
        n_drop = int((~mask).sum())
        self.hardness.record(losses, mask, epoch)
        self.droplog.record(epoch, len(batch), n_drop)
        self.filtered += n_drop
        self.history = update_history(self.history, losses)
        self.arrivals += 1
        for rows in self.buffer.push(batch.rows[mask]):
            assert len(rows) == self.batch_size
            _, _, grads = loss_and_grad(self.model, self.dataset.features[rows],
                                        self.dataset.labels[rows])
            self.optimizer.step(self.model.params(), grads)
            self.updates += 1
            yield self.updates


def _model_sizes(config, dataset):
    return [dataset.feature_dim, *config.hidden_sizes(), dataset.num_classes]


def _new_model(config, dataset, seed):
    model = MlpModel.init(_model_sizes(config, dataset), seed, scale=config.init_scale)
    return model, MomentumSGD(model.params(), lr=config.lr, momentum=config.momentum)


def run_episode(policy, train, dev, config, episode, rng):
    """One policy-training episode; returns ``(EpisodeRecord, TrajectoryLog)``.

    The base model is re-initialised from the same seed every episode. The
    episode stops at the first evaluation with dev accuracy >= tau, or when
    the horizon is used up.
    """
    config.validate()
    if config.batch_size > len(train):
        raise InputError("batch size exceeds the policy training set")
    model, opt = _new_model(config, train, derive_seed(config.seed_model, "episode-model"))
    strategy = NeuralDataFilter(policy, rng, record=True)
    trainer = StreamTrainer(model, opt, strategy, train, config.batch_size, config.horizon)
    use_updates = config.tau_index == "updates"
    order_key = episode if config.episode_shuffle == "per-episode" else 0
    i_tau = None
    epoch = 0
    while i_tau is None:
        seed = derive_seed(config.seed_data, "episode", order_key, epoch)
        for batch in epoch_stream(train, config.batch_size, seed):
            for u in trainer.arrive(batch, epoch):
                if u % config.eval_every:
                    continue
                acc = evaluate_accuracy(model, dev.features, dev.labels)
                trainer.set_dev_accuracy(acc)
                if acc >= config.tau:
                    i_tau = min(u if use_updates else trainer.arrivals, config.horizon)
                    break
                if use_updates and u >= config.horizon:
                    i_tau = config.horizon
                    break
            if i_tau is None and not use_updates and trainer.arrivals >= config.horizon:
                i_tau = config.horizon
            if i_tau is not None:
                break
        epoch += 1
    reward = reward_for(i_tau, config.horizon)
    return EpisodeRecord(episode, i_tau, reward, length=trainer.arrivals), strategy.trajectory


@dataclass
class PolicyTrainingResult:
    best_policy: object
    best_episode: int
    final_policy: object
    baseline: RewardBaseline
    records: list = field(default_factory=list)


def train_policy(train, dev, config, episodes_csv=None):
    """Run ``config.episodes`` episodes, each followed by one REINFORCE update.

    The returned best policy is the post-update snapshot of the episode with
    the highest reward (earliest on ties).
    """
    config.validate()
    policy = init_policy(config.seed_policy, input_dim=feature_dim(train.num_classes),
                         hidden_dim=config.policy_hidden, init_scale=config.policy_init_scale,
                         final_bias=config.policy_bias, lr=config.policy_lr)
    baseline = RewardBaseline()
    rng = np.random.default_rng(derive_seed(config.seed_policy, "actions"))
    result = PolicyTrainingResult(None, 0, policy, baseline)
    best_reward = -math.inf
    for episode in range(1, config.episodes + 1):
        record, trajectory = run_episode(policy, train, dev, config, episode, rng)
        reinforce_update(policy, trajectory, record.reward, baseline)
        record.baseline = baseline.value
        result.records.append(record)
        if record.reward > best_reward:
            best_reward = record.reward
            result.best_policy = policy.copy()
            result.best_episode = episode
        log.info("episode %d: i_tau=%d reward=%.4f baseline=%.4f", episode, record.i_tau,
                 record.reward, record.baseline)
    if episodes_csv is not None:
        write_episodes_csv(episodes_csv, result.records)
    return result


def write_episodes_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "i_tau", "reward", "baseline"])
        for r in records:
            w.writerow([r.episode, r.i_tau, fmt(r.reward), fmt(r.baseline)])


def read_episodes_csv(path):
    with open(path, newline="") as fh:
        return [EpisodeRecord(int(r["episode"]), int(r["i_tau"]), float(r["reward"]),
                              float(r["baseline"])) for r in csv.DictReader(fh)]


def apply_strategy(train, test, dev, strategy, config, run_id=0):
    """Train a fresh base model on ``train`` under ``strategy``.

    Runs for ``config.apply_updates`` updates (or until ``apply_max_epochs``
    epochs pass) and records test accuracy every ``eval_every`` updates.
    Dev accuracy at the same cadence feeds the history features.
    """
    config.validate()
    model, opt = _new_model(config, train, derive_seed(config.seed_model, "apply", run_id))
    trainer = StreamTrainer(model, opt, strategy, train, config.batch_size, config.horizon)
    curve = []
    done = False
    for epoch in range(config.apply_max_epochs):
        seed = derive_seed(config.seed_data, "apply", run_id, epoch)
        for batch in epoch_stream(train, config.batch_size, seed):
            for u in trainer.arrive(batch, epoch):
                if u % config.eval_every == 0:
                    curve.append(CurvePoint(u * config.batch_size,
                                            evaluate_accuracy(model, test.features, test.labels)))
                    trainer.set_dev_accuracy(evaluate_accuracy(model, dev.features, dev.labels))
                if u >= config.apply_updates:
                    done = True
                    break
            if done:
                break
        if done:
            break
    return RunResult(run_id, strategy.name, curve, trainer.hardness, trainer.droplog,
                     updates=trainer.updates, arrivals=trainer.arrivals,
                     filtered=trainer.filtered, pending=trainer.buffer.pending)


def average_runs(curves):
    """Pointwise mean test accuracy over runs sharing one evaluation grid.

    Runs may stop at different lengths; the result covers their common
    prefix. Grids that disagree inside that prefix raise :class:`InputError`.
    """
    if not curves:
        raise InputError("no runs to average")
    n = min(len(c) for c in curves)
    if n == 0:
        raise InputError("a run has an empty curve")
    xs = [p.effective_instances for p in curves[0][:n]]
    for c in curves[1:]:
        if [p.effective_instances for p in c[:n]] != xs:
            raise InputError("runs were evaluated on different grids")
    acc = np.array([[p.test_accuracy for p in c[:n]] for c in curves])
    return [CurvePoint(x, float(a)) for x, a in zip(xs, acc.mean(axis=0))]


def instances_to_reach(curve, target):
    """Effective instances at the first point reaching ``target``, else None."""
    for p in curve:
        if p.test_accuracy >= target:
            return p.effective_instances
    return None


# ---------------------------------------------------------------- pipelines


def parse_blobs_spec(spec):
    keys = {"classes": 10, "per_class": 500, "dim": 20, "spread": 1.0, "seed": 0}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        k, _, v = item.partition("=")
        if k not in keys:
            raise ValueError(f"unknown blobs key {k!r}")
        keys[k] = type(keys[k])(v)
    return keys


def load_datasets(config):
    """Returns ``(train, test)`` for ``config.dataset``."""
    kind, _, arg = config.dataset.partition(":")
    if kind == "mnist":
        train = load_mnist_dir(arg, "train")
        test = load_mnist_dir(arg, "test")
        if config.subset:
            train = subsample(train, config.subset, derive_seed(config.seed_data, "subset"))
        if config.test_size:
            test = subsample(test, config.test_size, derive_seed(config.seed_data, "test"))
        return train, test
    if kind == "blobs":
        b = parse_blobs_spec(arg)
        per_class = b["per_class"] + config.blobs_test_per_class
        full = generate_blobs(b["classes"], per_class, b["dim"], b["spread"], b["seed"])
        cls_pos = np.arange(len(full)) % per_class
        return (full.take(np.flatnonzero(cls_pos < b["per_class"])),
                full.take(np.flatnonzero(cls_pos >= b["per_class"])))
    raise DataError(f"unknown dataset kind {kind!r}")


def policy_splits(train, config):
    spec = SplitSpec(config.ndf_subset_size, config.dev_size, derive_seed(config.seed_data, "split"))
    return split(train, spec)


def build_strategy(config, run_id, ratios=None, policy=None):
    name = config.strategy
    if name == "unfiltered":
        return Unfiltered()
    if name == "spl":
        return SelfPacedLearning(config.batch_size, config.spl_epochs)
    if name == "randdrop":
        if ratios is None:
            if not config.droplog:
                raise InputError("randdrop needs a drop log")
            ratios = read_droplog(config.droplog)
        return RandDrop(ratios, np.random.default_rng(
            derive_seed(config.seed_strategy, "randdrop", run_id)))
    if name == "ndf":
        if policy is None:
            if not config.policy or not Path(config.policy).is_file():
                raise InputError(f"ndf needs a policy checkpoint, got {config.policy!r}")
            policy, _ = load_policy(config.policy)
        return NeuralDataFilter(policy, np.random.default_rng(
            derive_seed(config.seed_strategy, "ndf", run_id)),
            deterministic=config.deterministic_policy)
    raise InputError(f"unknown strategy {name!r}")


def write_curve_csv(path, results, append=False):
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(["run_id", "strategy", "effective_instances", "test_accuracy"])
        for r in results:
            for p in r.curve:
                w.writerow([r.run_id, r.strategy, p.effective_instances, fmt(p.test_accuracy)])


def read_curve_csv(path):
    """``{strategy: {run_id: [CurvePoint, ...]}}``"""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            runs = out.setdefault(row["strategy"], {})
            runs.setdefault(int(row["run_id"]), []).append(
                CurvePoint(int(row["effective_instances"]), float(row["test_accuracy"])))
    return out


def run_strategy(config, out_dir=None, datasets=None, policy=None, ratios_by_run=None):
    """Apply ``config.strategy`` for ``config.runs`` seeded runs.

    Writes ``curve.csv`` plus ``run_<id>/filterlog.csv`` and
    ``run_<id>/droplog.csv`` under ``out_dir`` when given.
    """
    config.validate()
    train, test = datasets or load_datasets(config)
    _, dev, _ = policy_splits(train, config)
    results = []
    for run_id in range(config.runs):
        ratios = ratios_by_run[run_id] if ratios_by_run is not None else None
        strategy = build_strategy(config, run_id, ratios=ratios, policy=policy)
        result = apply_strategy(train, test, dev, strategy, config, run_id)
        results.append(result)
        log.info("%s run %d: %d updates, %d filtered, final acc %.4f", config.strategy, run_id,
                 result.updates, result.filtered,
                 result.curve[-1].test_accuracy if result.curve else float("nan"))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_curve_csv(out / "curve.csv", results)
        for r in results:
            run_dir = out / f"run_{r.run_id}"
            run_dir.mkdir(exist_ok=True)
            r.hardness.write_csv(run_dir / "filterlog.csv")
            r.droplog.write_csv(run_dir / "droplog.csv")
    return results


def run_policy_training(config, out_dir=None, datasets=None):
    """Sample D', train the policy, and save ``policy.npz`` + ``episodes.csv``."""
    config.validate()
    train, _ = datasets or load_datasets(config)
    ptrain, dev, _ = policy_splits(train, config)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = train_policy(ptrain, dev, config,
                          episodes_csv=out / "episodes.csv" if out is not None else None)
    if out is not None:
        save_policy(out / "policy.npz", result.best_policy)
        save_policy(out / "policy_final.npz", result.final_policy, result.baseline)
    return result
