"""Filtration policy: a tanh/sigmoid network trained with REINFORCE.

The network maps a state feature vector to the probability of *keeping* the
instance (action 1); action 0 filters it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kernels
from .nncore import Adam, ShapeError

CHECKPOINT_VERSION = 1
BASELINE_DECAY = Fraction(4, 5)


class PolicyNet:
    def __init__(self, w1, b1, w2, b2, lr=1e-3):
        self.w1 = np.ascontiguousarray(w1, dtype=np.float64)
        self.b1 = np.ascontiguousarray(b1, dtype=np.float64)
        self.w2 = np.ascontiguousarray(w2, dtype=np.float64)
        self.b2 = np.array([float(np.ravel(b2)[0])])
        hidden = self.w1.shape[1]
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden,):
            raise ShapeError("policy parameter shapes do not chain")
        self.optimizer = Adam(self.params(), lr=lr)

    @property
    def input_dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def keep_probs(self, feats):
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.input_dim:
            raise ShapeError(f"expected (n, {self.input_dim}) features, got {feats.shape}")
        return kernels.policy_forward(feats, self.w1, self.b1, self.w2, float(self.b2[0]))

    def logprob_grad(self, feats, actions):
        """``sum log P(a|s)`` and its gradient, ordered like :meth:`params`."""
        logp, gw1, gb1, gw2, gb2 = kernels.policy_logprob_grad(
            feats, np.asarray(actions, dtype=np.int64), self.w1, self.b1, self.w2,
            float(self.b2[0]))
        return logp, [gw1, gb1, gw2, np.array([gb2])]

    def copy(self):
        clone = PolicyNet(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
                          lr=self.optimizer.lr)
        opt = clone.optimizer
        opt.t = self.optimizer.t
        opt.m = [m.copy() for m in self.optimizer.m]
        opt.v = [v.copy() for v in self.optimizer.v]
        return clone


def init_policy(seed, input_dim=25, hidden_dim=12, init_scale=0.01, final_bias=2.0, lr=1e-3):
    """Weights ~ U(-init_scale, init_scale); biases 0 except the output bias."""
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-init_scale, init_scale, size=(input_dim, hidden_dim))
    w2 = rng.uniform(-init_scale, init_scale, size=hidden_dim)
    return PolicyNet(w1, np.zeros(hidden_dim), w2, final_bias, lr=lr)


@dataclass
class PolicyDecision:
    keep_mask: np.ndarray
    keep_probs: np.ndarray
    log_prob_sum: float


def decide(policy, feats, rng, deterministic=False):
    """Sample keep/filter for each row independently.

    With ``deterministic`` an instance is kept iff its keep probability is at
    least 0.5 and ``rng`` is not touched.
    """
    probs = policy.keep_probs(feats)
    if deterministic:
        keep = probs >= 0.5
    else:
        keep = rng.random(len(probs)) < probs
    log_prob = float(np.sum(np.where(keep, np.log(probs), np.log1p(-probs))))
    return PolicyDecision(keep, probs, log_prob)


@dataclass
class RewardBaseline:
    """Moving average ``b_l = 0.8 b_{l-1} + 0.2 r_l`` with ``b_0 = 0``.

    Kept as an exact rational so the recurrence and its closed form agree
    to the last bit after rounding.
    """

    exact: Fraction = Fraction(0)
    episodes: int = 0

    @property
    def value(self):
        return float(self.exact)

    def update(self, reward):
        self.exact = BASELINE_DECAY * self.exact + (1 - BASELINE_DECAY) * Fraction(reward)
        self.episodes += 1
        return self.value


@dataclass
class TrajectoryLog:
    features: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    def record(self, feats, keep_mask):
        self.features.append(np.asarray(feats, dtype=np.float64))
        self.actions.append(np.asarray(keep_mask, dtype=np.int64))

    def __len__(self):
        return len(self.features)

    def stacked(self):
        return np.concatenate(self.features), np.concatenate(self.actions)


def reinforce_update(policy, trajectory, reward, baseline):
    """One REINFORCE step with terminal-only reward, then advance the baseline.

    Every step is credited with ``reward - b_{l-1}``. A zero advantage leaves
    the policy and its optimizer untouched. Returns the advantage.
    """
    if not len(trajectory):
        raise ValueError("empty trajectory")
    advantage = float(reward) - baseline.value
    if advantage != 0.0:
        feats, actions = trajectory.stacked()
        _, grads = policy.logprob_grad(feats, actions)
        # Adam descends, so negate to ascend advantage * sum log P
        policy.optimizer.step(policy.params(), [-advantage * g for g in grads])
    baseline.update(reward)
    return advantage


def save_policy(path, policy, baseline=None):
    baseline = baseline or RewardBaseline()
    opt = policy.optimizer
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "w1": policy.w1, "b1": policy.b1, "w2": policy.w2, "b2": policy.b2,
        "lr": np.array(opt.lr), "adam_t": np.array(opt.t),
        "baseline": np.array(str(baseline.exact)),
        "baseline_episodes": np.array(baseline.episodes),
    }
    for k, (m, v) in enumerate(zip(opt.m, opt.v)):
        arrays[f"adam_m{k}"] = m
        arrays[f"adam_v{k}"] = v
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_policy(path):
    """Returns ``(policy, baseline)`` exactly as saved."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"policy checkpoint {path} not found")
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        policy = PolicyNet(z["w1"], z["b1"], z["w2"], z["b2"], lr=float(z["lr"]))
        policy.optimizer.t = int(z["adam_t"])
        policy.optimizer.m = [z[f"adam_m{k}"].copy() for k in range(4)]
        policy.optimizer.v = [z[f"adam_v{k}"].copy() for k in range(4)]
        baseline = RewardBaseline(Fraction(str(z["baseline"])), int(z["baseline_episodes"]))
    return policy, baseline
