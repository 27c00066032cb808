"""Run configuration and its ``key = value`` file format.

Blank lines and ``#`` comments are ignored. Keys are the field names of
:class:`RunConfig`; command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

STRATEGIES = ("unfiltered", "spl", "randdrop", "ndf")


@dataclass
class RunConfig:
    # data: "mnist:<dir>" or "blobs:classes=..,per_class=..,dim=..,spread=..,seed=.."
    dataset: str = "blobs:classes=10,per_class=500,dim=20,spread=1.0,seed=0"
    subset: int = 0  # MNIST training subset size, 0 = all 60k
    test_size: int = 0  # MNIST test subset size, 0 = all 10k
    blobs_test_per_class: int = 100

    # base model
    hidden: str = "32"  # comma separated hidden layer widths
    init_scale: float = 0.05
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 20

    # strategy
    strategy: str = "unfiltered"
    spl_epochs: int = 80
    droplog: str = ""
    policy: str = ""
    deterministic_policy: bool = False

    # policy training
    tau: float = 0.90
    horizon: int = 2000
    episodes: int = 50
    gamma: float = 0.99  # carried for completeness; inert with terminal-only reward
    ndf_subset_size: int = 4000
    dev_size: int = 1000
    policy_hidden: int = 12
    policy_bias: float = 2.0
    policy_init_scale: float = 0.01
    policy_lr: float = 1e-3
    tau_index: str = "arrivals"  # or "updates"
    episode_shuffle: str = "per-episode"  # or "fixed": same batch order every episode

    # evaluation and application
    eval_every: int = 25
    apply_updates: int = 2000
    apply_max_epochs: int = 200
    runs: int = 1

    # seeds
    seed_data: int = 0
    seed_policy: int = 0
    seed_strategy: int = 0
    seed_model: int = 0

    def validate(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.tau_index not in ("arrivals", "updates"):
            raise ValueError("tau_index must be 'arrivals' or 'updates'")
        if self.episode_shuffle not in ("per-episode", "fixed"):
            raise ValueError("episode_shuffle must be 'per-episode' or 'fixed'")
        for name in ("episodes", "batch_size", "runs", "horizon", "eval_every",
                     "apply_updates", "spl_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        self.hidden_sizes()
        return self

    def hidden_sizes(self):
        return [int(h) for h in self.hidden.split(",") if h.strip()]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _coerce(field, raw):
    kind = type(field.default)
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: not a boolean: {raw!r}")
    return kind(raw.strip())


def parse_config_text(text, base=None):
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(fields[key], raw)
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path, base=None):
    return parse_config_text(Path(path).read_text(), base)


def dump_config(config):
    return "".join(f"{f.name} = {getattr(config, f.name)}\n" for f in dataclasses.fields(config))
