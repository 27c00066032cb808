"""Time each kernel under the compiled and pure-Python backends.

    python benchmarks/bench_kernels.py [--repeat 200] [--batch 20]
"""

import argparse
import timeit

import numpy as np

from ndf_lab import kernels
from ndf_lab.features import ModelHistory, featurize_batch
from ndf_lab.harness import StreamTrainer, _new_model
from ndf_lab.data import generate_blobs, epoch_stream
from ndf_lab.config import RunConfig
from ndf_lab.policy import init_policy
from ndf_lab.strategies import NeuralDataFilter


def kernel_cases(batch, rng):
    logits = rng.normal(size=(batch, 10))
    labels = rng.integers(0, 10, batch)
    probs, losses, _ = kernels.softmax_xent(logits, labels)
    feats = featurize_batch(labels, probs, losses, ModelHistory(horizon=2000, iteration=50))
    pol = init_policy(0)
    w, v, g = rng.normal(size=(784, 64)), np.zeros((784, 64)), rng.normal(size=(784, 64))
    m2 = np.zeros((784, 64))
    acts = rng.integers(0, 2, batch)
    return {
        "softmax_xent": lambda: kernels.softmax_xent(logits, labels),
        "state_features": lambda: kernels.state_features(probs, labels, losses, 4.6, 0.1, 0.5, 0.8),
        "policy_forward": lambda: kernels.policy_forward(feats, pol.w1, pol.b1, pol.w2, float(pol.b2[0])),
        "policy_logprob_grad": lambda: kernels.policy_logprob_grad(
            feats, acts, pol.w1, pol.b1, pol.w2, float(pol.b2[0])),
        "momentum_step": lambda: kernels.momentum_step(w, v, g, 0.01, 0.9),
        "adam_step": lambda: kernels.adam_step(w, v, m2, g, 1e-3, 0.9, 0.999, 1e-8, 1),
        "loss_ranks": lambda: kernels.loss_ranks(losses),
    }


def stream_case(batch):
    """One NDF arrival + update on a 784x64x10 model (synthetic inputs)."""
    data = generate_blobs(10, 100, 784, 1.0, 0)
    cfg = RunConfig(hidden="64", batch_size=batch)
    model, opt = _new_model(cfg, data, 0)
    trainer = StreamTrainer(model, opt, NeuralDataFilter(init_policy(0), np.random.default_rng(0)),
                            data, batch, 2000)
    batches = list(epoch_stream(data, batch, 0))
    state = {"k": 0}

    def step():
        for _ in trainer.arrive(batches[state["k"] % len(batches)], 0):
            pass
        state["k"] += 1
    return step


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--batch", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    results = {}
    for name in backends:
        kernels.set_backend(name)
        cases = kernel_cases(args.batch, np.random.default_rng(0))
        cases["stream_step (end to end)"] = stream_case(args.batch)
        for case, fn in cases.items():
            fn()
            results.setdefault(case, {})[name] = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
    print(f"{'kernel':<28}" + "".join(f"{b:>14}" for b in backends) + ("      speedup" if len(backends) > 1 else ""))
    for case, row in results.items():
        line = f"{case:<28}" + "".join(f"{row[b] * 1e6:>12.1f}us" for b in backends)
        if "cython" in row and "python" in row:
            line += f"{row['python'] / row['cython']:>12.2f}x"
        print(line)


if __name__ == "__main__":
    main()
