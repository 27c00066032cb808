"""Pure numpy implementations of the per-batch kernels.

Every function here has a twin with the same signature in ``_kernels.pyx``.
All float inputs are float64; integer inputs are int64.
"""

import numpy as np

PROB_FLOOR = 1e-12


def softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Fused softmax, clamped cross-entropy and gradient of the mean loss.

    Returns ``(probs, losses, dlogits)`` where ``dlogits`` is the gradient of
    ``losses.mean()`` with respect to ``logits``.
    """
    n = logits.shape[0]
    probs = softmax_rows(logits)
    rows = np.arange(n)
    p_true = probs[rows, labels]
    losses = -np.log(np.maximum(p_true, PROB_FLOOR))
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return probs, losses, dlogits


def state_features(probs, labels, losses, loss_cap, iter_feat, mean_loss_feat, dev_acc):
    n, c = probs.shape
    out = np.zeros((n, 2 * c + 5))
    rows = np.arange(n)
    out[rows, labels] = 1.0
    out[:, c:2 * c] = probs
    out[:, 2 * c] = np.minimum(losses, loss_cap) / loss_cap
    others = probs.copy()
    others[rows, labels] = -np.inf
    out[:, 2 * c + 1] = probs[rows, labels] - others.max(axis=1)
    out[:, 2 * c + 2] = iter_feat
    out[:, 2 * c + 3] = mean_loss_feat
    out[:, 2 * c + 4] = dev_acc
    return out


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def policy_forward(x, w1, b1, w2, b2):
    """Keep probabilities of the tanh/sigmoid policy, clamped away from 0 and 1."""
    hidden = np.tanh(x @ w1 + b1)
    p = _sigmoid(hidden @ w2 + b2)
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def policy_logprob_grad(x, actions, w1, b1, w2, b2):
    """Sum of log P(a|s) over rows and its gradient w.r.t. each parameter."""
    hidden = np.tanh(x @ w1 + b1)
    p = _sigmoid(hidden @ w2 + b2)
    clamped = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    a = actions.astype(np.float64)
    logp = np.where(actions != 0, np.log(clamped), np.log(1.0 - clamped))
    # the clamp is flat outside its range, so its derivative vanishes there
    dz = np.where(p == clamped, a - p, 0.0)
    gw2 = hidden.T @ dz
    gb2 = dz.sum()
    dpre = np.outer(dz, w2) * (1.0 - hidden * hidden)
    gw1 = x.T @ dpre
    gb1 = dpre.sum(axis=0)
    return float(logp.sum()), gw1, gb1, gw2, float(gb2)


def momentum_step(param, velocity, grad, lr, mu):
    velocity *= mu
    velocity -= lr * grad
    param += velocity


def adam_step(param, m, v, grad, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def loss_ranks(losses):
    """Rank 1 is the largest loss; equal losses rank the lower index first."""
    order = np.argsort(-losses, kind="stable")
    ranks = np.empty(losses.shape[0], dtype=np.int64)
    ranks[order] = np.arange(1, losses.shape[0] + 1)
    return ranks
