# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-batch kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
from libc.math cimport exp, log, tanh, sqrt, pow, INFINITY

cdef double PROB_FLOOR = 1e-12


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double ez
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


cdef inline double _clamp(double p) noexcept nogil:
    if p < PROB_FLOOR:
        return PROB_FLOOR
    if p > 1.0 - PROB_FLOOR:
        return 1.0 - PROB_FLOOR
    return p


cdef void _softmax_into(const double[:, ::1] logits, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1]
    cdef double mx, s
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > mx:
                mx = logits[i, j]
        s = 0.0
        for j in range(c):
            out[i, j] = exp(logits[i, j] - mx)
            s += out[i, j]
        for j in range(c):
            out[i, j] = out[i, j] / s


def softmax_rows(logits):
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    out = np.empty_like(logits)
    _softmax_into(logits, out)
    return out


def softmax_xent(logits, labels):
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1]
    probs = np.empty((n, c))
    losses = np.empty(n)
    dlogits = np.empty((n, c))
    cdef double[:, ::1] p = probs
    cdef double[::1] l = losses
    cdef double[:, ::1] d = dlogits
    cdef Py_ssize_t i, j
    cdef double pt
    _softmax_into(logits, p)
    with nogil:
        for i in range(n):
            pt = p[i, y[i]]
            if pt < PROB_FLOOR:
                pt = PROB_FLOOR
            l[i] = -log(pt)
            for j in range(c):
                d[i, j] = p[i, j]
            d[i, y[i]] -= 1.0
            for j in range(c):
                d[i, j] = d[i, j] / n
    return probs, losses, dlogits


def state_features(probs, labels, losses, double loss_cap, double iter_feat,
                   double mean_loss_feat, double dev_acc):
    cdef const double[:, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef const long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const double[::1] l = np.ascontiguousarray(losses, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], c = p.shape[1]
    out = np.zeros((n, 2 * c + 5))
    cdef double[:, ::1] f = out
    cdef Py_ssize_t i, j
    cdef double best, li
    with nogil:
        for i in range(n):
            f[i, y[i]] = 1.0
            best = -INFINITY
            for j in range(c):
                f[i, c + j] = p[i, j]
                if j != y[i] and p[i, j] > best:
                    best = p[i, j]
            li = l[i]
            if li > loss_cap:
                li = loss_cap
            f[i, 2 * c] = li / loss_cap
            f[i, 2 * c + 1] = p[i, y[i]] - best
            f[i, 2 * c + 2] = iter_feat
            f[i, 2 * c + 3] = mean_loss_feat
            f[i, 2 * c + 4] = dev_acc
    return out


cdef void _policy_hidden(const double[:, ::1] x, const double[:, ::1] w1, const double[::1] b1,
                         Py_ssize_t i, double[::1] h) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double s
    for k in range(w1.shape[1]):
        s = b1[k]
        for j in range(x.shape[1]):
            s += x[i, j] * w1[j, k]
        h[k] = tanh(s)


def policy_forward(x, w1, b1, w2, double b2):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef const double[::1] b1v = np.ascontiguousarray(b1, dtype=np.float64)
    cdef const double[::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], hdim = w1v.shape[1]
    out = np.empty(n)
    cdef double[::1] pv = out
    cdef double[::1] h = np.empty(hdim)
    cdef Py_ssize_t i, k
    cdef double z
    with nogil:
        for i in range(n):
            _policy_hidden(xv, w1v, b1v, i, h)
            z = b2
            for k in range(hdim):
                z += h[k] * w2v[k]
            pv[i] = _clamp(_sigmoid(z))
    return out


def policy_logprob_grad(x, actions, w1, b1, w2, double b2):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const long long[::1] a = np.ascontiguousarray(actions, dtype=np.int64)
    cdef const double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef const double[::1] b1v = np.ascontiguousarray(b1, dtype=np.float64)
    cdef const double[::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], d = xv.shape[1], hdim = w1v.shape[1]
    gw1 = np.zeros((d, hdim))
    gb1 = np.zeros(hdim)
    gw2 = np.zeros(hdim)
    cdef double[:, ::1] gw1v = gw1
    cdef double[::1] gb1v = gb1
    cdef double[::1] gw2v = gw2
    cdef double[::1] h = np.empty(hdim)
    cdef double gb2 = 0.0, logp = 0.0
    cdef double z, p, pc, dz, dpre
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(n):
            _policy_hidden(xv, w1v, b1v, i, h)
            z = b2
            for k in range(hdim):
                z += h[k] * w2v[k]
            p = _sigmoid(z)
            pc = _clamp(p)
            if a[i] != 0:
                logp += log(pc)
                dz = 1.0 - p
            else:
                logp += log(1.0 - pc)
                dz = -p
            if pc != p:
                dz = 0.0
            if dz == 0.0:
                continue
            gb2 += dz
            for k in range(hdim):
                gw2v[k] += h[k] * dz
                dpre = dz * w2v[k] * (1.0 - h[k] * h[k])
                gb1v[k] += dpre
                for j in range(d):
                    gw1v[j, k] += xv[i, j] * dpre
    return logp, gw1, gb1, gw2, gb2


cdef void _momentum(double[::1] w, double[::1] vel, const double[::1] g,
                    double lr, double mu) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(w.shape[0]):
        vel[i] = vel[i] * mu
        vel[i] = vel[i] - lr * g[i]
        w[i] = w[i] + vel[i]


def momentum_step(param, velocity, grad, double lr, double mu):
    _momentum(param.reshape(-1), velocity.reshape(-1),
              np.ascontiguousarray(grad, dtype=np.float64).reshape(-1), lr, mu)


cdef void _adam(double[::1] w, double[::1] m, double[::1] v, const double[::1] g,
                double lr, double beta1, double beta2, double eps, double c1,
                double c2) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(w.shape[0]):
        m[i] = m[i] * beta1
        m[i] = m[i] + (1.0 - beta1) * g[i]
        v[i] = v[i] * beta2
        v[i] = v[i] + (1.0 - beta2) * (g[i] * g[i])
        w[i] = w[i] - (lr * (m[i] / c1)) / (sqrt(v[i] / c2) + eps)


def adam_step(param, m, v, grad, double lr, double beta1, double beta2, double eps, int t):
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    _adam(param.reshape(-1), m.reshape(-1), v.reshape(-1),
          np.ascontiguousarray(grad, dtype=np.float64).reshape(-1),
          lr, beta1, beta2, eps, c1, c2)


def loss_ranks(losses):
    cdef const double[::1] l = np.ascontiguousarray(losses, dtype=np.float64)
    cdef Py_ssize_t n = l.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    cdef long long[::1] r = ranks
    cdef Py_ssize_t i, j
    cdef long long above
    with nogil:
        for i in range(n):
            above = 0
            for j in range(n):
                if l[j] > l[i] or (l[j] == l[i] and j < i):
                    above += 1
            r[i] = above + 1
    return ranks
