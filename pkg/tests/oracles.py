"""Independent reference computations used as test oracles.

Everything here is written from the defining formulas with plain loops or
scalar arithmetic and deliberately shares no code with the package.
"""
import math
import statistics
import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64_stream(seed, n):
    """First ``n`` outputs of SplitMix64 (Steele, Lea and Flood constants)."""
    out = []
    state = seed & MASK64
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


def relu(v):
    return [max(0.0, t) for t in v]


def dense_forward(layers, x, dueling=False):
    """Straight-line forward pass. ``layers`` is a list of (W, b) with W of
    shape (in, out); the last one (two for dueling: value then advantage) is
    the head."""
    h = [float(t) for t in x]
    n_body = len(layers) - (2 if dueling else 1)
    for W, b in layers[:n_body]:
        h = relu([sum(h[i] * W[i][j] for i in range(len(h))) + b[j] for j in range(len(b))])

    def affine(W, b):
        return [sum(h[i] * W[i][j] for i in range(len(h))) + b[j] for j in range(len(b))]

    if not dueling:
        return affine(*layers[-1])
    v = affine(*layers[-2])[0]
    adv = affine(*layers[-1])
    m = sum(adv) / len(adv)
    return [v + a - m for a in adv]


def central_diff(f, x, h=1e-6):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def interval_affine(lo, hi, W, b):
    """Exact interval image of an affine map, endpoint by endpoint."""
    out_lo, out_hi = [], []
    for j in range(len(b)):
        l = u = b[j]
        for i in range(len(lo)):
            w = W[i][j]
            l += w * (lo[i] if w >= 0 else hi[i])
            u += w * (hi[i] if w >= 0 else lo[i])
        out_lo.append(l)
        out_hi.append(u)
    return out_lo, out_hi


def td_loss(q_actor_rows, q_target_next_rows, a, r, done, gamma):
    total = 0.0
    for qa, qn, ai, ri, di in zip(q_actor_rows, q_target_next_rows, a, r, done):
        y = ri + (0.0 if di else gamma * max(qn))
        total += (y - qa[ai]) ** 2
    return total / len(a)


def ly_sum(q_clean, q_tilde, target_max, r, gamma, a, done):
    y = r + (0.0 if done else gamma * target_max)
    s = 0.0
    for k in range(len(q_clean)):
        s += (y - q_tilde[k]) ** 2 if k == a else (q_clean[k] - q_tilde[k]) ** 2
    return s


def gae(rewards, values, dones, last_value, gamma, lam):
    """GAE by explicit forward sums of discounted TD errors."""
    n = len(rewards)
    vals = list(values) + [last_value]
    deltas = []
    for t in range(n):
        nxt = 0.0 if dones[t] else vals[t + 1]
        deltas.append(rewards[t] + gamma * nxt - values[t])
    adv = []
    for t in range(n):
        total, w = 0.0, 1.0
        for k in range(t, n):
            total += w * deltas[k]
            if dones[k]:
                break
            w *= gamma * lam
        adv.append(total)
    return adv


def softmax_list(z):
    m = max(z)
    e = [math.exp(t - m) for t in z]
    s = sum(e)
    return [t / s for t in e]


def clipped_surrogate(p_new, p_old, adv, eta):
    ratio = p_new / p_old
    return min(ratio * adv, min(max(ratio, 1 - eta), 1 + eta) * adv)


def sample_sem(values):
    return statistics.stdev(values) / math.sqrt(len(values))


def crc32(data):
    return zlib.crc32(data) & 0xFFFFFFFF


def adam_scalar(p, g, m, v, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    mh = m / (1 - b1 ** t)
    vh = v / (1 - b2 ** t)
    return p - lr * mh / (math.sqrt(vh) + eps), m, v
