"""Small dense ReLU networks in numpy.

Everything here works on 64-bit arrays and accepts either a single
observation ``(d,)`` or a batch ``(B, d)``. Weights are stored ``(fan_in,
fan_out)`` so a layer computes ``x @ W + b``.

Parameter layout: one ``(W, b)`` pair per hidden layer, followed by the
output head. A plain head is one affine map to ``|A|`` outputs; a dueling
head is a value map to 1 output followed by an advantage map to ``|A|``
outputs, both reading the last hidden activation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple
    dueling: bool = False

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ShapeError("a network needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ShapeError(f"layer sizes must be positive, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def n_hidden(self):
        return len(self.layer_sizes) - 2

    def shapes(self):
        """(W shape, b shape) for every affine map, in parameter order."""
        s = self.layer_sizes
        out = [((s[i], s[i + 1]), (s[i + 1],)) for i in range(self.n_hidden)]
        last = s[-2]
        if self.dueling:
            out.append(((last, 1), (1,)))
            out.append(((last, s[-1]), (s[-1],)))
        else:
            out.append(((last, s[-1]), (s[-1],)))
        return out

    def to_dict(self):
        return {"layer_sizes": list(self.layer_sizes), "dueling": self.dueling}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["layer_sizes"]), bool(d.get("dueling", False)))


@dataclass
class Parameters:
    weights: list
    biases: list

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays):
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def copy(self):
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return Parameters([np.zeros_like(w) for w in self.weights],
                          [np.zeros_like(b) for b in self.biases])

    def num_params(self):
        return sum(a.size for a in self.arrays())

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def checksum(self):
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def is_finite(self):
        return bool(np.isfinite(sum(float(a.sum()) for a in self.arrays())))

    def scaled_add(self, other, scale=1.0):
        """Return ``self + scale * other``."""
        return Parameters([w + scale * ow for w, ow in zip(self.weights, other.weights)],
                          [b + scale * ob for b, ob in zip(self.biases, other.biases)])

    def check_shapes(self, spec):
        expected = spec.shapes()
        if len(expected) != len(self.weights) or len(self.weights) != len(self.biases):
            raise ShapeError(f"expected {len(expected)} affine maps, got {len(self.weights)}")
        for (ws, bs), w, b in zip(expected, self.weights, self.biases):
            if w.shape != ws or b.shape != bs:
                raise ShapeError(f"parameter shape {w.shape}/{b.shape} != {ws}/{bs}")


@dataclass
class IntervalBounds:
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, values, tol=0.0):
        return bool(np.all(values >= self.lower - tol) and np.all(values <= self.upper + tol))


def init_params(spec, seed):
    """Glorot-uniform weights in +/- sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for ws, bs in spec.shapes():
        limit = np.sqrt(6.0 / (ws[0] + ws[1]))
        weights.append(rng.uniform(-limit, limit, size=ws))
        biases.append(np.zeros(bs))
    return Parameters(weights, biases)


def _as_input(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != spec.input_dim:
        raise ShapeError(f"input of shape {x.shape} does not match input dim {spec.input_dim}")
    return x


def dueling_combine(v, adv):
    """Q = V + A - mean(A); works on scalars/vectors or batched ``(B, 1)``/``(B, n)``."""
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size == 0 or adv.shape[-1] == 0:
        raise ShapeError("advantage vector is empty")
    return v + adv - adv.sum(axis=-1, keepdims=True) / adv.shape[-1]


def _forward_cache(spec, params, x):
    h = x
    pre = []
    for i in range(spec.n_hidden):
        z = h @ params.weights[i] + params.biases[i]
        pre.append(z)
        h = np.maximum(z, 0.0)
    if spec.dueling:
        v = h @ params.weights[-2] + params.biases[-2]
        a = h @ params.weights[-1] + params.biases[-1]
        out = dueling_combine(v, a)
    else:
        out = h @ params.weights[-1] + params.biases[-1]
    return out, (x, pre, h)


def forward(spec, params, x):
    x = _as_input(spec, x)
    return _forward_cache(spec, params, x)[0]


def _backward_cache(spec, params, cache, upstream):
    x, pre, h = cache
    batched = x.ndim == 2

    def outer(a, g):
        return a.T @ g if batched else np.outer(a, g)

    def colsum(g):
        return g.sum(axis=0) if batched else g

    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    if spec.dueling:
        g_adv = upstream - upstream.sum(axis=-1, keepdims=True) / upstream.shape[-1]
        g_v = upstream.sum(axis=-1, keepdims=True)
        gw[-1], gb[-1] = outer(h, g_adv), colsum(g_adv)
        gw[-2], gb[-2] = outer(h, g_v), colsum(g_v)
        g_h = g_adv @ params.weights[-1].T + g_v @ params.weights[-2].T
    else:
        gw[-1], gb[-1] = outer(h, upstream), colsum(upstream)
        g_h = upstream @ params.weights[-1].T
    for i in reversed(range(spec.n_hidden)):
        g_z = g_h * (pre[i] > 0.0)
        inp = x if i == 0 else np.maximum(pre[i - 1], 0.0)
        gw[i], gb[i] = outer(inp, g_z), colsum(g_z)
        g_h = g_z @ params.weights[i].T
    return Parameters(gw, gb), g_h


def backward(spec, params, x, upstream):
    """Gradients of ``<upstream, forward(x)>`` w.r.t. parameters and input.

    For a batch the parameter gradients are summed over rows and the input
    gradient keeps one row per sample.
    """
    x = _as_input(spec, x)
    out, cache = _forward_cache(spec, params, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != out.shape:
        raise ShapeError(f"upstream shape {upstream.shape} != output shape {out.shape}")
    return _backward_cache(spec, params, cache, upstream)


def input_box(x, epsilon, low=0.0, high=1.0):
    """Interval [clip(x - eps), clip(x + eps)] as (center, radius)."""
    lo = np.clip(x - epsilon, low, high)
    hi = np.clip(x + epsilon, low, high)
    return (lo + hi) / 2.0, (hi - lo) / 2.0


def _ibp_cache(spec, params, x, epsilon, low, high):
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if epsilon == 0:
        c, r = x, np.zeros_like(x)
    else:
        c, r = input_box(x, epsilon, low, high)
    layers = []
    for i in range(spec.n_hidden):
        w = params.weights[i]
        zc = c @ w + params.biases[i]
        zr = r @ np.abs(w)
        lo, hi = zc - zr, zc + zr
        layers.append((c, r, lo, hi))
        lo_p, hi_p = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        c, r = (lo_p + hi_p) / 2.0, (hi_p - lo_p) / 2.0
    if spec.dueling:
        wv, wa = params.weights[-2], params.weights[-1]
        vc = c @ wv + params.biases[-2]
        vr = r @ np.abs(wv)
        a_c = c @ wa + params.biases[-1]
        ar = r @ np.abs(wa)
        n = a_c.shape[-1]
        out_c = dueling_combine(vc, a_c)
        out_r = vr + (1.0 - 2.0 / n) * ar + ar.sum(axis=-1, keepdims=True) / n
    else:
        w = params.weights[-1]
        out_c = c @ w + params.biases[-1]
        out_r = r @ np.abs(w)
    return IntervalBounds(out_c - out_r, out_c + out_r), (layers, c, r)


def ibp_forward(spec, params, x, epsilon, low=0.0, high=1.0):
    """Interval bounds on the outputs over the l-inf ball of radius ``epsilon``
    around ``x``, intersected with the observation box ``[low, high]``."""
    x = _as_input(spec, x)
    return _ibp_cache(spec, params, x, epsilon, low, high)[0]


def _ibp_backward(spec, params, cache, g_lower, g_upper):
    layers, c, r = cache
    batched = c.ndim == 2

    def outer(a, g):
        return a.T @ g if batched else np.outer(a, g)

    def colsum(g):
        return g.sum(axis=0) if batched else g

    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    g_oc = g_lower + g_upper
    g_or = g_upper - g_lower
    if spec.dueling:
        wv, wa = params.weights[-2], params.weights[-1]
        n = g_oc.shape[-1]
        g_ac = g_oc - g_oc.sum(axis=-1, keepdims=True) / n
        g_vc = g_oc.sum(axis=-1, keepdims=True)
        g_ar = (1.0 - 2.0 / n) * g_or + g_or.sum(axis=-1, keepdims=True) / n
        g_vr = g_or.sum(axis=-1, keepdims=True)
        gw[-1] = outer(c, g_ac) + outer(r, g_ar) * np.sign(wa)
        gb[-1] = colsum(g_ac)
        gw[-2] = outer(c, g_vc) + outer(r, g_vr) * np.sign(wv)
        gb[-2] = colsum(g_vc)
        g_c = g_ac @ wa.T + g_vc @ wv.T
        g_r = g_ar @ np.abs(wa).T + g_vr @ np.abs(wv).T
    else:
        w = params.weights[-1]
        gw[-1] = outer(c, g_oc) + outer(r, g_or) * np.sign(w)
        gb[-1] = colsum(g_oc)
        g_c = g_oc @ w.T
        g_r = g_or @ np.abs(w).T
    for i in reversed(range(spec.n_hidden)):
        c_in, r_in, lo, hi = layers[i]
        g_lo_p = (g_c - g_r) / 2.0
        g_hi_p = (g_c + g_r) / 2.0
        g_lo = g_lo_p * (lo > 0.0)
        g_hi = g_hi_p * (hi > 0.0)
        g_zc = g_lo + g_hi
        g_zr = g_hi - g_lo
        w = params.weights[i]
        gw[i] = outer(c_in, g_zc) + outer(r_in, g_zr) * np.sign(w)
        gb[i] = colsum(g_zc)
        g_c = g_zc @ w.T
        g_r = g_zr @ np.abs(w).T
    return Parameters(gw, gb)


def ibp_backward(spec, params, x, epsilon, g_lower, g_upper, low=0.0, high=1.0):
    """Parameter gradients of ``<g_lower, lower> + <g_upper, upper>``."""
    x = _as_input(spec, x)
    _, cache = _ibp_cache(spec, params, x, epsilon, low, high)
    return _ibp_backward(spec, params, cache, np.asarray(g_lower, float), np.asarray(g_upper, float))


class Network:
    """A spec/parameter pair with convenience methods. Treated as a value:
    trainers build new ``Network`` objects instead of mutating one in place."""

    def __init__(self, spec, params):
        params.check_shapes(spec)
        self.spec = spec
        self.params = params

    @classmethod
    def create(cls, spec, seed):
        return cls(spec, init_params(spec, seed))

    def __call__(self, x):
        return forward(self.spec, self.params, x)

    forward = __call__

    def backward(self, x, upstream):
        return backward(self.spec, self.params, x, upstream)

    def input_grad(self, x, upstream):
        return self.backward(x, upstream)[1]

    def ibp(self, x, epsilon, low=0.0, high=1.0):
        return ibp_forward(self.spec, self.params, x, epsilon, low, high)

    def with_params(self, params):
        return Network(self.spec, params)

    def copy(self):
        return Network(self.spec, self.params.copy())

    def checksum(self):
        return self.params.checksum()


@dataclass
class AdamState:
    m: Parameters
    v: Parameters
    step: int = 0
    lr: float = 0.000125
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=0.000125, **kw):
        return cls(params.zeros_like(), params.zeros_like(), 0, lr, **kw)


def adam_step(state, params, grads):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if not grads.is_finite():
        raise NumericError("non-finite gradient passed to adam_step")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(Parameters.from_arrays(new_m), Parameters.from_arrays(new_v), t,
                          state.lr, b1, b2, state.eps)
    return Parameters.from_arrays(new_p), new_state
