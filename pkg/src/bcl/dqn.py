"""Double/Dueling DQN with standard, adversarial-example and IBP losses.

Loss modes
----------
``standard``  mean squared TD error against the target network.
``at``        kappa-blend of the standard loss with per-action terms where the
              perturbed Q-values come from an explicit perturbation stored
              in the replay buffer.
``radial``    the same per-action terms, with the perturbed Q-values
              replaced by the IBP interval endpoint that makes each squared
              residual largest, so the adversarial term upper-bounds the TD
              loss at any admissible perturbation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import envs
from .attacks import train_perturb_dqn
from .errors import ConfigError, NumericError, ProtocolError
from .nn import AdamState, Network, _backward_cache, _forward_cache, _ibp_backward, _ibp_cache, \
    adam_step

log = logging.getLogger(__name__)

LOSS_MODES = ("standard", "at", "radial")


@dataclass
class KappaSchedule:
    kind: str = "linear"
    start: float = 1.0
    end: float = 0.5
    value: float = 0.8

    def __post_init__(self):
        if self.kind not in ("linear", "constant"):
            raise ConfigError(f"unknown kappa schedule {self.kind!r}", "kappa.kind")
        for name in ("start", "end", "value"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"must lie in [0, 1], got {v}", f"kappa.{name}")

    def __call__(self, frac):
        """kappa at fraction ``frac`` in [0, 1] of the phase."""
        if self.kind == "constant":
            return self.value
        frac = min(max(frac, 0.0), 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass
class DqnConfig:
    gamma: float = 0.99
    lr: float = 0.000125
    frames: int = 40_000
    batch_size: int = 128
    buffer_size: int = 50_000
    replay_initial: int = 256
    target_sync: int = 1000
    explore_start: float = 1.0
    explore_end: float = 0.02
    explore_fraction: float = 0.3
    loss_mode: str = "standard"
    alpha: float = 0.375
    kappa: KappaSchedule = field(default_factory=KappaSchedule)

    def __post_init__(self):
        if isinstance(self.kappa, dict):
            self.kappa = KappaSchedule(**self.kappa)
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}", "trainer.gamma")
        if self.frames <= 0:
            raise ConfigError("frames must be > 0", "trainer.frames")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {self.loss_mode!r}", "trainer.loss_mode")
        if self.batch_size < 1 or self.buffer_size < 1 or self.replay_initial < 1:
            raise ConfigError("buffer sizes must be >= 1", "trainer")
        if self.target_sync < 1:
            raise ConfigError("target_sync must be >= 1", "trainer.target_sync")

    def to_dict(self):
        return asdict(self)


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray
    delta: np.ndarray = None

    def __len__(self):
        return len(self.a)


class ReplayBuffer:
    """FIFO ring buffer of (s, a, r, s', done, delta) rows."""

    def __init__(self, obs_dim, capacity=50_000, replay_initial=256):
        self.capacity = capacity
        self.replay_initial = replay_initial
        self.s = np.zeros((capacity, obs_dim))
        self.s_next = np.zeros((capacity, obs_dim))
        self.delta = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s_next, done, delta=None):
        i = self.pos
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self.delta[i] = 0.0 if delta is None else delta
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ready(self):
        return self.size >= self.replay_initial

    def sample(self, rng, batch_size):
        if not self.ready():
            raise ProtocolError(f"buffer holds {self.size} < replay_initial={self.replay_initial}")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx],
                     self.delta[idx])


def td_targets(target, batch, gamma):
    q_next = target.forward(batch.s_next)
    return batch.r + gamma * (1.0 - batch.done) * q_next.max(axis=-1)


def greedy_action(actor, obs):
    """argmax_a Q(obs, a), lowest index on ties."""
    return int(np.argmax(actor.forward(obs)))


def total_loss(standard, adv, kappa):
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    return kappa * standard + (1.0 - kappa) * adv


def ly_terms(actor_q_clean, actor_q_tilde, target_max, r, gamma, a, done):
    """Sum over actions of the per-action adversarial terms for one transition."""
    q = np.asarray(actor_q_clean, dtype=np.float64)
    qt = np.asarray(actor_q_tilde, dtype=np.float64)
    y = r + gamma * (1.0 - float(done)) * target_max
    others = np.arange(q.size) != a
    return float((y - qt[a]) ** 2 + np.sum((q[others] - qt[others]) ** 2))


def _dqn_objective(actor, target, batch, gamma, mode, kappa=1.0, epsilon=0.0):
    """Loss pieces and parameter gradients of ``kappa*std + (1-kappa)*adv``.

    Returns ``(l_std, l_adv, grads)``; ``l_adv`` is 0 in standard mode.
    """
    spec, params = actor.spec, actor.params
    if mode == "standard":
        kappa = 1.0
    n = len(batch)
    rows = np.arange(n)
    y = td_targets(target, batch, gamma)
    q, cache = _forward_cache(spec, params, batch.s)
    resid = y - q[rows, batch.a]
    l_std = float(np.mean(resid ** 2))
    g_clean = np.zeros_like(q)
    g_clean[rows, batch.a] = -2.0 * resid / n * kappa
    if mode == "standard":
        grads, _ = _backward_cache(spec, params, cache, g_clean)
        return l_std, 0.0, grads

    w_adv = 1.0 - kappa
    others = np.ones_like(q, dtype=bool)
    others[rows, batch.a] = False
    if mode == "at":
        if batch.delta is None:
            raise ProtocolError("adversarial loss needs a perturbation on every transition")
        qt, cache_t = _forward_cache(spec, params, batch.s + batch.delta)
        r_a = y - qt[rows, batch.a]
        diff = np.where(others, q - qt, 0.0)
        l_adv = float(np.mean(r_a ** 2 + (diff ** 2).sum(axis=-1)))
        g_t = -2.0 * diff / n * w_adv
        g_t[rows, batch.a] = -2.0 * r_a / n * w_adv
        g_clean = g_clean + 2.0 * diff / n * w_adv
        grads, _ = _backward_cache(spec, params, cache, g_clean)
        grads_t, _ = _backward_cache(spec, params, cache_t, g_t)
        return l_std, l_adv, grads.scaled_add(grads_t)

    if mode == "radial":
        bounds, ibp_cache = _ibp_cache(spec, params, batch.s, epsilon, 0.0, 1.0)
        lo, hi = bounds.lower, bounds.upper
        ref = np.where(others, q, y[:, None])
        use_lo = (ref - lo) ** 2 >= (ref - hi) ** 2
        qt = np.where(use_lo, lo, hi)
        res = ref - qt
        l_adv = float(np.mean((res ** 2).sum(axis=-1)))
        g_qt = -2.0 * res / n * w_adv
        g_clean = g_clean + np.where(others, 2.0 * res / n * w_adv, 0.0)
        grads, _ = _backward_cache(spec, params, cache, g_clean)
        grads_b = _ibp_backward(spec, params, ibp_cache, np.where(use_lo, g_qt, 0.0),
                                np.where(use_lo, 0.0, g_qt))
        return l_std, l_adv, grads.scaled_add(grads_b)
    raise ConfigError(f"unknown loss mode {mode!r}", "trainer.loss_mode")


def standard_loss(actor, target, batch, gamma=0.99):
    """Mean squared TD error and its gradient w.r.t. the actor parameters."""
    l_std, _, grads = _dqn_objective(actor, target, batch, gamma, "standard")
    return l_std, grads


def adv_loss_at(actor, target, batch, gamma=0.99):
    """Adversarial term with Q-tilde = Q_actor(s + delta) for the stored delta."""
    _, l_adv, grads = _dqn_objective(actor, target, batch, gamma, "at", kappa=0.0)
    return l_adv, grads


def adv_loss_radial(actor, target, batch, epsilon, gamma=0.99):
    """Adversarial term with Q-tilde taken from the worst IBP endpoint."""
    _, l_adv, grads = _dqn_objective(actor, target, batch, gamma, "radial", kappa=0.0,
                                     epsilon=epsilon)
    return l_adv, grads


def dqn_loss(actor, target, batch, gamma, mode, kappa, epsilon=0.0):
    """Total blended loss and gradients for one batch."""
    l_std, l_adv, grads = _dqn_objective(actor, target, batch, gamma, mode, kappa, epsilon)
    if mode == "standard":
        return l_std, grads
    return total_loss(l_std, l_adv, kappa), grads


def _perturb_seed(seed, t):
    return (int(seed) << 32) + t


def train_dqn_phase(f_init, env_kind, eps_lo, eps_hi, config, seed, on_episode=None):
    """Train one curriculum phase starting from ``f_init`` (a :class:`Network`).

    The attack budget ramps linearly from ``eps_lo`` to ``eps_hi`` across the
    phase; in ``at`` mode each collected transition gets its perturbation at
    the current budget. Returns the trained actor network.
    """
    if eps_lo > eps_hi:
        raise ConfigError(f"eps_lo={eps_lo} exceeds eps_hi={eps_hi}")
    info = envs.env_info(env_kind)
    rng = np.random.default_rng(seed)
    actor = f_init.copy()
    target = f_init.copy()
    opt = AdamState.for_params(actor.params, lr=config.lr)
    buf = ReplayBuffer(info["obs_dim"], config.buffer_size, config.replay_initial)
    frames = config.frames
    explore_frames = max(1, int(config.explore_fraction * frames))

    episode = 0
    state, obs = envs.reset(env_kind, seed * 7919 + episode)
    ep_return = 0.0
    grad_steps = 0
    for t in range(frames):
        frac = t / max(frames - 1, 1)
        eps_t = eps_lo + (eps_hi - eps_lo) * frac
        explore = config.explore_start + (config.explore_end - config.explore_start) * min(
            1.0, t / explore_frames)
        if rng.random() < explore:
            action = int(rng.integers(info["n_actions"]))
        else:
            action = greedy_action(actor, obs)
        state, out = envs.step(state, action)
        delta = None
        if config.loss_mode == "at":
            delta = train_perturb_dqn(actor, target.forward(obs), obs, eps_t, config.alpha,
                                      _perturb_seed(seed, t))
        buf.push(obs, action, out.reward, out.obs, out.terminal, delta)
        ep_return += out.reward
        if out.done:
            if on_episode is not None:
                on_episode(t, ep_return)
            episode += 1
            state, obs = envs.reset(env_kind, seed * 7919 + episode)
            ep_return = 0.0
        else:
            obs = out.obs

        if buf.ready():
            batch = buf.sample(rng, config.batch_size)
            kappa = config.kappa(frac)
            loss, grads = dqn_loss(actor, target, batch, config.gamma, config.loss_mode, kappa,
                                   eps_t)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at frame {t}")
            params, opt = adam_step(opt, actor.params, grads)
            actor = Network(actor.spec, params)
            grad_steps += 1
            if grad_steps % config.target_sync == 0:
                target = actor.copy()
    return actor
