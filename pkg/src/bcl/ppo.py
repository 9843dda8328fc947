"""PPO with the clipped surrogate objective and its two-policy adversarial variant.

The adversarial surrogate mixes clean and perturbed logits: the first mixed
policy swaps in the perturbed logit for the taken action only, the second
swaps in the perturbed logits for every other action. The adversarial loss
takes the worse (smaller) of the two clipped surrogates at each step.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import envs
from .attacks import pgd_untargeted, softmax, train_perturb_ppo
from .dqn import KappaSchedule
from .errors import ConfigError, NumericError
from .nn import AdamState, Network, NetworkSpec, _backward_cache, _forward_cache, adam_step


@dataclass
class PpoConfig:
    eta: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 4
    minibatch_size: int = 64
    rollout_steps: int = 256
    lr: float = 0.0003
    frames: int = 40_000
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    perturb_method: str = "ri_fgsm"
    perturb_objective: str = "softmax_logits"
    alpha: float = 0.375
    pgd_steps: int = 10
    kappa: KappaSchedule = field(default_factory=lambda: KappaSchedule("constant", value=0.8))

    def __post_init__(self):
        if isinstance(self.kappa, dict):
            self.kappa = KappaSchedule(**self.kappa)
        if self.eta <= 0:
            raise ConfigError("eta must be > 0", "trainer.eta")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]", "trainer.lam")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)", "trainer.gamma")
        if self.frames <= 0 or self.rollout_steps <= 0 or self.epochs <= 0:
            raise ConfigError("frames, rollout_steps and epochs must be > 0", "trainer")
        if self.perturb_method not in ("ri_fgsm", "pgd"):
            raise ConfigError(f"unknown perturbation method {self.perturb_method!r}",
                              "trainer.perturb_method")

    def to_dict(self):
        return asdict(self)


class ActorCritic:
    """Policy (logits) and value networks. Calling it yields the logits, so
    attacks and evaluation treat it like any other score network."""

    def __init__(self, policy, value):
        self.policy = policy
        self.value = value

    @classmethod
    def create(cls, obs_dim, n_actions, hidden, seed):
        policy = Network.create(NetworkSpec((obs_dim, *hidden, n_actions)), seed)
        value = Network.create(NetworkSpec((obs_dim, *hidden, 1)), seed + 1)
        return cls(policy, value)

    def forward(self, x):
        return self.policy.forward(x)

    __call__ = forward

    def input_grad(self, x, upstream):
        return self.policy.input_grad(x, upstream)

    def copy(self):
        return ActorCritic(self.policy.copy(), self.value.copy())

    def checksum(self):
        return self.policy.checksum() + self.value.checksum()


@dataclass
class RolloutBatch:
    s: np.ndarray
    a: np.ndarray
    rewards: np.ndarray
    logits_old: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray = None
    returns: np.ndarray = None
    delta: np.ndarray = None

    def __len__(self):
        return len(self.a)

    def subset(self, idx):
        pick = lambda v: None if v is None else v[idx]  # noqa: E731
        return RolloutBatch(*(pick(getattr(self, f)) for f in (
            "s", "a", "rewards", "logits_old", "values", "dones", "advantages", "returns",
            "delta")))


def compute_advantages(rewards, values, dones, last_value, gamma, lam):
    """GAE(gamma, lambda). ``dones[t]`` cuts bootstrapping after step t."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    adv = np.zeros(n)
    next_value, running = float(last_value), 0.0
    for t in reversed(range(n)):
        keep = 1.0 - dones[t]
        td = rewards[t] + gamma * next_value * keep - values[t]
        running = td + gamma * lam * keep * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv):
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


def _log_softmax(z):
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def _surrogate(logits, a, logp_old, adv, eta):
    """Clipped surrogate per step, plus d(surrogate)/d(logits)."""
    rows = np.arange(len(a))
    logp = _log_softmax(logits)
    ratio = np.exp(logp[rows, a] - logp_old)
    clipped = np.clip(ratio, 1.0 - eta, 1.0 + eta)
    surr = np.minimum(ratio * adv, clipped * adv)
    active = ratio * adv <= clipped * adv
    onehot = np.zeros_like(logits)
    onehot[rows, a] = 1.0
    g = (active * adv * ratio)[:, None] * (onehot - np.exp(logp))
    return surr, g


def _old_logp(batch):
    return _log_softmax(batch.logits_old)[np.arange(len(batch)), batch.a]


def tilde_policies(logits_clean, logits_adv, a):
    """Probabilities of action ``a`` under the two mixed policies."""
    zc = np.asarray(logits_clean, dtype=np.float64)
    za = np.asarray(logits_adv, dtype=np.float64)
    mix1, mix2 = zc.copy(), za.copy()
    mix1[a] = za[a]
    mix2[a] = zc[a]
    return float(softmax(mix1)[a]), float(softmax(mix2)[a])


def _mixes(zc, za, a):
    rows = np.arange(len(a))
    at_a = np.zeros(zc.shape, dtype=bool)
    at_a[rows, a] = True
    return np.where(at_a, za, zc), np.where(at_a, zc, za), at_a


def _policy_terms(policy, batch, eta, kappa):
    """Blended policy loss, gradients w.r.t. clean and perturbed logits, and
    the caches needed to push them through the network."""
    spec, params = policy.spec, policy.params
    n = len(batch)
    logp_old = _old_logp(batch)
    zc, cache_c = _forward_cache(spec, params, batch.s)
    s_std, g_std = _surrogate(zc, batch.a, logp_old, batch.advantages, eta)
    l_std = -float(np.mean(s_std))
    g_zc = -kappa * g_std / n
    l_adv, g_za, cache_a = 0.0, None, None
    if kappa < 1.0:
        delta = batch.delta if batch.delta is not None else np.zeros_like(batch.s)
        za, cache_a = _forward_cache(spec, params, batch.s + delta)
        mix1, mix2, at_a = _mixes(zc, za, batch.a)
        s1, g1 = _surrogate(mix1, batch.a, logp_old, batch.advantages, eta)
        s2, g2 = _surrogate(mix2, batch.a, logp_old, batch.advantages, eta)
        first = s1 <= s2
        worst = np.where(first, s1, s2)
        l_adv = -float(np.mean(worst))
        g_mix = -(1.0 - kappa) / n * np.where(first[:, None], g1, g2)
        # mix1 reads z_adv at the taken action, mix2 reads it everywhere else
        from_adv = np.where(first[:, None], at_a, ~at_a)
        g_za = np.where(from_adv, g_mix, 0.0)
        g_zc = g_zc + np.where(from_adv, 0.0, g_mix)
    return l_std, l_adv, zc, g_zc, cache_c, g_za, cache_a


def ppo_standard_loss(policy, batch, eta):
    """-mean(min(ratio * A, clip(ratio, 1-eta, 1+eta) * A)) and its policy gradient."""
    l_std, _, _, g_zc, cache_c, _, _ = _policy_terms(policy, batch, eta, 1.0)
    grads, _ = _backward_cache(policy.spec, policy.params, cache_c, g_zc)
    return l_std, grads


def ppo_adv_loss(policy, batch, eta):
    """Worst-of-two mixed-policy surrogate loss and its policy gradient."""
    _, l_adv, _, g_zc, cache_c, g_za, cache_a = _policy_terms(policy, batch, eta, 0.0)
    grads, _ = _backward_cache(policy.spec, policy.params, cache_c, g_zc)
    grads_a, _ = _backward_cache(policy.spec, policy.params, cache_a, g_za)
    return l_adv, grads.scaled_add(grads_a)


def ppo_total_loss(agent, batch, config, kappa):
    """kappa-blended policy loss + value loss - entropy bonus.

    Returns ``(loss, policy_grads, value_grads)``.
    """
    policy, value = agent.policy, agent.value
    n = len(batch)
    l_std, l_adv, zc, g_zc, cache_c, g_za, cache_a = _policy_terms(policy, batch, config.eta,
                                                                   kappa)
    logp = _log_softmax(zc)
    p = np.exp(logp)
    ent = -(p * logp).sum(axis=-1)
    # d(-c * mean H)/dz = c/n * p * (log p + H)
    g_zc = g_zc + config.entropy_coef / n * p * (logp + ent[:, None])
    grads, _ = _backward_cache(policy.spec, policy.params, cache_c, g_zc)
    if cache_a is not None:
        grads_a, _ = _backward_cache(policy.spec, policy.params, cache_a, g_za)
        grads = grads.scaled_add(grads_a)
    v, cache_v = _forward_cache(value.spec, value.params, batch.s)
    err = v[:, 0] - batch.returns
    l_v = float(np.mean(err ** 2))
    g_v = (config.value_coef * 2.0 * err / n)[:, None]
    v_grads, _ = _backward_cache(value.spec, value.params, cache_v, g_v)
    loss = kappa * l_std + (1.0 - kappa) * l_adv + config.value_coef * l_v \
        - config.entropy_coef * float(np.mean(ent))
    return loss, grads, v_grads


def ppo_pgd_eval_attack(policy, x, epsilon, steps=30, step_size=0.1):
    """PGD on the cross-entropy against the clean greedy action."""
    return pgd_untargeted(policy, x, epsilon, steps, step_size)


def _collect(agent, env_kind, state, obs, episode, n_steps, rng, config, seed):
    info = envs.env_info(env_kind)
    S, A, R, Z, V, D = [], [], [], [], [], []
    for _ in range(n_steps):
        z = agent.policy.forward(obs)
        p = softmax(z)
        a = int(rng.choice(info["n_actions"], p=p))
        v = float(agent.value.forward(obs)[0])
        state, out = envs.step(state, a)
        r = out.reward
        if out.done and not out.terminal:
            # horizon cut: fold the bootstrap value into the last reward
            r += config.gamma * float(agent.value.forward(out.obs)[0])
        S.append(obs); A.append(a); R.append(r); Z.append(z); V.append(v); D.append(out.done)
        if out.done:
            episode += 1
            state, obs = envs.reset(env_kind, seed * 7919 + episode)
        else:
            obs = out.obs
    last_value = float(agent.value.forward(obs)[0])
    batch = RolloutBatch(np.array(S), np.array(A), np.array(R), np.array(Z), np.array(V),
                         np.array(D, dtype=np.float64))
    return batch, state, obs, episode, last_value


def train_ppo_phase(f_init, env_kind, eps_lo, eps_hi, config, seed):
    """Train an :class:`ActorCritic` for ``config.frames`` environment steps.

    The budget ramps linearly from ``eps_lo`` to ``eps_hi``; perturbations are
    computed once per rollout against the behaviour policy and reused across
    the update epochs.
    """
    if eps_lo > eps_hi:
        raise ConfigError(f"eps_lo={eps_lo} exceeds eps_hi={eps_hi}")
    rng = np.random.default_rng(seed)
    agent = f_init.copy()
    opt_pi = AdamState.for_params(agent.policy.params, lr=config.lr)
    opt_v = AdamState.for_params(agent.value.params, lr=config.lr)
    episode = 0
    state, obs = envs.reset(env_kind, seed * 7919)
    t = 0
    while t < config.frames:
        n_steps = min(config.rollout_steps, config.frames - t)
        frac = t / max(config.frames - 1, 1)
        eps_t = eps_lo + (eps_hi - eps_lo) * frac
        kappa = config.kappa(frac)
        batch, state, obs, episode, last_value = _collect(
            agent, env_kind, state, obs, episode, n_steps, rng, config, seed)
        adv, ret = compute_advantages(batch.rewards, batch.values, batch.dones, last_value,
                                      config.gamma, config.lam)
        batch.advantages = normalize_advantages(adv)
        batch.returns = ret
        if kappa < 1.0:
            batch.delta = np.stack([
                train_perturb_ppo(agent.policy, s, eps_t, config.perturb_method, config.alpha,
                                  config.pgd_steps, seed=(int(seed) << 32) + t + i,
                                  objective=config.perturb_objective)
                for i, s in enumerate(batch.s)])
        t += n_steps
        for _ in range(config.epochs):
            perm = rng.permutation(len(batch))
            for start in range(0, len(batch), config.minibatch_size):
                mb = batch.subset(perm[start:start + config.minibatch_size])
                loss, g_pi, g_v = ppo_total_loss(agent, mb, config, kappa)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite PPO loss at step {t}")
                p_pi, opt_pi = adam_step(opt_pi, agent.policy.params, g_pi)
                p_v, opt_v = adam_step(opt_v, agent.value.params, g_v)
                agent = ActorCritic(Network(agent.policy.spec, p_pi),
                                    Network(agent.value.spec, p_v))
    return agent
