"""l-inf perturbation generators for observation attacks.

All attacks keep ``|delta| <= epsilon`` coordinatewise and ``x + delta``
inside the observation box ``[0, 1]^d``. The sign convention is
``sign(0) = 0``, so a vanishing gradient leaves a coordinate untouched.

``net`` arguments are anything with ``forward(x)`` and
``input_grad(x, upstream)``, i.e. :class:`bcl.nn.Network`. Its outputs are
Q-values for DQN agents and logits for PPO policies; either way the greedy
action is the argmax.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError

BOX_LOW, BOX_HIGH = 0.0, 1.0

ATTACK_KINDS = ("pgd", "fgsm", "rifgsm", "rifgsm_multi", "rifgsm_multi_t")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "pgd"
    epsilon: float = 0.0
    steps: int = 30
    step_size: float = 0.1
    alpha: float = 0.375
    restarts: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}", "attack.kind")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}", "attack.epsilon")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1", "attack.steps")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1", "attack.restarts")
        if self.step_size <= 0 or self.alpha <= 0:
            raise ConfigError("step sizes must be > 0", "attack")

    def to_dict(self):
        return asdict(self)


def project(x, delta, epsilon, low=BOX_LOW, high=BOX_HIGH):
    """Clamp to the eps-ball, then to the box. Written as one clip against the
    tighter of the two limits so the returned delta satisfies both exactly."""
    delta = np.clip(delta, -epsilon, epsilon)
    return np.clip(delta, low - x, high - x)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(z, action):
    """-log softmax(z)[action] for a single integer action."""
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1)
    lse = m + np.log(np.exp(z - m[..., None]).sum(axis=-1))
    return lse - z[..., action]


def _onehot(action, n, lead_shape=()):
    out = np.zeros(lead_shape + (n,))
    out[..., action] = 1.0
    return out


def ce_input_grad(net, action):
    """x -> gradient of the cross-entropy between softmax(net(x)) and ``action``."""
    def grad(x):
        z = net.forward(x)
        return net.input_grad(x, softmax(z) - _onehot(action, z.shape[-1], z.shape[:-1]))
    return grad


def dqn_perturb_objective(q_actor, q_target_vec, x):
    """softmax(Q_actor(x)) . Q_target(s): the value the perturbed policy would earn."""
    return softmax(q_actor.forward(x)) @ np.asarray(q_target_vec, dtype=np.float64)


def _dqn_objective_grad(q_actor, q_target_vec):
    q = np.asarray(q_target_vec, dtype=np.float64)

    def grad(x):
        p = softmax(q_actor.forward(x))
        f = (p * q).sum(axis=-1, keepdims=True)
        return q_actor.input_grad(x, p * (q - f))
    return grad


def ppo_perturb_objective(policy, x):
    """softmax(logits(x)) . logits(x)."""
    z = policy.forward(x)
    return (softmax(z) * z).sum(axis=-1)


def _ppo_objective_grad(policy):
    def grad(x):
        z = policy.forward(x)
        p = softmax(z)
        f = (p * z).sum(axis=-1, keepdims=True)
        return policy.input_grad(x, p * (z - f) + p)
    return grad


def random_start(seed, epsilon, shape):
    return np.random.default_rng(seed).uniform(-epsilon, epsilon, size=shape)


def fgsm(x, epsilon, loss_grad, low=BOX_LOW, high=BOX_HIGH):
    """Single signed step of size epsilon up the loss."""
    x = np.asarray(x, dtype=np.float64)
    if epsilon == 0:
        return np.zeros_like(x)
    return project(x, epsilon * np.sign(loss_grad(x)), epsilon, low, high)


def ri_fgsm(x, epsilon, alpha, loss_grad, seed, low=BOX_LOW, high=BOX_HIGH):
    """FGSM from a uniform random start in the eps-ball, projected back."""
    x = np.asarray(x, dtype=np.float64)
    if epsilon == 0:
        return np.zeros_like(x)
    d0 = project(x, random_start(seed, epsilon, x.shape), epsilon, low, high)
    return project(x, d0 + alpha * np.sign(loss_grad(x + d0)), epsilon, low, high)


def pgd(x, epsilon, steps, step_size, loss_grad, loss_fn=None, start=None,
        low=BOX_LOW, high=BOX_HIGH):
    """Signed-gradient ascent with per-step projection; returns the final iterate
    and the loss of every iterate (empty unless ``loss_fn`` is given)."""
    x = np.asarray(x, dtype=np.float64)
    delta = np.zeros_like(x) if start is None else project(x, start, epsilon, low, high)
    losses = []
    if loss_fn is not None:
        losses.append(float(loss_fn(x + delta)))
    if epsilon == 0:
        return delta, losses
    for _ in range(steps):
        delta = project(x, delta + step_size * np.sign(loss_grad(x + delta)), epsilon, low, high)
        if loss_fn is not None:
            losses.append(float(loss_fn(x + delta)))
    return delta, losses


def pgd_untargeted(net, x, epsilon, steps=30, step_size=0.1, clean_action=None,
                   return_trace=False):
    """Untargeted PGD on the cross-entropy against the clean greedy action."""
    x = np.asarray(x, dtype=np.float64)
    if clean_action is None:
        clean_action = int(np.argmax(net.forward(x)))
    loss_fn = (lambda xp: cross_entropy(net.forward(xp), clean_action)) if return_trace else None
    delta, losses = pgd(x, epsilon, steps, step_size, ce_input_grad(net, clean_action), loss_fn)
    if return_trace:
        return delta, np.maximum.accumulate(np.asarray(losses))
    return delta


def multi_restart(net, x, epsilon, alpha=0.375, restarts=1000, mode="first_flip",
                  clean_q=None, seed=0):
    """RI-FGSM with ``restarts`` random starts (seeds ``seed+1 .. seed+N``).

    ``first_flip`` returns the first candidate whose greedy action differs
    from the clean one (zero if none does). ``lowest_q`` returns the
    candidate whose induced action has the lowest clean score; ties go to
    the earliest restart.
    """
    if restarts < 1:
        raise ConfigError("restarts must be >= 1", "attack.restarts")
    if mode not in ("first_flip", "lowest_q"):
        raise ConfigError(f"unknown multi-restart mode {mode!r}", "attack.mode")
    x = np.asarray(x, dtype=np.float64)
    if clean_q is None:
        clean_q = net.forward(x)
    clean_q = np.asarray(clean_q, dtype=np.float64)
    if epsilon == 0:
        return np.zeros_like(x)
    clean_action = int(np.argmax(clean_q))
    starts = np.stack([random_start(seed + k, epsilon, x.shape) for k in range(1, restarts + 1)])
    starts = project(x, starts, epsilon)
    xs = x + starts
    z = net.forward(xs)
    g = net.input_grad(xs, softmax(z) - _onehot(clean_action, z.shape[-1], z.shape[:-1]))
    cands = project(x, starts + alpha * np.sign(g), epsilon)
    actions = np.argmax(net.forward(x + cands), axis=-1)
    if mode == "first_flip":
        flips = np.flatnonzero(actions != clean_action)
        return cands[flips[0]] if flips.size else np.zeros_like(x)
    return cands[int(np.argmin(clean_q[actions]))]


def train_perturb_dqn(q_actor, q_target_vec, x, epsilon, alpha=0.375, seed=0):
    """One RI-FGSM descent step on softmax(Q_actor(x + delta)) . Q_target(s).

    ``q_target_vec`` is the target network evaluated once on the clean state.
    """
    grad = _dqn_objective_grad(q_actor, q_target_vec)
    return ri_fgsm(x, epsilon, alpha, lambda xp: -grad(xp), seed)


def train_perturb_ppo(policy, x, epsilon, method="ri_fgsm", alpha=0.375, steps=10,
                      step_size=None, seed=0, objective="softmax_logits"):
    """Training-time perturbation for PPO policies.

    ``method`` is ``"ri_fgsm"`` or ``"pgd"``. By default both descend on
    softmax(logits) . logits; ``objective="ce"`` makes PGD instead ascend the
    cross-entropy against the clean greedy action. PGD starts at zero with
    step size ``2.5 * epsilon / steps`` unless one is given.
    """
    x = np.asarray(x, dtype=np.float64)
    if epsilon == 0:
        return np.zeros_like(x)
    if objective == "ce":
        action = int(np.argmax(policy.forward(x)))
        g = ce_input_grad(policy, action)
        direction = g
    elif objective == "softmax_logits":
        g = _ppo_objective_grad(policy)
        direction = lambda xp: -g(xp)  # noqa: E731
    else:
        raise ConfigError(f"unknown perturbation objective {objective!r}")
    if method == "ri_fgsm":
        return ri_fgsm(x, epsilon, alpha, direction, seed)
    if method == "pgd":
        if step_size is None:
            step_size = 2.5 * epsilon / steps
        return pgd(x, epsilon, steps, step_size, direction)[0]
    raise ConfigError(f"unknown perturbation method {method!r}")


def run_attack(net, x, spec, seed=None):
    """Dispatch an :class:`AttackSpec` on one observation."""
    seed = spec.seed if seed is None else seed
    x = np.asarray(x, dtype=np.float64)
    if spec.epsilon == 0:
        return np.zeros_like(x)
    q = net.forward(x)
    a = int(np.argmax(q))
    if spec.kind == "pgd":
        return pgd_untargeted(net, x, spec.epsilon, spec.steps, spec.step_size, a)
    if spec.kind == "fgsm":
        return fgsm(x, spec.epsilon, ce_input_grad(net, a))
    if spec.kind == "rifgsm":
        return ri_fgsm(x, spec.epsilon, spec.alpha, ce_input_grad(net, a), seed)
    mode = "first_flip" if spec.kind == "rifgsm_multi" else "lowest_q"
    return multi_restart(net, x, spec.epsilon, spec.alpha, spec.restarts, mode, q, seed)
