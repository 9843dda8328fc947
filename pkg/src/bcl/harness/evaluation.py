"""Greedy-policy evaluation under the attack suite."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .. import envs
from ..attacks import AttackSpec, run_attack

MAX_EPISODE_STEPS = 10_000


def default_suite(epsilon, restarts=1000):
    """The four evaluation attacks at one budget."""
    return [
        AttackSpec("pgd", epsilon, steps=30, step_size=0.1),
        AttackSpec("rifgsm", epsilon, alpha=0.375),
        AttackSpec("rifgsm_multi", epsilon, alpha=0.375, restarts=restarts),
        AttackSpec("rifgsm_multi_t", epsilon, alpha=0.375, restarts=restarts),
    ]


def sem(values):
    """Sample standard deviation over sqrt(n); zero for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class EvalReport:
    model_id: str
    epsilon: float
    attack: str
    episodes: int
    mean: float
    sem: float
    rewards: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class EvalSummary:
    """Nominal report, per-attack reports, and the worst attack mean."""
    nominal: EvalReport
    attacks: list
    epsilon: float = 0.0

    @property
    def r_nominal(self):
        return self.nominal.mean

    @property
    def worst(self):
        if not self.attacks:
            return None
        return min(self.attacks, key=lambda r: r.mean)

    @property
    def r_adv(self):
        w = self.worst
        return self.nominal.mean if w is None else w.mean


def _attack_seed(seed, episode, t):
    return int(np.random.SeedSequence([seed, episode, t]).generate_state(1)[0])


def run_episode(model, env_kind, episode_seed, attack=None, attack_seed=0, episode=0,
                max_steps=MAX_EPISODE_STEPS):
    """Undiscounted return of the greedy policy, optionally attacked at every step."""
    state, obs = envs.reset(env_kind, episode_seed)
    total = 0.0
    for t in range(max_steps):
        x = obs
        if attack is not None and attack.epsilon > 0:
            x = obs + run_attack(model, obs, attack, _attack_seed(attack_seed, episode, t))
        action = int(np.argmax(model.forward(x)))
        state, out = envs.step(state, action)
        total += out.reward
        if out.done:
            break
        obs = out.obs
    return total


def _report(model, env_kind, attack, episodes, seed, model_id, max_steps):
    rewards = [run_episode(model, env_kind, seed + e, attack, seed, e, max_steps)
               for e in range(episodes)]
    return EvalReport(model_id, 0.0 if attack is None else attack.epsilon,
                      "none" if attack is None else attack.kind, episodes,
                      float(np.mean(rewards)), sem(rewards), rewards, seed)


def evaluate(model, env_kind, attack_suite=None, episodes=20, seed=0, model_id="",
             max_steps=MAX_EPISODE_STEPS):
    """Nominal run plus one report per attack; the summary keeps the lowest mean.

    Episode e is reset with seed ``seed + e`` so every attack sees the same
    episodes.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    nominal = _report(model, env_kind, None, episodes, seed, model_id, max_steps)
    reports = [_report(model, env_kind, a, episodes, seed, model_id, max_steps)
               for a in (attack_suite or [])]
    eps = reports[0].epsilon if reports else 0.0
    return EvalSummary(nominal, reports, eps)


class ModelEvaluator:
    """Curriculum evaluator backed by real rollouts.

    ``attacks`` names the kinds run when probing a budget; the adversarial
    reward is the lowest mean among them. Results are cached per model
    checksum, so a probe followed by a score computation at the same budget
    costs one evaluation.
    """

    def __init__(self, env_kind, attacks=("pgd",), episodes=20, seed=0, restarts=1000,
                 pgd_steps=30, pgd_step_size=0.1, max_steps=MAX_EPISODE_STEPS):
        self.env_kind = env_kind
        self.attacks = tuple(attacks)
        self.episodes = episodes
        self.seed = seed
        self.restarts = restarts
        self.pgd_steps = pgd_steps
        self.pgd_step_size = pgd_step_size
        self.max_steps = max_steps
        self._cache = {}

    def suite(self, eps):
        return [AttackSpec(k, eps, steps=self.pgd_steps, step_size=self.pgd_step_size,
                           restarts=self.restarts) for k in self.attacks]

    def _mean(self, model, attack):
        key = (model.checksum(), None if attack is None else (attack.kind, attack.epsilon))
        if key not in self._cache:
            r = _report(model, self.env_kind, attack, self.episodes, self.seed, "",
                        self.max_steps)
            self._cache[key] = r.mean
        return self._cache[key]

    def nominal(self, model):
        return self._mean(model, None)

    def adversarial(self, model, eps):
        if eps == 0:
            return self.nominal(model)
        return min(self._mean(model, a) for a in self.suite(eps))
