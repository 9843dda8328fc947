"""JSON experiment configuration.

Schema (every section optional; unknown keys are rejected)::

    {
      "name": "ridgewalk-bcl",
      "seed": 0,
      "out_dir": "runs/ridgewalk",
      "env": {"kind": "ridgewalk"},
      "network": {"hidden": [32, 32], "dueling": true},
      "trainer": {"kind": "dqn", ...DqnConfig or PpoConfig fields...},
      "frames_per_phase": 40000,
      "pretrain_frames": 40000,
      "curriculum": {"eps0": 0, "target": "25/255", "increment": "5/255"},
      "bcl": {"variants": ["bcl_c"], "K": 2, "K_min": 2, "M": 2,
              "at_restart_eps0": null, "stage2_variant": "bcl_c",
              "score_epsilons": null, "track_best": true},
      "thresholds": {"nominal": 0.7, "adv": 0.5, "score": null},
      "probe": {"attacks": ["pgd"], "episodes": 1, "restarts": 1000},
      "eval": {"epsilons": ["25/255"], "attacks": ["pgd", "rifgsm",
               "rifgsm_multi", "rifgsm_multi_t"], "episodes": 20,
               "restarts": 1000, "selections": ["final", "best"]}
    }

Budgets may be numbers or strings ``"n/255"``. ``trainer.kind`` is
``dqn``, ``ppo`` or ``mock``; the mock trainer takes ``reach`` (how many
increments beyond the trained budget the produced model withstands).
Every method starts from one model pretrained without perturbations for
``pretrain_frames`` frames (default ``frames_per_phase``; 0 starts from
the random init). Besides the curriculum variants, ``bcl.variants``
accepts ``vanilla``, which reports that pretrained model as is.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict
from fractions import Fraction
from pathlib import Path

from .. import envs
from ..attacks import ATTACK_KINDS
from ..curriculum import VARIANTS, BclConfig
from ..dqn import DqnConfig
from ..errors import ConfigError
from ..ppo import PpoConfig

METHODS = VARIANTS + ("vanilla",)
TRAINER_KINDS = ("dqn", "ppo", "mock")


def parse_budget(v, path):
    """A float from a number or an ``"a/b"`` string."""
    if isinstance(v, bool):
        raise ConfigError(f"expected a budget, got {v!r}", path)
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"expected a number or 'n/255', got {v!r}", path)


def _section(raw, key, allowed, path=""):
    sec = raw.get(key, {})
    here = f"{path}{key}"
    if not isinstance(sec, dict):
        raise ConfigError("expected an object", here)
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]!r}", f"{here}.{unknown[0]}")
    return sec


def _typed(sec, key, kind, default, path):
    v = sec.get(key, default)
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise ConfigError(f"expected an integer, got {v!r}", f"{path}.{key}")
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", f"{path}.{key}")
        v = float(v)
    if kind is bool and not isinstance(v, bool):
        raise ConfigError(f"expected true/false, got {v!r}", f"{path}.{key}")
    if kind is str and not isinstance(v, str):
        raise ConfigError(f"expected a string, got {v!r}", f"{path}.{key}")
    return v


def _kinds(values, allowed, path):
    if not isinstance(values, list) or not values:
        raise ConfigError("expected a nonempty list", path)
    for i, v in enumerate(values):
        if v not in allowed:
            raise ConfigError(f"unknown value {v!r}", f"{path}[{i}]")
    return tuple(values)


@dataclass
class EvalSettings:
    epsilons: tuple = (25 / 255,)
    attacks: tuple = ATTACK_KINDS
    episodes: int = 20
    restarts: int = 1000
    selections: tuple = ("final", "best")


@dataclass
class ProbeSettings:
    attacks: tuple = ("pgd",)
    episodes: int = 1
    restarts: int = 1000


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    out_dir: str = "runs"
    env_kind: str = "ridgewalk"
    hidden: tuple = (32, 32)
    dueling: bool = True
    trainer_kind: str = "dqn"
    trainer: dict = field(default_factory=dict)
    frames_per_phase: int = 40_000
    pretrain_frames: int = 40_000
    eps0: float = 0.0
    target: float = 25 / 255
    increment: float = 1 / 255
    variants: tuple = ("bcl_c",)
    bcl: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=lambda: {"nominal": 0.0, "adv": 0.0, "score": None})
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    mock_reach: int = 0

    def bcl_config(self, variant, seed=None):
        return BclConfig(variant=variant, trainer="ppo" if self.trainer_kind == "ppo" else "dqn",
                         base_seed=self.seed if seed is None else seed, **self.bcl)

    def dqn_config(self, loss_mode):
        return DqnConfig(**{**self.trainer, "frames": self.frames_per_phase, "loss_mode": loss_mode})

    def ppo_config(self):
        return PpoConfig(**{**self.trainer, "frames": self.frames_per_phase})

    def to_dict(self):
        return asdict(self)


_TOP = ("name", "seed", "out_dir", "env", "network", "trainer", "frames_per_phase", "pretrain_frames",
        "curriculum", "bcl", "thresholds", "probe", "eval")


def parse_config(raw):
    """Validate a config mapping; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", "<root>")
    unknown = sorted(set(raw) - set(_TOP))
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]!r}", unknown[0])
    cfg = ExperimentConfig()
    cfg.name = _typed(raw, "name", str, cfg.name, "")
    cfg.seed = _typed(raw, "seed", int, cfg.seed, "")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative", "seed")
    cfg.out_dir = _typed(raw, "out_dir", str, cfg.out_dir, "")
    cfg.frames_per_phase = _typed(raw, "frames_per_phase", int, cfg.frames_per_phase, "")
    if cfg.frames_per_phase < 1:
        raise ConfigError("must be >= 1", "frames_per_phase")
    cfg.pretrain_frames = _typed(raw, "pretrain_frames", int, cfg.frames_per_phase, "")
    if cfg.pretrain_frames < 0:
        raise ConfigError("must be >= 0", "pretrain_frames")

    env = _section(raw, "env", ("kind",))
    cfg.env_kind = _typed(env, "kind", str, cfg.env_kind, "env")
    if cfg.env_kind not in envs.ENV_KINDS:
        raise ConfigError(f"unknown environment {cfg.env_kind!r}", "env.kind")

    net = _section(raw, "network", ("hidden", "dueling"))
    hidden = net.get("hidden", list(cfg.hidden))
    if not isinstance(hidden, list) or not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError("expected a list of positive integers", "network.hidden")
    cfg.hidden = tuple(hidden)
    cfg.dueling = _typed(net, "dueling", bool, cfg.dueling, "network")

    tr = dict(raw.get("trainer", {}))
    if not isinstance(raw.get("trainer", {}), dict):
        raise ConfigError("expected an object", "trainer")
    cfg.trainer_kind = tr.pop("kind", "dqn")
    if cfg.trainer_kind not in TRAINER_KINDS:
        raise ConfigError(f"unknown trainer {cfg.trainer_kind!r}", "trainer.kind")
    if cfg.trainer_kind == "mock":
        cfg.mock_reach = _typed(tr, "reach", int, 0, "trainer")
        tr.pop("reach", None)
        if tr:
            raise ConfigError(f"unknown field {sorted(tr)[0]!r}", f"trainer.{sorted(tr)[0]}")
    else:
        cls = DqnConfig if cfg.trainer_kind == "dqn" else PpoConfig
        allowed = {f.name for f in fields(cls)} - {"frames", "loss_mode"}
        for k in sorted(tr):
            if k not in allowed:
                raise ConfigError(f"unknown field {k!r}", f"trainer.{k}")
        cfg.trainer = tr
        try:
            cfg.dqn_config("standard") if cls is DqnConfig else cfg.ppo_config()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "trainer") from exc

    cur = _section(raw, "curriculum", ("eps0", "target", "increment"))
    cfg.eps0 = parse_budget(cur.get("eps0", cfg.eps0), "curriculum.eps0")
    cfg.target = parse_budget(cur.get("target", cfg.target), "curriculum.target")
    cfg.increment = parse_budget(cur.get("increment", cfg.increment), "curriculum.increment")
    if not 0 <= cfg.eps0 < cfg.target < 1:
        raise ConfigError("need 0 <= eps0 < target < 1", "curriculum.target")
    if cfg.increment <= 0:
        raise ConfigError("must be > 0", "curriculum.increment")

    bcl = dict(_section(raw, "bcl", ("variants", "K", "K_min", "M", "at_restart_eps0",
                                      "stage2_variant", "score_epsilons", "track_best")))
    cfg.variants = _kinds(bcl.pop("variants", list(cfg.variants)), METHODS, "bcl.variants")
    if bcl.get("at_restart_eps0") is not None:
        bcl["at_restart_eps0"] = parse_budget(bcl["at_restart_eps0"], "bcl.at_restart_eps0")
    if bcl.get("score_epsilons") is not None:
        se = bcl["score_epsilons"]
        if not isinstance(se, list) or not se:
            raise ConfigError("expected a nonempty list", "bcl.score_epsilons")
        bcl["score_epsilons"] = tuple(parse_budget(v, f"bcl.score_epsilons[{i}]")
                                      for i, v in enumerate(se))
    for key in ("K", "K_min", "M"):
        if key in bcl:
            _typed(bcl, key, int, None, "bcl")
    try:
        BclConfig(**bcl)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.path) from exc
    cfg.bcl = bcl

    th = _section(raw, "thresholds", ("nominal", "adv", "score"))
    thresholds = {"nominal": 0.0, "adv": 0.0, "score": None}
    for key in ("nominal", "adv", "score"):
        if th.get(key) is not None:
            thresholds[key] = _typed(th, key, float, None, "thresholds")
    cfg.thresholds = thresholds

    pr = _section(raw, "probe", ("attacks", "episodes", "restarts"))
    cfg.probe = ProbeSettings(
        attacks=_kinds(pr.get("attacks", list(cfg.probe.attacks)), ATTACK_KINDS, "probe.attacks"),
        episodes=_typed(pr, "episodes", int, cfg.probe.episodes, "probe"),
        restarts=_typed(pr, "restarts", int, cfg.probe.restarts, "probe"))

    ev = _section(raw, "eval", ("epsilons", "attacks", "episodes", "restarts", "selections"))
    eps_raw = ev.get("epsilons", list(cfg.eval.epsilons))
    if not isinstance(eps_raw, list) or not eps_raw:
        raise ConfigError("expected a nonempty list", "eval.epsilons")
    cfg.eval = EvalSettings(
        epsilons=tuple(parse_budget(v, f"eval.epsilons[{i}]") for i, v in enumerate(eps_raw)),
        attacks=_kinds(ev.get("attacks", list(cfg.eval.attacks)), ATTACK_KINDS, "eval.attacks"),
        episodes=_typed(ev, "episodes", int, cfg.eval.episodes, "eval"),
        restarts=_typed(ev, "restarts", int, cfg.eval.restarts, "eval"),
        selections=_kinds(ev.get("selections", list(cfg.eval.selections)), ("final", "best"),
                          "eval.selections"))
    for sec, settings in (("probe", cfg.probe), ("eval", cfg.eval)):
        if settings.episodes < 1:
            raise ConfigError("must be >= 1", f"{sec}.episodes")
        if settings.restarts < 1:
            raise ConfigError("must be >= 1", f"{sec}.restarts")
    if "radial" in " ".join(cfg.variants) and cfg.trainer_kind == "ppo":
        raise ConfigError("RADIAL variants need the dqn trainer", "bcl.variants")
    return cfg


def load_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("file not found", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", str(path)) from exc
    return parse_config(raw)
