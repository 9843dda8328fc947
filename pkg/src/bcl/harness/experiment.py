"""End-to-end experiment driver: pretrain, curriculum runs, evaluation, report."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .. import envs
from ..attacks import AttackSpec
from ..curriculum import ThresholdPolicy, make_curriculum, run_variant
from ..dqn import KappaSchedule, train_dqn_phase
from ..mock import MockEvaluator, MockModel, MockTrainer
from ..nn import Network, NetworkSpec
from ..ppo import ActorCritic, train_ppo_phase
from .checkpoint import save_checkpoint
from .config import load_config
from .evaluation import ModelEvaluator, evaluate
from .ledger import Ledger
from .report import write_report

LEDGER_NAME = "runs.jsonl"


def initial_model(cfg, seed):
    if cfg.trainer_kind == "mock":
        return MockModel()
    info = envs.env_info(cfg.env_kind)
    if cfg.trainer_kind == "ppo":
        return ActorCritic.create(info["obs_dim"], info["n_actions"], cfg.hidden, seed)
    spec = NetworkSpec((info["obs_dim"], *cfg.hidden, info["n_actions"]), dueling=cfg.dueling)
    return Network.create(spec, seed)


def make_trainers(cfg):
    """Phase trainers keyed by loss mode, each ``(model, lo, hi, seed) -> model``."""
    if cfg.trainer_kind == "mock":
        t = MockTrainer(cfg.mock_reach, cfg.increment)
        return {"at": t, "radial": t, "standard": t}
    env = cfg.env_kind
    if cfg.trainer_kind == "ppo":
        adv = cfg.ppo_config()
        std = replace(adv, kappa=KappaSchedule("constant", value=1.0))
        return {"at": lambda m, lo, hi, s: train_ppo_phase(m, env, lo, hi, adv, s),
                "standard": lambda m, lo, hi, s: train_ppo_phase(m, env, lo, hi, std, s)}
    cfgs = {mode: cfg.dqn_config(mode) for mode in ("at", "radial", "standard")}
    return {mode: (lambda c: lambda m, lo, hi, s: train_dqn_phase(m, env, lo, hi, c, s))(c)
            for mode, c in cfgs.items()}


def make_probe_evaluator(cfg):
    if cfg.trainer_kind == "mock":
        return MockEvaluator()
    p = cfg.probe
    return ModelEvaluator(cfg.env_kind, p.attacks, p.episodes, cfg.seed, p.restarts)


def thresholds_of(cfg):
    return ThresholdPolicy(**cfg.thresholds, attack=list(cfg.probe.attacks))


@dataclass
class ExperimentResult:
    out_dir: Path
    ledger_path: Path
    runs: dict = field(default_factory=dict)
    report: tuple = ()


def _checkpoint(model, out, name, meta):
    if isinstance(model, MockModel):
        return None
    path = out / "checkpoints" / f"{name}.bclckpt"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, meta, path)
    return str(path.relative_to(out))


def _eval_records(cfg, model, method, selection, seed):
    base = {"method": method, "selection": selection, "seed": seed}
    if isinstance(model, MockModel):
        ev = MockEvaluator()
        out = [dict(base, epsilon=0.0, attack="none", mean=ev.nominal(model), sem=0.0,
                    episodes=1, rewards=[ev.nominal(model)])]
        for e in cfg.eval.epsilons:
            r = ev.adversarial(model, e)
            out.append(dict(base, epsilon=e, attack="worst", mean=r, sem=0.0, episodes=1, rewards=[r]))
        return out
    out, nominal_done = [], False
    for e in cfg.eval.epsilons:
        suite = [AttackSpec(k, e, restarts=cfg.eval.restarts) for k in cfg.eval.attacks]
        summary = evaluate(model, cfg.env_kind, suite, cfg.eval.episodes, seed,
                           model_id=model.checksum()[:16])
        if not nominal_done:
            n = summary.nominal
            out.append(dict(base, epsilon=0.0, attack="none", mean=n.mean, sem=n.sem,
                            episodes=n.episodes, rewards=n.rewards))
            nominal_done = True
        for r in summary.attacks:
            out.append(dict(base, epsilon=e, attack=r.attack, mean=r.mean, sem=r.sem,
                            episodes=r.episodes, rewards=r.rewards))
        w = summary.worst
        out.append(dict(base, epsilon=e, attack="worst", mean=w.mean, sem=w.sem,
                        episodes=w.episodes, rewards=w.rewards, worst_attack=w.attack))
    return out


def pretrain(cfg, seed, ledger=None):
    """Standard (unperturbed) training from a fresh init: the shared starting
    point of every method, and the ``vanilla`` method itself."""
    model = initial_model(cfg, seed)
    if cfg.trainer_kind == "mock" or cfg.pretrain_frames == 0:
        return model
    trainer = make_trainers(replace(cfg, frames_per_phase=cfg.pretrain_frames))["standard"]
    model = trainer(model, 0.0, 0.0, seed)
    if ledger is not None:
        ledger.append("pretrain", {"seed": seed, "frames": cfg.pretrain_frames,
                                   "checksum": model.checksum()})
    return model


def run_experiment(config, out_dir=None, seed=None, variants=None):
    """Run every configured method and write ledger, checkpoints and report.

    ``config`` is a path or a parsed :class:`ExperimentConfig`; the keyword
    arguments override its output directory, seed and method list.
    """
    cfg = load_config(config) if isinstance(config, (str, Path)) else config
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if variants is not None:
        cfg = replace(cfg, variants=tuple(variants))
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ledger = Ledger(out / LEDGER_NAME)
    ledger.append("run_start", {"name": cfg.name, "seed": cfg.seed, "config": cfg.to_dict()})
    result = ExperimentResult(out, ledger.path)

    f0 = pretrain(cfg, cfg.seed, ledger)
    curriculum = make_curriculum(cfg.eps0, cfg.target, cfg.increment)
    thresholds = thresholds_of(cfg)
    for method in cfg.variants:
        if method == "vanilla":
            final = best = f0
            phases = 0
        else:
            def log(rec, model, method=method):
                name = f"{method}-s{cfg.seed}-p{rec.phase}"
                meta = {"method": method, "seed": cfg.seed, "phase": rec.phase,
                        "eps": rec.eps, "trainer": cfg.trainer_kind, "env": cfg.env_kind}
                path = _checkpoint(model, out, name, meta)
                ledger.append("phase", {"method": method, "seed": cfg.seed, "checkpoint": path,
                                        **rec.to_dict()})

            run = run_variant(method, f0, cfg.bcl_config(method), curriculum, make_trainers(cfg),
                              make_probe_evaluator(cfg), thresholds, log)
            result.runs[method] = run
            final, best, phases = run.final, run.best, run.phases
        for selection in cfg.eval.selections:
            model = final if selection == "final" else best
            for rec in _eval_records(cfg, model, method, selection, cfg.seed):
                ledger.append("eval", rec)
        ledger.append("method_end", {"method": method, "seed": cfg.seed, "phases": phases,
                                     "final_checksum": final.checksum(),
                                     "best_checksum": best.checksum()})
    ledger.append("run_end", {"methods": list(cfg.variants)})
    result.report = write_report(ledger.path, out)
    return result
