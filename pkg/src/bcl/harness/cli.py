"""Command line front end: ``bcl {train,bcl,eval,report}``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (including
aborted curricula), 4 checkpoint integrity error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..attacks import ATTACK_KINDS, AttackSpec
from ..errors import ConfigError, IntegrityError, NumericError, TrainingAborted
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config, parse_budget
from .evaluation import evaluate
from .experiment import LEDGER_NAME, initial_model, make_trainers, run_experiment
from .ledger import Ledger
from .report import eps_label, write_report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INTEGRITY = 0, 2, 3, 4
VARIANT_FLAGS = {"at": "at", "ncl": "ncl", "bcl-c": "bcl_c", "bcl-mos": "bcl_mos",
                 "bcl-radial": "bcl_radial", "bcl-radial-at": "bcl_radial_at"}


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")

    p = argparse.ArgumentParser(prog="bcl", description="Adversarial curriculum training for small RL agents.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a single phase")
    t.add_argument("--loss-mode", choices=("standard", "at", "radial"), default="at")
    t.add_argument("--eps-lo", default=None, help="starting budget (default: --eps-hi)")
    t.add_argument("--eps-hi", default=None, help="final budget (default: config target)")
    t.add_argument("--init", type=Path, help="checkpoint to start from (default: fresh init)")

    b = sub.add_parser("bcl", parents=[common], help="run a full curriculum")
    b.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default=None,
                   help="method to run (default: every method in the config)")

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint under attack")
    e.add_argument("checkpoint", type=Path)
    e.add_argument("--epsilon", action="append", help="budget, e.g. 25/255 (repeatable)")
    e.add_argument("--attack", action="append", choices=ATTACK_KINDS, help="attack kind (repeatable)")
    e.add_argument("--episodes", type=int, default=None)
    e.add_argument("--env", default=None, help="environment kind (default: from config)")

    r = sub.add_parser("report", parents=[common], help="rebuild report tables from a ledger")
    r.add_argument("--ledger", type=Path, help=f"ledger path (default: OUT/{LEDGER_NAME})")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out(args, cfg):
    return Path(args.out if args.out is not None else cfg.out_dir)


def cmd_train(args):
    cfg = _config(args)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.trainer_kind == "mock":
        raise ConfigError("the train command needs a real trainer", "trainer.kind")
    hi = parse_budget(args.eps_hi, "--eps-hi") if args.eps_hi is not None else cfg.target
    lo = parse_budget(args.eps_lo, "--eps-lo") if args.eps_lo is not None else hi
    if not 0 <= lo <= hi < 1:
        raise ConfigError("need 0 <= eps-lo <= eps-hi < 1", "--eps-lo")
    model = load_checkpoint(args.init).model if args.init else initial_model(cfg, cfg.seed)
    trainers = make_trainers(cfg)
    if args.loss_mode not in trainers:
        raise ConfigError(f"loss mode {args.loss_mode!r} unavailable for {cfg.trainer_kind}",
                          "--loss-mode")
    model = trainers[args.loss_mode](model, lo, hi, cfg.seed)
    path = out / f"train-s{cfg.seed}.bclckpt"
    save_checkpoint(model, {"method": "train", "seed": cfg.seed, "eps_lo": lo, "eps_hi": hi,
                            "loss_mode": args.loss_mode, "trainer": cfg.trainer_kind,
                            "env": cfg.env_kind}, path)
    Ledger(out / LEDGER_NAME).append("phase", {
        "method": "train", "seed": cfg.seed, "eps_lo": lo, "eps": hi,
        "loss_mode": args.loss_mode, "checkpoint": path.name, "checksum": model.checksum()})
    print(f"saved {path}")
    return EXIT_OK


def cmd_bcl(args):
    cfg = _config(args)
    variants = [VARIANT_FLAGS[args.variant]] if args.variant else None
    res = run_experiment(cfg, out_dir=_out(args, cfg), variants=variants)
    for method, run in res.runs.items():
        print(f"{method}: {run.phases} phases, last trained budget {eps_label(run.records[-1].eps) if run.records else '-'}")
    print(f"ledger {res.ledger_path}")
    print(res.report[0].read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    ck = load_checkpoint(args.checkpoint)
    env = args.env or ck.metadata.get("env") or cfg.env_kind
    episodes = args.episodes if args.episodes is not None else cfg.eval.episodes
    if episodes < 1:
        raise ConfigError("must be >= 1", "--episodes")
    budgets = ([parse_budget(e, "--epsilon") for e in args.epsilon] if args.epsilon
               else list(cfg.eval.epsilons))
    kinds = args.attack or list(cfg.eval.attacks)
    ledger = Ledger(args.out / LEDGER_NAME) if args.out else None
    model_id = ck.model.checksum()[:16]
    print(f"{'epsilon':>8} {'attack':>16} {'mean':>9} {'sem':>7}")
    nominal_done = False
    for eps in budgets:
        suite = [AttackSpec(k, eps, restarts=cfg.eval.restarts) for k in kinds]
        s = evaluate(ck.model, env, suite, episodes, cfg.seed, model_id)
        rows = ([] if nominal_done else [s.nominal]) + s.attacks
        nominal_done = True
        for r in rows:
            print(f"{eps_label(r.epsilon):>8} {r.attack:>16} {r.mean:9.3f} {r.sem:7.3f}")
            if ledger:
                ledger.append("eval", {"method": str(args.checkpoint.name), "selection": "checkpoint",
                                       "seed": cfg.seed, **r.to_dict()})
        if ledger and s.worst is not None:
            w = s.worst
            ledger.append("eval", {"method": str(args.checkpoint.name), "selection": "checkpoint",
                                   "seed": cfg.seed, **w.to_dict(), "attack": "worst",
                                   "worst_attack": w.attack})
    return EXIT_OK


def cmd_report(args):
    cfg = _config(args)
    out = _out(args, cfg)
    ledger = args.ledger or out / LEDGER_NAME
    if not ledger.exists():
        raise ConfigError("ledger not found", str(ledger))
    md, csv_path = write_report(ledger, out)
    print(md.read_text(encoding="utf-8"), end="")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "bcl": cmd_bcl, "eval": cmd_eval, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (NumericError, TrainingAborted, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
