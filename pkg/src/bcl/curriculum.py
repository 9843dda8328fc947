"""Bootstrapped adversarial curriculum: budget schedules, robustness probing,
phase selection, and the run loops for every variant.

The orchestrator is agnostic to what a "model" is. It needs:

* a trainer ``train_fn(model, eps_lo, eps_hi, seed) -> model`` that runs one
  phase from the given bootstrap, ramping the training budget from ``eps_lo``
  to ``eps_hi``;
* an evaluator with ``nominal(model) -> float`` and
  ``adversarial(model, eps) -> float``.

Models exposing ``checksum()`` get their bootstrap checksum recorded in each
:class:`PhaseRecord`.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable, Protocol

from .errors import ConfigError, NumericError, TrainingAborted
from .scoring import model_score, phase_eval_score

VARIANTS = ("at", "ncl", "bcl_c", "bcl_mos", "bcl_radial", "bcl_radial_at")
SKIP_POLICIES = ("always_next", "max_skip")

# seed offset for the single retry round after a phase where every run failed
RETRY_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class Curriculum:
    budgets: tuple
    eps0: float = 0.0
    increment: float = 1.0 / 255

    def __post_init__(self):
        b = tuple(float(e) for e in self.budgets)
        object.__setattr__(self, "budgets", b)
        if not b:
            raise ConfigError("curriculum needs at least one budget", "curriculum.budgets")
        if not self.eps0 < b[0]:
            raise ConfigError("eps0 must be below the first budget", "curriculum.eps0")
        if any(lo >= hi for lo, hi in zip(b, b[1:])):
            raise ConfigError("budgets must be strictly increasing", "curriculum.budgets")

    @property
    def L(self):
        return len(self.budgets)

    @property
    def target(self):
        return self.budgets[-1]

    def eps(self, i):
        """Budget at 1-based index ``i``; index 0 is the base eps0."""
        if i == 0:
            return self.eps0
        if not 1 <= i <= self.L:
            raise IndexError(f"curriculum index {i} outside 0..{self.L}")
        return self.budgets[i - 1]

    def to_dict(self):
        return {"budgets": list(self.budgets), "eps0": self.eps0, "increment": self.increment}


def make_curriculum(eps0, target, increment=1.0 / 255):
    """Budgets eps0 + k*increment below target, then target itself.

    A budget within a small tolerance of the target is replaced by it, so
    (0, 2/255, 1/255) gives two budgets rather than a near-duplicate third.
    """
    if increment <= 0:
        raise ConfigError("increment must be positive", "curriculum.increment")
    if not eps0 < target:
        raise ConfigError(f"eps0 ({eps0}) must be below target ({target})", "curriculum.eps0")
    tol = 1e-9 * max(1.0, abs(target))
    budgets = []
    k = 1
    while True:
        e = eps0 + k * increment
        if e >= target - tol:
            break
        budgets.append(e)
        k += 1
    budgets.append(float(target))
    return Curriculum(tuple(budgets), float(eps0), float(increment))


def _as_fn(v):
    if callable(v):
        return v
    v = float(v)
    return lambda eps: v


@dataclass
class ThresholdPolicy:
    """Robustness bar V(eps). Each threshold is a constant or a function of eps.

    ``score`` is the bar a phase run's efficacy score must clear for the inner
    loop to stop early; when unset it is nominal + adv threshold. ``attack``
    documents which attack the evaluator uses when probing.
    """
    nominal: float | Callable = 0.0
    adv: float | Callable = 0.0
    score: float | Callable | None = None
    attack: object = None

    def nominal_threshold(self, eps):
        return self._finite(_as_fn(self.nominal)(eps), "nominal")

    def adv_threshold(self, eps):
        return self._finite(_as_fn(self.adv)(eps), "adv")

    def score_threshold(self, eps):
        if self.score is None:
            return self.nominal_threshold(eps) + self.adv_threshold(eps)
        return self._finite(_as_fn(self.score)(eps), "score")

    @staticmethod
    def _finite(v, name):
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"threshold must be finite, got {v}", f"thresholds.{name}")
        return v


class Evaluator(Protocol):
    def nominal(self, model) -> float: ...
    def adversarial(self, model, eps: float) -> float: ...


class FunctionEvaluator:
    """Wrap ``fn(model, eps) -> (nominal, adv)`` as an :class:`Evaluator`."""

    def __init__(self, fn):
        self.fn = fn

    def nominal(self, model):
        return self.fn(model, 0.0)[0]

    def adversarial(self, model, eps):
        return self.fn(model, eps)[1]


@dataclass
class RunRecord:
    k: int
    seed: int
    score: float
    nominal: float
    adv: float
    adv_prev: float
    failed: bool = False
    error: str = ""


@dataclass
class PhaseRecord:
    phase: int
    index: int
    eps: float
    eps_lo: float
    runs: list = field(default_factory=list)
    chosen: int = 0
    next_index: int = 0
    eps_best: float = 0.0
    probes: list = field(default_factory=list)
    bootstrap_checksum: str | None = None
    chosen_checksum: str | None = None
    path_score: float | None = None
    stage: str = "bcl"
    passed: bool | None = None
    wallclock: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["runs"] = [_finite_or_none(asdict(r)) if not isinstance(r, dict) else r for r in self.runs]
        return d


def _finite_or_none(d):
    # JSON has no infinities; failed runs carry score None instead of -inf
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


@dataclass
class BclConfig:
    variant: str = "bcl_c"
    K: int = 3
    K_min: int = 1
    M: int = 2
    base_seed: int = 0
    trainer: str = "dqn"
    ramp: bool = True
    at_restart_eps0: float | None = None
    stage2_variant: str = "bcl_c"
    score_epsilons: tuple | None = None
    track_best: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}", "bcl.variant")
        if self.K < 1:
            raise ConfigError("K must be >= 1", "bcl.K")
        if not 1 <= self.K_min <= self.K:
            raise ConfigError("need 1 <= K_min <= K", "bcl.K_min")
        if self.M < 1:
            raise ConfigError("M must be >= 1", "bcl.M")
        if self.trainer not in ("dqn", "ppo"):
            raise ConfigError(f"unknown trainer {self.trainer!r}", "bcl.trainer")
        if self.stage2_variant not in ("bcl_c", "bcl_mos"):
            raise ConfigError("stage2_variant must be bcl_c or bcl_mos", "bcl.stage2_variant")

    @property
    def skip_policy(self):
        return "max_skip" if self.variant == "bcl_mos" else "always_next"

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    """Outcome of one curriculum run. ``final`` is the last selected model and
    ``best`` the highest-scoring model along the path (equal to ``final``
    when path scores are not tracked)."""
    final: object
    best: object
    records: list
    best_phase: int | None = None
    stop_index: int | None = None
    stage1: "RunResult | None" = None

    @property
    def phases(self):
        return len(self.records)


def _checksum(model):
    fn = getattr(model, "checksum", None)
    return fn() if callable(fn) else None


def _score_epsilons(config, curriculum):
    if config.score_epsilons:
        return tuple(config.score_epsilons)
    t = curriculum.target
    return (t / 3, 2 * t / 3, t)


def _path_score(model, evaluator, eps_list):
    return model_score(evaluator.nominal(model), [evaluator.adversarial(model, e) for e in eps_list])


def eval_robust(model, curriculum, start, thresholds, evaluator, probes=None):
    """Smallest index in ``start..L`` at which ``model`` is not robust, or L+1.

    Nominal reward is checked once against the bar for the first budget in
    the slice; a miss returns ``start`` without running any attack. Budgets
    are then probed in increasing order, stopping at the first failure.
    ``probes`` collects (index, eps, reward, passed) for each check.
    """
    L = curriculum.L
    if not 1 <= start <= L:
        raise ValueError(f"probe slice must start within 1..{L}, got {start}")
    nominal = evaluator.nominal(model)
    passed = nominal >= thresholds.nominal_threshold(curriculum.eps(start))
    if probes is not None:
        probes.append({"index": 0, "eps": 0.0, "reward": nominal, "passed": passed})
    if not passed:
        return start
    for i in range(start, L + 1):
        e = curriculum.eps(i)
        r = evaluator.adversarial(model, e)
        ok = r >= thresholds.adv_threshold(e)
        if probes is not None:
            probes.append({"index": i, "eps": e, "reward": r, "passed": ok})
        if not ok:
            return i
    return L + 1


def choose_next(model, curriculum, j, thresholds, evaluator, skip_policy="always_next",
                probes=None):
    """Next curriculum index to train and the budget the model is credited with.

    ``always_next`` never probes and returns (j+1, eps_j). ``max_skip``
    advances to the smallest non-robust index i and returns (i, eps_{i-1});
    i = L+1 yields (L+1, eps_L), which ends the outer loop.
    """
    L = curriculum.L
    if not 0 <= j <= L:
        raise ValueError(f"j must lie in 0..{L}, got {j}")
    if skip_policy not in SKIP_POLICIES:
        raise ConfigError(f"unknown skip policy {skip_policy!r}", "bcl.skip_policy")
    if j == L:
        return L + 1, curriculum.eps(L)
    if skip_policy == "always_next":
        return j + 1, curriculum.eps(j)
    i = eval_robust(model, curriculum, j + 1, thresholds, evaluator, probes)
    return i, curriculum.eps(i - 1)


def _train_one(train_fn, model, eps_lo, eps_hi, seed):
    try:
        return train_fn(model, eps_lo, eps_hi, seed), ""
    except (NumericError, FloatingPointError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _run_round(model, train_fn, evaluator, eps_lo, eps_i, eps_prev, seeds, K_min, score_bar):
    runs, models = [], []
    for k, seed in enumerate(seeds, start=1):
        m, err = _train_one(train_fn, model, eps_lo, eps_i, seed)
        if m is None:
            runs.append(RunRecord(k, seed, -math.inf, math.nan, math.nan, math.nan, True, err))
            models.append(None)
        else:
            nominal = evaluator.nominal(m)
            adv_i = evaluator.adversarial(m, eps_i)
            adv_prev = evaluator.adversarial(m, eps_prev) if eps_prev > 0 else nominal
            v = phase_eval_score(nominal, adv_i, adv_prev)
            runs.append(RunRecord(k, seed, v, nominal, adv_i, adv_prev))
            models.append(m)
            if k >= K_min and v >= score_bar:
                break
    return runs, models


def _argmax_first(values):
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def bcl_run(f0, config, curriculum, train_fn, evaluator, thresholds, log=None):
    """Bootstrapped curriculum loop.

    Every phase trains up to K runs from the single best model so far, with
    seeds ``base_seed + phase*K + k``. The inner loop stops at the first run
    k >= K_min whose efficacy score clears the bar; the highest-scoring run
    becomes the next bootstrap. A run that raises a numeric error scores -inf.
    If every run of a phase fails, the phase is retried once with fresh
    seeds before the experiment aborts.
    """
    policy = config.skip_policy
    eps0 = curriculum.eps0
    if evaluator.nominal(f0) < thresholds.nominal_threshold(eps0) or (
            eps0 > 0 and evaluator.adversarial(f0, eps0) < thresholds.adv_threshold(eps0)):
        warnings.warn("initial model does not meet the robustness bar at eps0", RuntimeWarning)

    score_eps = _score_epsilons(config, curriculum)
    probes = []
    i, eps_best = choose_next(f0, curriculum, 0, thresholds, evaluator, policy, probes)
    model, records = f0, []
    best, best_score, best_phase = f0, -math.inf, None
    phase = 0
    while eps_best < curriculum.target:
        t0 = time.perf_counter()
        eps_i, eps_prev = curriculum.eps(i), curriculum.eps(i - 1)
        eps_lo = eps_prev if config.ramp else eps_i
        bar = thresholds.score_threshold(eps_i)
        seeds = [config.base_seed + phase * config.K + k for k in range(1, config.K + 1)]
        runs, models = _run_round(model, train_fn, evaluator, eps_lo, eps_i, eps_prev,
                                  seeds, config.K_min, bar)
        if all(m is None for m in models):
            retry = [s + RETRY_SEED_OFFSET for s in seeds]
            runs, models = _run_round(model, train_fn, evaluator, eps_lo, eps_i, eps_prev,
                                      retry, config.K_min, bar)
            if all(m is None for m in models):
                raise TrainingAborted(
                    f"phase {phase} (eps={eps_i:.6g}): all {len(runs)} runs failed twice; "
                    f"last error: {runs[-1].error}")
        kstar = _argmax_first([r.score for r in runs])
        boot_sum = _checksum(model)
        model = models[kstar]
        rec = PhaseRecord(phase=phase, index=i, eps=eps_i, eps_lo=eps_lo, runs=runs,
                          chosen=kstar + 1, bootstrap_checksum=boot_sum,
                          chosen_checksum=_checksum(model))
        probes = []
        i, eps_best = choose_next(model, curriculum, i, thresholds, evaluator, policy, probes)
        rec.next_index, rec.eps_best, rec.probes = i, eps_best, probes
        if config.track_best:
            rec.path_score = _path_score(model, evaluator, score_eps)
            if rec.path_score > best_score:
                best, best_score, best_phase = model, rec.path_score, phase
        rec.wallclock = time.perf_counter() - t0
        records.append(rec)
        if log is not None:
            log(rec, model)
        phase += 1
    if not config.track_best or best_phase is None:
        best, best_phase = model, (len(records) - 1 if records else None)
    return RunResult(final=model, best=best, records=records, best_phase=best_phase)


def radial_curriculum_run(f0, config, curriculum, train_fn, evaluator, thresholds, log=None):
    """Follow the baseline curriculum with the nominal-reward re-train rule.

    Each phase runs up to K times and accepts the first run whose nominal
    reward clears the bar; otherwise the highest-nominal run advances and a
    failure counter increments (it resets on any accepted phase). The run
    stops once the counter reaches M. The returned ``best`` is the model with
    the highest model score along the path.
    """
    score_eps = _score_epsilons(config, curriculum)
    model, records = f0, []
    best, best_score, best_phase = f0, -math.inf, None
    failures, stop_index = 0, None
    for phase, i in enumerate(range(1, curriculum.L + 1)):
        t0 = time.perf_counter()
        eps_i, eps_prev = curriculum.eps(i), curriculum.eps(i - 1)
        bar = thresholds.nominal_threshold(eps_i)

        def round_(seeds):
            runs, models, accepted = [], [], None
            for k, seed in enumerate(seeds, start=1):
                m, err = _train_one(train_fn, model, eps_prev, eps_i, seed)
                if m is None:
                    runs.append(RunRecord(k, seed, -math.inf, -math.inf, math.nan, math.nan, True, err))
                    models.append(None)
                    continue
                nominal = evaluator.nominal(m)
                runs.append(RunRecord(k, seed, nominal, nominal, math.nan, math.nan))
                models.append(m)
                if nominal >= bar:
                    accepted = k
                    break
            return runs, models, accepted

        seeds = [config.base_seed + phase * config.K + k for k in range(1, config.K + 1)]
        runs, models, accepted = round_(seeds)
        if all(m is None for m in models):
            runs, models, accepted = round_([s + RETRY_SEED_OFFSET for s in seeds])
            if all(m is None for m in models):
                raise TrainingAborted(
                    f"radial phase {phase} (eps={eps_i:.6g}): all runs failed twice; "
                    f"last error: {runs[-1].error}")
        kstar = accepted - 1 if accepted else _argmax_first([r.nominal for r in runs])
        boot_sum = _checksum(model)
        model = models[kstar]
        failures = 0 if accepted else failures + 1
        rec = PhaseRecord(phase=phase, index=i, eps=eps_i, eps_lo=eps_prev, runs=runs,
                          chosen=kstar + 1, next_index=i + 1, eps_best=eps_i,
                          bootstrap_checksum=boot_sum, chosen_checksum=_checksum(model),
                          stage="radial", passed=bool(accepted))
        rec.path_score = _path_score(model, evaluator, score_eps)
        if rec.path_score > best_score:
            best, best_score, best_phase = model, rec.path_score, phase
        rec.wallclock = time.perf_counter() - t0
        records.append(rec)
        if log is not None:
            log(rec, model)
        if failures >= config.M:
            stop_index = i
            break
    return RunResult(final=model, best=best, records=records, best_phase=best_phase,
                     stop_index=stop_index)


def radial_plus_at_run(f0, config, curriculum, train_radial, train_at, evaluator,
                       thresholds, log=None, at_thresholds=None):
    """RADIAL curriculum until it stops, then an AT curriculum from its best model.

    The AT stage starts at ``config.at_restart_eps0`` or, by default, two
    increments below the stage-1 stop budget and runs to the same target.
    If stage 1 completes the whole curriculum, stage 2 is a single
    confirmation probe at the target with no training.
    """
    stage1 = radial_curriculum_run(f0, config, curriculum, train_radial, evaluator,
                                   thresholds, log)
    if not stage1.records:
        raise TrainingAborted("radial stage finished without completing a phase")
    at_thresholds = at_thresholds or thresholds
    start = stage1.best
    if stage1.stop_index is None:
        probes = []
        L = curriculum.L
        eval_robust(start, curriculum, L, at_thresholds, evaluator, probes)
        rec = PhaseRecord(phase=len(stage1.records), index=L + 1, eps=curriculum.target,
                          eps_lo=curriculum.target, chosen=0, next_index=L + 1,
                          eps_best=curriculum.target, probes=probes,
                          bootstrap_checksum=_checksum(start), chosen_checksum=_checksum(start),
                          stage="confirm", passed=all(p["passed"] for p in probes))
        if log is not None:
            log(rec, start)
        return RunResult(final=start, best=start, records=stage1.records + [rec],
                         best_phase=stage1.best_phase, stage1=stage1)
    eps_stop = curriculum.eps(stage1.stop_index)
    base = config.at_restart_eps0
    if base is None:
        base = max(0.0, eps_stop - 2 * curriculum.increment)
    if not base < curriculum.target:
        raise ConfigError("AT restart budget must be below the target", "bcl.at_restart_eps0")
    cur2 = make_curriculum(base, curriculum.target, curriculum.increment)
    cfg2 = BclConfig(**{**config.to_dict(), "variant": config.stage2_variant,
                        "base_seed": config.base_seed + len(stage1.records) * config.K})
    offset = len(stage1.records)

    def log2(rec, model):
        rec.stage, rec.phase = "at", rec.phase + offset
        if log is not None:
            log(rec, model)

    stage2 = bcl_run(start, cfg2, cur2, train_at, evaluator, at_thresholds, log2)
    return RunResult(final=stage2.final, best=stage2.best,
                     records=stage1.records + stage2.records,
                     best_phase=None if stage2.best_phase is None else stage2.best_phase + offset,
                     stop_index=stage1.stop_index, stage1=stage1)


def variant_setup(variant, config, curriculum):
    """Concrete (config, curriculum) for the curriculum-driven variants.

    AT trains once at the target from eps0 without a ramp; NCL is K=1 with
    always_next; BCL-C forces K_min = K.
    """
    cfg = config.to_dict()
    cfg["variant"] = variant
    if variant == "at":
        cfg.update(K=1, K_min=1, ramp=False)
        curriculum = Curriculum((curriculum.target,), curriculum.eps0,
                                curriculum.target - curriculum.eps0)
    elif variant == "ncl":
        cfg.update(K=1, K_min=1)
    elif variant == "bcl_c":
        cfg.update(K_min=cfg["K"])
    return BclConfig(**cfg), curriculum


def run_variant(variant, f0, config, curriculum, trainers, evaluator, thresholds,
                log=None, at_thresholds=None):
    """Run one named variant. ``trainers`` maps loss mode ("at", "radial")
    to a phase trainer."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}", "bcl.variant")
    if variant == "bcl_radial":
        cfg = BclConfig(**{**config.to_dict(), "variant": variant})
        return radial_curriculum_run(f0, cfg, curriculum, trainers["radial"], evaluator,
                                     thresholds, log)
    if variant == "bcl_radial_at":
        cfg = BclConfig(**{**config.to_dict(), "variant": variant})
        return radial_plus_at_run(f0, cfg, curriculum, trainers["radial"], trainers["at"],
                                  evaluator, thresholds, log, at_thresholds)
    cfg, cur = variant_setup(variant, config, curriculum)
    return bcl_run(f0, cfg, cur, trainers["at"], evaluator, thresholds, log)
