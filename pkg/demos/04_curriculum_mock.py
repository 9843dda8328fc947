"""
Curriculum orchestration with an oracle trainer
===============================================

The mock trainer returns a model robust up to ``reach`` increments past
the budget it was trained at, and the mock evaluator reports reward 1
inside that range and 0 outside. That makes the phase sequence of every
variant easy to read off.
"""

# %%
from bcl.curriculum import BclConfig, ThresholdPolicy, make_curriculum, run_variant
from bcl.mock import MockEvaluator, MockModel, MockTrainer

INC = 1 / 255
curriculum = make_curriculum(0.0, 8 * INC, INC)
bar = ThresholdPolicy(nominal=0.5, adv=0.5)

# %%
for variant in ("at", "ncl", "bcl_c", "bcl_mos"):
    trainer = MockTrainer(reach=2, increment=INC)
    run = run_variant(variant, MockModel(), BclConfig(K=2), curriculum, {"at": trainer},
                      MockEvaluator(), bar)
    trained = [round(r.eps / INC) for r in run.records]
    print(f"{variant:8s} {run.phases} phases, {len(trainer.calls)} training runs, "
          f"budgets trained (x/255): {trained}")

# %% RADIAL curriculum: stops after M consecutive phases below the nominal bar
pattern = [1, 1, 0, 1, 0, 0, 1, 1]


def radial_trainer(model, lo, hi, seed):
    return MockModel(hi, nominal=float(pattern[round(hi / INC) - 1]))


run = run_variant("bcl_radial", MockModel(), BclConfig(K=1, M=2), curriculum,
                  {"radial": radial_trainer}, MockEvaluator(), bar)
print("radial stops at index", run.stop_index, "passed:", [r.passed for r in run.records])
