"""Oracle trainer/evaluator pair for exercising the curriculum logic.

A mock model withstands every budget up to ``robust_to``. Training at
``eps_hi`` yields a model robust to ``eps_hi + reach * increment``, so a
positive ``reach`` lets opportunistic skipping jump ahead.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

TOL = 1e-12


@dataclass(frozen=True)
class MockModel:
    robust_to: float = 0.0
    nominal: float = 1.0
    history: tuple = ()

    def checksum(self):
        return hashlib.sha256(repr((self.robust_to, self.nominal, self.history)).encode()).hexdigest()


class MockTrainer:
    def __init__(self, reach=0, increment=1 / 255):
        self.reach = reach
        self.increment = increment
        self.calls = []

    def __call__(self, model, eps_lo, eps_hi, seed):
        self.calls.append((model.checksum(), eps_lo, eps_hi, seed))
        return MockModel(eps_hi + self.reach * self.increment, model.nominal,
                         model.history + ((eps_hi, seed),))


class MockEvaluator:
    """Nominal reward is the model's; adversarial reward is 1 inside its
    robust range and 0 beyond it."""

    def __init__(self):
        self.calls = []

    def nominal(self, model):
        self.calls.append(("nominal", None))
        return model.nominal

    def adversarial(self, model, eps):
        self.calls.append(("adv", eps))
        return 1.0 if eps <= model.robust_to + TOL else 0.0
