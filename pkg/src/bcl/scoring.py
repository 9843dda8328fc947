"""Model-selection scores."""
import numpy as np


def model_score(r_nominal, adv_rewards):
    """Nominal reward plus the mean of the adversarial rewards at the reported budgets."""
    adv_rewards = list(adv_rewards)
    if not adv_rewards:
        raise ValueError("need at least one adversarial reward")
    return r_nominal + sum(adv_rewards) / len(adv_rewards)


def phase_eval_score(r_nominal, r_adv_i, r_adv_prev):
    """Efficacy of a phase run: nominal + mean of the rewards at the trained
    budget and the budget before it."""
    return r_nominal + 0.5 * (r_adv_i + r_adv_prev)


def median_of_runs(scores):
    """Index of the median-scoring run; lower middle for even counts, and
    the lowest index among equal scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no runs to choose from")
    order = np.argsort(scores, kind="stable")
    median = scores[order[(len(order) - 1) // 2]]
    return int(np.flatnonzero(scores == median)[0])
