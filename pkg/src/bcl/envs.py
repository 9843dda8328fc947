"""Toy environments with observations in [0, 1]^d.

RidgeWalk
    A chain of 12 cells. The agent starts in cell 0 and moves left or
    right; reaching cell 11 pays +1 and ends the episode. Every step costs
    0.02, the horizon is 32 steps. The observation is a Gaussian bump over a
    24-point grid centred on the agent's position, so a small l-inf shift
    of the bump can make the agent look like it is one cell over.

CatchPixels
    An 8x8 board. Balls drop from the top row one row per step; a 2-wide
    paddle on the bottom row moves left/stay/right. Catching pays +1,
    missing -1. The episode is 6 balls. Ball columns come from a SplitMix64
    stream seeded by the reset seed.

States are immutable; ``step`` returns a new state alongside the outcome.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ProtocolError

MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood constants)."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def randbelow(self, n):
        return self.next_u64() % n


# Both environments are tiny, so states carry the RNG position as a plain int.
def _draw(rng_state, n):
    g = SplitMix64(0)
    g.state = rng_state
    value = g.randbelow(n)
    return g.state, value


@dataclass(frozen=True)
class StepOutcome:
    obs: np.ndarray
    reward: float
    done: bool
    # True when the episode ended in a real terminal state (not a horizon cut);
    # trainers use it to mask bootstrapping.
    terminal: bool = False


# ---------------------------------------------------------------- RidgeWalk

RIDGE_CELLS = 12
RIDGE_HORIZON = 32
RIDGE_DIM = 24
RIDGE_SIGMA = 0.08
RIDGE_STEP_COST = 0.02
RIDGE_GOAL_REWARD = 1.0

_GRID = np.arange(RIDGE_DIM) / (RIDGE_DIM - 1)


def encode_ridgewalk(p):
    centre = p / (RIDGE_CELLS - 1)
    return np.exp(-((_GRID - centre) ** 2) / (2.0 * RIDGE_SIGMA ** 2))


@dataclass(frozen=True)
class RidgeWalkState:
    position: int = 0
    t: int = 0
    done: bool = False


# ---------------------------------------------------------------- CatchPixels

CATCH_SIZE = 8
CATCH_BALLS = 6
CATCH_PADDLE_WIDTH = 2
CATCH_PADDLE_START = 3
# 6 balls x 7 falling steps + 5 empty steps between balls
CATCH_HORIZON = 64


@dataclass(frozen=True)
class CatchState:
    paddle: int = CATCH_PADDLE_START     # leftmost paddle column
    ball_row: int = -1                   # -1 while the board has no ball
    ball_col: int = 0
    balls_done: int = 0
    t: int = 0
    rng_state: int = 0
    done: bool = False


def encode_catchpixels(state):
    board = np.zeros((CATCH_SIZE, CATCH_SIZE))
    if state.ball_row >= 0:
        r, c = state.ball_row, state.ball_col
        board[r, c] = 1.0
        if c > 0:
            board[r, c - 1] = max(board[r, c - 1], 0.5)
        if c < CATCH_SIZE - 1:
            board[r, c + 1] = max(board[r, c + 1], 0.5)
    board[CATCH_SIZE - 1, state.paddle:state.paddle + CATCH_PADDLE_WIDTH] = 1.0
    return board.ravel()


def _spawn(state):
    rng_state, col = _draw(state.rng_state, CATCH_SIZE)
    return replace(state, ball_row=0, ball_col=col, rng_state=rng_state)


# ---------------------------------------------------------------- registry

ENV_KINDS = ("ridgewalk", "catchpixels")

_INFO = {
    "ridgewalk": {"obs_dim": RIDGE_DIM, "n_actions": 2, "horizon": RIDGE_HORIZON},
    "catchpixels": {"obs_dim": CATCH_SIZE * CATCH_SIZE, "n_actions": 3,
                    "horizon": CATCH_HORIZON},
}


def env_info(kind):
    """``obs_dim``, ``n_actions`` and ``horizon`` for an environment kind."""
    try:
        return dict(_INFO[kind])
    except KeyError:
        raise ConfigError(f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")


def reset(kind, seed=0):
    if kind == "ridgewalk":
        state = RidgeWalkState()
        return state, encode_ridgewalk(0)
    if kind == "catchpixels":
        state = _spawn(CatchState(rng_state=int(seed) & MASK64))
        return state, encode_catchpixels(state)
    raise ConfigError(f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")


def observe(state):
    if isinstance(state, RidgeWalkState):
        return encode_ridgewalk(state.position)
    return encode_catchpixels(state)


def _step_ridgewalk(state, action):
    if action not in (0, 1):
        raise ValueError(f"RidgeWalk action must be 0 (left) or 1 (right), got {action}")
    p = state.position + (1 if action == 1 else -1)
    p = min(max(p, 0), RIDGE_CELLS - 1)
    t = state.t + 1
    reward = -RIDGE_STEP_COST
    terminal = p == RIDGE_CELLS - 1
    if terminal:
        reward += RIDGE_GOAL_REWARD
    done = terminal or t >= RIDGE_HORIZON
    new = RidgeWalkState(p, t, done)
    return new, StepOutcome(encode_ridgewalk(p), reward, done, terminal)


def _step_catch(state, action):
    if action not in (0, 1, 2):
        raise ValueError(f"CatchPixels action must be 0, 1 or 2, got {action}")
    paddle = min(max(state.paddle + action - 1, 0), CATCH_SIZE - CATCH_PADDLE_WIDTH)
    state = replace(state, paddle=paddle, t=state.t + 1)
    reward = 0.0
    if state.ball_row < 0:
        state = _spawn(state)
    else:
        row = state.ball_row + 1
        if row == CATCH_SIZE - 1:
            caught = paddle <= state.ball_col < paddle + CATCH_PADDLE_WIDTH
            reward = 1.0 if caught else -1.0
            state = replace(state, ball_row=-1, balls_done=state.balls_done + 1)
        else:
            state = replace(state, ball_row=row)
    terminal = state.balls_done >= CATCH_BALLS
    done = terminal or state.t >= CATCH_HORIZON
    state = replace(state, done=done)
    return state, StepOutcome(encode_catchpixels(state), reward, done, terminal)


def step(state, action):
    """Advance one step. Returns ``(new_state, StepOutcome)``."""
    if state.done:
        raise ProtocolError("episode is over; call reset() before stepping again")
    action = int(action)
    if isinstance(state, RidgeWalkState):
        return _step_ridgewalk(state, action)
    return _step_catch(state, action)
