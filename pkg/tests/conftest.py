import numpy as np
import pytest

from gsgi.env import (
    AttackerAction,
    DensityMap,
    GameConfig,
    Move,
    Status,
    new_game,
    step,
)


def make_density(side=7, fill=0.0, cells=None):
    """Density map with a constant fill and optional per-cell overrides."""
    p = np.full((side, side), fill, dtype=np.float64)
    for (r, c), v in (cells or {}).items():
        p[r, c] = v
    return DensityMap(p)


def seed_with_entry(cfg, density, corner, start=0):
    """A seed whose game starts with the attacker at `corner`."""
    for seed in range(start, start + 200):
        if new_game(cfg, density, seed).attacker_entry_corner == corner:
            return seed
    raise AssertionError(f"no seed found for corner {corner}")


def run_scripted(cfg, density, seed, patroller_moves, attacker_actions):
    """Apply aligned action scripts; returns (states, outcomes) with
    states[0] the initial state."""
    state = new_game(cfg, density, seed)
    states = [state]
    outcomes = []
    for a_p, a_a in zip(patroller_moves, attacker_actions):
        state, out = step(state, a_p, a_a)
        states.append(state)
        outcomes.append(out)
    return states, outcomes


STAND_ATTACK = AttackerAction(Move.STAND, False)
