"""Scripted attacker policies.

The heuristic random walk is a stand-in: the original heuristic it
replaces is referenced in the wider literature without a published rule,
so the concrete weights here (softmax sharpness `beta`, footprint
avoidance factor) are this project's own choices, exposed as arguments.

Phase 1 (snares left): move to a reachable cell with probability
proportional to exp(beta * p_attack(cell)); moves that strictly increase
the distance from patroller footprints seen in the current cell get their
weight doubled; a snare is placed with probability p_attack(own cell) when
none is already there. Phase 2 (no snares left): walk a shortest path back
to the entry corner, ties uniform, and exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .env import (
    ATTACKER,
    OPPOSITE_DIRECTION,
    PATROLLER,
    AttackerAction,
    Cell,
    DensityMap,
    Direction,
    GameConfig,
    GameState,
    Move,
    Sense,
)
from .errors import UsageError
from .rng import SplitMix64


@dataclass(frozen=True)
class AttackerView:
    """What the attacker policy is allowed to see."""

    own_pos: Cell
    entry_corner: Cell
    snares_remaining: int
    density: DensityMap
    patroller_footprints_here: frozenset  # of (Direction, Sense)
    t: int
    snare_at_pos: bool


def attacker_view(state: GameState, config: GameConfig) -> AttackerView:
    """Project the game state onto the attacker's view."""
    if not state.attacker_in_game:
        raise UsageError("attacker is no longer in the game")
    pos = state.attacker_pos
    flags = state.footprints[PATROLLER, :, pos[0], pos[1]]
    here = frozenset(
        (Direction(f // 2), Sense(f % 2)) for f in range(8) if flags[f]
    )
    return AttackerView(
        own_pos=pos,
        entry_corner=state.attacker_entry_corner,
        snares_remaining=config.max_snares - state.snares_placed_count,
        density=state.density,
        patroller_footprints_here=here,
        t=state.t,
        snare_at_pos=state.active_snare_at(pos) is not None,
    )


_BORDER_OFFSET = {
    Direction.NORTH: (-0.5, 0.0),
    Direction.SOUTH: (0.5, 0.0),
    Direction.WEST: (0.0, -0.5),
    Direction.EAST: (0.0, 0.5),
}


def crossed_border(direction: Direction, sense: Sense) -> Direction:
    """The cell border a footprint sits on: a leaving print lies on the
    border faced by its movement direction, an entering print on the
    opposite one (you enter a cell moving north through its south border)."""
    return direction if sense == Sense.LEAVING else OPPOSITE_DIRECTION[direction]


def _reachable(pos: Cell, grid_side: int):
    """Distinct destination cells with a representative move each;
    stand-still represents the own cell."""
    cells = [(Move.STAND, pos)]
    seen = {pos}
    for move in (Move.UP, Move.DOWN, Move.RIGHT, Move.LEFT):
        dr, dc = {
            Move.UP: (-1, 0),
            Move.DOWN: (1, 0),
            Move.RIGHT: (0, 1),
            Move.LEFT: (0, -1),
        }[move]
        dest = (pos[0] + dr, pos[1] + dc)
        if 0 <= dest[0] < grid_side and 0 <= dest[1] < grid_side and dest not in seen:
            cells.append((move, dest))
            seen.add(dest)
    return cells


def _min_footprint_distance(cell: Cell, pos: Cell, borders) -> float:
    best = math.inf
    for b in borders:
        orow, ocol = _BORDER_OFFSET[b]
        mid = (pos[0] + orow, pos[1] + ocol)
        d = math.hypot(cell[0] - mid[0], cell[1] - mid[1])
        if d < best:
            best = d
    return best


def heuristic_random_walk(
    view: AttackerView,
    rng: SplitMix64,
    beta: float = 4.0,
    avoid_factor: float = 2.0,
) -> AttackerAction:
    """Density-seeking snare placement, then shortest-path retreat."""
    p_map = view.density.p_attack
    side = view.density.grid_side

    if view.snares_remaining <= 0:
        return AttackerAction(_retreat_move(view, rng), False)

    candidates = _reachable(view.own_pos, side)
    weights = [math.exp(beta * p_map[cell[0], cell[1]]) for _, cell in candidates]
    borders = {crossed_border(d, s) for d, s in view.patroller_footprints_here}
    if borders:
        d_own = _min_footprint_distance(view.own_pos, view.own_pos, borders)
        for i, (_, cell) in enumerate(candidates):
            if _min_footprint_distance(cell, view.own_pos, borders) > d_own:
                weights[i] *= avoid_factor
    move = candidates[rng.choice_weighted(weights)][0]

    place = False
    if not view.snare_at_pos:
        place = rng.uniform() < p_map[view.own_pos[0], view.own_pos[1]]
    return AttackerAction(move, place)


def _retreat_move(view: AttackerView, rng: SplitMix64) -> Move:
    r, c = view.own_pos
    er, ec = view.entry_corner
    options = []
    if er < r:
        options.append(Move.UP)
    elif er > r:
        options.append(Move.DOWN)
    if ec > c:
        options.append(Move.RIGHT)
    elif ec < c:
        options.append(Move.LEFT)
    if not options:
        return Move.STAND
    if len(options) == 1:
        return options[0]
    return options[rng.below(len(options))]


def random_attacker(view: AttackerView, rng: SplitMix64) -> AttackerAction:
    """Uniform over the 10 actions; never places with an empty budget."""
    move = Move(rng.below(5))
    if view.snares_remaining <= 0:
        return AttackerAction(move, False)
    return AttackerAction(move, rng.below(2) == 1)


ATTACKER_POLICIES = {
    "heuristic": heuristic_random_walk,
    "random": random_attacker,
}


def get_attacker_policy(name: str):
    try:
        return ATTACKER_POLICIES[name]
    except KeyError:
        raise UsageError(
            f"unknown attacker policy {name!r}; choose from {sorted(ATTACKER_POLICIES)}"
        ) from None
