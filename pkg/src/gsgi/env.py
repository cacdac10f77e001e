"""Pursuit-evasion game engine on a square grid.

A patroller starts at the center post; a poacher enters at a random corner,
places up to `max_snares` snares, and tries to leave through her entry
corner. The patroller removes snares (+2 each), captures the poacher on
post-move co-location (+8), and loses P_attack whenever an active snare
fires while the poacher is still in the grid. The game is zero-sum and
fully deterministic given (seed, action sequences).

Step phase order (fixed; several ties in the prose rules are resolved here):
    1. both agents move simultaneously, wall moves clamp to stand-still
    2. footprints recorded on the borders actually crossed
    3. snare placement at the attacker's post-move cell
    4. attacker exit check (re-entering the entry corner after leaving)
    5. patroller observes her cell; visit count increments
    6. active snare at the patroller's cell is removed (+2)
    7. capture on co-location with a not-exited attacker (+8)
    8. each eligible snare attacks; contributes -P_attack on success;
       no attacks once the attacker has exited or been captured
    9. clock advances; reaching the horizon times the game out
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, UsageError
from .rng import SplitMix64

Cell = tuple[int, int]


class Move(IntEnum):
    """The five moves; also the patroller's full action space."""

    UP = 0
    DOWN = 1
    RIGHT = 2
    LEFT = 3
    STAND = 4


PatrollerAction = Move

# (dr, dc) per move; row 0 is the north edge.
_DELTAS = ((-1, 0), (1, 0), (0, 1), (0, -1), (0, 0))


class Direction(IntEnum):
    """Movement direction a footprint records (not the border crossed)."""

    NORTH = 0
    WEST = 1
    EAST = 2
    SOUTH = 3


class Sense(IntEnum):
    ENTERING = 0
    LEAVING = 1


# Footprint flag layout: index = direction * 2 + sense. A northward move
# from cell A to cell B stamps (north, leaving) on A and (north, entering)
# on B.
N_FOOTPRINT_FLAGS = 8

PATROLLER = 0
ATTACKER = 1


class Status(IntEnum):
    ONGOING = 0
    CAPTURED = 1
    TIMEOUT = 2


class AttackerAction(NamedTuple):
    move: Move
    place_snare: bool


ALL_PATROLLER_ACTIONS = tuple(Move)
ALL_ATTACKER_ACTIONS = tuple(
    AttackerAction(m, p) for m in Move for p in (False, True)
)


@dataclass(frozen=True)
class GameConfig:
    grid_side: int = 7
    horizon: int = 75
    max_snares: int = 3
    reward_snare_removal: float = 2.0
    reward_capture: float = 8.0
    attack_mode: str = "per_step"  # or "once_per_snare"
    terminate_on_capture: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.grid_side < 3 or self.grid_side % 2 == 0:
            raise ConfigError("grid_side must be odd and >= 3 (center post)")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.max_snares < 0:
            raise ConfigError("max_snares must be >= 0")
        if self.attack_mode not in ("per_step", "once_per_snare"):
            raise ConfigError(f"unknown attack_mode {self.attack_mode!r}")
        for name in ("reward_snare_removal", "reward_capture"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def center(self) -> Cell:
        c = (self.grid_side - 1) // 2
        return (c, c)


@dataclass(frozen=True)
class DensityMap:
    """Per-cell probability of an animal being present (= attack success)."""

    p_attack: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_attack, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ConfigError("density map must be a square 2-D array")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ConfigError("density values must lie in [0, 1]")
        object.__setattr__(self, "p_attack", p)

    @property
    def grid_side(self) -> int:
        return self.p_attack.shape[0]


def random_density_map(grid_side: int, seed: int) -> DensityMap:
    """Each cell i.i.d. uniform on [0, 0.5], deterministic in seed."""
    if grid_side < 1:
        raise ConfigError("grid_side must be >= 1")
    rng = SplitMix64(seed)
    p = np.empty((grid_side, grid_side), dtype=np.float64)
    for r in range(grid_side):
        for c in range(grid_side):
            p[r, c] = 0.5 * rng.uniform()
    return DensityMap(p)


def gaussian_density_map(grid_side: int, peak: float, sigma: float) -> DensityMap:
    """Radial bump peaking at the grid center: peak * exp(-d^2 / (2 sigma^2))."""
    if not 0.0 < peak <= 1.0:
        raise ConfigError("peak must be in (0, 1]")
    if sigma <= 0.0:
        raise ConfigError("sigma must be positive")
    if grid_side < 1:
        raise ConfigError("grid_side must be >= 1")
    mid = (grid_side - 1) / 2.0
    rows = np.arange(grid_side, dtype=np.float64)
    d2 = (rows[:, None] - mid) ** 2 + (rows[None, :] - mid) ** 2
    return DensityMap(peak * np.exp(-d2 / (2.0 * sigma * sigma)))


class Snare(NamedTuple):
    cell: Cell
    active: bool
    placed_at: int
    exhausted: bool  # once_per_snare mode: already fired successfully


class EventKind:
    SNARE_PLACED = "snare_placed"
    SNARE_REMOVED = "snare_removed"
    CAPTURE = "capture"
    ATTACK_SUCCESS = "attack_success"
    ATTACKER_EXITED = "attacker_exited"
    TIMEOUT = "timeout"


class Event(NamedTuple):
    kind: str
    cell: Optional[Cell] = None
    value: float = 0.0


class StepOutcome(NamedTuple):
    patroller_reward: float
    attacker_reward: float
    events: tuple


@dataclass
class GameState:
    config: GameConfig
    density: DensityMap
    t: int
    patroller_pos: Cell
    attacker_pos: Optional[Cell]  # None once exited or captured
    attacker_entry_corner: Cell
    attacker_exited: bool
    attacker_captured: bool
    attacker_has_left_entry: bool
    snares: tuple  # of Snare
    snares_placed_count: int
    footprints: np.ndarray  # bool (2, 8, S, S): [agent, border*2+sense, r, c]
    patroller_observed_cells: np.ndarray  # bool (S, S)
    patroller_visit_counts: np.ndarray  # int64 (S, S)
    status: Status
    rng: SplitMix64
    capture_cell: Optional[Cell] = None

    def copy(self) -> "GameState":
        return replace(
            self,
            footprints=self.footprints.copy(),
            patroller_observed_cells=self.patroller_observed_cells.copy(),
            patroller_visit_counts=self.patroller_visit_counts.copy(),
            rng=self.rng.copy(),
        )

    @property
    def attacker_in_game(self) -> bool:
        return self.attacker_pos is not None

    def active_snares(self):
        return [s for s in self.snares if s.active]

    def active_snare_at(self, cell: Cell) -> Optional[int]:
        for i, s in enumerate(self.snares):
            if s.active and s.cell == cell:
                return i
        return None


def corners(grid_side: int) -> tuple:
    s = grid_side - 1
    return ((0, 0), (0, s), (s, 0), (s, s))


def new_game(config: GameConfig, density: DensityMap, seed: int) -> GameState:
    """Fresh game: patroller at the center post, attacker at a random corner."""
    s = config.grid_side
    if density.grid_side != s:
        raise ConfigError(
            f"density map side {density.grid_side} != grid_side {s}"
        )
    rng = SplitMix64(seed)
    entry = corners(s)[rng.below(4)]
    center = config.center
    observed = np.zeros((s, s), dtype=bool)
    observed[center] = True
    visits = np.zeros((s, s), dtype=np.int64)
    visits[center] = 1
    return GameState(
        config=config,
        density=density,
        t=0,
        patroller_pos=center,
        attacker_pos=entry,
        attacker_entry_corner=entry,
        attacker_exited=False,
        attacker_captured=False,
        attacker_has_left_entry=False,
        snares=(),
        snares_placed_count=0,
        footprints=np.zeros((2, N_FOOTPRINT_FLAGS, s, s), dtype=bool),
        patroller_observed_cells=observed,
        patroller_visit_counts=visits,
        status=Status.ONGOING,
        rng=rng,
    )


def clamp_move(pos: Cell, move: Move, grid_side: int) -> Cell:
    """Destination cell; moves into a wall resolve to stand-still."""
    dr, dc = _DELTAS[move]
    r, c = pos[0] + dr, pos[1] + dc
    if 0 <= r < grid_side and 0 <= c < grid_side:
        return (r, c)
    return pos


MOVE_DIRECTION = {
    Move.UP: Direction.NORTH,
    Move.DOWN: Direction.SOUTH,
    Move.RIGHT: Direction.EAST,
    Move.LEFT: Direction.WEST,
}

OPPOSITE_DIRECTION = {
    Direction.NORTH: Direction.SOUTH,
    Direction.SOUTH: Direction.NORTH,
    Direction.EAST: Direction.WEST,
    Direction.WEST: Direction.EAST,
}


def _stamp_footprints(footprints, agent, old: Cell, new: Cell, move: Move):
    if new == old:
        return
    d = MOVE_DIRECTION[move]
    footprints[agent, d * 2 + Sense.LEAVING, old[0], old[1]] = True
    footprints[agent, d * 2 + Sense.ENTERING, new[0], new[1]] = True


def step(state: GameState, a_p: Move, a_a: AttackerAction) -> tuple:
    """Advance one tick. Returns (next_state, StepOutcome); the input state
    is left untouched. Raises UsageError on a terminated state."""
    if state.status != Status.ONGOING:
        raise UsageError("step() on a terminated game")
    cfg = state.config
    s = state.copy()
    events = []
    reward = 0.0

    # 1-2: simultaneous movement + footprints
    old_p = s.patroller_pos
    new_p = clamp_move(old_p, Move(a_p), cfg.grid_side)
    _stamp_footprints(s.footprints, PATROLLER, old_p, new_p, Move(a_p))
    s.patroller_pos = new_p

    if s.attacker_in_game:
        old_a = s.attacker_pos
        new_a = clamp_move(old_a, a_a.move, cfg.grid_side)
        _stamp_footprints(s.footprints, ATTACKER, old_a, new_a, a_a.move)
        s.attacker_pos = new_a

        # 3: snare placement at the post-move cell
        if (
            a_a.place_snare
            and s.snares_placed_count < cfg.max_snares
            and s.active_snare_at(new_a) is None
        ):
            s.snares = s.snares + (Snare(new_a, True, s.t, False),)
            s.snares_placed_count += 1
            events.append(Event(EventKind.SNARE_PLACED, new_a))

        # 4: exit through the entry corner, only after having left it
        if new_a == s.attacker_entry_corner:
            if s.attacker_has_left_entry:
                s.attacker_exited = True
                s.attacker_pos = None
                events.append(Event(EventKind.ATTACKER_EXITED, new_a))
        else:
            s.attacker_has_left_entry = True

    # 5: patroller observation and trail
    s.patroller_observed_cells[new_p] = True
    s.patroller_visit_counts[new_p] += 1

    # 6: snare removal
    idx = s.active_snare_at(new_p)
    if idx is not None:
        snare = s.snares[idx]
        s.snares = s.snares[:idx] + (snare._replace(active=False),) + s.snares[idx + 1 :]
        reward += cfg.reward_snare_removal
        events.append(Event(EventKind.SNARE_REMOVED, new_p, cfg.reward_snare_removal))

    # 7: capture on post-move co-location
    if s.attacker_in_game and s.attacker_pos == new_p:
        reward += cfg.reward_capture
        events.append(Event(EventKind.CAPTURE, new_p, cfg.reward_capture))
        s.attacker_captured = True
        s.capture_cell = new_p
        s.attacker_pos = None
        if cfg.terminate_on_capture:
            s.status = Status.CAPTURED

    # 8: snare attacks while the attacker is still in the game
    if s.attacker_in_game:
        p_map = s.density.p_attack
        once = cfg.attack_mode == "once_per_snare"
        snares = list(s.snares)
        changed = False
        for i, snare in enumerate(snares):
            if not snare.active or (once and snare.exhausted):
                continue
            p = p_map[snare.cell[0], snare.cell[1]]
            if s.rng.uniform() < p:
                reward -= p
                events.append(Event(EventKind.ATTACK_SUCCESS, snare.cell, -p))
                if once:
                    snares[i] = snare._replace(exhausted=True)
                    changed = True
        if changed:
            s.snares = tuple(snares)

    # 9: clock
    s.t += 1
    if s.status == Status.ONGOING and s.t >= cfg.horizon:
        s.status = Status.TIMEOUT
        events.append(Event(EventKind.TIMEOUT))

    return s, StepOutcome(reward, -reward, tuple(events))


def check_termination(state: GameState) -> Status:
    """Status per the termination rules (recomputed from state flags)."""
    if state.attacker_captured and state.config.terminate_on_capture:
        return Status.CAPTURED
    if state.t >= state.config.horizon:
        return Status.TIMEOUT
    return Status.ONGOING
