"""The patroller's two observation formats.

`encode_observation` produces the 20 x S x S information-state array:

    channels  1-8   attacker footprints as movement-direction flags,
                    (N,W,E,S) x (entering, leaving); visible only in cells
                    the patroller has entered
    channels  9-16  the patroller's own footprints (always fully known)
    channel   17    one-hot patroller position
    channel   18    the animal density map
    channel   19    patroller trail, 0.1 per visit
    channel   20    t / horizon, constant across cells

`render_color` draws the patroller-visible projection as a fixed 160 x 160
RGB image. The attacker herself is never drawn. Palette:

    background / p=0 cell   white (255, 255, 255)
    density fill            (round(255*(1-p)), 255, round(255*(1-p)))
    patroller marker        blue square over the central half of the cell
    patroller trail         blue tint, alpha = min(1, 0.1 * visits)
    attacker footprint      red tick on the crossed border, entering ticks
                            in the first third of the border, leaving ticks
                            in the last third, 3 px deep
    grid lines              black, 1 px, at floor(k * 160 / S)

Cell (i, j) spans pixel rows [floor(i*160/S), floor((i+1)*160/S)) and the
analogous columns; 160 need not be divisible by S.
"""

from __future__ import annotations

import numpy as np

from .env import (
    ATTACKER,
    OPPOSITE_DIRECTION,
    PATROLLER,
    Direction,
    GameConfig,
    GameState,
    Sense,
)

RENDER_SIZE = 160

N_CHANNELS = 20

_WHITE = np.array((255, 255, 255), dtype=np.float64)
_BLUE = np.array((0, 0, 255), dtype=np.float64)
_RED = (255, 0, 0)


def encode_observation(state: GameState, config: GameConfig) -> np.ndarray:
    """Encoded patroller observation, float64 (20, S, S)."""
    s = config.grid_side
    out = np.zeros((N_CHANNELS, s, s), dtype=np.float64)
    observed = state.patroller_observed_cells
    out[0:8] = state.footprints[ATTACKER] & observed
    out[8:16] = state.footprints[PATROLLER]
    out[16][state.patroller_pos] = 1.0
    out[17] = state.density.p_attack
    out[18] = 0.1 * state.patroller_visit_counts
    out[19] = state.t / config.horizon
    return out


def _cell_bounds(i: int, grid_side: int) -> tuple:
    lo = (i * RENDER_SIZE) // grid_side
    hi = ((i + 1) * RENDER_SIZE) // grid_side
    return lo, hi


def _tick_spans(lo: int, hi: int) -> tuple:
    """(entering, leaving) pixel spans along a border of extent [lo, hi)."""
    ext = hi - lo
    third = ext // 3
    sixth = ext // 6
    entering = (lo + sixth, lo + sixth + third)
    leaving = (hi - sixth - third, hi - sixth)
    return entering, leaving


def render_color(state: GameState, config: GameConfig) -> np.ndarray:
    """Patroller-visible game frame, uint8 (160, 160, 3)."""
    side = config.grid_side
    img = np.empty((RENDER_SIZE, RENDER_SIZE, 3), dtype=np.float64)
    img[:] = _WHITE

    # density fill and trail tint, per cell
    p_map = state.density.p_attack
    visits = state.patroller_visit_counts
    for r in range(side):
        y0, y1 = _cell_bounds(r, side)
        for c in range(side):
            x0, x1 = _cell_bounds(c, side)
            v = round(255.0 * (1.0 - p_map[r, c]))
            img[y0:y1, x0:x1] = (v, 255, v)
            if visits[r, c] > 0:
                alpha = min(1.0, 0.1 * float(visits[r, c]))
                img[y0:y1, x0:x1] *= 1.0 - alpha
                img[y0:y1, x0:x1] += alpha * _BLUE

    out = np.rint(img).astype(np.uint8)

    # grid lines
    for k in range(side + 1):
        pos = min((k * RENDER_SIZE) // side, RENDER_SIZE - 1)
        out[pos, :] = 0
        out[:, pos] = 0

    # observed attacker footprints as red border ticks
    prints = state.footprints[ATTACKER]
    observed = state.patroller_observed_cells
    thick = 3
    for r in range(side):
        y0, y1 = _cell_bounds(r, side)
        for c in range(side):
            if not observed[r, c] or not prints[:, r, c].any():
                continue
            x0, x1 = _cell_bounds(c, side)
            col_spans = _tick_spans(x0, x1)
            row_spans = _tick_spans(y0, y1)
            for direction in Direction:
                for sense in Sense:
                    if not prints[direction * 2 + sense, r, c]:
                        continue
                    # footprints are stamped by movement direction; the tick
                    # sits on the border actually crossed
                    border = direction if sense == Sense.LEAVING else OPPOSITE_DIRECTION[direction]
                    if border == Direction.NORTH:
                        a, b = col_spans[sense]
                        out[y0 : y0 + thick, a:b] = _RED
                    elif border == Direction.SOUTH:
                        a, b = col_spans[sense]
                        out[y1 - thick : y1, a:b] = _RED
                    elif border == Direction.WEST:
                        a, b = row_spans[sense]
                        out[a:b, x0 : x0 + thick] = _RED
                    else:  # EAST
                        a, b = row_spans[sense]
                        out[a:b, x1 - thick : x1] = _RED

    # patroller marker
    pr, pc = state.patroller_pos
    y0, y1 = _cell_bounds(pr, side)
    x0, x1 = _cell_bounds(pc, side)
    mh = (y1 - y0) // 4
    mw = (x1 - x0) // 4
    out[y0 + mh : y1 - mh, x0 + mw : x1 - mw] = (0, 0, 255)

    return out
