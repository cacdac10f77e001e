import os
from dataclasses import replace

import numpy as np
import pytest

from gsgi.env import (
    AttackerAction,
    Direction,
    GameConfig,
    Move,
    Sense,
    Status,
    gaussian_density_map,
    new_game,
    random_density_map,
    step,
)
from gsgi.obs import N_CHANNELS, RENDER_SIZE, encode_observation, render_color
from gsgi.formats import read_ppm, write_ppm
from gsgi.rng import SplitMix64, derive_seed

from conftest import STAND_ATTACK, make_density, seed_with_entry

CFG = GameConfig()
GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def check_golden(name, data: bytes):
    """Compare bytes against a frozen fixture; GSGI_REGEN_GOLDENS=1 rewrites."""
    path = os.path.join(GOLDEN_DIR, name)
    if os.environ.get("GSGI_REGEN_GOLDENS") == "1":
        os.makedirs(GOLDEN_DIR, exist_ok=True)
        with open(path, "wb") as f:
            f.write(data)
    with open(path, "rb") as f:
        assert f.read() == data, f"{name} differs from the frozen golden file"


def test_fresh_game_channels():
    density = random_density_map(7, 8)
    state = new_game(CFG, density, seed=4)
    obs = encode_observation(state, CFG)
    assert obs.shape == (N_CHANNELS, 7, 7)
    assert not obs[0:8].any()  # no attacker footprints observed yet
    assert obs[16].sum() == 1.0 and obs[16][3, 3] == 1.0
    assert np.array_equal(obs[17], density.p_attack)
    assert obs[18][3, 3] == 0.1 and obs[18].sum() == 0.1
    assert not obs[19].any()  # t = 0


def test_trail_channel_tracks_visits():
    density = make_density()
    state = new_game(CFG, density, seed=4)
    state, _ = step(state, Move.STAND, STAND_ATTACK)
    state, _ = step(state, Move.STAND, STAND_ATTACK)
    obs = encode_observation(state, CFG)
    # visited (counted) three times: at t=0 plus two stand-still steps
    assert obs[18][3, 3] == pytest.approx(0.3)
    assert state.patroller_visit_counts[3, 3] == 3


def test_time_channel_normalization():
    density = make_density()
    state = new_game(CFG, density, seed=4)
    for _ in range(30):
        state, _ = step(state, Move.STAND, STAND_ATTACK)
    obs = encode_observation(state, CFG)
    assert np.all(obs[19] == 30 / 75)
    for _ in range(45):
        state, _ = step(state, Move.STAND, STAND_ATTACK)
    assert state.status == Status.TIMEOUT
    obs = encode_observation(state, CFG)
    assert np.all(obs[19] == 1.0)


def test_footprint_visibility_and_direction_flags():
    density = make_density()
    seed = seed_with_entry(CFG, density, (6, 0))
    # attacker walks north out of the corner: (6,0) -> (5,0) -> (4,0)
    state = new_game(CFG, density, seed)
    state, _ = step(state, Move.STAND, AttackerAction(Move.UP, False))
    state, _ = step(state, Move.STAND, AttackerAction(Move.UP, False))
    obs = encode_observation(state, CFG)
    assert not obs[0:8].any()  # patroller never entered those cells
    # patroller walks to (5, 0): DOWN 2, LEFT 3
    for move in (Move.DOWN, Move.DOWN, Move.LEFT, Move.LEFT, Move.LEFT):
        state, _ = step(state, move, STAND_ATTACK)
    assert state.patroller_pos == (5, 0)
    obs = encode_observation(state, CFG)
    north_enter = Direction.NORTH * 2 + Sense.ENTERING
    north_leave = Direction.NORTH * 2 + Sense.LEAVING
    # she entered (5,0) moving north and left it moving north
    assert obs[north_enter][5, 0] == 1.0
    assert obs[north_leave][5, 0] == 1.0
    assert obs[0:8, 5, 0].sum() == 2.0
    # (6,0) and (4,0) still unobserved
    assert obs[0:8, 6, 0].sum() == 0.0
    assert obs[0:8, 4, 0].sum() == 0.0


def test_encoding_purity_and_channel_invariants():
    density = random_density_map(7, 21)
    rng = SplitMix64(7)
    state = new_game(CFG, density, derive_seed(2, 0))
    prev_nonzero = 0
    while state.status == Status.ONGOING:
        obs1 = encode_observation(state, CFG)
        obs2 = encode_observation(state, CFG)
        assert np.array_equal(obs1, obs2)
        assert set(np.unique(obs1[0:16])) <= {0.0, 1.0}
        assert obs1[16].sum() == 1.0
        assert np.all(obs1[19] == obs1[19][0, 0])
        nonzero = int(np.count_nonzero(obs1[0:8]))
        assert nonzero >= prev_nonzero  # observed footprints never vanish
        prev_nonzero = nonzero
        a_a = AttackerAction(Move(rng.below(5)), rng.below(2) == 1)
        state, _ = step(state, Move(rng.below(5)), a_a)


def test_information_hiding_attacker_position():
    density = random_density_map(7, 9)
    seed = seed_with_entry(CFG, density, (0, 6))
    state = new_game(CFG, density, seed)
    rng = SplitMix64(40)
    for _ in range(10):
        state, _ = step(
            state,
            Move(rng.below(5)),
            AttackerAction(Move(rng.below(5)), rng.below(2) == 1),
        )
    moved = replace(state, attacker_pos=(5, 5))
    assert moved.attacker_pos != state.attacker_pos
    assert np.array_equal(encode_observation(state, CFG), encode_observation(moved, CFG))
    assert np.array_equal(render_color(state, CFG), render_color(moved, CFG))


def test_render_dimensions_for_any_grid():
    for side in (5, 7, 9):
        cfg = GameConfig(grid_side=side)
        state = new_game(cfg, make_density(side=side, fill=0.3), seed=1)
        img = render_color(state, cfg)
        assert img.shape == (RENDER_SIZE, RENDER_SIZE, 3)
        assert img.dtype == np.uint8


def test_render_palette_anchor_colors():
    density = make_density(cells={(0, 0): 1.0})  # else zero density
    seed = seed_with_entry(CFG, density, (6, 6))
    state = new_game(CFG, density, seed)
    img = render_color(state, CFG)
    # cell (0,0) has p=1: pure green interior (sample near the cell middle)
    assert tuple(img[11, 11]) == (0, 255, 0)
    # a p=0, unvisited cell is white inside
    assert tuple(img[11, 34]) == (255, 255, 255)
    # patroller marker is pure blue at the center of the board
    assert tuple(img[80, 80]) == (0, 0, 255)
    # grid line at the top-left corner is black
    assert tuple(img[0, 0]) == (0, 0, 0)


def test_render_shows_only_observed_attacker_footprints():
    density = make_density()
    seed = seed_with_entry(CFG, density, (6, 0))
    state = new_game(CFG, density, seed)
    state, _ = step(state, Move.STAND, AttackerAction(Move.UP, False))
    img_hidden = render_color(state, CFG)
    assert not (
        (img_hidden[..., 0] == 255) & (img_hidden[..., 1] == 0) & (img_hidden[..., 2] == 0)
    ).any()  # no red ticks yet
    for move in (Move.DOWN, Move.DOWN, Move.DOWN, Move.LEFT, Move.LEFT, Move.LEFT):
        state, _ = step(state, move, STAND_ATTACK)
    assert state.patroller_pos == (6, 0)
    img_seen = render_color(state, CFG)
    red = (img_seen[..., 0] == 255) & (img_seen[..., 1] == 0) & (img_seen[..., 2] == 0)
    assert red.any()  # the observed footprint is drawn


def test_render_golden_fresh_game():
    density = random_density_map(7, 2024)
    state = new_game(CFG, density, seed=5)
    img = render_color(state, CFG)
    again = render_color(state, CFG)
    assert np.array_equal(img, again)
    header = f"P6\n{RENDER_SIZE} {RENDER_SIZE}\n255\n".encode()
    check_golden("render_fresh.ppm", header + img.tobytes())


def test_render_golden_midgame(tmp_path):
    density = random_density_map(7, 2024)
    seed = seed_with_entry(CFG, density, (0, 0))
    state = new_game(CFG, density, seed)
    rng = SplitMix64(17)
    for _ in range(20):
        if state.status != Status.ONGOING:
            break
        state, _ = step(
            state,
            Move(rng.below(5)),
            AttackerAction(Move(rng.below(5)), rng.below(2) == 1),
        )
    img = render_color(state, CFG)
    p = tmp_path / "frame.ppm"
    write_ppm(p, img)
    assert np.array_equal(read_ppm(p), img)
    with open(p, "rb") as f:
        check_golden("render_midgame.ppm", f.read())
