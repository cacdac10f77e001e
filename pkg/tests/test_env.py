import math

import numpy as np
import pytest

from gsgi.env import (
    ATTACKER,
    PATROLLER,
    AttackerAction,
    DensityMap,
    EventKind,
    GameConfig,
    Move,
    Status,
    check_termination,
    clamp_move,
    corners,
    gaussian_density_map,
    new_game,
    random_density_map,
    step,
)
from gsgi.errors import ConfigError, UsageError
from gsgi.rng import SplitMix64, derive_seed

from conftest import STAND_ATTACK, make_density, run_scripted, seed_with_entry

CFG = GameConfig()


def attack(move, place=False):
    return AttackerAction(move, place)


# --- new_game ---------------------------------------------------------------


def test_new_game_initial_layout():
    state = new_game(CFG, make_density(), seed=3)
    assert state.patroller_pos == (3, 3)  # center of the 7x7 grid
    assert state.attacker_pos in corners(7)
    assert state.attacker_entry_corner == state.attacker_pos
    assert state.t == 0
    assert state.status == Status.ONGOING
    assert state.snares == ()
    assert state.patroller_visit_counts[3, 3] == 1
    assert state.patroller_observed_cells[3, 3]


def test_new_game_seed_determinism():
    a = new_game(CFG, make_density(), seed=99)
    b = new_game(CFG, make_density(), seed=99)
    assert a.attacker_entry_corner == b.attacker_entry_corner
    assert a.rng.state == b.rng.state
    assert np.array_equal(a.footprints, b.footprints)


def test_new_game_corner_frequencies():
    density = make_density()
    counts = {c: 0 for c in corners(7)}
    n = 4000
    for seed in range(n):
        counts[new_game(CFG, density, seed).attacker_entry_corner] += 1
    for c, k in counts.items():
        assert abs(k / n - 0.25) < 0.03, (c, k)


def test_new_game_density_dimension_mismatch():
    with pytest.raises(ConfigError):
        new_game(CFG, make_density(side=5), seed=0)


def test_invalid_configs():
    with pytest.raises(ConfigError):
        GameConfig(grid_side=6)
    with pytest.raises(ConfigError):
        GameConfig(grid_side=1)
    with pytest.raises(ConfigError):
        GameConfig(horizon=0)
    with pytest.raises(ConfigError):
        GameConfig(attack_mode="sometimes")
    with pytest.raises(ConfigError):
        GameConfig(max_snares=-1)


# --- density maps -----------------------------------------------------------


def test_random_density_map_range_and_determinism():
    a = random_density_map(7, 5)
    b = random_density_map(7, 5)
    c = random_density_map(7, 6)
    assert np.array_equal(a.p_attack, b.p_attack)
    assert not np.array_equal(a.p_attack, c.p_attack)
    assert a.p_attack.min() >= 0.0 and a.p_attack.max() <= 0.5


def test_random_density_map_mean():
    side = 100  # 10,000 cells
    dm = random_density_map(side, 12)
    assert abs(dm.p_attack.mean() - 0.25) < 0.01


def test_gaussian_density_map_values():
    peak, sigma = 0.6, 2.0
    dm = gaussian_density_map(7, peak, sigma)
    assert dm.p_attack[3, 3] == peak  # d = 0 at the center
    # corner value from the formula, evaluated independently
    expected_corner = peak * math.exp(-(3 ** 2 + 3 ** 2) / (2 * sigma ** 2))
    assert abs(dm.p_attack[0, 0] - expected_corner) < 1e-12
    assert round(expected_corner, 4) == 0.0632
    # weakly decreasing with distance from the center
    mid = 3.0
    cells = [(r, c) for r in range(7) for c in range(7)]
    for r1, c1 in cells:
        for r2, c2 in cells:
            d1 = (r1 - mid) ** 2 + (c1 - mid) ** 2
            d2 = (r2 - mid) ** 2 + (c2 - mid) ** 2
            if d1 < d2:
                assert dm.p_attack[r1, c1] >= dm.p_attack[r2, c2]


def test_gaussian_density_map_validation():
    with pytest.raises(ConfigError):
        gaussian_density_map(7, 0.0, 1.0)
    with pytest.raises(ConfigError):
        gaussian_density_map(7, 1.5, 1.0)
    with pytest.raises(ConfigError):
        gaussian_density_map(7, 0.5, 0.0)


def test_density_map_validation():
    with pytest.raises(ConfigError):
        DensityMap(np.full((7, 7), 1.5))
    with pytest.raises(ConfigError):
        DensityMap(np.zeros((7, 6)))


# --- scripted reward scenarios ----------------------------------------------


def test_snare_removal_gives_plus_two():
    density = make_density()
    seed = seed_with_entry(CFG, density, (0, 0))
    # attacker steps right and drops a snare at (0, 1), then flees south;
    # patroller walks to (0, 1) and removes it
    patroller = [Move.UP, Move.UP, Move.UP, Move.LEFT, Move.LEFT]
    attacker = [attack(Move.RIGHT, True)] + [attack(Move.DOWN)] * 4
    states, outcomes = run_scripted(CFG, density, seed, patroller, attacker)
    assert states[1].snares[0].cell == (0, 1)
    assert states[1].snares[0].active
    assert [e.kind for e in outcomes[0].events] == [EventKind.SNARE_PLACED]
    final = outcomes[-1]
    assert final.patroller_reward == 2.0
    assert any(e.kind == EventKind.SNARE_REMOVED for e in final.events)
    assert not states[-1].snares[0].active
    assert states[-1].patroller_pos == (0, 1)


def test_capture_gives_plus_eight_and_terminates():
    density = make_density()
    seed = seed_with_entry(CFG, density, (0, 0))
    patroller = [Move.UP] * 3 + [Move.LEFT] * 3
    attacker = [STAND_ATTACK] * 6
    states, outcomes = run_scripted(CFG, density, seed, patroller, attacker)
    final = outcomes[-1]
    assert final.patroller_reward == 8.0
    assert any(e.kind == EventKind.CAPTURE for e in final.events)
    assert states[-1].status == Status.CAPTURED
    assert check_termination(states[-1]) == Status.CAPTURED
    assert states[-1].t == 6


def test_attack_success_penalty_is_minus_p_and_zero_sum():
    density = make_density(cells={(1, 0): 0.4})
    seed = seed_with_entry(CFG, density, (0, 0))
    state = new_game(CFG, density, seed)
    state, out = step(state, Move.STAND, attack(Move.DOWN, True))
    assert state.snares[0].cell == (1, 0)
    hits = 0
    for _ in range(40):
        state, out = step(state, Move.STAND, STAND_ATTACK)
        assert out.patroller_reward + out.attacker_reward == 0.0
        for e in out.events:
            if e.kind == EventKind.ATTACK_SUCCESS:
                hits += 1
                assert e.value == -0.4
                assert out.patroller_reward == -0.4
                assert out.attacker_reward == 0.4
    assert hits > 0  # p=0.4 over 40 tries; deterministic given the seed


def test_post_exit_attacks_contribute_zero():
    density = make_density(cells={(1, 0): 1.0})
    seed = seed_with_entry(CFG, density, (0, 0))
    state = new_game(CFG, density, seed)
    # place a certain-fire snare at (1, 0): it hits while she is in the game
    state, out = step(state, Move.STAND, attack(Move.DOWN, True))
    assert out.patroller_reward == -1.0
    # she returns to her entry corner and exits
    state, out = step(state, Move.STAND, attack(Move.UP))
    assert any(e.kind == EventKind.ATTACKER_EXITED for e in out.events)
    assert state.attacker_exited and state.attacker_pos is None
    assert not any(e.kind == EventKind.ATTACK_SUCCESS for e in out.events)
    assert out.patroller_reward == 0.0
    # the snare stays active but never fires again
    for _ in range(10):
        state, out = step(state, Move.STAND, STAND_ATTACK)
        assert out.patroller_reward == 0.0
        assert not any(e.kind == EventKind.ATTACK_SUCCESS for e in out.events)
    assert state.snares[0].active


def test_no_capture_after_exit():
    density = make_density()
    seed = seed_with_entry(CFG, density, (0, 0))
    state = new_game(CFG, density, seed)
    state, _ = step(state, Move.UP, attack(Move.DOWN))  # attacker leaves corner
    state, out = step(state, Move.UP, attack(Move.UP))  # and returns: exits
    assert state.attacker_exited
    # patroller walks onto the empty entry corner; nothing happens
    for move in (Move.UP, Move.LEFT, Move.LEFT, Move.LEFT):
        state, out = step(state, move, STAND_ATTACK)
        assert not any(e.kind == EventKind.CAPTURE for e in out.events)
    assert state.patroller_pos == (0, 0)
    assert state.status == Status.ONGOING


def test_wall_moves_clamp_to_stand_still():
    assert clamp_move((0, 3), Move.UP, 7) == (0, 3)
    assert clamp_move((6, 3), Move.DOWN, 7) == (6, 3)
    assert clamp_move((3, 0), Move.LEFT, 7) == (3, 0)
    assert clamp_move((3, 6), Move.RIGHT, 7) == (3, 6)
    density = make_density()
    state = new_game(CFG, density, seed=0)
    for _ in range(4):
        state, _ = step(state, Move.UP, STAND_ATTACK)
    assert state.patroller_pos == (0, 3)  # fourth UP hit the wall


def test_swap_pass_through_does_not_capture():
    density = make_density()
    seed = seed_with_entry(CFG, density, (0, 0))
    patroller = [Move.UP] * 3 + [Move.LEFT, Move.LEFT]
    attacker = [STAND_ATTACK] * 5
    states, _ = run_scripted(CFG, density, seed, patroller, attacker)
    state = states[-1]
    assert state.patroller_pos == (0, 1)
    # simultaneous swap: patroller LEFT to (0,0), attacker RIGHT to (0,1)
    state, out = step(state, Move.LEFT, attack(Move.RIGHT))
    assert not any(e.kind == EventKind.CAPTURE for e in out.events)
    assert state.status == Status.ONGOING
    assert state.patroller_pos == (0, 0) and state.attacker_pos == (0, 1)


def test_step_on_terminated_state_raises():
    density = make_density()
    state = new_game(GameConfig(horizon=1), density, seed=0)
    state, _ = step(state, Move.STAND, STAND_ATTACK)
    assert state.status == Status.TIMEOUT
    with pytest.raises(UsageError):
        step(state, Move.STAND, STAND_ATTACK)


def test_check_termination_timeout_and_fresh():
    density = make_density()
    state = new_game(CFG, density, seed=0)
    assert check_termination(state) == Status.ONGOING
    for _ in range(75):
        state, _ = step(state, Move.STAND, STAND_ATTACK)
    assert state.t == 75
    assert state.status == Status.TIMEOUT
    assert check_termination(state) == Status.TIMEOUT


def test_snare_budget_and_single_active_per_cell():
    density = make_density()
    seed = seed_with_entry(CFG, density, (0, 0))
    state = new_game(CFG, density, seed)
    # repeated placement while standing: only the first sticks
    state, _ = step(state, Move.STAND, attack(Move.STAND, True))
    state, _ = step(state, Move.STAND, attack(Move.STAND, True))
    assert state.snares_placed_count == 1
    # move and place two more; budget is 3
    state, _ = step(state, Move.STAND, attack(Move.DOWN, True))
    state, _ = step(state, Move.STAND, attack(Move.DOWN, True))
    assert state.snares_placed_count == 3
    state, _ = step(state, Move.STAND, attack(Move.DOWN, True))
    assert state.snares_placed_count == 3  # budget exhausted
    assert len(state.snares) == 3


def test_once_per_snare_attack_mode():
    cfg = GameConfig(attack_mode="once_per_snare")
    density = make_density(cells={(1, 0): 1.0})
    seed = seed_with_entry(cfg, density, (0, 0))
    state = new_game(cfg, density, seed)
    state, out = step(state, Move.STAND, attack(Move.DOWN, True))
    assert out.patroller_reward == -1.0  # certain hit on placement step
    for _ in range(5):
        state, out = step(state, Move.STAND, STAND_ATTACK)
        assert out.patroller_reward == 0.0  # exhausted after one success
    assert state.snares[0].active and state.snares[0].exhausted


def test_terminate_on_capture_false_runs_to_horizon():
    cfg = GameConfig(terminate_on_capture=False, horizon=12)
    density = make_density()
    seed = seed_with_entry(cfg, density, (0, 0))
    state = new_game(cfg, density, seed)
    rewards = []
    for t in range(12):
        move = [Move.UP, Move.UP, Move.UP, Move.LEFT, Move.LEFT, Move.LEFT][t] if t < 6 else Move.STAND
        state, out = step(state, move, STAND_ATTACK)
        rewards.append(out.patroller_reward)
        assert check_termination(state) in (Status.ONGOING, Status.TIMEOUT)
    assert rewards[5] == 8.0  # capture still pays once
    assert sum(rewards) == 8.0  # and only once
    assert state.attacker_captured and state.attacker_pos is None
    assert state.status == Status.TIMEOUT


def test_step_does_not_mutate_input_state():
    density = make_density(cells={(1, 0): 0.7})
    seed = seed_with_entry(CFG, density, (0, 0))
    state = new_game(CFG, density, seed)
    before_rng = state.rng.state
    before_prints = state.footprints.copy()
    before_visits = state.patroller_visit_counts.copy()
    nxt1, out1 = step(state, Move.UP, attack(Move.DOWN, True))
    assert state.rng.state == before_rng
    assert np.array_equal(state.footprints, before_prints)
    assert np.array_equal(state.patroller_visit_counts, before_visits)
    assert state.t == 0 and state.snares == ()
    # stepping the same state again gives the identical result
    nxt2, out2 = step(state, Move.UP, attack(Move.DOWN, True))
    assert out1 == out2
    assert np.array_equal(nxt1.footprints, nxt2.footprints)
    assert nxt1.rng.state == nxt2.rng.state


def test_trajectory_replay_is_bit_identical():
    cfg = CFG
    density = random_density_map(7, 77)
    rng = SplitMix64(123)
    for ep in range(5):
        seed = derive_seed(9, ep)
        state = new_game(cfg, density, seed)
        actions = []
        rewards = []
        while state.status == Status.ONGOING:
            a_p = Move(rng.below(5))
            a_a = AttackerAction(Move(rng.below(5)), rng.below(2) == 1)
            state, out = step(state, a_p, a_a)
            actions.append((a_p, a_a))
            rewards.append(out.patroller_reward)
        replay = new_game(cfg, density, seed)
        replay_rewards = []
        for a_p, a_a in actions:
            replay, out = step(replay, a_p, a_a)
            replay_rewards.append(out.patroller_reward)
        assert replay_rewards == rewards
        assert np.array_equal(replay.footprints, state.footprints)
        assert np.array_equal(replay.patroller_visit_counts, state.patroller_visit_counts)
        assert replay.status == state.status and replay.t == state.t
        assert replay.rng.state == state.rng.state


def test_random_policy_invariants_sample():
    # a small version of the acceptance sweep, with denser assertions
    cfg = CFG
    density = random_density_map(7, 3)
    rng = SplitMix64(5)
    for ep in range(150):
        state = new_game(cfg, density, derive_seed(1000, ep))
        exited_seen = False
        placed_prev = 0
        while state.status == Status.ONGOING:
            a_p = Move(rng.below(5))
            a_a = AttackerAction(Move(rng.below(5)), rng.below(2) == 1)
            pre_attacker = state.attacker_pos
            state, out = step(state, a_p, a_a)
            assert out.patroller_reward + out.attacker_reward == 0.0
            assert state.snares_placed_count >= placed_prev
            assert state.snares_placed_count <= cfg.max_snares
            assert len(state.snares) == state.snares_placed_count
            placed_prev = state.snares_placed_count
            for e in out.events:
                if e.kind == EventKind.CAPTURE:
                    assert pre_attacker is not None
                    assert e.cell == state.patroller_pos
                    assert not state.attacker_exited
                if e.kind == EventKind.ATTACK_SUCCESS:
                    assert not exited_seen
                if e.kind == EventKind.ATTACKER_EXITED:
                    exited_seen = True
        assert state.t <= cfg.horizon
        with pytest.raises(UsageError):
            step(state, Move.STAND, STAND_ATTACK)
