"""Rollout tracing with attention-mask export and heatmap overlays.

Trace file: line-delimited JSON. The first line is a header object
(configs, density rows, derived seeds, weight checksum); each following
line is one step:

    {"t", "obs_file", "patroller_action", "attacker_action": [move, place]
     or null, "policy_probs", "value", "policy_mask", "value_mask",
     "reward", "events": [[kind, cell or null, value], ...]}

Masks are stored as {"shape": [...], "values": [...]} row-major lists;
json round-trips Python floats exactly. A replay validator re-simulates
the episode from the header seeds plus the recorded action streams and
demands bit-equal rewards.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .adversary import attacker_view, get_attacker_policy
from .agent import Network, load_weights, sample_action, weight_checksum
from .env import (
    AttackerAction,
    DensityMap,
    GameConfig,
    Move,
    Status,
    new_game,
    step,
)
from .errors import UsageError
from .formats import save_tensor_text, write_ppm
from .obs import RENDER_SIZE, encode_observation, render_color
from .rng import SplitMix64, derive_seed
from .train import _ATTACKER_STREAM, _ENV_STREAM, _POLICY_STREAM, observation_for

OVERLAY_ALPHA = 0.45

TRACE_VERSION = 1


def _colormap_blue_red(v: np.ndarray) -> np.ndarray:
    """(H, W) in [0,1] -> (H, W, 3) float: blue at 0, red at 1."""
    heat = np.zeros(v.shape + (3,), dtype=np.float64)
    heat[..., 0] = 255.0 * v
    heat[..., 2] = 255.0 * (1.0 - v)
    return heat


def upsample(mask: np.ndarray, size: int, mode: str = "bilinear") -> np.ndarray:
    """Resize (h, w) -> (size, size); bilinear uses half-pixel centers."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    if mode == "nearest":
        ri = np.minimum((np.arange(size) + 0.5) * h / size, h - 1).astype(np.int64)
        ci = np.minimum((np.arange(size) + 0.5) * w / size, w - 1).astype(np.int64)
        return mask[ri][:, ci]
    if mode != "bilinear":
        raise UsageError(f"unknown upsampling mode {mode!r}")
    rf = np.clip((np.arange(size) + 0.5) * h / size - 0.5, 0.0, h - 1.0)
    cf = np.clip((np.arange(size) + 0.5) * w / size - 0.5, 0.0, w - 1.0)
    r0 = np.floor(rf).astype(np.int64)
    c0 = np.floor(cf).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    wr = (rf - r0)[:, None]
    wc = (cf - c0)[None, :]
    top = mask[r0][:, c0] * (1 - wc) + mask[r0][:, c1] * wc
    bot = mask[r1][:, c0] * (1 - wc) + mask[r1][:, c1] * wc
    return top * (1 - wr) + bot * wr


def overlay_heatmap(
    base: np.ndarray,
    mask: np.ndarray,
    out_path=None,
    mode: str = "bilinear",
) -> np.ndarray:
    """Alpha-blend a blue->red heatmap of `mask` over a rendered frame.
    Writes a PPM when out_path is given; returns the blended image."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise UsageError("mask values must lie in [0, 1]")
    up = upsample(mask, RENDER_SIZE, mode=mode)
    heat = _colormap_blue_red(up)
    blended = np.rint(
        (1.0 - OVERLAY_ALPHA) * base.astype(np.float64) + OVERLAY_ALPHA * heat
    ).astype(np.uint8)
    if out_path is not None:
        write_ppm(out_path, blended)
    return blended


def _mask_json(mask: np.ndarray) -> dict:
    return {"shape": list(mask.shape), "values": [float(v) for v in mask.reshape(-1)]}


def _mask_from_json(obj) -> np.ndarray:
    return np.array(obj["values"], dtype=np.float64).reshape(obj["shape"])


def _event_json(e) -> list:
    return [e.kind, list(e.cell) if e.cell is not None else None, e.value]


@dataclass
class EpisodeTrace:
    header: dict
    steps: list

    @property
    def length(self) -> int:
        return len(self.steps)


def rollout_with_maps(
    weights_path,
    game_cfg: GameConfig,
    density: DensityMap,
    seed: int,
    out_dir,
    attacker: str = "heuristic",
    greedy: bool = True,
    upsample_mode: str = "bilinear",
) -> EpisodeTrace:
    """Play one traced episode with the given weights, writing per-step
    frames, tensor files, overlay images and the trace itself to out_dir."""
    net = load_weights(weights_path)
    if net.cfg.grid_side != game_cfg.grid_side:
        raise UsageError("weights were trained for a different grid side")
    os.makedirs(out_dir, exist_ok=True)
    attacker_policy = get_attacker_policy(attacker)

    env_seed = derive_seed(seed, 0, _ENV_STREAM)
    att_rng = SplitMix64(derive_seed(seed, 0, _ATTACKER_STREAM))
    pol_rng = SplitMix64(derive_seed(seed, 0, _POLICY_STREAM))
    header = {
        "kind": "gsgi-trace",
        "version": TRACE_VERSION,
        "seed": seed,
        "env_seed": env_seed,
        "game_config": asdict(game_cfg),
        "network_config": asdict(net.cfg),
        "density_rows": [[float(v) for v in row] for row in density.p_attack],
        "weight_checksum": weight_checksum(net),
        "attacker": attacker,
        "greedy": greedy,
    }

    state = new_game(game_cfg, density, env_seed)
    lstm = net.initial_lstm_state()
    steps = []
    while state.status == Status.ONGOING:
        t = state.t
        obs_encoded = encode_observation(state, game_cfg)
        obs_file = f"obs_{t:03d}.txt"
        save_tensor_text(os.path.join(out_dir, obs_file), obs_encoded)
        frame = render_color(state, game_cfg)
        write_ppm(os.path.join(out_dir, f"frame_{t:03d}.ppm"), frame)

        out = net.forward(observation_for(net.cfg, state, game_cfg), lstm)
        if out.next_lstm_state is not None:
            lstm = out.next_lstm_state.detach()
        overlay_heatmap(
            frame, out.policy_mask, os.path.join(out_dir, f"overlay_policy_{t:03d}.ppm"), upsample_mode
        )
        overlay_heatmap(
            frame, out.value_mask, os.path.join(out_dir, f"overlay_value_{t:03d}.ppm"), upsample_mode
        )

        action = sample_action(out.policy_probs, pol_rng, greedy=greedy)
        if state.attacker_in_game:
            a_att = attacker_policy(attacker_view(state, game_cfg), att_rng)
            att_json = [int(a_att.move), bool(a_att.place_snare)]
        else:
            a_att = AttackerAction(Move.STAND, False)
            att_json = None
        state, outcome = step(state, action, a_att)
        steps.append(
            {
                "t": t,
                "obs_file": obs_file,
                "patroller_action": int(action),
                "attacker_action": att_json,
                "policy_probs": [float(p) for p in out.policy_probs],
                "value": out.value,
                "policy_mask": _mask_json(out.policy_mask),
                "value_mask": _mask_json(out.value_mask),
                "reward": outcome.patroller_reward,
                "events": [_event_json(e) for e in outcome.events],
            }
        )

    trace = EpisodeTrace(header, steps)
    write_trace(os.path.join(out_dir, "trace.jsonl"), trace)
    return trace


def write_trace(path, trace: EpisodeTrace) -> None:
    with open(path, "w") as f:
        f.write(json.dumps(trace.header, sort_keys=True) + "\n")
        for s in trace.steps:
            f.write(json.dumps(s, sort_keys=True) + "\n")


def read_trace(path) -> EpisodeTrace:
    with open(path) as f:
        lines = [line for line in f.read().split("\n") if line.strip()]
    if not lines:
        raise UsageError(f"{path}: empty trace")
    header = json.loads(lines[0])
    if header.get("kind") != "gsgi-trace":
        raise UsageError(f"{path}: not a trace file")
    return EpisodeTrace(header, [json.loads(line) for line in lines[1:]])


@dataclass
class ReplayReport:
    ok: bool
    n_steps: int
    mismatches: list = field(default_factory=list)


def replay_trace(trace: EpisodeTrace) -> ReplayReport:
    """Re-simulate from the header seed and recorded actions; rewards must
    match the recorded ones exactly."""
    game_cfg = GameConfig(**trace.header["game_config"])
    density = DensityMap(np.array(trace.header["density_rows"], dtype=np.float64))
    state = new_game(game_cfg, density, trace.header["env_seed"])
    mismatches = []
    for i, rec in enumerate(trace.steps):
        if state.status != Status.ONGOING:
            mismatches.append((i, "episode ended before recorded step"))
            break
        att = rec["attacker_action"]
        a_att = (
            AttackerAction(Move(att[0]), bool(att[1]))
            if att is not None
            else AttackerAction(Move.STAND, False)
        )
        state, outcome = step(state, Move(rec["patroller_action"]), a_att)
        if outcome.patroller_reward != rec["reward"]:
            mismatches.append(
                (i, f"reward {outcome.patroller_reward!r} != recorded {rec['reward']!r}")
            )
    if state.status == Status.ONGOING:
        mismatches.append((len(trace.steps), "recorded episode ended early"))
    return ReplayReport(not mismatches, len(trace.steps), mismatches)
