"""Parallel actor-critic training against a scripted attacker.

Rollout workers are threads, each owning a private network replica and its
own game instances; they synchronize only through SharedParameters, whose
update path is serialized (clip by global norm, then an RMSProp step).
Episode indices come from a shared counter, so episode i always plays with
the same derived seeds no matter which worker runs it; with one worker the
whole run is bit-reproducible.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .adversary import attacker_view
from .agent import (
    Network,
    NetworkConfig,
    a3c_loss,
    n_step_returns,
    sample_action,
    save_weights,
)
from .env import (
    AttackerAction,
    DensityMap,
    GameConfig,
    Move,
    Status,
    new_game,
    step,
)
from .errors import ConfigError, TrainingDiverged
from .formats import arrays_checksum
from .obs import encode_observation, render_color
from .rng import SplitMix64, derive_seed

# seed-stream tags, one per role an episode needs randomness for
_ENV_STREAM = 0
_ATTACKER_STREAM = 1
_POLICY_STREAM = 2


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    rollout_n: int = 20
    learning_rate: float = 1e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    workers: int = 8
    total_episodes: int = 100_000
    grad_clip_norm: float = 40.0
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-5
    checkpoint_every: int = 1000
    log_every: int = 100

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if self.rollout_n < 1:
            raise ConfigError("rollout_n must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


class SharedParameters:
    """Globally shared weights: versioned, with one serialized update path."""

    def __init__(self, values: dict, track_checksums: bool = False):
        self._lock = threading.Lock()
        self._values = {k: np.array(v) for k, v in values.items()}
        self._ms = {k: np.zeros_like(v) for k, v in values.items()}
        self._version = 0
        self.rejected_updates = 0
        self._checksums: Optional[dict] = {} if track_checksums else None
        if self._checksums is not None:
            self._checksums[0] = arrays_checksum(self._values)

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def snapshot(self) -> tuple:
        """Consistent (values copy, version) pair."""
        with self._lock:
            return {k: v.copy() for k, v in self._values.items()}, self._version

    def checksum_for(self, version: int) -> str:
        if self._checksums is None:
            raise ConfigError("checksum tracking was not enabled")
        return self._checksums[version]

    def apply_update(self, gradients: dict, cfg: TrainConfig) -> int:
        """Clip by global norm, take an RMSProp step, bump the version.
        Non-finite gradients are rejected (version unchanged)."""
        with self._lock:
            sq = 0.0
            for g in gradients.values():
                s = float(np.dot(g.reshape(-1), g.reshape(-1)))
                if not np.isfinite(s):
                    self.rejected_updates += 1
                    return self._version
                sq += s
            norm = sq ** 0.5
            scale = 1.0
            if cfg.grad_clip_norm > 0 and norm > cfg.grad_clip_norm:
                scale = cfg.grad_clip_norm / norm
            for k, g in gradients.items():
                g = g * scale
                ms = self._ms[k]
                ms *= cfg.rmsprop_decay
                ms += (1.0 - cfg.rmsprop_decay) * g * g
                self._values[k] -= cfg.learning_rate * g / (np.sqrt(ms) + cfg.rmsprop_eps)
            self._version += 1
            if self._checksums is not None:
                self._checksums[self._version] = arrays_checksum(self._values)
            return self._version


@dataclass
class LogRecord:
    episodes: int
    mean_reward: float
    mean_length: float
    policy_loss: float
    value_loss: float
    entropy: float
    wall_clock_s: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    CSV_HEADER = "episodes,mean_reward,mean_length,policy_loss,value_loss,entropy,wall_clock_s"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.episodes},{r.mean_reward!r},{r.mean_length!r},"
                f"{r.policy_loss!r},{r.value_loss!r},{r.entropy!r},{r.wall_clock_s!r}"
            )
        return "\n".join(lines) + "\n"

    def save_csv(self, path):
        with open(path, "w") as f:
            f.write(self.to_csv())


@dataclass
class TrainResult:
    network: Network
    log: TrainingLog
    shared: SharedParameters
    episodes_by_worker: list
    checkpoints: list


@dataclass
class _EpisodeRow:
    reward: float
    length: int
    policy_loss: float
    value_loss: float
    entropy: float
    updates: int


def observation_for(net_cfg: NetworkConfig, state, game_cfg: GameConfig) -> np.ndarray:
    if net_cfg.input_variant == "encoded_20ch":
        return encode_observation(state, game_cfg)
    return render_color(state, game_cfg).transpose(2, 0, 1) / 255.0


def _dump_trajectory(out_dir, episode, rewards, actions, returns, comps) -> str:
    path = os.path.join(out_dir or ".", f"diverged_episode_{episode}.json")
    with open(path, "w") as f:
        json.dump(
            {
                "episode": episode,
                "rewards": rewards,
                "actions": [int(a) for a in actions],
                "returns": returns,
                "loss_components": comps,
            },
            f,
            indent=2,
        )
    return path


def train(
    train_cfg: TrainConfig,
    net_cfg: NetworkConfig,
    game_cfg: GameConfig,
    density: DensityMap,
    attacker_policy: Callable,
    seed: int,
    out_dir: Optional[str] = None,
    deterministic: bool = False,
    progress: Optional[Callable] = None,
) -> TrainResult:
    """Run the full training loop; returns final weights plus the log.

    `deterministic` zeroes wall-clock fields in the log so fixed-seed runs
    compare bit-for-bit (requires workers == 1 for full reproducibility).
    """
    if net_cfg.grid_side != game_cfg.grid_side:
        raise ConfigError("network and game grid sides differ")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    seed_net = Network(net_cfg, seed=derive_seed(seed, 0xA11))
    shared = SharedParameters(seed_net.get_values())

    counter_lock = threading.Lock()
    next_episode = 0
    rows: dict[int, _EpisodeRow] = {}
    episodes_done = 0
    checkpoints: list = []
    failure: list = []
    episodes_by_worker = [0] * train_cfg.workers
    t_start = time.perf_counter()

    def claim_episode() -> Optional[int]:
        nonlocal next_episode
        with counter_lock:
            if next_episode >= train_cfg.total_episodes or failure:
                return None
            idx = next_episode
            next_episode += 1
            return idx

    def finish_episode(idx: int, row: _EpisodeRow, worker_id: int, net: Network):
        nonlocal episodes_done
        with counter_lock:
            rows[idx] = row
            episodes_done += 1
            episodes_by_worker[worker_id] += 1
            done = episodes_done
            want_ckpt = (
                out_dir
                and train_cfg.checkpoint_every > 0
                and done % train_cfg.checkpoint_every == 0
            )
        if want_ckpt:
            checkpoints.append(_write_checkpoint(out_dir, done, shared, net_cfg, train_cfg, game_cfg, seed))
        if progress is not None:
            progress(done)

    def run_episode(idx: int, net: Network, worker_id: int):
        env_seed = derive_seed(seed, idx, _ENV_STREAM)
        att_rng = SplitMix64(derive_seed(seed, idx, _ATTACKER_STREAM))
        pol_rng = SplitMix64(derive_seed(seed, idx, _POLICY_STREAM))
        state = new_game(game_cfg, density, env_seed)
        lstm_state = net.initial_lstm_state()
        ep_reward = 0.0
        ep_len = 0
        pol_l = val_l = ent_l = 0.0
        n_updates = 0

        while state.status == Status.ONGOING:
            values, _version = shared.snapshot()
            net.set_values(values)
            outputs = []
            actions = []
            rewards = []
            while len(outputs) < train_cfg.rollout_n and state.status == Status.ONGOING:
                obs = observation_for(net_cfg, state, game_cfg)
                out = net.forward(obs, lstm_state)
                action = sample_action(out.policy_probs, pol_rng)
                if state.attacker_in_game:
                    a_att = attacker_policy(attacker_view(state, game_cfg), att_rng)
                else:
                    a_att = AttackerAction(Move.STAND, False)
                state, outcome = step(state, action, a_att)
                outputs.append(out)
                actions.append(action)
                rewards.append(outcome.patroller_reward)
                lstm_state = out.next_lstm_state
                ep_reward += outcome.patroller_reward
                ep_len += 1

            if state.status == Status.ONGOING:
                peek = net.forward(observation_for(net_cfg, state, game_cfg), lstm_state)
                bootstrap = peek.value
            else:
                bootstrap = 0.0
            returns = n_step_returns(rewards, bootstrap, train_cfg.gamma)
            loss, comps = a3c_loss(outputs, actions, returns, train_cfg)
            if not np.isfinite(float(loss.data)):
                dump = _dump_trajectory(out_dir, idx, rewards, actions, returns, comps)
                raise TrainingDiverged(
                    f"non-finite loss in episode {idx}; trajectory dumped to {dump}",
                    dump_path=dump,
                )
            net.zero_grad()
            loss.backward()
            shared.apply_update(net.gradients(), train_cfg)
            n_updates += 1
            pol_l += comps["policy_loss"]
            val_l += comps["value_loss"]
            ent_l += comps["entropy"]
            if lstm_state is not None:
                lstm_state = lstm_state.detach()

        finish_episode(
            idx,
            _EpisodeRow(ep_reward, ep_len, pol_l, val_l, ent_l, n_updates),
            worker_id,
            net,
        )

    def worker_loop(worker_id: int):
        net = Network(net_cfg, seed=0)
        try:
            while True:
                idx = claim_episode()
                if idx is None:
                    return
                run_episode(idx, net, worker_id)
        except BaseException as e:  # surface worker failures to the caller
            failure.append(e)

    if train_cfg.workers == 1:
        worker_loop(0)
    else:
        threads = [
            threading.Thread(target=worker_loop, args=(w,), daemon=True)
            for w in range(train_cfg.workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if failure:
        raise failure[0]

    wall = 0.0 if deterministic else time.perf_counter() - t_start
    log = _build_log(rows, train_cfg, wall)
    final_values, _ = shared.snapshot()
    final = Network(net_cfg, seed=0)
    final.set_values(final_values)
    if out_dir:
        checkpoints.append(
            _write_checkpoint(out_dir, episodes_done, shared, net_cfg, train_cfg, game_cfg, seed, final=True)
        )
        log.save_csv(os.path.join(out_dir, "training_log.csv"))
    return TrainResult(final, log, shared, episodes_by_worker, checkpoints)


def _build_log(rows: dict, cfg: TrainConfig, wall_total: float) -> TrainingLog:
    log = TrainingLog()
    n = len(rows)
    interval = max(1, cfg.log_every)
    ordered = [rows[i] for i in sorted(rows)]
    for start in range(0, n, interval):
        chunk = ordered[start : start + interval]
        updates = sum(r.updates for r in chunk) or 1
        end = start + len(chunk)
        log.records.append(
            LogRecord(
                episodes=end,
                mean_reward=float(np.mean([r.reward for r in chunk])),
                mean_length=float(np.mean([r.length for r in chunk])),
                policy_loss=sum(r.policy_loss for r in chunk) / updates,
                value_loss=sum(r.value_loss for r in chunk) / updates,
                entropy=sum(r.entropy for r in chunk) / updates,
                wall_clock_s=0.0 if wall_total == 0.0 else wall_total * end / n,
            )
        )
    return log


def _write_checkpoint(out_dir, episodes, shared, net_cfg, train_cfg, game_cfg, seed, final=False):
    values, version = shared.snapshot()
    net = Network(net_cfg, seed=0)
    net.set_values(values)
    tag = "final" if final else f"ep{episodes:07d}"
    weights_path = os.path.join(out_dir, f"weights_{tag}.maa3c")
    save_weights(net, weights_path)
    manifest = {
        "episodes": episodes,
        "version": version,
        "seed": seed,
        "train_config": asdict(train_cfg),
        "network_config": asdict(net_cfg),
        "game_config": asdict(game_cfg),
    }
    manifest_path = weights_path + ".json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return weights_path
