"""Seeded evaluation matches and the two headline metrics: episode length
and episodic reward, summarized over many episodes with scripted baselines
and a bootstrap comparison."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .adversary import attacker_view
from .agent import Network, sample_action
from .env import (
    AttackerAction,
    DensityMap,
    EventKind,
    GameConfig,
    GameState,
    Move,
    Status,
    new_game,
    step,
)
from .errors import UsageError
from .rng import SplitMix64, derive_seed
from .train import observation_for, _ENV_STREAM, _ATTACKER_STREAM, _POLICY_STREAM


class RandomPatroller:
    """Uniform over the five moves; ignores the observation."""

    def begin_episode(self, rng: SplitMix64):
        self._rng = rng

    def act(self, state: GameState) -> Move:
        return Move(self._rng.below(5))


class StillPatroller:
    """Always stands still."""

    def begin_episode(self, rng: SplitMix64):
        pass

    def act(self, state: GameState) -> Move:
        return Move.STAND


class NetworkPatroller:
    """Drives the game from a trained network; greedy by default."""

    def __init__(self, net: Network, greedy: bool = True):
        self.net = net
        self.greedy = greedy

    def begin_episode(self, rng: SplitMix64):
        self._rng = rng
        self._lstm = self.net.initial_lstm_state()

    def act(self, state: GameState) -> Move:
        obs = observation_for(self.net.cfg, state, state.config)
        out = self.net.forward(obs, self._lstm)
        if out.next_lstm_state is not None:
            self._lstm = out.next_lstm_state.detach()
        return sample_action(out.policy_probs, self._rng, greedy=self.greedy)


def baseline_random_patroller() -> RandomPatroller:
    return RandomPatroller()


def baseline_still_patroller() -> StillPatroller:
    return StillPatroller()


@dataclass
class EpisodeResult:
    length: int
    reward: float
    captured: bool
    status: Status


def play_episode(
    patroller_policy,
    attacker_policy: Callable,
    game_cfg: GameConfig,
    density: DensityMap,
    env_seed: int,
    attacker_rng: SplitMix64,
    patroller_rng: SplitMix64,
    on_step: Optional[Callable] = None,
) -> EpisodeResult:
    """One seeded match; `on_step(state_before, action, att_action, next_state,
    outcome)` observes every transition."""
    state = new_game(game_cfg, density, env_seed)
    patroller_policy.begin_episode(patroller_rng)
    total = 0.0
    captured = False
    while state.status == Status.ONGOING:
        action = patroller_policy.act(state)
        if state.attacker_in_game:
            a_att = attacker_policy(attacker_view(state, game_cfg), attacker_rng)
        else:
            a_att = AttackerAction(Move.STAND, False)
        nxt, outcome = step(state, action, a_att)
        total += outcome.patroller_reward
        if any(e.kind == EventKind.CAPTURE for e in outcome.events):
            captured = True
        if on_step is not None:
            on_step(state, action, a_att, nxt, outcome)
        state = nxt
    return EpisodeResult(state.t, total, captured, state.status)


@dataclass
class Summary:
    mean: float
    median: float
    std: float
    q1: float
    q3: float

    @staticmethod
    def of(values) -> "Summary":
        a = np.asarray(values, dtype=np.float64)
        return Summary(
            mean=float(a.mean()),
            median=float(np.median(a)),
            std=float(a.std()),
            q1=float(np.percentile(a, 25)),
            q3=float(np.percentile(a, 75)),
        )


@dataclass
class RawEpisodes:
    lengths: np.ndarray
    rewards: np.ndarray
    captured: np.ndarray


@dataclass
class EvalStats:
    n_episodes: int
    episode_lengths: Summary
    episodic_rewards: Summary
    capture_rate: float
    fingerprint: str
    raw: Optional[RawEpisodes] = None

    def render_text(self, label: str = "evaluation") -> str:
        lines = [
            f"{label}: {self.n_episodes} episodes, capture rate {self.capture_rate:.3f}",
            f"  episode length : mean {self.episode_lengths.mean:.3f}  median {self.episode_lengths.median:.1f}"
            f"  std {self.episode_lengths.std:.3f}  IQR [{self.episode_lengths.q1:.1f}, {self.episode_lengths.q3:.1f}]",
            f"  episodic reward: mean {self.episodic_rewards.mean:.3f}  median {self.episodic_rewards.median:.3f}"
            f"  std {self.episodic_rewards.std:.3f}  IQR [{self.episodic_rewards.q1:.3f}, {self.episodic_rewards.q3:.3f}]",
        ]
        return "\n".join(lines)

    def raw_csv(self) -> str:
        if self.raw is None:
            raise UsageError("raw per-episode data was not kept")
        lines = ["episode,length,reward,captured"]
        for i in range(self.n_episodes):
            lines.append(
                f"{i},{int(self.raw.lengths[i])},{self.raw.rewards[i]!r},{int(self.raw.captured[i])}"
            )
        return "\n".join(lines) + "\n"


def setup_fingerprint(game_cfg: GameConfig, density: DensityMap) -> str:
    h = hashlib.sha256()
    h.update(repr(sorted(asdict(game_cfg).items())).encode())
    h.update(np.ascontiguousarray(density.p_attack, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def evaluate(
    patroller_policy,
    attacker_policy: Callable,
    game_cfg: GameConfig,
    density: DensityMap,
    n_episodes: int,
    seed: int,
    keep_raw: bool = True,
) -> EvalStats:
    """Play n seeded episodes (per-episode derived seed streams) and summarize."""
    if n_episodes < 1:
        raise UsageError("n_episodes must be >= 1")
    lengths = np.zeros(n_episodes, dtype=np.int64)
    rewards = np.zeros(n_episodes, dtype=np.float64)
    captured = np.zeros(n_episodes, dtype=bool)
    for i in range(n_episodes):
        res = play_episode(
            patroller_policy,
            attacker_policy,
            game_cfg,
            density,
            env_seed=derive_seed(seed, i, _ENV_STREAM),
            attacker_rng=SplitMix64(derive_seed(seed, i, _ATTACKER_STREAM)),
            patroller_rng=SplitMix64(derive_seed(seed, i, _POLICY_STREAM)),
        )
        lengths[i] = res.length
        rewards[i] = res.reward
        captured[i] = res.captured
    return EvalStats(
        n_episodes=n_episodes,
        episode_lengths=Summary.of(lengths),
        episodic_rewards=Summary.of(rewards),
        capture_rate=float(captured.mean()),
        fingerprint=setup_fingerprint(game_cfg, density),
        raw=RawEpisodes(lengths, rewards, captured) if keep_raw else None,
    )


@dataclass
class MetricComparison:
    metric: str
    higher_is_better: bool
    mean_a: float
    mean_b: float
    mean_diff: float  # A - B
    ci_low: float
    ci_high: float
    verdict: str  # "A better" | "B better" | "indistinguishable"


@dataclass
class CompareReport:
    label_a: str
    label_b: str
    metrics: list

    def render_text(self) -> str:
        lines = [f"comparison: A = {self.label_a}, B = {self.label_b}"]
        for m in self.metrics:
            direction = "higher better" if m.higher_is_better else "lower better"
            lines.append(
                f"  {m.metric} ({direction}): A {m.mean_a:.3f} vs B {m.mean_b:.3f}, "
                f"diff {m.mean_diff:+.3f} CI95 [{m.ci_low:+.3f}, {m.ci_high:+.3f}] -> {m.verdict}"
            )
        return "\n".join(lines)


def _bootstrap_metric(
    name: str,
    a: np.ndarray,
    b: np.ndarray,
    higher_is_better: bool,
    rng: np.random.Generator,
    n_resamples: int,
) -> MetricComparison:
    idx_a = rng.integers(0, len(a), size=(n_resamples, len(a)))
    idx_b = rng.integers(0, len(b), size=(n_resamples, len(b)))
    diffs = a[idx_a].mean(axis=1) - b[idx_b].mean(axis=1)
    lo, hi = np.percentile(diffs, [2.5, 97.5])
    mean_diff = float(a.mean() - b.mean())
    if lo > 0 or hi < 0:
        favors_a = (mean_diff > 0) == higher_is_better
        verdict = "A better" if favors_a else "B better"
    else:
        verdict = "indistinguishable"
    return MetricComparison(
        metric=name,
        higher_is_better=higher_is_better,
        mean_a=float(a.mean()),
        mean_b=float(b.mean()),
        mean_diff=mean_diff,
        ci_low=float(lo),
        ci_high=float(hi),
        verdict=verdict,
    )


def compare(
    stats_a: EvalStats,
    stats_b: EvalStats,
    n_resamples: int = 10_000,
    seed: int = 0,
    label_a: str = "A",
    label_b: str = "B",
) -> CompareReport:
    """Bootstrap 95% confidence intervals on the mean differences of both
    metrics. Refuses to compare runs from different game setups."""
    if stats_a.fingerprint != stats_b.fingerprint:
        raise UsageError("comparison refused: game config / density fingerprints differ")
    if stats_a.raw is None or stats_b.raw is None:
        raise UsageError("comparison needs raw per-episode data (keep_raw=True)")
    rng = np.random.default_rng(seed)
    metrics = [
        _bootstrap_metric(
            "episodic_reward",
            stats_a.raw.rewards,
            stats_b.raw.rewards,
            True,
            rng,
            n_resamples,
        ),
        _bootstrap_metric(
            "episode_length",
            stats_a.raw.lengths.astype(np.float64),
            stats_b.raw.lengths.astype(np.float64),
            False,
            rng,
            n_resamples,
        ),
    ]
    return CompareReport(label_a, label_b, metrics)
