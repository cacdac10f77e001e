"""Green-security pursuit-evasion gridworld with a mask-attention
actor-critic patroller: game engine, observation encodings, scripted
attackers, scratch autodiff kernels, a parallel trainer, an evaluation
harness, and attention-mask export tooling."""

from .env import (
    AttackerAction,
    DensityMap,
    GameConfig,
    GameState,
    Move,
    PatrollerAction,
    Status,
    StepOutcome,
    check_termination,
    gaussian_density_map,
    new_game,
    random_density_map,
    step,
)
from .obs import encode_observation, render_color
from .adversary import AttackerView, attacker_view, heuristic_random_walk, random_attacker
from .agent import (
    ForwardOutput,
    Network,
    NetworkConfig,
    a3c_loss,
    build_network,
    extract_masks,
    load_weights,
    n_step_returns,
    sample_action,
    save_weights,
)
from .train import SharedParameters, TrainConfig, TrainingLog, train
from .evalharness import (
    EvalStats,
    NetworkPatroller,
    baseline_random_patroller,
    baseline_still_patroller,
    compare,
    evaluate,
)
from .interp import overlay_heatmap, read_trace, replay_trace, rollout_with_maps

__version__ = "0.1.0"
