"""Command-line entry points.

Subcommands: train, eval, rollout, render, gradcheck, maps. Exit codes:
0 success, 1 usage error, 2 runtime failure. A `--config FILE` of
`key=value` lines supplies flag defaults; explicit flags win. The
GSGI_NUM_WORKERS environment variable backs `--workers` when the flag is
absent.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

import numpy as np

from . import formats
from .adversary import get_attacker_policy
from .agent import NetworkConfig, gradcheck_case_a3c_loss, load_weights
from .env import (
    DensityMap,
    GameConfig,
    Status,
    gaussian_density_map,
    new_game,
    random_density_map,
    step,
)
from .errors import GsgiError, UsageError
from .evalharness import (
    NetworkPatroller,
    baseline_random_patroller,
    baseline_still_patroller,
    compare,
    evaluate,
)
from .interp import rollout_with_maps
from .nn.gradcheck import kernel_cases, run_gradcheck_suite
from .obs import render_color
from .rng import SplitMix64, derive_seed
from .train import TrainConfig, train


class _UsageExit(Exception):
    def __init__(self, message):
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_map_args(p):
    p.add_argument("--map-kind", choices=["random", "gaussian", "file"], default="random")
    p.add_argument("--map-seed", type=int, default=1, help="seed for --map-kind random")
    p.add_argument("--map-file", help="density file for --map-kind file")
    p.add_argument("--peak", type=float, default=0.6, help="gaussian map peak")
    p.add_argument("--sigma", type=float, default=2.0, help="gaussian map sigma, cells")


def _add_game_args(p):
    p.add_argument("--grid-side", type=int, default=7)
    p.add_argument("--horizon", type=int, default=75)
    p.add_argument("--max-snares", type=int, default=3)
    p.add_argument("--attack-mode", choices=["per_step", "once_per_snare"], default="per_step")
    p.add_argument(
        "--terminate-on-capture",
        action=argparse.BooleanOptionalAction,
        default=True,
    )


def _game_config(args) -> GameConfig:
    return GameConfig(
        grid_side=args.grid_side,
        horizon=args.horizon,
        max_snares=args.max_snares,
        attack_mode=args.attack_mode,
        terminate_on_capture=args.terminate_on_capture,
    )


def _density(args) -> DensityMap:
    if args.map_kind == "random":
        return random_density_map(args.grid_side, args.map_seed)
    if args.map_kind == "gaussian":
        return gaussian_density_map(args.grid_side, args.peak, args.sigma)
    if not args.map_file:
        raise UsageError("--map-kind file needs --map-file")
    return formats.load_density(args.map_file)


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("GSGI_NUM_WORKERS")
    if env:
        return int(env)
    return TrainConfig().workers


def build_parser() -> _Parser:
    parser = _Parser(prog="gsgi", description=__doc__)
    parser.add_argument("--config", help="key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the patroller network", parser_class=_Parser)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=TrainConfig().total_episodes)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--deterministic", action="store_true", help="zero wall-clock fields; use with --workers 1")
    p.add_argument("--variant", choices=["encoded_20ch", "color_rgb"], default="encoded_20ch")
    p.add_argument("--convlstm", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--feature-channels", type=int, default=64)
    p.add_argument("--mlp-hidden", type=int, default=128)
    p.add_argument("--attacker", choices=["heuristic", "random"], default="heuristic")
    p.add_argument("--gamma", type=float, default=TrainConfig().gamma)
    p.add_argument("--rollout-n", type=int, default=TrainConfig().rollout_n)
    p.add_argument("--lr", type=float, default=TrainConfig().learning_rate)
    p.add_argument("--entropy-coef", type=float, default=TrainConfig().entropy_coef)
    p.add_argument("--value-coef", type=float, default=TrainConfig().value_coef)
    p.add_argument("--grad-clip", type=float, default=TrainConfig().grad_clip_norm)
    p.add_argument("--checkpoint-every", type=int, default=TrainConfig().checkpoint_every)
    p.add_argument("--log-every", type=int, default=TrainConfig().log_every)
    _add_game_args(p)
    _add_map_args(p)

    p = sub.add_parser("eval", help="evaluate weights or a baseline", parser_class=_Parser)
    p.add_argument("--weights")
    p.add_argument("--baseline", choices=["random", "still"])
    p.add_argument("--attacker", choices=["heuristic", "random"], default="heuristic")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stochastic", action="store_true", help="sample instead of greedy")
    p.add_argument("--csv", help="write raw per-episode rows here")
    p.add_argument(
        "--against-baseline",
        choices=["random", "still"],
        help="also evaluate this baseline and print a bootstrap comparison",
    )
    _add_game_args(p)
    _add_map_args(p)

    p = sub.add_parser("rollout", help="traced episode with mask overlays", parser_class=_Parser)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attacker", choices=["heuristic", "random"], default="heuristic")
    p.add_argument("--stochastic", action="store_true")
    p.add_argument("--upsample", choices=["bilinear", "nearest"], default="bilinear")
    _add_game_args(p)
    _add_map_args(p)

    p = sub.add_parser("render", help="render a game state to a PPM image", parser_class=_Parser)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=0, help="advance this many scripted steps first")
    _add_game_args(p)
    _add_map_args(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of all kernels", parser_class=_Parser)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=10, help="number of random seeds")

    p = sub.add_parser("maps", help="generate a density map file", parser_class=_Parser)
    p.add_argument("--kind", choices=["random", "gaussian"], default="random")
    p.add_argument("--grid-side", type=int, default=7)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--peak", type=float, default=0.6)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--out", required=True)

    return parser


def _cmd_train(args) -> int:
    net_cfg = NetworkConfig(
        input_variant=args.variant,
        use_convlstm=args.convlstm,
        feature_channels=args.feature_channels,
        mlp_hidden=args.mlp_hidden,
        grid_side=args.grid_side,
    )
    train_cfg = TrainConfig(
        gamma=args.gamma,
        rollout_n=args.rollout_n,
        learning_rate=args.lr,
        entropy_coef=args.entropy_coef,
        value_coef=args.value_coef,
        workers=_resolve_workers(args),
        total_episodes=args.episodes,
        grad_clip_norm=args.grad_clip,
        checkpoint_every=args.checkpoint_every,
        log_every=args.log_every,
    )
    game_cfg = _game_config(args)
    density = _density(args)
    result = train(
        train_cfg,
        net_cfg,
        game_cfg,
        density,
        get_attacker_policy(args.attacker),
        seed=args.seed,
        out_dir=args.out,
        deterministic=args.deterministic,
    )
    last = result.log.records[-1] if result.log.records else None
    print(f"trained {train_cfg.total_episodes} episodes; weights in {args.out}")
    if last:
        print(
            f"last interval: mean reward {last.mean_reward:.3f}, "
            f"mean length {last.mean_length:.2f}"
        )
    return 0


def _cmd_eval(args) -> int:
    if bool(args.weights) == bool(args.baseline):
        raise UsageError("eval needs exactly one of --weights or --baseline")
    game_cfg = _game_config(args)
    density = _density(args)
    if args.weights:
        net = load_weights(args.weights)
        policy = NetworkPatroller(net, greedy=not args.stochastic)
        label = f"weights {os.path.basename(args.weights)}"
    else:
        policy = (
            baseline_random_patroller() if args.baseline == "random" else baseline_still_patroller()
        )
        label = f"{args.baseline} baseline"
    attacker = get_attacker_policy(args.attacker)
    stats = evaluate(policy, attacker, game_cfg, density, args.episodes, args.seed)
    print(stats.render_text(label))
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(stats.raw_csv())
        print(f"raw rows written to {args.csv}")
    if args.against_baseline:
        other = (
            baseline_random_patroller()
            if args.against_baseline == "random"
            else baseline_still_patroller()
        )
        other_stats = evaluate(other, attacker, game_cfg, density, args.episodes, args.seed)
        print(other_stats.render_text(f"{args.against_baseline} baseline"))
        report = compare(
            stats, other_stats, label_a=label, label_b=f"{args.against_baseline} baseline"
        )
        print(report.render_text())
    return 0


def _cmd_rollout(args) -> int:
    trace = rollout_with_maps(
        args.weights,
        _game_config(args),
        _density(args),
        args.seed,
        args.out,
        attacker=args.attacker,
        greedy=not args.stochastic,
        upsample_mode=args.upsample,
    )
    print(f"episode of {trace.length} steps traced to {args.out}")
    return 0


def _cmd_render(args) -> int:
    game_cfg = _game_config(args)
    density = _density(args)
    state = new_game(game_cfg, density, derive_seed(args.seed, 0, 0))
    rng = SplitMix64(derive_seed(args.seed, 0, 1))
    from .adversary import attacker_view, heuristic_random_walk
    from .env import AttackerAction, Move

    for _ in range(args.steps):
        if state.status != Status.ONGOING:
            break
        a_p = Move(rng.below(5))
        if state.attacker_in_game:
            a_a = heuristic_random_walk(attacker_view(state, game_cfg), rng)
        else:
            a_a = AttackerAction(Move.STAND, False)
        state, _out = step(state, a_p, a_a)
    formats.write_ppm(args.out, render_color(state, game_cfg))
    print(f"wrote {args.out} (t={state.t})")
    return 0


def _cmd_gradcheck(args) -> int:
    seeds = tuple(args.seed + i for i in range(args.rounds))
    cases = kernel_cases() + [gradcheck_case_a3c_loss()]
    results = run_gradcheck_suite(seeds=seeds, cases=cases)
    failed = False
    for case, res in results:
        ok = res.max_rel_error < case.threshold
        failed = failed or not ok
        print(f"{'PASS' if ok else 'FAIL'} {res}  threshold {case.threshold:g}")
    worst = max(r.max_rel_error for _, r in results)
    print(f"worst-case relative error: {worst:.3e}")
    if failed:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def _cmd_maps(args) -> int:
    if args.kind == "random":
        dm = random_density_map(args.grid_side, args.seed)
    else:
        dm = gaussian_density_map(args.grid_side, args.peak, args.sigma)
    formats.save_density(args.out, dm)
    print(f"wrote {args.kind} density map to {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "rollout": _cmd_rollout,
    "render": _cmd_render,
    "gradcheck": _cmd_gradcheck,
    "maps": _cmd_maps,
}


def _load_config_defaults(argv: list) -> list:
    """Splice key=value file entries in as flags right after the subcommand,
    so explicit flags (later tokens) override them."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2 :]
    try:
        lines = open(path).read().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    extra = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line without '=': {line!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "false"):
            extra.append(f"--{key}" if value.lower() == "true" else f"--no-{key}")
        else:
            extra.extend([f"--{key}", value])
    if not rest:
        return extra
    # insert right after the subcommand token
    for j, tok in enumerate(rest):
        if tok in _COMMANDS:
            return rest[: j + 1] + extra + rest[j + 1 :]
    return rest + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _load_config_defaults(argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageExit as e:
        print(str(e), file=sys.stderr)
        return 1
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except GsgiError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
