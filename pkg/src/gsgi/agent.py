"""The mask-attention actor-critic network.

Shared convolutional features feed two heads (policy and value). Each head
learns its own single-channel spatial mask (1x1 convolution + sigmoid) and
multiplies it over the shared features before its MLP, so a mask value
near 0 provably zeroes that location's influence on the head. The mask
itself is the interpretation artifact that the rollout tooling exports.

Variants:
  encoded_20ch  conv(20 -> F, 3x3, pad 1), pool, relu; 7x7 grid -> 3x3 maps
  color_rgb     three conv+pool+relu blocks (3 -> 16 -> 32 -> F);
                160x160 frames -> 20x20 maps, inputs scaled to [0, 1]

An optional ConvLSTM sits between the shared features and the heads to
carry spatial memory across steps.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import formats
from .env import Move
from .errors import ConfigError, UsageError, WeightFormatError
from .nn import (
    ConvLstmState,
    GradCheckCase,
    Parameter,
    Tensor,
    conv2d,
    convlstm_step,
    dense,
    exp,
    flatten,
    log_softmax,
    mask_apply,
    maxpool2d,
    pick,
    relu,
    sigmoid,
    sum_all,
)
from .nn.convlstm import zero_state
from .rng import SplitMix64

VARIANT_ENCODED = "encoded_20ch"
VARIANT_COLOR = "color_rgb"

N_ACTIONS = 5
COLOR_INPUT_SIDE = 160


@dataclass(frozen=True)
class NetworkConfig:
    input_variant: str = VARIANT_ENCODED
    use_convlstm: bool = False
    feature_channels: int = 64
    mlp_hidden: int = 128
    grid_side: int = 7

    def __post_init__(self):
        if self.input_variant not in (VARIANT_ENCODED, VARIANT_COLOR):
            raise ConfigError(f"unknown input_variant {self.input_variant!r}")
        if self.feature_channels < 1 or self.mlp_hidden < 1:
            raise ConfigError("feature_channels and mlp_hidden must be >= 1")


@dataclass
class ForwardOutput:
    policy_probs: np.ndarray  # (5,), sums to 1
    value: float
    policy_mask: np.ndarray  # (H, W), strictly in (0, 1)
    value_mask: np.ndarray  # (H, W)
    next_lstm_state: Optional[ConvLstmState]
    logits: Tensor  # graph handles for the loss
    value_out: Tensor  # shape (1,)


@dataclass
class MaskRecord:
    head: str
    values: np.ndarray
    resolution: tuple
    step_index: Optional[int] = None


def _np_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class Network:
    """Parameter container plus the forward pass."""

    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Parameter] = {}
        rng = np.random.default_rng(seed)

        if cfg.input_variant == VARIANT_ENCODED:
            self._conv_channels = [(20, cfg.feature_channels)]
            side = cfg.grid_side
        else:
            self._conv_channels = [(3, 16), (16, 32), (32, cfg.feature_channels)]
            side = COLOR_INPUT_SIDE
        for i, (c_in, c_out) in enumerate(self._conv_channels):
            self._add_conv(rng, f"conv{i}", c_out, c_in, 3)
            side = side // 2
        self.feature_side = side
        f = cfg.feature_channels
        if cfg.use_convlstm:
            self._add_conv(rng, "lstm", 4 * f, 2 * f, 3)
        flat = f * side * side
        for head in ("policy", "value"):
            self._add_conv(rng, f"{head}.mask", 1, f, 1)
            self._add_dense(rng, f"{head}.fc1", cfg.mlp_hidden, flat)
            out_dim = N_ACTIONS if head == "policy" else 1
            self._add_dense(rng, f"{head}.out", out_dim, cfg.mlp_hidden)

    def _add_conv(self, rng, name, c_out, c_in, k):
        bound = math.sqrt(6.0 / (c_in * k * k))
        self.params[f"{name}.w"] = Parameter(rng.uniform(-bound, bound, (c_out, c_in, k, k)))
        self.params[f"{name}.b"] = Parameter(np.zeros(c_out))

    def _add_dense(self, rng, name, m, n):
        bound = math.sqrt(6.0 / n)
        self.params[f"{name}.w"] = Parameter(rng.uniform(-bound, bound, (m, n)))
        self.params[f"{name}.b"] = Parameter(np.zeros(m))

    @property
    def expected_input_shape(self) -> tuple:
        if self.cfg.input_variant == VARIANT_ENCODED:
            return (20, self.cfg.grid_side, self.cfg.grid_side)
        return (3, COLOR_INPUT_SIDE, COLOR_INPUT_SIDE)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def gradients(self) -> dict:
        return {k: p.grad for k, p in self.params.items()}

    def get_values(self) -> dict:
        return {k: p.data.copy() for k, p in self.params.items()}

    def set_values(self, values: dict):
        for k, p in self.params.items():
            p.data[...] = values[k]

    def manifest(self) -> list:
        return [(k, p.data.shape) for k, p in self.params.items()]

    def initial_lstm_state(self) -> Optional[ConvLstmState]:
        if not self.cfg.use_convlstm:
            return None
        return zero_state(self.cfg.feature_channels, self.feature_side, self.feature_side)

    def forward(self, obs, lstm_state: Optional[ConvLstmState] = None) -> ForwardOutput:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != self.expected_input_shape:
            raise UsageError(
                f"observation shape {obs.shape} != expected {self.expected_input_shape}"
            )
        p = self.params
        x = Tensor(obs)
        for i in range(len(self._conv_channels)):
            x = relu(maxpool2d(conv2d(x, p[f"conv{i}.w"], p[f"conv{i}.b"], padding=1)))

        next_state = None
        if self.cfg.use_convlstm:
            if lstm_state is None:
                lstm_state = self.initial_lstm_state()
            x, next_state = convlstm_step(x, lstm_state, p["lstm.w"], p["lstm.b"])

        heads = {}
        for head in ("policy", "value"):
            mask = sigmoid(conv2d(x, p[f"{head}.mask.w"], p[f"{head}.mask.b"], padding=0))
            masked = flatten(mask_apply(x, mask))
            hidden = relu(dense(masked, p[f"{head}.fc1.w"], p[f"{head}.fc1.b"]))
            out = dense(hidden, p[f"{head}.out.w"], p[f"{head}.out.b"])
            heads[head] = (mask, out)

        logits = heads["policy"][1]
        value_out = heads["value"][1]
        return ForwardOutput(
            policy_probs=_np_softmax(logits.data),
            value=float(value_out.data[0]),
            policy_mask=heads["policy"][0].data[0].copy(),
            value_mask=heads["value"][0].data[0].copy(),
            next_lstm_state=next_state,
            logits=logits,
            value_out=value_out,
        )


def build_network(cfg: NetworkConfig, seed: int = 0) -> Network:
    return Network(cfg, seed=seed)


def sample_action(policy_probs, rng: SplitMix64, greedy: bool = False) -> Move:
    """Categorical draw; greedy mode takes the argmax (first index on ties)."""
    if greedy:
        return Move(int(np.argmax(policy_probs)))
    u = rng.uniform()
    acc = 0.0
    for i, prob in enumerate(policy_probs):
        acc += float(prob)
        if u < acc:
            return Move(i)
    return Move(len(policy_probs) - 1)


def n_step_returns(rewards, bootstrap_value: float, gamma: float) -> list:
    """Discounted returns G_t = r_t + gamma * G_{t+1}, seeded past the end
    with bootstrap_value (0 for terminal segments)."""
    if len(rewards) == 0:
        raise UsageError("n_step_returns needs at least one reward")
    returns = [0.0] * len(rewards)
    g = float(bootstrap_value)
    for i in range(len(rewards) - 1, -1, -1):
        g = float(rewards[i]) + gamma * g
        returns[i] = g
    return returns


def a3c_loss(outputs, actions, returns, cfg, frozen_advantages=None):
    """Actor-critic loss over one rollout segment.

    loss = sum_t [ -log pi(a_t) * (G_t - V_t)  (advantage detached)
                   + value_coef * (G_t - V_t)^2
                   - entropy_coef * H(pi_t) ]

    `frozen_advantages` substitutes precomputed constants for the detached
    advantage; the finite-difference harness uses it so the numeric side
    treats the advantage as the constant the analytic side sees.
    Returns (loss tensor, {policy_loss, value_loss, entropy} floats).
    """
    if not (len(outputs) == len(actions) == len(returns)):
        raise UsageError("trajectory pieces must have equal lengths")
    total = None
    pol = val = ent = 0.0
    for i, (out, action, g_t) in enumerate(zip(outputs, actions, returns)):
        lp = log_softmax(out.logits)
        lp_a = pick(lp, int(action))
        if frozen_advantages is None:
            adv = g_t - float(out.value_out.data[0])
        else:
            adv = float(frozen_advantages[i])
        pg_term = lp_a * (-adv)
        diff = out.value_out - g_t
        v_term = sum_all(diff * diff)
        probs = exp(lp)
        entropy = sum_all(probs * lp) * -1.0
        term = pg_term + v_term * cfg.value_coef + entropy * (-cfg.entropy_coef)
        total = term if total is None else total + term
        pol += float(pg_term.data)
        val += float(v_term.data)
        ent += float(entropy.data)
    return total, {"policy_loss": pol, "value_loss": val, "entropy": ent}


def extract_masks(out: ForwardOutput, step_index: Optional[int] = None) -> tuple:
    """Both heads' masks at native feature resolution, with metadata."""
    return (
        MaskRecord("policy", out.policy_mask.copy(), out.policy_mask.shape, step_index),
        MaskRecord("value", out.value_mask.copy(), out.value_mask.shape, step_index),
    )


def save_weights(net: Network, path) -> None:
    formats.write_weights(path, {"network": asdict(net.cfg)}, net.get_values())


def load_weights(path) -> Network:
    """Rebuild a network from a weight file; bit-exact forward round trip."""
    config, arrays = formats.read_weights(path)
    try:
        cfg = NetworkConfig(**config["network"])
    except (KeyError, TypeError) as e:
        raise WeightFormatError(f"{path}: bad network config in header ({e})") from None
    net = Network(cfg, seed=0)
    expected = {k: p.data.shape for k, p in net.params.items()}
    got = {k: a.shape for k, a in arrays.items()}
    if expected != got:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        shapes = sorted(
            k for k in set(expected) & set(got) if expected[k] != got[k]
        )
        raise WeightFormatError(
            f"{path}: manifest mismatch (missing {missing}, unexpected {extra}, "
            f"shape conflicts {shapes})"
        )
    net.set_values(arrays)
    return net


def weight_checksum(net: Network) -> str:
    return formats.arrays_checksum(net.get_values())


def gradcheck_case_a3c_loss() -> GradCheckCase:
    """Finite-difference case: full loss over a 3-step toy trajectory built
    from small tanh MLP heads (smooth everywhere, so central differences
    are clean)."""
    from .nn import tanh as nn_tanh

    @dataclass
    class _TrainCfg:
        value_coef: float = 0.5
        entropy_coef: float = 0.01

    def build(rng):
        xs = [Tensor(rng.standard_normal(12)) for _ in range(3)]
        w1 = Tensor(0.5 * rng.standard_normal((8, 12)))
        b1 = Tensor(0.1 * rng.standard_normal(8))
        wp = Tensor(0.5 * rng.standard_normal((N_ACTIONS, 8)))
        bp = Tensor(0.1 * rng.standard_normal(N_ACTIONS))
        wv = Tensor(0.5 * rng.standard_normal((1, 8)))
        bv = Tensor(0.1 * rng.standard_normal(1))
        actions = [int(rng.integers(0, N_ACTIONS)) for _ in range(3)]
        returns = [float(r) for r in rng.standard_normal(3)]
        cfg = _TrainCfg()

        def run_forwards():
            outputs = []
            for x in xs:
                hidden = nn_tanh(dense(x, w1, b1))
                logits = dense(hidden, wp, bp)
                value_out = dense(hidden, wv, bv)
                outputs.append(
                    ForwardOutput(
                        policy_probs=_np_softmax(logits.data),
                        value=float(value_out.data[0]),
                        policy_mask=np.zeros((1, 1)),
                        value_mask=np.zeros((1, 1)),
                        next_lstm_state=None,
                        logits=logits,
                        value_out=value_out,
                    )
                )
            return outputs

        # advantages frozen at the unperturbed point: the numeric side must
        # treat them as the same constants the detached analytic side sees
        baseline = run_forwards()
        frozen = [returns[i] - baseline[i].value for i in range(3)]

        def scalar_fn():
            loss, _ = a3c_loss(run_forwards(), actions, returns, cfg, frozen_advantages=frozen)
            return loss

        tensors = {"w1": w1, "b1": b1, "wp": wp, "bp": bp, "wv": wv, "bv": bv}
        for i, x in enumerate(xs):
            tensors[f"x{i}"] = x
        return scalar_fn, tensors

    return GradCheckCase("a3c_loss", 1e-4, build)
