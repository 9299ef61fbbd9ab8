"""The U-Net with a residual-block encoder.

Encoder stages 1 and 2 keep the base width at full resolution; every later
stage halves resolution (stride 2) and doubles width. The decoder mirrors the
downsampling stages with 2x2 up-convolutions, skip concatenation, and two 3x3
convolutions per level, ending in a linear 3x3 head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeMismatch
from .ops import conv2d, residual_block, upconv2x
from .tensor import Tensor, concat_channels, relu


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_width: int = 8
    in_channels: int = 4
    out_channels: int = 3
    l2_factor: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.depth < 2:
            raise ConfigError("depth must be >= 2")
        if self.base_width < 1:
            raise ConfigError("base_width must be >= 1")

    def stage_width(self, stage):
        """Channel count after encoder stage (1-based)."""
        if stage <= 2:
            return self.base_width
        return self.base_width * 2 ** (stage - 2)


def _uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: UNetConfig):
    """Fan-in-scaled centered-uniform weights, zero biases; deterministic in
    config.seed. Returns {name: Tensor} with requires_grad set."""
    rng = np.random.default_rng(config.seed)
    arrays = {}

    def add_conv(prefix, c_in, c_out, k, bias=True):
        arrays[f"{prefix}.w"] = _uniform_fan_in(rng, (c_out, c_in, k, k), c_in * k * k)
        if bias:
            arrays[f"{prefix}.b"] = np.zeros(c_out)

    c_prev = config.in_channels
    for stage in range(1, config.depth + 1):
        width = config.stage_width(stage)
        add_conv(f"enc{stage}.conv1", c_prev, width, 3)
        add_conv(f"enc{stage}.conv2", width, width, 3)
        if width != c_prev or stage >= 3:
            add_conv(f"enc{stage}.proj", c_prev, width, 1, bias=False)
        c_prev = width

    for stage in range(config.depth, 2, -1):
        wide = config.stage_width(stage)
        half = wide // 2
        arrays[f"dec{stage}.up.w"] = _uniform_fan_in(rng, (wide, half, 2, 2), wide * 4)
        add_conv(f"dec{stage}.conv1", wide, half, 3)
        add_conv(f"dec{stage}.conv2", half, half, 3)

    add_conv("head", config.stage_width(2) if config.depth == 2 else config.base_width,
             config.out_channels, 3)
    return {name: Tensor(a, requires_grad=True) for name, a in arrays.items()}


def l2_weight_penalty(params):
    """Sum of squared convolution weights (biases excluded)."""
    return sum(float((p.values**2).sum()) for name, p in params.items() if name.endswith(".w"))


def add_l2_gradients(params, l2_factor):
    """Accumulate d/dw of l2_factor * sum w^2 into existing weight gradients."""
    if l2_factor == 0.0:
        return
    for name, p in params.items():
        if name.endswith(".w"):
            p._accumulate(2.0 * l2_factor * p.values)


def unet_forward(config: UNetConfig, params, patch: Tensor) -> Tensor:
    """Run the network on an N x in_channels x S x S patch batch."""
    if patch.values.ndim != 4 or patch.values.shape[1] != config.in_channels:
        raise ShapeMismatch(f"expected N x {config.in_channels} x S x S input")
    side_h, side_w = patch.values.shape[2:]
    if side_h % 2**config.depth or side_w % 2**config.depth:
        raise ConfigError(f"patch side must be divisible by 2^depth = {2**config.depth}")

    x = patch
    skips = {}
    c_prev = config.in_channels
    for stage in range(1, config.depth + 1):
        width = config.stage_width(stage)
        stride = 2 if stage >= 3 else 1
        project = width != c_prev or stage >= 3
        x = residual_block(x, params, f"enc{stage}", stride=stride, project=project)
        skips[stage] = x
        c_prev = width

    for stage in range(config.depth, 2, -1):
        x = upconv2x(x, params[f"dec{stage}.up.w"])
        x = concat_channels(x, skips[stage - 1])
        x = relu(conv2d(x, params[f"dec{stage}.conv1.w"], params[f"dec{stage}.conv1.b"], pad=1))
        x = relu(conv2d(x, params[f"dec{stage}.conv2.w"], params[f"dec{stage}.conv2.b"], pad=1))

    return conv2d(x, params["head.w"], params["head.b"], pad=1)
