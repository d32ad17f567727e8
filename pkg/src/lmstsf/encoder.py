"""Per-component forecasting encoder: temporal FC, difference gate, channel FC, projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor
from .numerics import CHANNEL, TEMPORAL

ACTIVATIONS = ("none", "relu")


def _uniform_param(rng: np.random.Generator, fan_in: int, shape, name: str) -> Param:
    bound = 1.0 / np.sqrt(fan_in)
    return Param(rng.uniform(-bound, bound, size=shape), name)


@dataclass
class EncoderParams:
    temporal_w: Param  # (L_k, L_k)
    temporal_b: Param
    channel_w: Param  # (C, C)
    channel_b: Param
    proj_w: Param  # (L_k, H)
    proj_b: Param
    use_autocorrelation: bool = True
    activation: str = "none"

    @classmethod
    def init(cls, length: int, channels: int, horizon: int, rng: np.random.Generator,
             prefix: str = "", use_autocorrelation: bool = True,
             activation: str = "none") -> "EncoderParams":
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        return cls(
            _uniform_param(rng, length, (length, length), prefix + "temporal.weight"),
            _uniform_param(rng, length, (length,), prefix + "temporal.bias"),
            _uniform_param(rng, channels, (channels, channels), prefix + "channel.weight"),
            _uniform_param(rng, channels, (channels,), prefix + "channel.bias"),
            _uniform_param(rng, length, (length, horizon), prefix + "projection.weight"),
            _uniform_param(rng, length, (horizon,), prefix + "projection.bias"),
            use_autocorrelation,
            activation,
        )

    @property
    def length(self) -> int:
        return self.temporal_w.shape[0]

    @property
    def channels(self) -> int:
        return self.channel_w.shape[0]

    @property
    def horizon(self) -> int:
        return self.proj_w.shape[1]

    def params(self) -> list[Param]:
        return [self.temporal_w, self.temporal_b, self.channel_w, self.channel_b,
                self.proj_w, self.proj_b]


def encode(x, p: EncoderParams, trace: dict | None = None) -> Tensor:
    """Forecast ``(B, H, C)`` from one component ``x`` of shape ``(B, L_k, C)``.

    If ``trace`` is given, the intermediate tensors are stored in it under
    ``x_temp``, ``gate`` and ``x_channel``.
    """
    x = ad.tensor(x)
    if x.value.ndim != 3 or x.shape[1] != p.length or x.shape[2] != p.channels:
        raise ValueError(
            f"encoder expects (B, {p.length}, {p.channels}), got {tuple(x.shape)}"
        )
    x_temp = ad.affine(x, p.temporal_w, p.temporal_b, TEMPORAL)
    if p.activation == "relu":
        x_temp = ad.relu(x_temp)
    if p.use_autocorrelation:
        gate = ad.lagged_difference(x)
        x_temp = ad.mul(x_temp, gate)
        if trace is not None:
            trace["gate"] = gate
    x_channel = ad.affine(x_temp, p.channel_w, p.channel_b, CHANNEL)
    if trace is not None:
        trace["x_temp"] = x_temp
        trace["x_channel"] = x_channel
    return ad.affine(ad.add(x_temp, x_channel), p.proj_w, p.proj_b, TEMPORAL)
