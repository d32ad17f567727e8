"""Trend/seasonal splitting in the frequency domain.

A :class:`FilterBank` holds one sigmoid low-pass mask per channel. The
high-pass mask is its complement, so the two outputs always add back up
to the input.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor

CUTOFF_RANGE = (0.0, 0.5)
STEEPNESS_RANGE = (0.1, 1000.0)


def frequency_grid(length: int) -> np.ndarray:
    """Normalized frequencies ``i / length`` (cycles per step) of the half spectrum."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return np.arange(length // 2 + 1) / length


@dataclass
class FilterBank:
    cutoff: Param
    steepness: Param
    scale_index: int

    @classmethod
    def create(cls, channels: int, scale_index: int, cutoff: float = 0.1,
               steepness: float = 10.0, prefix: str = "") -> "FilterBank":
        return cls(
            Param(np.full(channels, cutoff), f"{prefix}filter.cutoff"),
            Param(np.full(channels, steepness), f"{prefix}filter.steepness"),
            scale_index,
        )

    @property
    def channels(self) -> int:
        return self.cutoff.value.shape[0]

    def params(self) -> list[Param]:
        return [self.cutoff, self.steepness]

    def clamp(self) -> None:
        """Project the parameters back into their admissible ranges."""
        np.clip(self.cutoff.value, *CUTOFF_RANGE, out=self.cutoff.value)
        np.clip(self.steepness.value, *STEEPNESS_RANGE, out=self.steepness.value)

    def masks(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Low/high pass masks of shape ``(length//2 + 1, channels)`` as plain arrays."""
        z = (frequency_grid(length)[:, None] - self.cutoff.value) * self.steepness.value
        low = 0.5 * (1.0 + np.tanh(-0.5 * z))
        high = 0.5 * (1.0 + np.tanh(0.5 * z))
        return low, high


def decompose(x, bank: FilterBank) -> tuple[Tensor, Tensor]:
    """Split ``x`` (B, T, C) into (trend, seasonal) with the bank's sigmoid masks.

    Differentiable with respect to ``x`` and both filter parameters.
    """
    x = ad.tensor(x)
    if x.value.ndim != 3:
        raise ValueError(f"decompose expects (batch, length, channels), got {x.shape}")
    length, channels = x.shape[1], x.shape[2]
    if channels != bank.channels:
        raise ValueError(f"filter bank has {bank.channels} channels, input has {channels}")
    grid = ad.Tensor(frequency_grid(length)[:, None])
    z = ad.mul(ad.sub(grid, bank.cutoff), bank.steepness)
    low_mask = ad.sigmoid(ad.neg(z))
    high_mask = ad.sigmoid(z)
    spec = ad.rfft(x, axis=1)
    trend = ad.irfft(ad.mul(spec, low_mask), length, axis=1)
    seasonal = ad.irfft(ad.mul(spec, high_mask), length, axis=1)
    return trend, seasonal


@lru_cache(maxsize=32)
def moving_average_matrix(length: int, kernel: int) -> np.ndarray:
    """Weight matrix (in, out) of a centred moving average with replicated edges."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"moving-average kernel must be odd and >= 1, got {kernel}")
    half = kernel // 2
    mat = np.zeros((length, length))
    for t in range(length):
        for j in range(t - half, t + half + 1):
            mat[min(max(j, 0), length - 1), t] += 1.0 / kernel
    mat.flags.writeable = False
    return mat


def fixed_decompose(x, kernel: int = 25) -> tuple[Tensor, Tensor]:
    """Moving-average trend with edge replication; seasonal is the remainder."""
    x = ad.tensor(x)
    mat = moving_average_matrix(x.shape[1], kernel)
    trend = ad.affine(x, mat, np.zeros(x.shape[1]))
    return trend, ad.sub(x, trend)
