"""Dense tensor substrate: FFT, average pooling and axis-wise affine maps.

Series tensors are plain float64 ``numpy`` arrays of shape
``(batch, length, channels)``. Every function here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TEMPORAL = "temporal"
CHANNEL = "channel"

# primes above this go through Bluestein instead of a dense DFT matrix
_DENSE_PRIME_LIMIT = 32


def as_tensor3(x, name: str = "x") -> np.ndarray:
    """Validate and coerce ``x`` into a float64 ``(B, T, C)`` array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (batch, length, channels), got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: shape={arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------

def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(p: int) -> np.ndarray:
    k = np.arange(p)
    return np.exp(-2j * np.pi * (np.outer(k, k) % p) / p)


@lru_cache(maxsize=None)
def _twiddles(n: int, p: int) -> np.ndarray:
    m = n // p
    r = np.arange(p)[:, None]
    k1 = np.arange(m)[None, :]
    return np.exp(-2j * np.pi * ((r * k1) % n) / n)


@lru_cache(maxsize=None)
def _bluestein_plan(n: int):
    m = 1
    while m < 2 * n - 1:
        m *= 2
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp argument small for large n
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=complex)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:])[::-1]
    return m, chirp, _fft_last(b)


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        if n <= _DENSE_PRIME_LIMIT:
            return x @ _dft_matrix(n)
        return _bluestein(x)
    m = n // p
    # decimation in time: p interleaved subsequences of length m
    sub = x.reshape(x.shape[:-1] + (m, p))
    sub = np.swapaxes(sub, -1, -2)
    y = _fft_last(sub) * _twiddles(n, p)
    out = np.swapaxes(np.swapaxes(y, -1, -2) @ _dft_matrix(p), -1, -2)
    return out.reshape(x.shape[:-1] + (n,))


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m, chirp, b_hat = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _ifft_last(_fft_last(a) * b_hat)
    return conv[..., :n] * chirp


def _ifft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return np.conj(_fft_last(np.conj(x))) / n


def fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized complex DFT along ``axis`` (negative exponent)."""
    a = np.moveaxis(np.asarray(x, dtype=complex), axis, -1)
    return np.moveaxis(_fft_last(a), -1, axis)


def ifft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`fft`, carrying the 1/n factor."""
    a = np.moveaxis(np.asarray(x, dtype=complex), axis, -1)
    return np.moveaxis(_ifft_last(a), -1, axis)


def rfft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Non-negative frequency half of the DFT of a real signal."""
    n = np.shape(x)[axis]
    full = fft(np.asarray(x, dtype=np.float64), axis=axis)
    out = np.take(full, np.arange(n // 2 + 1), axis=axis)
    # bins 0 and n/2 of a real signal are real by symmetry
    edge = [0] + ([n // 2] if n % 2 == 0 else [])
    idx = [slice(None)] * out.ndim
    idx[axis] = edge
    out[tuple(idx)] = out[tuple(idx)].real
    return out


def irfft(z: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Real signal of length ``n`` from its half spectrum.

    Imaginary parts of bin 0 and (even ``n``) bin ``n/2`` are ignored.
    """
    z = np.moveaxis(np.asarray(z, dtype=complex), axis, -1)
    nbins = n // 2 + 1
    if z.shape[-1] != nbins:
        raise ValueError(f"half spectrum has {z.shape[-1]} bins, length {n} needs {nbins}")
    full = np.empty(z.shape[:-1] + (n,), dtype=complex)
    full[..., :nbins] = z
    full[..., 0] = z[..., 0].real
    if n % 2 == 0:
        full[..., n // 2] = z[..., n // 2].real
    tail = np.arange(nbins, n)
    full[..., tail] = np.conj(z[..., n - tail])
    out = _ifft_last(full).real
    return np.moveaxis(out, -1, axis)


def dft_direct(x: np.ndarray) -> np.ndarray:
    """O(n^2) DFT along the last axis by explicit summation."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * (np.outer(k, k) % n) / n) if n else np.zeros((0, 0))
    return x @ w


@dataclass(frozen=True)
class SpectrumHalf:
    """Half spectrum of a ``(B, T, C)`` series; ``re``/``im`` are ``(B, T//2+1, C)``."""

    re: np.ndarray
    im: np.ndarray
    origin_length: int

    @property
    def complex(self) -> np.ndarray:
        return self.re + 1j * self.im


def forward_transform(x) -> SpectrumHalf:
    x = as_tensor3(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("forward_transform requires finite input")
    z = rfft(x, axis=1)
    return SpectrumHalf(z.real.copy(), z.imag.copy(), x.shape[1])


def inverse_transform(s: SpectrumHalf) -> np.ndarray:
    n = int(s.origin_length)
    if n < 1:
        raise ValueError(f"origin_length must be positive, got {n}")
    if s.re.shape != s.im.shape:
        raise ValueError(f"re/im shape mismatch: {s.re.shape} vs {s.im.shape}")
    if s.re.ndim != 3 or s.re.shape[1] != n // 2 + 1:
        raise ValueError(
            f"origin_length {n} inconsistent with {s.re.shape[1] if s.re.ndim == 3 else '?'} bins"
        )
    return irfft(s.re + 1j * s.im, n, axis=1)


# ---------------------------------------------------------------------------
# pooling and affine maps
# ---------------------------------------------------------------------------

def avg_pool_downsample(x, factor: int) -> np.ndarray:
    """Non-overlapping mean pooling along time; a trailing partial window is dropped."""
    x = as_tensor3(x)
    if int(factor) != factor or factor <= 0:
        raise ValueError(f"pooling factor must be a positive integer, got {factor}")
    if factor == 1:
        return x.copy()
    b, t, c = x.shape
    steps = t // factor
    if steps == 0:
        raise ValueError(f"series length {t} shorter than pooling factor {factor}")
    return x[:, : steps * factor].reshape(b, steps, factor, c).mean(axis=2)


def affine_apply(x, weight, bias, axis: str = TEMPORAL) -> np.ndarray:
    """``x @ W + b`` along the temporal or channel axis of a ``(B, T, C)`` tensor.

    ``weight`` is ``(in, out)``; the named axis of ``x`` must have length ``in``.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if w.ndim != 2 or b.shape != (w.shape[1],):
        raise ValueError(f"weight {w.shape} and bias {b.shape} are not an (in, out)/(out,) pair")
    if axis == TEMPORAL:
        if x.shape[1] != w.shape[0]:
            raise ValueError(
                f"temporal affine expects length {w.shape[0]}, got length {x.shape[1]}"
            )
        return np.swapaxes(np.swapaxes(x, 1, 2) @ w, 1, 2) + b[None, :, None]
    if axis == CHANNEL:
        if x.shape[2] != w.shape[0]:
            raise ValueError(
                f"channel affine expects {w.shape[0]} channels, got {x.shape[2]}"
            )
        return x @ w + b
    raise ValueError(f"unknown axis {axis!r}")
