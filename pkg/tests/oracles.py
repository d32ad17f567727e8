"""Slow, independent reference computations used as test oracles.

Nothing here imports the package's numerics or autodiff code.
"""
import cmath
import math

import numpy as np


def dft_loop(x):
    """Direct O(n^2) DFT of a 1-D sequence, negative exponent, no scaling."""
    n = len(x)
    return np.array([sum(x[t] * cmath.exp(-2j * math.pi * k * t / n) for t in range(n))
                     for k in range(n)])


def dft_matrix_oracle(x):
    """Vectorized direct DFT along the last axis (still O(n^2))."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    k = np.arange(n)
    # reduce k*t mod n in exact integers so the phase stays accurate for large n
    return x @ np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)


def affine_loop(x, w, b, axis):
    bsz, t, c = x.shape
    if axis == "temporal":
        out = np.zeros((bsz, w.shape[1], c))
        for i in range(bsz):
            for o in range(w.shape[1]):
                for ch in range(c):
                    acc = b[o]
                    for s in range(t):
                        acc += x[i, s, ch] * w[s, o]
                    out[i, o, ch] = acc
    else:
        out = np.zeros((bsz, t, w.shape[1]))
        for i in range(bsz):
            for s in range(t):
                for o in range(w.shape[1]):
                    acc = b[o]
                    for ch in range(c):
                        acc += x[i, s, ch] * w[ch, o]
                    out[i, s, o] = acc
    return out


def pool_loop(x, factor):
    bsz, t, c = x.shape
    steps = t // factor
    out = np.zeros((bsz, steps, c))
    for i in range(bsz):
        for s in range(steps):
            for ch in range(c):
                out[i, s, ch] = sum(x[i, s * factor + j, ch] for j in range(factor)) / factor
    return out


def moving_average_loop(series, kernel):
    n = len(series)
    half = kernel // 2
    return np.array([
        sum(series[min(max(j, 0), n - 1)] for j in range(t - half, t + half + 1)) / kernel
        for t in range(n)
    ])


def central_difference(f, params, eps=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. every entry of each array in ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = f()
            p[idx] = orig - eps
            down = f()
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def reference_forward(x, params, *, lookback, horizon, scales, factor=2, decomposition="learnable",
                      autocorrelation=True, fixed_kernel=25, norm="none"):
    """Straight-line evaluation of the whole forecaster from a name -> array dict.

    Uses ``numpy.fft`` and explicit index arithmetic.
    """
    x = np.array(x, dtype=float)
    bsz, _, chans = x.shape
    if norm == "window":
        mu = x.mean(axis=1, keepdims=True)
        sd = np.sqrt(x.var(axis=1, keepdims=True) + 1e-5)
        x = (x - mu) / sd
    per_scale = []
    cur = x
    for k in range(scales):
        if k > 0:
            n = cur.shape[1] // factor
            cur = np.stack([cur[:, j * factor:(j + 1) * factor].mean(axis=1) for j in range(n)], axis=1)
        length = cur.shape[1]
        if decomposition == "learnable":
            fc = params[f"scale{k}.filter.cutoff"]
            st = params[f"scale{k}.filter.steepness"]
            freqs = np.arange(length // 2 + 1) / length
            spec = np.fft.rfft(cur, axis=1)
            low = _sig(-(freqs[:, None] - fc[None, :]) * st[None, :])
            high = _sig((freqs[:, None] - fc[None, :]) * st[None, :])
            trend = np.fft.irfft(spec * low[None], n=length, axis=1)
            season = np.fft.irfft(spec * high[None], n=length, axis=1)
        else:
            trend = np.zeros_like(cur)
            for i in range(bsz):
                for c in range(chans):
                    trend[i, :, c] = moving_average_loop(cur[i, :, c], fixed_kernel)
            season = cur - trend
        fc_out = np.zeros((bsz, horizon, chans))
        for part, comp in (("trend", trend), ("seasonal", season)):
            pre = f"scale{k}.{part}."
            wt, bt = params[pre + "temporal.weight"], params[pre + "temporal.bias"]
            wc, bc = params[pre + "channel.weight"], params[pre + "channel.bias"]
            wp, bp = params[pre + "projection.weight"], params[pre + "projection.bias"]
            xt = np.einsum("bsc,so->boc", comp, wt) + bt[None, :, None]
            if autocorrelation:
                d = np.zeros_like(comp)
                d[:, 1:] = comp[:, 1:] - comp[:, :-1]
                xt = xt * d
            xc = np.einsum("bsc,co->bso", xt, wc) + bc[None, None, :]
            fc_out += np.einsum("bsc,so->boc", xt + xc, wp) + bp[None, :, None]
        per_scale.append(fc_out)
    cat = np.concatenate(per_scale, axis=1)
    out = np.einsum("bsc,so->boc", cat, params["fusion.weight"]) + params["fusion.bias"][None, :, None]
    if norm == "window":
        out = out * sd + mu
    return out


def linear_ar_oracle(train_x, train_y, test_x):
    """Per-channel least-squares map from a lookback window (plus intercept) to the horizon."""
    pred = np.zeros(test_x.shape[:1] + (train_y.shape[1],) + test_x.shape[2:])
    for c in range(train_x.shape[2]):
        a = np.hstack([train_x[:, :, c], np.ones((len(train_x), 1))])
        w, *_ = np.linalg.lstsq(a, train_y[:, :, c], rcond=None)
        pred[:, :, c] = np.hstack([test_x[:, :, c], np.ones((len(test_x), 1))]) @ w
    return pred


def smape_loop(p, t):
    total = 0.0
    for a, b in zip(np.ravel(p), np.ravel(t)):
        d = abs(a) + abs(b)
        total += 0.0 if d == 0 else abs(a - b) / d
    return 200.0 * total / np.size(p)


def mape_loop(p, t):
    total, n = 0.0, 0
    for a, b in zip(np.ravel(p), np.ravel(t)):
        if abs(b) >= 1e-8:
            total += abs(a - b) / abs(b)
            n += 1
    return 100.0 * total / n


def mase_loop(p, t, insample, period):
    y = list(np.ravel(insample))
    scale = sum(abs(y[i] - y[i - period]) for i in range(period, len(y))) / (len(y) - period)
    err = sum(abs(a - b) for a, b in zip(np.ravel(p), np.ravel(t))) / np.size(p)
    return err / scale
