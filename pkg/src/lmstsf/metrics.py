"""Point-forecast error metrics and report serialization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METRIC_NAMES = ("mse", "mae", "smape", "mape", "mase", "owa")


class MetricError(ValueError):
    pass


def _pair(pred, truth):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise MetricError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    return p, t


def mse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def mae(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def smape(pred, truth) -> float:
    """Symmetric MAPE on the 0-200 scale; entries with ``|p| + |t| = 0`` count as 0."""
    p, t = _pair(pred, truth)
    denom = np.abs(p) + np.abs(t)
    safe = np.where(denom == 0, 1.0, denom)
    terms = np.where(denom == 0, 0.0, np.abs(p - t) / safe)
    return float(200.0 * terms.mean())


def mape(pred, truth) -> float:
    """MAPE on the 0-100 scale over entries with ``|truth| >= 1e-8``."""
    p, t = _pair(pred, truth)
    keep = np.abs(t) >= 1e-8
    if not keep.any():
        raise MetricError("MAPE metric undefined: every truth value is zero")
    return float(100.0 * np.mean(np.abs(p[keep] - t[keep]) / np.abs(t[keep])))


def naive_scale(insample, period: int = 1) -> float:
    """Mean absolute error of the seasonal-naive forecast inside ``insample``."""
    y = np.asarray(insample, dtype=np.float64).ravel()
    if period < 1 or y.size <= period:
        raise MetricError(f"in-sample length {y.size} must exceed period {period}")
    return float(np.mean(np.abs(y[period:] - y[:-period])))


def mase(pred, truth, insample, period: int = 1) -> float:
    p, t = _pair(pred, truth)
    scale = naive_scale(insample, period)
    if scale == 0:
        raise MetricError("MASE scale degenerate: in-sample seasonal-naive error is zero")
    return float(np.mean(np.abs(p - t)) / scale)


def owa(smape_val: float, mase_val: float, naive2_smape: float, naive2_mase: float) -> float:
    if naive2_smape <= 0 or naive2_mase <= 0:
        raise MetricError("OWA reference values must be positive")
    return 0.5 * (smape_val / naive2_smape + mase_val / naive2_mase)


def seasonal_naive(history: np.ndarray, horizon: int, period: int = 1) -> np.ndarray:
    """Repeat the last ``period`` steps of ``history`` (B, L, C) over ``horizon``."""
    last = history[:, -period:]
    reps = -(-horizon // period)
    return np.tile(last, (1, reps, 1))[:, :horizon]


def evaluate_forecasts(pred: np.ndarray, truth: np.ndarray, history: np.ndarray,
                       insample: np.ndarray, period: int = 1) -> dict[str, float | None]:
    """All metrics for windowed forecasts ``(W, H, C)``.

    MASE is scaled per channel by the seasonal-naive error of ``insample``
    (T, C) and averaged over channels. OWA compares against the
    seasonal-naive forecast built from ``history`` (W, L, C).
    """
    out: dict[str, float | None] = {"mse": mse(pred, truth), "mae": mae(pred, truth),
                                    "smape": smape(pred, truth)}
    try:
        out["mape"] = mape(pred, truth)
    except MetricError:
        out["mape"] = None

    def channel_mase(p):
        vals = [mase(p[..., c], truth[..., c], insample[:, c], period)
                for c in range(truth.shape[-1])]
        return float(np.mean(vals))

    try:
        out["mase"] = channel_mase(pred)
    except MetricError:
        out["mase"] = None
    naive = seasonal_naive(history, truth.shape[1], period)
    try:
        out["owa"] = owa(out["smape"], out["mase"], smape(naive, truth), channel_mase(naive))
    except (MetricError, TypeError):
        out["owa"] = None
    return out


@dataclass
class MetricsReport:
    """Per-horizon metric rows plus their horizon mean.

    Each row's values pool every window of that horizon; ``average`` is the
    mean over horizons (the table-style number) and ``pooled`` weights each
    horizon by its entry count.
    """

    rows: dict[int, dict[str, float | None]]
    windows: dict[int, int]
    extra: dict = field(default_factory=dict)

    @property
    def horizons(self) -> list[int]:
        return sorted(self.rows)

    def average(self) -> dict[str, float | None]:
        out = {}
        for name in METRIC_NAMES:
            vals = [self.rows[h].get(name) for h in self.horizons]
            out[name] = None if any(v is None for v in vals) else float(np.mean(vals))
        return out

    def pooled(self) -> dict[str, float | None]:
        weights = {h: self.windows[h] * h for h in self.horizons}
        total = sum(weights.values())
        out = {}
        for name in ("mse", "mae"):
            out[name] = float(sum(self.rows[h][name] * weights[h] for h in self.horizons) / total)
        return out

    def to_dict(self) -> dict:
        return {
            "horizons": self.horizons,
            "windows": {str(h): self.windows[h] for h in self.horizons},
            "per_horizon": {str(h): self.rows[h] for h in self.horizons},
            "avg": self.average(),
            "pooled": self.pooled(),
            **self.extra,
        }

    def write_json(self, path) -> None:
        def clean(o):
            if isinstance(o, float) and not math.isfinite(o):
                return None
            if isinstance(o, dict):
                return {k: clean(v) for k, v in o.items()}
            if isinstance(o, list):
                return [clean(v) for v in o]
            return o

        Path(path).write_text(json.dumps(clean(self.to_dict()), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["horizon", "windows", *METRIC_NAMES])
            for h in self.horizons:
                w.writerow([h, self.windows[h], *(_cell(self.rows[h].get(m)) for m in METRIC_NAMES)])
            avg = self.average()
            w.writerow(["avg", sum(self.windows.values()), *(_cell(avg[m]) for m in METRIC_NAMES)])


def _cell(v) -> str:
    return "" if v is None else repr(float(v))
