"""Multi-scale forecaster: pooling pyramid, per-scale decomposition, dual encoders, fusion."""
from __future__ import annotations

import dataclasses
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor
from .decomposition import FilterBank, decompose, fixed_decompose
from .encoder import ACTIVATIONS, EncoderParams, encode
from .numerics import TEMPORAL

DECOMPOSITIONS = ("learnable", "fixed")
NORMS = ("none", "window")

CHECKPOINT_MAGIC = b"LMSA"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 96
    horizon: int = 24
    channels: int = 1
    scales: int = 4
    factor: int = 2
    decomposition: str = "learnable"
    autocorrelation: bool = True
    fixed_kernel: int = 25
    seed: int = 2024
    norm: str = "window"
    activation: str = "none"
    init_cutoff: float = 0.1
    init_steepness: float = 10.0

    def __post_init__(self):
        for name in ("lookback", "horizon", "channels", "scales", "factor"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.decomposition not in DECOMPOSITIONS:
            raise ConfigError(f"decomposition must be one of {DECOMPOSITIONS}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.fixed_kernel < 1 or self.fixed_kernel % 2 == 0:
            raise ConfigError(f"fixed_kernel must be odd, got {self.fixed_kernel}")
        if self.lookback % self.factor ** (self.scales - 1):
            raise ConfigError(
                f"lookback {self.lookback} not divisible by "
                f"{self.factor}^{self.scales - 1} = {self.factor ** (self.scales - 1)}"
            )

    @property
    def scale_lengths(self) -> list[int]:
        return [self.lookback // self.factor ** k for k in range(self.scales)]

    def to_text(self) -> str:
        """Canonical ``key = value`` lines, keys sorted."""
        items = dataclasses.asdict(self)
        return "".join(f"{k} = {format_value(items[k])}\n" for k in sorted(items))

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls(**parse_fields(cls, parse_kv(text)))


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_value(kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return raw


def parse_fields(cls, raw: dict[str, str]) -> dict:
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {k: parse_value(fields[k], v) for k, v in raw.items()}


@dataclass
class ScaleParams:
    trend: EncoderParams
    seasonal: EncoderParams
    bank: FilterBank | None


class LMSAutoTSF:
    """The full forecaster. ``forward`` maps ``(B, L, C)`` to ``(B, H, C)``."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.scales: list[ScaleParams] = []
        for k, length in enumerate(config.scale_lengths):
            prefix = f"scale{k}."
            bank = None
            if config.decomposition == "learnable":
                bank = FilterBank.create(config.channels, k, config.init_cutoff,
                                         config.init_steepness, prefix)
            encs = [
                EncoderParams.init(length, config.channels, config.horizon, rng,
                                   f"{prefix}{part}.", config.autocorrelation,
                                   config.activation)
                for part in ("trend", "seasonal")
            ]
            self.scales.append(ScaleParams(encs[0], encs[1], bank))
        kh = config.scales * config.horizon
        bound = 1.0 / math.sqrt(kh)
        self.fusion_w = Param(rng.uniform(-bound, bound, (kh, config.horizon)), "fusion.weight")
        self.fusion_b = Param(rng.uniform(-bound, bound, config.horizon), "fusion.bias")

    def parameters(self) -> list[Param]:
        out = []
        for sp in self.scales:
            if sp.bank is not None:
                out += sp.bank.params()
            out += sp.trend.params() + sp.seasonal.params()
        return out + [self.fusion_w, self.fusion_b]

    def named_parameters(self) -> dict[str, Param]:
        return {p.name: p for p in self.parameters()}

    def clamp(self) -> None:
        for sp in self.scales:
            if sp.bank is not None:
                sp.bank.clamp()

    def forward(self, x, trace: list | None = None) -> Tensor:
        """Differentiable forecast. ``trace`` collects per-scale intermediates if given."""
        cfg = self.config
        x = ad.tensor(x)
        if x.value.ndim != 3 or x.shape[1:] != (cfg.lookback, cfg.channels):
            raise ValueError(
                f"model expects (B, {cfg.lookback}, {cfg.channels}), got {tuple(x.shape)}"
            )
        if cfg.norm == "window":
            mu = x.value.mean(axis=1, keepdims=True)
            sd = np.sqrt(x.value.var(axis=1, keepdims=True) + 1e-5)
            x = ad.Tensor((x.value - mu) / sd)
        forecasts = []
        xk = x
        for k, sp in enumerate(self.scales):
            if k > 0:
                xk = ad.avg_pool(xk, cfg.factor)
            if sp.bank is not None:
                trend, seasonal = decompose(xk, sp.bank)
            else:
                trend, seasonal = fixed_decompose(xk, cfg.fixed_kernel)
            t_hat = encode(trend, sp.trend)
            s_hat = encode(seasonal, sp.seasonal)
            forecasts.append(ad.add(t_hat, s_hat))
            if trace is not None:
                trace.append({"input": xk, "trend": trend, "seasonal": seasonal,
                              "trend_hat": t_hat, "seasonal_hat": s_hat})
        out = ad.affine(ad.concat(forecasts, axis=1), self.fusion_w, self.fusion_b, TEMPORAL)
        if cfg.norm == "window":
            out = ad.add(ad.mul(out, sd), mu)
        return out

    def predict(self, x) -> np.ndarray:
        return self.forward(np.asarray(x, dtype=np.float64)).value

    __call__ = forward


def count_params(config: ModelConfig) -> int:
    """Closed-form trainable scalar count."""
    c, h = config.channels, config.horizon
    total = 0
    for length in config.scale_lengths:
        enc = length * length + length + c * c + c + length * h + h
        total += 2 * enc
        if config.decomposition == "learnable":
            total += 2 * c
    kh = config.scales * h
    return total + kh * h + h


def estimate_flops(config: ModelConfig) -> int:
    """Rough multiply-add count of one forward pass at batch size 1.

    Each multiply-add counts as two operations. This is an estimate from
    layer shapes, not a measurement.
    """
    c, h = config.channels, config.horizon
    ops = 0.0
    for length in config.scale_lengths:
        ops += 5 * length * math.log2(length) * c
        ops += 2 * (length // 2 + 1) * c
        ops += 2 * (length * length * c + c * c * length + length * h * c)
        ops += length * c
    ops += config.scales * h * h * c
    return int(round(2 * ops))


# ---------------------------------------------------------------------------
# checkpoint
# ---------------------------------------------------------------------------

def checkpoint_bytes(model: LMSAutoTSF) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    text = model.config.to_text().encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    params = model.parameters()
    buf.write(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        buf.write(struct.pack("<I", len(name)))
        buf.write(name)
        buf.write(struct.pack("<I", p.value.ndim))
        buf.write(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        buf.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: LMSAutoTSF, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint_bytes(data: bytes) -> LMSAutoTSF:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ValueError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise ValueError("not an LMSA checkpoint")
    (version,) = struct.unpack("<H", take(2))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (text_len,) = struct.unpack("<I", take(4))
    config = ModelConfig.from_text(bytes(take(text_len)).decode("utf-8"))
    model = LMSAutoTSF(config)
    params = model.named_parameters()
    (count,) = struct.unpack("<I", take(4))
    if count != len(params):
        raise ValueError(f"checkpoint has {count} params, config implies {len(params)}")
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        values = np.frombuffer(take(8 * int(np.prod(dims, dtype=np.int64))), dtype="<f8")
        if name not in params or params[name].value.shape != tuple(dims):
            raise ValueError(f"checkpoint param {name!r} {dims} does not fit the config")
        params[name].value[...] = values.reshape(dims)
    if pos != len(view):
        raise ValueError("trailing bytes after checkpoint")
    return model


def load_checkpoint(path) -> LMSAutoTSF:
    return load_checkpoint_bytes(Path(path).read_bytes())
