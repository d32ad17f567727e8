"""Mini-batch training with early stopping, and batched evaluation."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import WindowSampler
from .model import LMSAutoTSF

log = logging.getLogger(__name__)

EVAL_BATCH = 256


class TrainingAborted(RuntimeError):
    """Non-finite loss during training."""


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float
    seconds: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = float("inf")


def predict_split(model: LMSAutoTSF, sampler: WindowSampler, split: str,
                  batch_size: int = EVAL_BATCH) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predictions, targets and inputs for every window of ``split``, in order."""
    preds, truths, inputs = [], [], []
    for x, y in sampler.batches(split, batch_size):
        preds.append(model.predict(x))
        truths.append(y)
        inputs.append(x)
    return np.concatenate(preds), np.concatenate(truths), np.concatenate(inputs)


def split_mse(model: LMSAutoTSF, sampler: WindowSampler, split: str) -> float:
    pred, truth, _ = predict_split(model, sampler, split)
    return float(np.mean((pred - truth) ** 2))


def _epoch_batches(sampler: WindowSampler, batch_size: int, rng: np.random.Generator,
                   pool: ThreadPoolExecutor | None):
    if pool is None:
        yield from sampler.batches("train", batch_size, rng)
        return
    # the order is drawn up front, so threads only change when windows get gathered
    order = rng.permutation(sampler.count("train"))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    yield from pool.map(lambda idx: sampler.windows("train", idx), chunks)


def train(model: LMSAutoTSF, sampler: WindowSampler, epochs: int, batch_size: int = 32,
          lr: float = 1e-4, weight_decay: float = 0.0, patience: int = 3, seed: int = 0,
          on_epoch=None, workers: int = 0) -> TrainResult:
    """Adam on MSE with per-epoch shuffling; restores the best-validation weights.

    ``on_epoch(record)`` is called after every epoch. ``workers > 0`` gathers
    batches on background threads; results are identical either way.
    """
    pool = ThreadPoolExecutor(workers) if workers > 0 else None
    try:
        return _train(model, sampler, epochs, batch_size, lr, weight_decay, patience, seed,
                      on_epoch, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def _train(model, sampler, epochs, batch_size, lr, weight_decay, patience, seed, on_epoch, pool):
    params = model.parameters()
    opt = ad.Adam(params, lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng([seed, 7])
    result = TrainResult()
    best = [p.value.copy() for p in params]
    stale = 0
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for b, (x, y) in enumerate(_epoch_batches(sampler, batch_size, rng, pool)):
            opt.zero_grad()
            # overflow shows up as a non-finite loss, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                loss = ad.mse(model.forward(x), y)
                try:
                    ad.backward(loss)
                except ad.NonFiniteError as exc:
                    raise TrainingAborted(f"epoch {epoch}, batch {b}: {exc}") from None
            opt.step()
            model.clamp()
            losses.append(float(loss.value))
        val = split_mse(model, sampler, "val")
        rec = EpochRecord(epoch, float(np.mean(losses)), val, time.perf_counter() - t0)
        result.history.append(rec)
        log.info("epoch %d train %.6f val %.6f (%.1fs)", epoch, rec.train_loss, val, rec.seconds)
        if on_epoch is not None:
            on_epoch(rec)
        if val < result.best_val_mse:
            result.best_val_mse, result.best_epoch = val, epoch
            best = [p.value.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    for p, v in zip(params, best):
        p.value[...] = v
    return result
