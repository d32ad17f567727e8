"""End-to-end acceptance criteria, one test (and one PASS/FAIL summary line) each.

Run with ``pytest tests/test_acceptance.py -v``; the summary appears under
"acceptance criteria" at the end of the session.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from lmstsf import autodiff as ad
from lmstsf import metrics as M
from lmstsf.cli import RunConfig, make_sampler, run_ablate, run_train, synth_frame
from lmstsf.decomposition import FilterBank, decompose
from lmstsf.model import LMSAutoTSF, ModelConfig
from lmstsf.numerics import fft, forward_transform
from lmstsf.training import predict_split, train

from oracles import (central_difference, dft_matrix_oracle, linear_ar_oracle, mape_loop,
                     mase_loop, reference_forward, smape_loop)


def finish(record, label, ok, detail, elapsed=None, limit=None):
    if limit is not None:
        detail = f"{detail}; {elapsed:.1f}s (limit {limit}s)"
        ok = ok and elapsed < limit
    record(label, ok, detail)
    assert ok, detail


def test_c1_decomposition_identity(acceptance_line):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        length = (12, 24, 48, 96)[i % 4]
        chans = int(rng.integers(1, 5))
        x = rng.standard_normal((int(rng.integers(1, 4)), length, chans)) * 10 ** rng.uniform(-3, 4)
        bank = FilterBank.create(chans, 0)
        bank.cutoff.value[:] = rng.uniform(0, 0.5, chans)
        bank.steepness.value[:] = 10 ** rng.uniform(-1, 3, chans)
        trend, season = decompose(x, bank)
        err = np.abs(trend.value + season.value - x).max() / max(1.0, np.abs(x).max())
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    finish(acceptance_line, "C1 decomposition identity", worst <= 1e-9,
           f"worst scaled error {worst:.2e} (tol 1e-9)", elapsed, 5)


def test_c2_transform_oracle(acceptance_line):
    rng = np.random.default_rng(202)
    lengths = [1, 2, 3, 7, 96, 97, 128, 360, 509, 512]
    lengths += list(rng.integers(1, 513, 200 - len(lengths)))
    t0 = time.perf_counter()
    worst = 0.0
    for n in lengths:
        x = rng.standard_normal(int(n))
        want = dft_matrix_oracle(x)
        worst = max(worst, np.abs(fft(x) - want).max())
        half = forward_transform(x.reshape(1, -1, 1))
        got = half.re[0, :, 0] + 1j * half.im[0, :, 0]
        worst = max(worst, np.abs(got - want[: n // 2 + 1]).max())
    elapsed = time.perf_counter() - t0
    finish(acceptance_line, "C2 FFT vs direct DFT", worst <= 1e-9,
           f"max abs error {worst:.2e} over {len(lengths)} series (tol 1e-9)", elapsed, 10)


def test_c3_gradient_fidelity(acceptance_line):
    cfg = ModelConfig(lookback=16, horizon=4, channels=3, scales=2, seed=5)
    model = LMSAutoTSF(cfg)
    rng = np.random.default_rng(303)
    for sp in model.scales:
        sp.bank.cutoff.value[:] = rng.uniform(0.05, 0.4, 3)
        sp.bank.steepness.value[:] = rng.uniform(5, 40, 3)
    x = rng.standard_normal((2, 16, 3))
    y = rng.standard_normal((2, 4, 3))
    params = model.parameters()
    t0 = time.perf_counter()
    ad.zero_grads(params)
    ad.backward(ad.mse(model.forward(x), y))
    numeric = central_difference(lambda: float(ad.mse(model.forward(x), y).value),
                                 [p.value for p in params], eps=1e-5)
    bad, total, filt = 0, 0, 0
    for p, g in zip(params, numeric):
        tol = np.maximum(1e-7, 1e-4 * np.abs(g))
        bad += int(np.sum(np.abs(p.grad - g) > tol))
        total += g.size
        if "filter" in p.name:
            filt += g.size
    elapsed = time.perf_counter() - t0
    finish(acceptance_line, "C3 gradient check", bad == 0 and filt == 12,
           f"{total - bad}/{total} coordinates match, {filt} filter coordinates included",
           elapsed, 60)


def random_config(rng):
    scales = int(rng.integers(1, 5))
    factor = int(rng.integers(2, 4)) if scales > 1 else 2
    base = int(rng.integers(2, 6)) if scales > 1 else int(rng.integers(2, 40))
    lookback = base * factor ** (scales - 1)
    while lookback > 200:
        base -= 1
        lookback = max(1, base) * factor ** (scales - 1)
    return ModelConfig(
        lookback=lookback, horizon=int(rng.integers(1, 13)), channels=int(rng.integers(1, 5)),
        scales=scales, factor=factor, seed=int(rng.integers(0, 1 << 30)),
        decomposition=str(rng.choice(["learnable", "fixed"])),
        autocorrelation=bool(rng.integers(0, 2)), fixed_kernel=int(rng.choice([1, 3, 5, 25])),
        norm=str(rng.choice(["none", "window"])),
    )


def test_c4_reference_forward(acceptance_line):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        cfg = random_config(rng)
        model = LMSAutoTSF(cfg)
        for sp in model.scales:
            if sp.bank is not None:
                sp.bank.cutoff.value[:] = rng.uniform(0, 0.5, cfg.channels)
                sp.bank.steepness.value[:] = 10 ** rng.uniform(-1, 3, cfg.channels)
        x = rng.standard_normal((int(rng.integers(1, 4)), cfg.lookback, cfg.channels))
        named = {k: p.value.copy() for k, p in model.named_parameters().items()}
        want = reference_forward(x, named, lookback=cfg.lookback, horizon=cfg.horizon,
                                 scales=cfg.scales, factor=cfg.factor,
                                 decomposition=cfg.decomposition,
                                 autocorrelation=cfg.autocorrelation,
                                 fixed_kernel=cfg.fixed_kernel, norm=cfg.norm)
        worst = max(worst, np.abs(model.predict(x) - want).max())
    elapsed = time.perf_counter() - t0
    finish(acceptance_line, "C4 reference forward", worst <= 1e-10,
           f"max abs difference {worst:.2e} over 50 configs (tol 1e-10)", elapsed, 30)


SYNTH_LEARNING = RunConfig(lookback=96, horizon=24, scales=4, learning_rate=1e-3, epochs=50,
                           patience=5, seed=2024)


@pytest.fixture(scope="module")
def synthetic_run():
    cfg = SYNTH_LEARNING
    frame = synth_frame(cfg)
    sampler = make_sampler(cfg, frame)
    model = LMSAutoTSF(cfg.model_config(frame.channels))
    t0 = time.perf_counter()
    result = train(model, sampler, cfg.epochs, cfg.batch_size, cfg.learning_rate,
                   cfg.weight_decay, cfg.patience, cfg.seed)
    pred, truth, _ = predict_split(model, sampler, "test")
    elapsed = time.perf_counter() - t0
    tx, ty = sampler.windows("train", np.arange(sampler.count("train")))
    ex, _ = sampler.windows("test", np.arange(sampler.count("test")))
    oracle = linear_ar_oracle(tx, ty, ex)
    return {"mse": M.mse(pred, truth), "oracle": M.mse(oracle, truth), "elapsed": elapsed,
            "epochs": len(result.history)}


def test_c5a_synthetic_learning_absolute(acceptance_line, synthetic_run):
    r = synthetic_run
    finish(acceptance_line, "C5a synthetic test MSE <= 0.05", r["mse"] <= 0.05,
           f"test MSE {r['mse']:.3e} after {r['epochs']} epochs", r["elapsed"], 300)


def test_c5b_synthetic_learning_vs_linear_oracle(acceptance_line, synthetic_run):
    r = synthetic_run
    finish(acceptance_line, "C5b synthetic test MSE <= 2x linear AR oracle",
           r["mse"] <= 2 * r["oracle"],
           f"test MSE {r['mse']:.3e} vs oracle {r['oracle']:.3e}", r["elapsed"], 300)


ABLATION = RunConfig(synth_length=1200, synth_noise=0.1, lookback=48, horizon=12, epochs=30,
                     learning_rate=1e-3, ablation_seeds="0,1,2,3,4")


def test_c6_ablation_direction(acceptance_line, tmp_path):
    t0 = time.perf_counter()
    rows = {r["variant"]: r["mse"] for r in run_ablate(ABLATION, tmp_path)}
    elapsed = time.perf_counter() - t0
    fixed, learn, full = rows["fixed"], rows["learnable"], rows["learnable+autocorrelation"]
    ok = learn <= fixed and full <= learn * 1.05
    finish(acceptance_line, "C6 ablation direction", ok,
           f"mean test MSE over 5 seeds: fixed {fixed:.6f}, learnable {learn:.6f}, "
           f"learnable+autocorrelation {full:.6f}; {elapsed:.0f}s")


def test_c7_metrics(acceptance_line):
    rng = np.random.default_rng(707)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        p, t = rng.standard_normal((2, n)) * 10 ** rng.uniform(-2, 3)
        ins = rng.standard_normal(int(rng.integers(4, 40)))
        period = int(rng.integers(1, 4))
        pairs = [
            (M.mse(p, t), float(sum((a - b) ** 2 for a, b in zip(p, t)) / n)),
            (M.mae(p, t), float(sum(abs(a - b) for a, b in zip(p, t)) / n)),
            (M.smape(p, t), smape_loop(p, t)),
            (M.mape(p, t), mape_loop(p, t)),
            (M.mase(p, t, ins, period), mase_loop(p, t, ins, period)),
        ]
        worst = max(worst, max(abs(a - b) / max(1.0, abs(b)) for a, b in pairs))
    y = rng.standard_normal(200).cumsum()
    period = 12
    mase_naive = M.mase(y[:-period], y[period:], y, period)
    hist = rng.standard_normal((5, 24, 1)) + 3
    truth = rng.standard_normal((5, 6, 1)) + 3
    naive2 = M.seasonal_naive(hist, 6)
    owa_self = M.evaluate_forecasts(naive2, truth, hist, y[:, None])["owa"]
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and mase_naive == 1.0 and owa_self == 1.0
    finish(acceptance_line, "C7 metric correctness", ok,
           f"worst relative error {worst:.1e}; MASE(naive) = {mase_naive!r}; "
           f"OWA(naive2) = {owa_self!r}", elapsed, 5)


def test_c8_determinism(acceptance_line, tmp_path):
    cfg = RunConfig(synth_length=600, lookback=48, horizon=12, scales=3, epochs=3,
                    synth_noise=0.1, learning_rate=1e-3)
    run_train(cfg, tmp_path / "a")
    run_train(cfg, tmp_path / "b")

    def log(d):
        lines = (d / "train_log.csv").read_text().splitlines()
        return [line.rsplit(",", 1)[0] for line in lines]

    same_ckpt = (tmp_path / "a/checkpoint.lmsa").read_bytes() == \
        (tmp_path / "b/checkpoint.lmsa").read_bytes()
    same_log = log(tmp_path / "a") == log(tmp_path / "b") and len(log(tmp_path / "a")) == 4
    same_cfg = (tmp_path / "a/resolved_config.txt").read_bytes() == \
        (tmp_path / "b/resolved_config.txt").read_bytes()
    finish(acceptance_line, "C8 determinism", same_ckpt and same_log and same_cfg,
           f"checkpoints identical: {same_ckpt}, logs identical (timing column excluded): "
           f"{same_log}")


def etth1_path():
    env = os.environ.get("LMSTSF_ETTH1")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "ETTh1.csv")
    return next((p for p in candidates if p.is_file()), None)


@pytest.mark.slow
def test_c9_etth1_benchmark(acceptance_line, tmp_path):
    path = etth1_path()
    if path is None:
        acceptance_line("C9 ETTh1 benchmark", None,
                        "dataset absent (set LMSTSF_ETTH1 or add data/ETTh1.csv)")
        pytest.skip("ETTh1.csv not available")
    mses, maes = [], []
    for h in (96, 192, 336, 720):
        cfg = RunConfig(data=str(path), split="ett_hour", lookback=96, horizon=h,
                        batch_size=32, learning_rate=1e-4)
        summary = run_train(cfg, tmp_path / f"h{h}")
        mses.append(summary["test"]["mse"])
        maes.append(summary["test"]["mae"])
    mse, mae = float(np.mean(mses)), float(np.mean(maes))
    ok = abs(mse - 0.441) <= 0.03 and abs(mae - 0.432) <= 0.03
    finish(acceptance_line, "C9 ETTh1 benchmark", ok,
           f"average MSE {mse:.3f} (target 0.441 +/- 0.03), MAE {mae:.3f} (target 0.432 +/- 0.03)")
