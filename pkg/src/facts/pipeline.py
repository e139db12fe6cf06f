"""Training and evaluation of the forecasting model."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ForecastConfig
from .data import NormStats, load_csv, normalize, split_bounds, windowed_splits
from .errors import CompatibilityError, ConfigError, NonFiniteError, TrainingDiverged
from .model import ForecastModel
from .optim import Adam

logger = logging.getLogger(__name__)

SPLIT_NOTE = (
    "generic chronological split (train/val/test fractions from data.split); "
    "windows never cross split boundaries; this differs from the month-based ETT split"
)


@dataclass
class Dataset:
    names: list
    stats: NormStats
    train: object
    val: object
    test: object


def prepare_data(cfg: ForecastConfig) -> Dataset:
    """Load, z-score with train-split statistics, split and window."""
    values, names = load_csv(cfg.data_path)
    bounds = split_bounds(len(values), cfg.split)
    scaled, stats = normalize(values, "trainsplit", train_rows=bounds[0][1])
    train, val, test = windowed_splits(scaled, cfg.lookback, cfg.horizon, cfg.split)
    return Dataset(names, stats, train, val, test)


def predict(model: ForecastModel, inputs: np.ndarray, batch: int = 256, feature_perm=None, return_latents=False):
    preds, latents = [], []
    with ad.no_record():
        for lo in range(0, len(inputs), batch):
            out = model(inputs[lo : lo + batch], feature_perm=feature_perm, return_latents=return_latents)
            if return_latents:
                preds.append(out[0].data)
                latents.append(out[1].data)
            else:
                preds.append(out.data)
    if return_latents:
        return np.concatenate(preds), np.concatenate(latents)
    return np.concatenate(preds)


def mse_mae(pred: np.ndarray, target: np.ndarray) -> dict:
    err = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return {"mse": float(np.mean(err**2)), "mae": float(np.mean(np.abs(err)))}


def repeat_last(inputs: np.ndarray, horizon: int) -> np.ndarray:
    return np.repeat(inputs[:, -1:, :], horizon, axis=1)


@dataclass
class TrainResult:
    model: ForecastModel
    report: dict
    history: dict = field(default_factory=dict)


def train(cfg: ForecastConfig, ckpt_path=None, data: Dataset | None = None) -> TrainResult:
    """Fit a model on the train split, keep the best validation state, report test metrics."""
    start = time.perf_counter()
    data = data or prepare_data(cfg)
    m = data.train.inputs.shape[-1]
    model = ForecastModel.from_config(cfg, m)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    best_state = model.state_dict()
    best_val = _val_mse(model, data)
    history = {"step_loss": [], "epoch_val_mse": [best_val], "epoch_end_step": [0]}
    steps = 0
    n = len(data.train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch):
            if cfg.max_steps and steps >= cfg.max_steps:
                break
            idx = order[lo : lo + cfg.batch]
            xb, yb = data.train.inputs[idx], data.train.targets[idx]
            try:
                # overflow is caught by the tape's finiteness check, not numpy warnings
                with ad.Tape() as tape, np.errstate(over="ignore", invalid="ignore"):
                    pred = model(xb)
                    loss = ad.mean(ad.square(pred - yb))
                with np.errstate(over="ignore", invalid="ignore"):
                    grads = tape.backward(loss, params)
                for g in grads:
                    if not np.isfinite(g).all():
                        raise NonFiniteError("gradient contains NaN/Inf")
            except NonFiniteError as exc:
                path = _save_last_good(ckpt_path, best_state)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {steps}: {exc}; last good checkpoint: {path}", path
                ) from exc
            opt.step(grads)
            history["step_loss"].append(float(loss.data))
            steps += 1
        val = _val_mse(model, data)
        history["epoch_val_mse"].append(val)
        history["epoch_end_step"].append(steps)
        logger.info("epoch %d  train_loss %.5f  val_mse %.5f", epoch, history["step_loss"][-1] if steps else float("nan"), val)
        if val < best_val:
            best_val, best_state = val, model.state_dict()
        if cfg.max_steps and steps >= cfg.max_steps:
            break

    model.load_state_dict(best_state)
    if ckpt_path is not None:
        save_checkpoint(ckpt_path, best_state)
    report = evaluate_model(model, cfg, data)
    report["train"] = {"steps": steps, "best_val_mse": best_val}
    report["wall_time_s"] = time.perf_counter() - start
    return TrainResult(model, report, history)


def _val_mse(model, data) -> float:
    if len(data.val) == 0:
        return float("inf")
    return mse_mae(predict(model, data.val.inputs), data.val.targets)["mse"]


def _save_last_good(ckpt_path, state):
    if ckpt_path is None:
        return None
    path = Path(ckpt_path)
    path = path.with_name(path.name + ".lastgood")
    save_checkpoint(path, state)
    return str(path)


def load_model(ckpt_path, cfg: ForecastConfig, n_vars: int) -> ForecastModel:
    model = ForecastModel.from_config(cfg, n_vars)
    state = load_checkpoint(ckpt_path)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CompatibilityError(f"{ckpt_path} does not fit the configured model: {exc}") from None
    return model


def evaluate_model(
    model: ForecastModel,
    cfg: ForecastConfig,
    data: Dataset,
    permute_seeds: Sequence[int] | None = None,
    raw_scale: bool = False,
    permutations: Sequence[Sequence[int]] | None = None,
) -> dict:
    """Test-split metrics, optionally under test-time variate permutations.

    Each seed in ``permute_seeds`` draws one permutation of the variates;
    ``permutations`` supplies them explicitly instead.
    """
    start = time.perf_counter()
    test = data.test
    pred, z = predict(model, test.inputs, return_latents=True)
    target = test.targets
    baseline = repeat_last(test.inputs, cfg.horizon)
    if raw_scale:
        pred_m, target_m = _raw(pred, data.stats), _raw(target, data.stats)
        baseline = _raw(baseline, data.stats)
    else:
        pred_m, target_m = pred, target
    metrics = mse_mae(pred_m, target_m)
    report = {
        "scale": "raw" if raw_scale else "normalized",
        "split_convention": SPLIT_NOTE,
        "horizon": cfg.horizon,
        "test_windows": len(test),
        "metrics": metrics,
        "per_horizon": {str(cfg.horizon): metrics},
        "baseline_repeat_last": mse_mae(baseline, target_m),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    m = test.inputs.shape[-1]
    labelled = [(int(s), np.random.default_rng(s).permutation(m)) for s in permute_seeds or ()]
    labelled += [(None, np.asarray(p)) for p in permutations or ()]
    if labelled:
        runs = []
        for seed, perm in labelled:
            if sorted(perm.tolist()) != list(range(m)):
                raise ConfigError(f"{perm.tolist()} is not a permutation of {m} variates")
            p_pred, p_z = predict(model, test.inputs, feature_perm=perm, return_latents=True)
            p_m = _raw(p_pred, data.stats) if raw_scale else p_pred
            run = {"seed": seed, "permutation": perm.tolist(), **mse_mae(p_m, target_m)}
            run["latent_max_rel_change"] = max_rel_change(p_z, z)
            run["pred_max_rel_change"] = max_rel_change(p_pred, pred)
            runs.append(run)
        mse_mean, mse_std = aggregate([r["mse"] for r in runs])
        mae_mean, mae_std = aggregate([r["mae"] for r in runs])
        report["permutation"] = {
            "runs": runs,
            "mse_mean": mse_mean,
            "mse_std": mse_std,
            "mae_mean": mae_mean,
            "mae_std": mae_std,
            "band": "mean +/- 2 std",
        }
    report["wall_time_s"] = time.perf_counter() - start
    return report


def evaluate(ckpt_path, cfg: ForecastConfig, permute_seeds: Sequence[int] | None = None, raw_scale: bool = False) -> dict:
    data = prepare_data(cfg)
    model = load_model(ckpt_path, cfg, data.test.inputs.shape[-1])
    return evaluate_model(model, cfg, data, permute_seeds=permute_seeds, raw_scale=raw_scale)


def _raw(x, stats: NormStats):
    return x * stats.std + stats.mean


def max_rel_change(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.abs(b).max()), 1e-30)
    return float(np.abs(a - b).max() / scale)


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def check_no_leakage(cfg: ForecastConfig, n_rows: int) -> None:
    """Raise if any test input row could precede a train target row."""
    (tr_lo, tr_hi), _, (te_lo, te_hi) = split_bounds(n_rows, cfg.split)
    last_train_target = tr_hi - 1
    first_test_input = te_lo
    if first_test_input <= last_train_target:
        raise AssertionError(f"test inputs start at row {first_test_input}, train targets end at {last_train_target}")
