"""Training loop, inference and the checkpoint format."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import (NormStats, denormalize_target, featurize, fit_norm_stats,
                       iter_batches, normalize, normalize_target)
from .layers import mse_loss
from .model import Model, ModelConfig
from .optim import Adam, PlateauScheduler

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"RISLOC-MODEL-01\0"
CKPT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 25
    scheduler_factor: float = 0.8
    scheduler_patience: int = 10
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.scheduler_factor < 1:
            raise ValueError("scheduler_factor must lie in (0, 1)")
        if self.scheduler_patience < 1 or self.batch < 1 or self.epochs < 1:
            raise ValueError("batch, epochs and scheduler_patience must be >= 1")


@dataclass
class ModelBundle:
    model: Model
    stats: NormStats
    T: int
    K: int
    meta: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @property
    def config(self) -> ModelConfig:
        return self.model.cfg


def _grad_norm(model: Model) -> float:
    return float(np.sqrt(sum(float(np.sum(g.astype(float) ** 2)) for _, _, g in model.gradients())))


def evaluate_mse(model: Model, x, t, batch: int = 256) -> float:
    total = 0.0
    for s in range(0, len(x), batch):
        pred = model.forward(x[s:s + batch], train=False)
        total += float(np.sum((pred - t[s:s + batch]) ** 2))
    return total / (len(x) * t.shape[1])


def train(model: Model, dataset, cfg: TrainConfig = TrainConfig(), stats: NormStats | None = None,
          progress=None) -> ModelBundle:
    """Fit ``model`` on the training split, validating every epoch.

    The returned bundle holds the parameters from the epoch with the lowest
    validation MSE; ``history`` rows are (epoch, train_mse, val_mse, lr)
    where lr is the rate used during that epoch.
    """
    f_tr, t_tr = dataset.split("train")
    f_va, t_va = dataset.split("val")
    if stats is None:
        stats = fit_norm_stats(f_tr, t_tr)
    dt = model.dtype
    x_tr = normalize(f_tr, stats).astype(dt)
    y_tr = normalize_target(t_tr, stats).astype(dt)
    x_va = normalize(f_va, stats).astype(dt)
    y_va = normalize_target(t_va, stats).astype(dt)

    params = [p for _, _, p in model.parameters()]
    opt = Adam(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    sched = PlateauScheduler(opt, cfg.scheduler_factor, cfg.scheduler_patience)
    rng = np.random.default_rng(cfg.seed)
    model.dropout.rng = np.random.default_rng(cfg.seed + 1)

    history = []
    best_val, best_state, best_epoch = np.inf, model.get_state(), 0
    for epoch in range(1, cfg.epochs + 1):
        lr_used = opt.lr
        sq, count = 0.0, 0
        for b, idx in enumerate(iter_batches(np.arange(len(x_tr)), cfg.batch, rng)):
            model.zero_grad()
            pred = model.forward(x_tr[idx], train=True)
            loss, dpred = mse_loss(pred, y_tr[idx])
            if not np.isfinite(loss):
                model.backward(dpred)
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}, "
                                    f"grad norm {_grad_norm(model):.3e}")
            model.backward(dpred)
            opt.step([g for _, _, g in model.gradients()])
            sq += loss * len(idx)
            count += len(idx)
        train_mse = sq / count
        val_mse = evaluate_mse(model, x_va, y_va)
        if not np.isfinite(val_mse):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}, "
                                f"grad norm {_grad_norm(model):.3e}")
        if val_mse < best_val:
            best_val, best_state, best_epoch = val_mse, model.get_state(), epoch
        sched.step(val_mse)
        history.append((epoch, train_mse, val_mse, lr_used))
        logger.info("epoch %d train %.5f val %.5f lr %.2e", epoch, train_mse, val_mse, lr_used)
        if progress is not None:
            progress(epoch, train_mse, val_mse, lr_used)

    model.set_state(best_state)
    meta = {"epochs_run": cfg.epochs, "best_epoch": best_epoch, "best_val_mse": best_val,
            "train_config": asdict(cfg), "dataset_seed": getattr(dataset, "seed", None),
            "scene_hash": getattr(dataset, "scene_hash", None)}
    return ModelBundle(model=model, stats=stats, T=dataset.T, K=dataset.K, meta=meta,
                       history=history)


def predict(bundle: ModelBundle, y, beta, with_latency: bool = False):
    """Planar position (meters) from one measurement; optionally also the
    wall-clock latency in seconds."""
    t0 = time.perf_counter()
    y = np.asarray(y)
    beta = np.asarray(beta)
    if len(y) != bundle.T or beta.shape != (bundle.T, bundle.K):
        raise ValueError(f"bundle expects T={bundle.T}, K={bundle.K}; got y {y.shape}, beta {beta.shape}")
    x = normalize(featurize(y, beta), bundle.stats)
    out = bundle.model.forward(x, train=False)[0].astype(float)
    p = denormalize_target(out, bundle.stats)
    if with_latency:
        return p, time.perf_counter() - t0
    return p


def predict_features(bundle: ModelBundle, features, batch: int = 512) -> np.ndarray:
    """Batched prediction from raw (unnormalized) feature tensors."""
    f = np.asarray(features)
    out = []
    for s in range(0, len(f), batch):
        x = normalize(f[s:s + batch], bundle.stats)
        out.append(bundle.model.forward(x, train=False).astype(float))
    return denormalize_target(np.concatenate(out), bundle.stats)


def write_history_csv(history, path):
    with open(path, "w") as fh:
        fh.write("epoch,train_mse,val_mse,lr\n")
        for epoch, tr, va, lr in history:
            fh.write(f"{epoch},{tr:.10g},{va:.10g},{lr:.10g}\n")


def _stats_block(stats: NormStats) -> bytes:
    n = stats.feature_mean.size
    buf = io.BytesIO()
    buf.write(struct.pack("<I", n))
    for arr in (stats.feature_mean, stats.feature_std, stats.target_mean, stats.target_std):
        buf.write(np.asarray(arr, dtype="<f8").tobytes())
    buf.write(np.asarray(stats.floored, dtype=np.uint8).tobytes())
    return buf.getvalue()


def _read_stats(blob: bytes) -> NormStats:
    (n,) = struct.unpack_from("<I", blob)
    off = 4
    arrs = []
    for size in (n, n, 2, 2):
        arrs.append(np.frombuffer(blob, dtype="<f8", count=size, offset=off).astype(float))
        off += 8 * size
    floored = np.frombuffer(blob, dtype=np.uint8, count=n, offset=off).astype(bool)
    return NormStats(*arrs, floored=floored)


def save_bundle(bundle: ModelBundle, path):
    """Header | config JSON | NormStats block | float32 parameters | sha256.

    Every block after the fixed header is prefixed by its u64 byte length.
    """
    header_json = json.dumps({"model": bundle.config.to_dict(), "T": bundle.T, "K": bundle.K,
                              "meta": bundle.meta}, sort_keys=True, default=float).encode()
    stats = _stats_block(bundle.stats)
    params = bundle.model.flat_params().astype("<f4").tobytes()
    body = io.BytesIO()
    body.write(CKPT_MAGIC)
    body.write(struct.pack("<I", CKPT_VERSION))
    for block in (header_json, stats, params):
        body.write(struct.pack("<Q", len(block)))
        body.write(block)
    data = body.getvalue()
    with open(path, "wb") as fh:
        fh.write(data)
        fh.write(hashlib.sha256(data).digest())


def load_bundle(path, dtype=np.float32) -> ModelBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 52 or data[:16] != CKPT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint content hash mismatch")
    (version,) = struct.unpack_from("<I", body, 16)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 20
    blocks = []
    for _ in range(3):
        (size,) = struct.unpack_from("<Q", body, off)
        off += 8
        blocks.append(body[off:off + size])
        off += size
    head = json.loads(blocks[0])
    cfg = ModelConfig.from_dict(head["model"])
    model = Model(cfg, seed=None, dtype=dtype)
    model.set_flat_params(np.frombuffer(blocks[2], dtype="<f4"))
    return ModelBundle(model=model, stats=_read_stats(blocks[1]), T=head["T"], K=head["K"],
                       meta=head["meta"])
