"""Fingerprint datasets: generation, featurization, normalization, splits
and the on-disk format.

Binary layout (little-endian)::

    magic     16 bytes  b"RISLOC-DATASET-1"
    version   u32
    n         u64
    T         u32
    K         u32
    n records of float64:
        features  2T * (K+1), row-major (magnitude rows, then phase rows)
        target    2   (x, y) in meters
        phi0      1
        position  2   truth (x, y)

A JSON sidecar ``<path>.meta.json`` holds the scene config, schedule seed,
split indices, normalization stats and the SHA-256 of the binary file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .channel import simulate_measurements
from .config import SceneConfig, sample_seed, scene_config_from_dict
from .scene import PhaseSchedule, Scene

MAGIC = b"RISLOC-DATASET-1"
VERSION = 1
HEADER = struct.Struct("<16sIQII")
STD_FLOOR = 1e-12
BATCH_SIZE = 32


class DatasetFormatError(ValueError):
    pass


@dataclass
class NormStats:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    floored: np.ndarray  # bool per feature: std hit the floor

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature_mean", "feature_std", "target_mean", "target_std", "floored")}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(*(np.asarray(d[k], dtype=bool if k == "floored" else float) for k in
                     ("feature_mean", "feature_std", "target_mean", "target_std", "floored")))


@dataclass
class Dataset:
    features: np.ndarray  # (n, 2T, K+1)
    targets: np.ndarray  # (n, 2)
    phi0: np.ndarray  # (n,)
    positions: np.ndarray  # (n, 2)
    splits: dict  # name -> index array
    seed: int
    scene_config: SceneConfig
    schedule_seed: int
    scene_hash: str

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def T(self) -> int:
        return self.features.shape[1] // 2

    @property
    def K(self) -> int:
        return self.features.shape[2] - 1

    def split(self, name: str):
        idx = self.splits[name]
        return self.features[idx], self.targets[idx]

    def measurement(self, i: int):
        """Rebuild (y, beta) of sample ``i`` from its features."""
        return unfeaturize(self.features[i])


def featurize(y, beta) -> np.ndarray:
    """Stack magnitudes over phases: rows [|y| |beta|] then [arg y arg beta].

    Phases lie in (-pi, pi]; the phase of an exact zero is 0.
    """
    y = np.asarray(y, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    if y.ndim != 1 or beta.ndim != 2 or beta.shape[0] != len(y):
        raise ValueError(f"shape mismatch: y {y.shape}, beta {beta.shape}")
    z = np.column_stack([y, beta])
    phase = np.angle(z)
    phase = np.where(phase == -np.pi, np.pi, phase)
    return np.vstack([np.abs(z), phase])


def unfeaturize(features):
    f = np.asarray(features, dtype=float)
    T = f.shape[0] // 2
    z = f[:T] * np.exp(1j * f[T:])
    return z[:, 0], z[:, 1:]


def split_indices(n: int, seed: int) -> dict:
    """Shuffle then cut 80/10/10."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(0.8 * n))
    n_val = int(round(0.1 * n))
    return {"train": np.sort(perm[:n_train]),
            "val": np.sort(perm[n_train:n_train + n_val]),
            "test": np.sort(perm[n_train + n_val:])}


def draw_sample(scene: Scene, schedule: PhaseSchedule, rng):
    """Uniform position in the UE region and uniform phi0 in [0, 2*pi)."""
    (x0, x1), (y0, y1) = scene.config.ue_region
    p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
    phi0 = rng.uniform(0.0, 2 * np.pi)
    meas, beta = simulate_measurements(scene, schedule, p, phi0, rng)
    return meas, beta


def generate_dataset(scene: Scene, schedule: PhaseSchedule, n: int, seed: int = 0) -> Dataset:
    if n < 10:
        raise ValueError("need at least 10 samples")
    T, K = schedule.T, scene.K
    feats = np.empty((n, 2 * T, K + 1))
    pos = np.empty((n, 2))
    phi0 = np.empty(n)
    for i in range(n):
        rng = np.random.default_rng(sample_seed(seed, i))
        meas, beta = draw_sample(scene, schedule, rng)
        feats[i] = featurize(meas.y, beta)
        pos[i] = meas.truth_position
        phi0[i] = meas.truth_phi0
    return Dataset(features=feats, targets=pos.copy(), phi0=phi0, positions=pos,
                   splits=split_indices(n, seed), seed=seed, scene_config=scene.config,
                   schedule_seed=schedule.seed, scene_hash=scene.config.fingerprint())


def fit_norm_stats(features, targets) -> NormStats:
    """Per-feature mean/std from the training split only."""
    f = np.asarray(features, dtype=float).reshape(len(features), -1)
    t = np.asarray(targets, dtype=float)
    fstd = f.std(axis=0)
    floored = fstd < STD_FLOOR
    return NormStats(feature_mean=f.mean(axis=0), feature_std=np.maximum(fstd, STD_FLOOR),
                     target_mean=t.mean(axis=0), target_std=np.maximum(t.std(axis=0), STD_FLOOR),
                     floored=floored)


def normalize(features, stats: NormStats) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    flat = f.reshape(-1, stats.feature_mean.size) if f.ndim > 1 else f.reshape(1, -1)
    out = (flat - stats.feature_mean) / stats.feature_std
    # floored columns are constant in training; pin them to 0
    out[:, stats.floored] = 0.0
    return out


def normalize_target(t, stats: NormStats) -> np.ndarray:
    return (np.asarray(t, dtype=float) - stats.target_mean) / stats.target_std


def denormalize_target(t, stats: NormStats) -> np.ndarray:
    return np.asarray(t, dtype=float) * stats.target_std + stats.target_mean


def iter_batches(indices, batch_size: int = BATCH_SIZE, rng=None):
    """Yield index batches covering ``indices`` once; shuffled when ``rng``
    is given. The last batch may be short."""
    idx = np.asarray(indices)
    if rng is not None:
        idx = idx[rng.permutation(len(idx))]
    for start in range(0, len(idx), batch_size):
        yield idx[start:start + batch_size]


def record_size(T: int, K: int) -> int:
    return 8 * (2 * T * (K + 1) + 5)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_dataset(ds: Dataset, path, stats: NormStats | None = None):
    path = os.fspath(path)
    n, T, K = ds.n, ds.T, ds.K
    rec = np.concatenate([ds.features.reshape(n, -1), ds.targets, ds.phi0[:, None], ds.positions], axis=1)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, T, K))
        fh.write(np.ascontiguousarray(rec, dtype="<f8").tobytes())
    if stats is None:
        stats = fit_norm_stats(*ds.split("train"))
    meta = {
        "format": MAGIC.decode(), "version": VERSION, "n": n, "T": T, "K": K,
        "seed": ds.seed, "schedule_seed": ds.schedule_seed, "scene_hash": ds.scene_hash,
        "scene_config": ds.scene_config.to_dict(),
        "splits": {k: v.tolist() for k, v in ds.splits.items()},
        "split_sizes": {k: len(v) for k, v in ds.splits.items()},
        "norm_stats": stats.to_dict(),
        "sha256": _sha256(path),
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True)
    return meta


def load_dataset(path, verify_hash: bool = True) -> Dataset:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise DatasetFormatError("file shorter than the header")
        magic, version, n, T, K = HEADER.unpack(head)
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        body = fh.read()
    expected = n * record_size(T, K)
    if len(body) != expected:
        raise DatasetFormatError(f"truncated or oversized body: {len(body)} bytes, expected {expected}")
    rec = np.frombuffer(body, dtype="<f8").reshape(n, -1).astype(float)
    nf = 2 * T * (K + 1)
    try:
        with open(path + ".meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DatasetFormatError(f"missing sidecar {path}.meta.json") from None
    if verify_hash and meta.get("sha256") != _sha256(path):
        raise DatasetFormatError("content hash mismatch between file and sidecar")
    return Dataset(
        features=rec[:, :nf].reshape(n, 2 * T, K + 1), targets=rec[:, nf:nf + 2].copy(),
        phi0=rec[:, nf + 2].copy(), positions=rec[:, nf + 3:nf + 5].copy(),
        splits={k: np.asarray(v, dtype=int) for k, v in meta["splits"].items()},
        seed=meta["seed"], scene_config=scene_config_from_dict(meta["scene_config"]),
        schedule_seed=meta["schedule_seed"], scene_hash=meta["scene_hash"])


def load_norm_stats(path) -> NormStats:
    with open(os.fspath(path) + ".meta.json") as fh:
        return NormStats.from_dict(json.load(fh)["norm_stats"])
