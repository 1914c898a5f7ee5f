"""Scenario configuration: scene constants, multipath settings and presets.

An empty JSON file (or ``{}``) resolves to the reference room at z = 1 m:
K = 100 tiles of 4x25 cells, T = 32 pilots, 3.5 GHz carrier and a noise
floor of -120.2 dBm.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class MultipathConfig:
    """Direct-link scattering term added to every measurement when enabled.

    ``relative_power`` is the ratio between multipath power and the mean
    power of the RIS-reflected signal of the same sample.
    """

    enabled: bool = False
    relative_power: float = 1.0
    per_pilot: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.relative_power < 0:
            raise ConfigError("multipath relative_power must be >= 0")


@dataclass(frozen=True)
class SceneConfig:
    room_dims: tuple = (10.0, 10.0, 3.0)
    bs_position: tuple = (0.0, 5.0, 1.0)
    mount_height_z: float = 1.0
    tile_pitch_d: float = 0.2
    num_tiles_K: int = 100
    cells_per_tile: tuple = (4, 25)
    # None means half a wavelength along each tile axis.
    cell_pitch: tuple | None = None
    carrier_freq: float = 3.5e9
    pilots_T: int = 32
    noise_power_sigma2: float = dbm_to_watts(-120.2)
    boresight_gain_Gc: float = db_to_linear(5.0)
    radiation_exponent_q: float = 0.57
    ue_region: tuple = ((-4.0, 4.0), (1.0, 10.0))
    z_ue: float = 1.0
    multipath: MultipathConfig = field(default_factory=MultipathConfig)
    phase_levels: int = 4
    schedule_seed: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.num_tiles_K <= 0:
            raise ConfigError("num_tiles_K must be positive")
        if self.tile_pitch_d <= 0:
            raise ConfigError("tile_pitch_d must be positive")
        if min(self.cells_per_tile) < 1:
            raise ConfigError("cells_per_tile components must be >= 1")
        if self.carrier_freq <= 0:
            raise ConfigError("carrier_freq must be positive")
        if self.pilots_T < 1:
            raise ConfigError("pilots_T must be >= 1")
        if self.noise_power_sigma2 < 0:
            raise ConfigError("noise_power_sigma2 must be >= 0")
        if self.radiation_exponent_q <= 0:
            raise ConfigError("radiation_exponent_q must be positive")
        if self.phase_levels < 1:
            raise ConfigError("phase_levels must be >= 1")
        (x0, x1), (y0, y1) = self.ue_region
        w, l, _ = self.room_dims
        if not (x0 < x1 and y0 < y1):
            raise ConfigError("ue_region must be a non-empty rectangle")
        if x0 < -w / 2 or x1 > w / 2 or y0 < 0 or y1 > l:
            raise ConfigError("ue_region must lie inside the room footprint")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def cell_spacing(self) -> tuple:
        if self.cell_pitch is None:
            return (self.wavelength / 2, self.wavelength / 2)
        return tuple(self.cell_pitch)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def scene_config_from_dict(data: dict) -> SceneConfig:
    """Build a SceneConfig from a plain mapping; missing keys take defaults.

    ``mount_height_z`` also moves the BS unless ``bs_position`` is given.
    ``noise_power_dbm`` and ``boresight_gain_dbi`` are accepted as
    alternatives to the linear fields.
    """
    data = copy.deepcopy(dict(data))
    known = {f.name for f in fields(SceneConfig)}
    if "noise_power_dbm" in data:
        data["noise_power_sigma2"] = dbm_to_watts(float(data.pop("noise_power_dbm")))
    if "boresight_gain_dbi" in data:
        data["boresight_gain_Gc"] = db_to_linear(float(data.pop("boresight_gain_dbi")))
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
    mp = data.pop("multipath", {})
    if isinstance(mp, dict):
        try:
            mp = MultipathConfig(**mp)
        except TypeError as exc:
            raise ConfigError(f"bad multipath block: {exc}") from None
    kwargs = {k: _tuplify(v) for k, v in data.items()}
    if "mount_height_z" in kwargs and "bs_position" not in kwargs:
        bx, by, _ = SceneConfig.bs_position
        kwargs["bs_position"] = (bx, by, float(kwargs["mount_height_z"]))
    try:
        return SceneConfig(multipath=mp, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _desk(**extra) -> dict:
    # 10 tiles per wall at 1 m pitch keeps the full-wall aperture with K=20.
    base = {"num_tiles_K": 20, "pilots_T": 16, "tile_pitch_d": 1.0}
    base.update(extra)
    return base


PRESETS = {
    "z1": {},
    "z3": {"mount_height_z": 3.0},
    "z1_mp": {"multipath": {"enabled": True}},
    "z3_mp": {"mount_height_z": 3.0, "multipath": {"enabled": True}},
    "desk": _desk(),
    "desk_mp": _desk(multipath={"enabled": True}),
    "desk_z3": _desk(mount_height_z=3.0),
}
PRESETS["z1_multipath"] = PRESETS["z1_mp"]
PRESETS["z3_multipath"] = PRESETS["z3_mp"]


def resolve_scene(preset: str | None = None, overrides: dict | None = None) -> SceneConfig:
    data: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown scenario preset {preset!r}; choose from {sorted(PRESETS)}")
        data.update(copy.deepcopy(PRESETS[preset]))
    for key, value in (overrides or {}).items():
        if key == "multipath" and isinstance(value, dict):
            merged = dict(data.get("multipath", {}))
            merged.update(value)
            data["multipath"] = merged
        else:
            data[key] = value
    return scene_config_from_dict(data)


def load_config_file(path: str | os.PathLike) -> dict:
    """Read the run configuration file.

    Top-level keys: ``scenario`` (preset name), ``scene`` (overrides),
    ``train``, ``pso``, ``hybrid``. Every block is optional.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def with_updates(cfg: SceneConfig, **changes) -> SceneConfig:
    return replace(cfg, **changes)


def sample_seed(base_seed: int, index: int) -> int:
    """Per-sample seed derived as ``base_seed XOR index`` (64-bit)."""
    return int(np.uint64(base_seed) ^ np.uint64(index))
