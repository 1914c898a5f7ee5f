"""Room geometry, RIS tile frames and the a-priori phase schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SceneConfig


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Tile:
    """One RIS tile: centroid plus an orthonormal local frame.

    ``frame`` rows are (x_t, y_t, n): the horizontal wall axis, the vertical
    axis and the inward wall normal.
    """

    index: int
    centroid: np.ndarray
    frame: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        return self.frame[2]


@dataclass(frozen=True)
class SolidAngle:
    theta: float
    phi: float


@dataclass(frozen=True)
class PhaseSchedule:
    psi: np.ndarray  # (T, K) radians
    num_levels: int
    seed: int

    @property
    def T(self) -> int:
        return self.psi.shape[0]

    @property
    def K(self) -> int:
        return self.psi.shape[1]


@dataclass(frozen=True)
class Scene:
    config: SceneConfig
    bs: np.ndarray
    tiles: tuple

    @property
    def K(self) -> int:
        return len(self.tiles)

    @property
    def wavelength(self) -> float:
        return self.config.wavelength

    @property
    def centroids(self) -> np.ndarray:
        return np.stack([t.centroid for t in self.tiles])

    @property
    def frames(self) -> np.ndarray:
        return np.stack([t.frame for t in self.tiles])

    def ue_point(self, xy) -> np.ndarray:
        """Lift a planar position (or an (M, 2) batch) to 3-D at the UE height."""
        xy = np.asarray(xy, dtype=float)
        z = np.full(xy.shape[:-1] + (1,), self.config.z_ue)
        return np.concatenate([xy, z], axis=-1)


def _frame(normal) -> np.ndarray:
    n = np.asarray(normal, dtype=float)
    y_t = np.array([0.0, 0.0, 1.0])
    x_t = np.cross(y_t, n)
    return np.stack([x_t, y_t, n])


def build_scene(config: SceneConfig) -> Scene:
    """Place K tiles on two walls: half on y = 0, half on x = +W/2.

    Centroids sit at half-pitch offsets from the room corner so that
    ``K/2 * d`` tiles exactly fill a wall of that length.
    """
    K, d = config.num_tiles_K, config.tile_pitch_d
    W, L, H = config.room_dims
    z = config.mount_height_z
    if K % 2:
        raise ConfigError("num_tiles_K must be even (two wall segments)")
    half = K // 2
    if half * d > min(W, L) + 1e-9:
        raise ConfigError(f"{half} tiles at pitch {d} m exceed the wall length")
    bs = np.asarray(config.bs_position, dtype=float)
    if not (-W / 2 <= bs[0] <= W / 2 and 0 <= bs[1] <= L and 0 <= bs[2] <= H):
        raise ConfigError(f"BS position {tuple(bs)} lies outside the room")
    if not 0 <= z <= H:
        raise ConfigError("mount height outside the room")

    frame_a = _frame([0.0, 1.0, 0.0])
    frame_b = _frame([-1.0, 0.0, 0.0])
    tiles = []
    for j in range(half):
        c = np.array([-W / 2 + d / 2 + j * d, 0.0, z])
        tiles.append(Tile(j, c, frame_a))
    for j in range(half):
        c = np.array([W / 2, d / 2 + j * d, z])
        tiles.append(Tile(half + j, c, frame_b))
    return Scene(config=config, bs=bs, tiles=tuple(tiles))


def local_direction(frames: np.ndarray, centroids: np.ndarray, points: np.ndarray):
    """Unit direction tile -> point expressed in each tile frame.

    Broadcasts ``points`` of shape (..., 3) against K tiles, returning the
    local components (..., K, 3) and the distances (..., K).
    """
    v = points[..., None, :] - centroids
    dist = np.linalg.norm(v, axis=-1)
    if np.any(dist == 0):
        raise GeometryError("point coincides with a tile centroid")
    u = v / dist[..., None]
    local = np.einsum("kij,...kj->...ki", frames, u)
    return local, dist


def angles_from_local(local: np.ndarray):
    """(theta, phi) arrays from local unit directions; phi in [0, 2*pi)."""
    c = np.clip(local[..., 2], -1.0, 1.0)
    theta = np.arccos(c)
    phi = np.mod(np.arctan2(local[..., 0], local[..., 1]), 2 * np.pi)
    # arctan2 of (-0.0, ...) can give 2*pi after mod when tiny negative
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    return theta, phi


def solid_angles(tile: Tile, point) -> SolidAngle:
    """Angles of ``point`` seen from ``tile``.

    theta is measured from the tile normal. phi satisfies
    sin(theta) sin(phi) = component along x_t and
    sin(theta) cos(phi) = component along y_t.
    """
    v = np.asarray(point, dtype=float) - tile.centroid
    r = np.linalg.norm(v)
    if r == 0:
        raise GeometryError("point coincides with the tile centroid")
    local = tile.frame @ (v / r)
    theta, phi = angles_from_local(local)
    if np.hypot(local[0], local[1]) < 1e-15:
        phi = 0.0
    return SolidAngle(float(theta), float(phi))


def direction_from_angles(angle: SolidAngle) -> np.ndarray:
    st = np.sin(angle.theta)
    return np.array([st * np.sin(angle.phi), st * np.cos(angle.phi), np.cos(angle.theta)])


def generate_schedule(T: int, K: int, num_levels: int = 4, seed: int = 7) -> PhaseSchedule:
    """Quantized uniform random tile phases, one row per pilot."""
    if T < 1 or K < 1 or num_levels < 1:
        raise ValueError("T, K and num_levels must be >= 1")
    rng = np.random.default_rng(seed)
    m = rng.integers(0, num_levels, size=(T, K))
    psi = 2 * np.pi * m / num_levels
    psi.setflags(write=False)
    return PhaseSchedule(psi=psi, num_levels=num_levels, seed=seed)


def schedule_for(config: SceneConfig) -> PhaseSchedule:
    return generate_schedule(config.pilots_T, config.num_tiles_K, config.phase_levels,
                             config.schedule_seed)


def heatmap_grid(region, resolution: float) -> np.ndarray:
    """Row-major grid (y outer, x inner) over a rectangle, endpoints included."""
    (x0, x1), (y0, y1) = region
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    nx = int(np.floor((x1 - x0) / resolution + 1e-9)) + 1
    ny = int(np.floor((y1 - y0) / resolution + 1e-9)) + 1
    xs = x0 + resolution * np.arange(nx)
    ys = y0 + resolution * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])
