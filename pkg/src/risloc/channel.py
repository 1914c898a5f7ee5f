"""Narrowband RIS channel: cell pattern, array factor, tile reflection
coefficients, cascaded BS-tile-UE gains and the pilot measurements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MultipathConfig
from .scene import (GeometryError, PhaseSchedule, Scene, SolidAngle, Tile,
                    angles_from_local, local_direction)

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class MeasurementSet:
    y: np.ndarray  # (T,) complex
    truth_position: np.ndarray  # (2,)
    truth_phi0: float
    scenario_id: str = ""


def radiation_pattern(theta, q: float):
    """Normalized cell power pattern: cos(theta)**q in the front half-space."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)
    front = theta <= np.pi / 2
    out = np.where(front, np.abs(np.where(front, c, 0.0)) ** q, 0.0)
    return out if out.ndim else float(out)


def _dirichlet(x, n: int):
    """sin(n x) / sin(x) with its limit at integer multiples of pi."""
    x = np.asarray(x, dtype=float)
    m = np.round(x / np.pi)
    singular = np.abs(x - m * np.pi) < SINGULAR_TOL
    den = np.where(singular, 1.0, np.sin(x))
    limit = n * np.where((m * (n - 1)) % 2 == 0, 1.0, -1.0)
    return np.where(singular, limit, np.sin(n * x) / den)


def array_factor(theta, phi, nx: int, ny: int, dx: float, dy: float, wavelength: float):
    """Array factor of an nx-by-ny cell grid, normalized by sqrt(nx*ny).

    The nx axis pairs with sin(theta) sin(phi), the ny axis with
    sin(theta) cos(phi).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    ax = _dirichlet(np.pi * dx / wavelength * st * np.sin(phi), nx)
    ay = _dirichlet(np.pi * dy / wavelength * st * np.cos(phi), ny)
    out = ax * ay / np.sqrt(nx * ny)
    return out if out.ndim else float(out)


def _tile_gain(theta, phi, cfg):
    """sqrt(F(theta)) * AF(theta, phi) for one link end."""
    nx, ny = cfg.cells_per_tile
    dx, dy = cfg.cell_spacing
    return np.sqrt(radiation_pattern(theta, cfg.radiation_exponent_q)) * \
        array_factor(theta, phi, nx, ny, dx, dy, cfg.wavelength)


def reflection_coefficient(angle_i: SolidAngle, angle_r: SolidAngle, psi: float, scene: Scene) -> complex:
    cfg = scene.config
    g_i = _tile_gain(angle_i.theta, angle_i.phi, cfg)
    g_r = _tile_gain(angle_r.theta, angle_r.phi, cfg)
    return complex(g_i * g_r * cfg.boresight_gain_Gc * np.exp(1j * psi))


def incident_gains(scene: Scene):
    """Per-tile BS-side pattern*AF gain and BS-tile distance, both (K,)."""
    local, dist = local_direction(scene.frames, scene.centroids, scene.bs)
    theta, phi = angles_from_local(local)
    return _tile_gain(theta, phi, scene.config), dist


def reflection_matrix(scene: Scene, schedule: PhaseSchedule, ue) -> np.ndarray:
    """beta[t, k] for a UE at 3-D point ``ue``."""
    if schedule.K != scene.K:
        raise ValueError(f"schedule has {schedule.K} tiles, scene has {scene.K}")
    cfg = scene.config
    g_i, _ = incident_gains(scene)
    local, _ = local_direction(scene.frames, scene.centroids, np.asarray(ue, dtype=float))
    theta, phi = angles_from_local(local)
    g_r = _tile_gain(theta, phi, cfg)
    amp = g_i * g_r * cfg.boresight_gain_Gc
    return amp[None, :] * np.exp(1j * schedule.psi)


def cascaded_channel(tile: Tile, bs, ue, phi0: float, wavelength: float) -> complex:
    """BS -> tile -> UE gain: (lambda/4pi)^2 / (d_i d_r) with the
    round-trip propagation phase and the global offset phi0."""
    d_i = float(np.linalg.norm(np.asarray(bs, dtype=float) - tile.centroid))
    d_r = float(np.linalg.norm(np.asarray(ue, dtype=float) - tile.centroid))
    if d_i == 0 or d_r == 0:
        raise GeometryError("zero BS-tile or tile-UE distance")
    amp = (wavelength / (4 * np.pi)) ** 2 / (d_i * d_r)
    return complex(amp * np.exp(-2j * np.pi * (d_i + d_r) / wavelength + 1j * phi0))


def cascaded_channels(scene: Scene, ue_points, phi0=0.0, d_i=None) -> np.ndarray:
    """Vectorized cascaded gains for UE points (..., 3) -> (..., K)."""
    lam = scene.wavelength
    if d_i is None:
        d_i = np.linalg.norm(scene.bs - scene.centroids, axis=-1)
    d_r = np.linalg.norm(np.asarray(ue_points, dtype=float)[..., None, :] - scene.centroids, axis=-1)
    if np.any(d_r == 0) or np.any(d_i == 0):
        raise GeometryError("zero BS-tile or tile-UE distance")
    amp = (lam / (4 * np.pi)) ** 2 / (d_i * d_r)
    phi0 = np.asarray(phi0, dtype=float)[..., None]
    return amp * np.exp(-2j * np.pi * (d_i + d_r) / lam + 1j * phi0)


def multipath_component(cfg: MultipathConfig, mean_ris_power: float, rng, T: int) -> np.ndarray:
    """Complex-normal direct-link term, one value per pilot."""
    if mean_ris_power < 0:
        raise ValueError("mean_ris_power must be >= 0")
    if not cfg.enabled or cfg.relative_power == 0:
        return np.zeros(T, dtype=complex)
    scale = np.sqrt(cfg.relative_power * mean_ris_power)
    n = T if cfg.per_pilot else 1
    g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    return np.broadcast_to(scale * g, (T,)).copy()


def complex_noise(sigma2: float, size, rng) -> np.ndarray:
    """Circularly-symmetric complex normal samples with variance sigma2."""
    if sigma2 == 0:
        return np.zeros(size, dtype=complex)
    s = np.sqrt(sigma2 / 2)
    return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def simulate_measurements(scene: Scene, schedule: PhaseSchedule, ue_position, phi0: float,
                          rng, scenario_id: str = ""):
    """Simulate the T pilot observations at a planar UE position.

    Returns ``(MeasurementSet, beta)``; beta is the (T, K) reflection matrix
    the estimators are given alongside y.
    """
    cfg = scene.config
    p = np.asarray(ue_position, dtype=float)
    ue = scene.ue_point(p)
    beta = reflection_matrix(scene, schedule, ue)
    h = cascaded_channels(scene, ue, phi0)
    ris = beta @ h
    f_mp = multipath_component(cfg.multipath, float(np.mean(np.abs(ris) ** 2)), rng, schedule.T)
    w = complex_noise(cfg.noise_power_sigma2, schedule.T, rng)
    y = f_mp + ris + w
    return MeasurementSet(y=y, truth_position=p.copy(), truth_phi0=float(phi0),
                          scenario_id=scenario_id), beta
