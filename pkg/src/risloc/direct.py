"""Maximum-likelihood direct positioning from pilot phases.

The measured pilots y_t are compared with the phase each candidate
position would produce through the known reflection matrix. The offset
phi0 between BS and UE oscillators is estimated jointly with (x, y).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import pso
from .channel import cascaded_channels
from .scene import Scene

TWO_PI = 2 * np.pi


@dataclass
class EstimationResult:
    position: np.ndarray
    phi0: float | None = None
    cost: float | None = None
    latency_s: float = 0.0
    initial_position: np.ndarray | None = None
    flags: dict = field(default_factory=dict)


class CostContext:
    """Everything the cost needs, precomputed once per measurement."""

    def __init__(self, y, beta, scene: Scene, sigma2: float | None = None):
        y = np.asarray(y, dtype=complex)
        beta = np.asarray(beta, dtype=complex)
        if beta.ndim != 2 or beta.shape[0] != len(y) or beta.shape[1] != scene.K:
            raise ValueError(f"beta shape {beta.shape} inconsistent with T={len(y)}, K={scene.K}")
        self.scene = scene
        self.beta = beta
        self.amp = np.abs(y)
        self.phase = np.angle(y)
        self.sigma2 = scene.config.noise_power_sigma2 if sigma2 is None else sigma2
        scale = 1.0 / self.sigma2 if self.sigma2 > 0 else 1.0
        self.weights = self.amp ** 2 * scale
        self.d_i = np.linalg.norm(scene.bs - scene.centroids, axis=-1)

    @property
    def T(self) -> int:
        return len(self.amp)

    def model_sum(self, xy) -> np.ndarray:
        """sum_k beta[t, k] h_k(p) with zero offset; (..., T) for xy (..., 2)."""
        h = cascaded_channels(self.scene, self.scene.ue_point(xy), 0.0, self.d_i)
        return h @ self.beta.T


def hypothetical_phase(p, t, ctx: CostContext):
    """Model phase of pilot ``t`` (int or slice) at planar position ``p``.

    Returns ``(phase, degenerate)``; a vanishing sum gives phase 0 and
    ``degenerate=True``.
    """
    s = ctx.model_sum(np.asarray(p, dtype=float))[..., t]
    degenerate = np.abs(s) == 0
    phase = np.where(degenerate, 0.0, np.angle(s))
    return phase, bool(np.any(degenerate))


def cost_batch(P, ctx: CostContext) -> np.ndarray:
    """Cost for an (M, 3) array of (x, y, phi0) rows."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    model = np.angle(ctx.model_sum(P[:, :2]))
    resid = ctx.phase - model - P[:, 2:3]
    return np.sin(resid) ** 2 @ ctx.weights


def cost(p, phi0: float, ctx: CostContext) -> float:
    """sum_t a_t^2 / sigma^2 * sin^2(phase_t - model_t(p) - phi0).

    With sigma^2 = 0 the weights reduce to a_t^2.
    """
    return float(cost_batch(np.r_[np.asarray(p, dtype=float), phi0][None], ctx)[0])


def profiled_cost(P, ctx: CostContext):
    """Cost minimized over phi0 in closed form, for (M, 2) positions.

    With r_t the residual before the offset, sum_t w_t sin^2(r_t - phi0)
    = (W - Re(e^{-2j phi0} sum_t w_t e^{2j r_t})) / 2, minimized at
    phi0 = arg(sum_t w_t e^{2j r_t}) / 2. Returns (cost, phi0) arrays.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    r = ctx.phase - np.angle(ctx.model_sum(P))
    z = np.exp(2j * r) @ ctx.weights
    value = 0.5 * (ctx.weights.sum() - np.abs(z))
    return np.maximum(value, 0.0), np.mod(0.5 * np.angle(z), TWO_PI)


def best_phi0(p, ctx: CostContext) -> float:
    return float(profiled_cost(np.asarray(p, dtype=float)[None], ctx)[1][0])


def region_search_pso() -> pso.PsoConfig:
    """Swarm settings for searching the whole UE region."""
    return pso.PsoConfig(swarm_size=1000, iterations=300, restarts=6, patience=30)


def search(ctx: CostContext, bounds, cfg: pso.PsoConfig, init_points=None, profile_phi0=True):
    """PSO over (x, y) in ``bounds``; phi0 either profiled out or searched
    as a third, periodic dimension. Returns (OptResult, position, phi0, cost)."""
    total = float(ctx.weights.sum())
    norm = 1.0 / total if total > 0 else 1.0
    bounds = [tuple(map(float, b)) for b in bounds]
    if profile_phi0:
        run_cfg = cfg.with_bounds(bounds)
        init = None if init_points is None else np.atleast_2d(init_points)[:, :2]
        res = pso.minimize(lambda P: profiled_cost(P, ctx)[0] * norm, run_cfg,
                           vectorized=True, init_points=init)
        pos = res.best_point.copy()
        phi0 = best_phi0(pos, ctx)
    else:
        run_cfg = cfg.with_bounds(bounds + [(0.0, TWO_PI)], periodic=(2,))
        res = pso.minimize(lambda P: cost_batch(P, ctx) * norm, run_cfg, vectorized=True,
                           init_points=init_points)
        pos, phi0 = res.best_point[:2].copy(), float(res.best_point[2])
    return res, pos, phi0, cost(pos, phi0, ctx)


def estimate_direct(y, beta, scene: Scene, pso_config: pso.PsoConfig | None = None,
                    bounds=None, profile_phi0: bool = True) -> EstimationResult:
    """Direct-position estimate over the UE region (or ``bounds``).

    phi0 is only identifiable modulo pi because the cost depends on
    sin^2 of the residual.
    """
    t0 = time.perf_counter()
    cfg = pso_config or region_search_pso()
    ctx = CostContext(y, beta, scene)
    region = bounds if bounds is not None else scene.config.ue_region
    res, pos, phi0, value = search(ctx, region, cfg, profile_phi0=profile_phi0)
    return EstimationResult(position=pos, phi0=phi0, cost=value,
                            latency_s=time.perf_counter() - t0,
                            flags={"iterations": res.iterations_run, "evaluations": res.evaluations})
