"""Neural first guess refined by a PSO search in a box around it."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import pso
from .direct import CostContext, EstimationResult, best_phi0, search
from .neural.train import ModelBundle, predict
from .scene import Scene


def local_search_pso() -> pso.PsoConfig:
    return pso.PsoConfig(swarm_size=400, iterations=200, restarts=3, patience=30)


@dataclass(frozen=True)
class HybridConfig:
    neighborhood_halfwidth: float = 0.5
    pso: pso.PsoConfig = field(default_factory=local_search_pso)
    clamp_to_region: bool = True
    profile_phi0: bool = True

    def __post_init__(self):
        if self.neighborhood_halfwidth <= 0:
            raise ValueError("neighborhood_halfwidth must be positive")


def search_box(center, halfwidth: float, region, clamp: bool):
    """Box [center +- halfwidth] per axis, optionally cut to ``region``.

    Returns ``(box, fell_back)``. If the cut leaves nothing, the box is
    re-centred on the nearest region point and left unclamped.
    """
    c = np.asarray(center, dtype=float)
    box = [(c[i] - halfwidth, c[i] + halfwidth) for i in range(2)]
    if not clamp:
        return box, False
    cut = [(max(lo, r[0]), min(hi, r[1])) for (lo, hi), r in zip(box, region)]
    if all(lo < hi for lo, hi in cut):
        return cut, False
    near = np.array([np.clip(c[i], *region[i]) for i in range(2)])
    return [(near[i] - halfwidth, near[i] + halfwidth) for i in range(2)], True


def estimate_hybrid(y, beta, scene: Scene, bundle: ModelBundle, cfg: HybridConfig | None = None,
                    p_nn=None) -> EstimationResult:
    """Predict with the network, then minimize the direct cost inside the
    neighborhood of that prediction.

    The network estimate (with its best phi0) is injected into the initial
    swarm, so the refined cost never exceeds the cost at the initial guess.
    ``p_nn`` skips the network call when the prediction is already known.
    """
    cfg = cfg or HybridConfig()
    t0 = time.perf_counter()
    if p_nn is None:
        p_nn = predict(bundle, y, beta)
    p_nn = np.asarray(p_nn, dtype=float)
    ctx = CostContext(y, beta, scene)
    box, fell_back = search_box(p_nn, cfg.neighborhood_halfwidth, scene.config.ue_region,
                                cfg.clamp_to_region)
    start = np.array([np.clip(p_nn[i], *box[i]) for i in range(2)])
    seed_point = np.r_[start, best_phi0(start, ctx)]
    res, pos, phi0, value = search(ctx, box, cfg.pso, init_points=seed_point,
                                   profile_phi0=cfg.profile_phi0)
    return EstimationResult(position=pos, phi0=phi0, cost=value,
                            latency_s=time.perf_counter() - t0, initial_position=p_nn,
                            flags={"box": box, "fallback": fell_back,
                                   "iterations": res.iterations_run})
