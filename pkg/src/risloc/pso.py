"""Bounded particle swarm minimizer with optional periodic dimensions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


class PsoError(RuntimeError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyperparameters.

    ``bounds`` is a sequence of (lo, hi) pairs. Dimensions listed in
    ``periodic`` wrap around instead of being clamped. ``velocity_clamp`` is a
    fraction of each dimension's range. The run stops early when the global
    best improves by less than ``stop_tol`` (relative to max(1, |best|)) for
    ``patience`` consecutive iterations.
    """

    swarm_size: int = 60
    iterations: int = 400
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    bounds: tuple = ((0.0, 1.0),)
    periodic: tuple = ()
    velocity_clamp: float = 0.5
    seed: int = 0
    stop_tol: float = 1e-12
    patience: int = 50
    restarts: int = 1

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("bounds must be a sequence of (lo, hi) pairs")
        if np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("every bound needs lo < hi")
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if not 0 < self.inertia < 1:
            raise ValueError("inertia must lie in (0, 1)")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if any(not 0 <= i < len(b) for i in self.periodic):
            raise ValueError("periodic index out of range")

    def with_bounds(self, bounds, periodic=()) -> "PsoConfig":
        return replace(self, bounds=tuple(tuple(map(float, b)) for b in bounds),
                       periodic=tuple(periodic))


@dataclass
class OptResult:
    best_point: np.ndarray
    best_value: float
    iterations_run: int
    evaluations: int
    history: list = field(default_factory=list)


def _evaluate(cost, X, vectorized):
    if vectorized:
        f = np.asarray(cost(X), dtype=float).reshape(len(X))
    else:
        f = np.array([float(cost(x)) for x in X])
    bad = ~np.isfinite(f)
    if bad.any():
        i = int(np.argmax(bad))
        raise PsoError(f"cost returned {f[i]} at point {X[i].tolist()}")
    return f


def minimize(cost: Callable, config: PsoConfig, *, vectorized: bool = False,
             init_points=None, callback=None) -> OptResult:
    """Minimize ``cost`` over the box in ``config.bounds``.

    With ``vectorized=True`` the cost receives an (n, D) array and returns n
    values; otherwise it is called once per point. ``init_points`` replace
    the first rows of the random initial swarm (of every restart).
    ``callback(it, X, gbest_val)`` sees every evaluated swarm, mainly for
    tests.

    ``config.restarts > 1`` runs that many independent swarms, seeded from
    ``config.seed`` in order, and keeps the best; ties go to the earlier run.
    """
    best = None
    evals = 0
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts) if config.restarts > 1 \
        else [config.seed]
    for seed in seeds:
        res = _swarm(cost, config, np.random.default_rng(seed), vectorized, init_points, callback)
        evals += res.evaluations
        if best is None or res.best_value < best.best_value:
            best = res
    best.evaluations = evals
    return best


def _swarm(cost, config, rng, vectorized, init_points, callback) -> OptResult:
    b = np.asarray(config.bounds, dtype=float)
    lo, hi = b[:, 0], b[:, 1]
    span = hi - lo
    D = len(b)
    n = config.swarm_size
    per = np.zeros(D, dtype=bool)
    per[list(config.periodic)] = True
    vmax = config.velocity_clamp * span

    def confine(X):
        X = np.where(per, lo + np.mod(X - lo, span), np.clip(X, lo, hi))
        return X

    def toward(target, X):
        d = target - X
        return np.where(per, np.mod(d + span / 2, span) - span / 2, d)

    X = lo + rng.random((n, D)) * span
    if init_points is not None:
        P = np.atleast_2d(np.asarray(init_points, dtype=float))[:n]
        X[: len(P)] = confine(P)
    V = (rng.random((n, D)) * 2 - 1) * vmax * 0.1

    f = _evaluate(cost, X, vectorized)
    evals = n
    pbest, pval = X.copy(), f.copy()
    g = int(np.argmin(pval))
    gbest, gval = pbest[g].copy(), float(pval[g])
    history = [gval]
    if callback is not None:
        callback(0, X, gval)

    stagnant = 0
    it = 0
    for it in range(1, config.iterations + 1):
        r1 = rng.random((n, D))
        r2 = rng.random((n, D))
        V = config.inertia * V + config.c1 * r1 * toward(pbest, X) + config.c2 * r2 * toward(gbest, X)
        V = np.clip(V, -vmax, vmax)
        X = confine(X + V)
        f = _evaluate(cost, X, vectorized)
        evals += n
        better = f < pval
        pbest[better] = X[better]
        pval[better] = f[better]
        g = int(np.argmin(pval))
        prev = gval
        if pval[g] < gval:
            gbest, gval = pbest[g].copy(), float(pval[g])
        history.append(gval)
        if callback is not None:
            callback(it, X, gval)
        if prev - gval <= config.stop_tol * max(1.0, abs(gval)):
            stagnant += 1
            if stagnant >= config.patience:
                break
        else:
            stagnant = 0

    logger.debug("pso finished after %d iterations, best %.3e", it, gval)
    return OptResult(best_point=gbest, best_value=gval, iterations_run=it,
                     evaluations=evals, history=history)
