"""Scenario runs, percentile curves, error heatmaps and CSV/JSON export."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import pso as pso_mod
from .channel import simulate_measurements
from .config import SceneConfig, resolve_scene, sample_seed
from .direct import EstimationResult, estimate_direct, region_search_pso
from .hybrid import HybridConfig, estimate_hybrid
from .neural.train import ModelBundle, load_bundle, predict
from .scene import Scene, build_scene, heatmap_grid, schedule_for

logger = logging.getLogger(__name__)

PERCENTILES = (10, 25, 40, 50, 60, 65, 70, 75, 80, 85, 90, 92.5, 95, 98)
ESTIMATORS = ("pso", "lstm", "hybrid")


class ArtifactError(RuntimeError):
    """Missing or incompatible model bundle."""


def percentile_curve(errors, percentiles=PERCENTILES):
    """(percentile, value) rows using linear interpolation between ranks."""
    e = np.asarray(errors, dtype=float)
    e = e[~np.isnan(e)]
    if e.size == 0:
        raise ValueError("no errors to summarize")
    pcts = sorted(float(p) for p in percentiles)
    return [(p, float(v)) for p, v in zip(pcts, np.percentile(e, pcts))]


def planar_error_cm(estimate, truth) -> float:
    return float(np.linalg.norm(np.asarray(estimate)[:2] - np.asarray(truth)[:2]) * 100.0)


def check_bundle(bundle: ModelBundle | None, scene: Scene, estimator: str):
    if estimator in ("lstm", "hybrid"):
        if bundle is None:
            raise ArtifactError(f"estimator {estimator!r} needs a trained model bundle")
        if bundle.T != scene.config.pilots_T or bundle.K != scene.K:
            raise ArtifactError(f"bundle trained for T={bundle.T}, K={bundle.K}; "
                                f"scene has T={scene.config.pilots_T}, K={scene.K}")
        trained_on = bundle.meta.get("scene_hash")
        if trained_on and trained_on != scene.config.fingerprint():
            logger.warning("bundle was trained on scene %s, evaluating on %s",
                           trained_on, scene.config.fingerprint())


def make_estimator(name: str, scene: Scene, bundle: ModelBundle | None = None,
                   pso_config: pso_mod.PsoConfig | None = None,
                   hybrid_config: HybridConfig | None = None):
    """Callable ``(y, beta) -> EstimationResult`` for a named estimator."""
    if name not in ESTIMATORS:
        raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
    check_bundle(bundle, scene, name)
    if name == "pso":
        cfg = pso_config or region_search_pso()
        return lambda y, beta: estimate_direct(y, beta, scene, cfg)
    if name == "lstm":
        def lstm(y, beta):
            p, dt = predict(bundle, y, beta, with_latency=True)
            return EstimationResult(position=p, latency_s=dt)
        return lstm
    hcfg = hybrid_config or HybridConfig()
    return lambda y, beta: estimate_hybrid(y, beta, scene, bundle, hcfg)


def _evaluate_points(scene, schedule, estimator, points, seed, threads=1):
    """Simulate a fresh measurement at each point and run the estimator.

    Returns (errors_cm, latencies_s); failures give NaN, not an exception.
    """
    def one(i):
        rng = np.random.default_rng(sample_seed(seed, i))
        phi0 = rng.uniform(0.0, 2 * np.pi)
        meas, beta = simulate_measurements(scene, schedule, points[i], phi0, rng)
        try:
            res = estimator(meas.y, beta)
        except Exception as exc:  # noqa: BLE001 - recorded as a NaN cell
            logger.warning("estimator failed at %s: %s", points[i], exc)
            return np.nan, np.nan
        return planar_error_cm(res.position, points[i]), res.latency_s

    idx = range(len(points))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one, idx))
    else:
        out = [one(i) for i in idx]
    err = np.array([o[0] for o in out], dtype=float)
    lat = np.array([o[1] for o in out], dtype=float)
    return err, lat


def heatmap(scene: Scene, estimator, resolution: float, seed: int = 0, schedule=None,
            threads: int = 1) -> np.ndarray:
    """Error (cm) at every grid point of the UE region; rows (x, y, error_cm)
    in row-major order, y outer."""
    schedule = schedule or schedule_for(scene.config)
    grid = heatmap_grid(scene.config.ue_region, resolution)
    err, _ = _evaluate_points(scene, schedule, estimator, grid, seed, threads)
    return np.column_stack([grid, err])


def random_positions(region, n: int, seed: int) -> np.ndarray:
    (x0, x1), (y0, y1) = region
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])


def write_heatmap_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("x_m,y_m,error_cm\n")
        for x, y, e in rows:
            fh.write(f"{x:.4f},{y:.4f},{e:.10g}\n")


@dataclass
class ScenarioSpec:
    name: str = "z1"
    preset: str | None = "z1"
    overrides: dict = field(default_factory=dict)
    estimator: str = "pso"
    bundle_path: str | None = None
    positions: str = "random"  # "random" or "grid"
    n: int = 200
    resolution: float = 0.1
    seed: int = 0
    pso: dict = field(default_factory=dict)
    hybrid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.positions not in ("random", "grid"):
            raise ValueError("positions must be 'random' or 'grid'")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")

    def scene_config(self) -> SceneConfig:
        return resolve_scene(self.preset, self.overrides)


@dataclass
class ErrorReport:
    scenario: str
    estimator: str
    positions: np.ndarray
    errors_cm: np.ndarray
    percentiles: list
    latency_ms: dict
    fingerprint: str
    summary: dict = field(default_factory=dict)

    def percentile_table(self) -> str:
        lines = ["percentile,error_cm"]
        lines += [f"{p:g},{v:.10g}" for p, v in self.percentiles]
        return "\n".join(lines) + "\n"


def _pso_from_dict(d: dict, base: pso_mod.PsoConfig) -> pso_mod.PsoConfig:
    return replace(base, **d) if d else base


def hybrid_config_from_dict(d: dict) -> HybridConfig:
    d = dict(d or {})
    p = _pso_from_dict(d.pop("pso", {}), HybridConfig().pso)
    return HybridConfig(pso=p, **d)


def run_scenario(spec: ScenarioSpec, bundle: ModelBundle | None = None, out_dir=None,
                 threads: int = 1) -> ErrorReport:
    """Evaluate one estimator on one scenario; writes CSV + JSON when
    ``out_dir`` is given."""
    t0 = time.perf_counter()
    cfg = spec.scene_config()
    scene = build_scene(cfg)
    schedule = schedule_for(cfg)
    if bundle is None and spec.bundle_path and spec.estimator != "pso":
        bundle = load_bundle(spec.bundle_path)
    est = make_estimator(spec.estimator, scene, bundle,
                         _pso_from_dict(spec.pso, region_search_pso()),
                         hybrid_config_from_dict(spec.hybrid))
    if spec.positions == "grid":
        pts = heatmap_grid(cfg.ue_region, spec.resolution)
    else:
        pts = random_positions(cfg.ue_region, spec.n, spec.seed)
    err, lat = _evaluate_points(scene, schedule, est, pts, spec.seed, threads)
    lat_ms = lat[~np.isnan(lat)] * 1e3
    latency = {"p50_ms": float(np.percentile(lat_ms, 50)) if lat_ms.size else float("nan"),
               "p95_ms": float(np.percentile(lat_ms, 95)) if lat_ms.size else float("nan")}
    spec_blob = json.dumps(asdict(spec), sort_keys=True, default=str).encode()
    fp = hashlib.sha256(spec_blob + cfg.fingerprint().encode()).hexdigest()[:16]
    report = ErrorReport(
        scenario=spec.name, estimator=spec.estimator, positions=pts, errors_cm=err,
        percentiles=percentile_curve(err), latency_ms=latency, fingerprint=fp,
        summary={"scenario": spec.name, "estimator": spec.estimator, "n": int(len(pts)),
                 "failures": int(np.isnan(err).sum()), "multipath": cfg.multipath.enabled,
                 "z": cfg.mount_height_z, "scene_hash": cfg.fingerprint(),
                 "spec": asdict(spec), "spec_hash": fp,
                 "median_cm": float(np.nanmedian(err)),
                 "elapsed_s": time.perf_counter() - t0})
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: ErrorReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "percentiles.csv"), "w") as fh:
        fh.write(report.percentile_table())
    with open(os.path.join(out_dir, "latency.csv"), "w") as fh:
        fh.write("estimator,p50_ms,p95_ms\n")
        fh.write(f"{report.estimator},{report.latency_ms['p50_ms']:.6g},{report.latency_ms['p95_ms']:.6g}\n")
    with open(os.path.join(out_dir, "errors.csv"), "w") as fh:
        fh.write("x_m,y_m,error_cm\n")
        for (x, y), e in zip(report.positions, report.errors_cm):
            fh.write(f"{x:.6f},{y:.6f},{e:.10g}\n")
    summary = dict(report.summary, percentiles=report.percentiles, latency_ms=report.latency_ms)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=str)
