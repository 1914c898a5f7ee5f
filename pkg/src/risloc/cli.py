"""Command-line entry point: ``risloc <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric
failure during training, 5 estimator/bundle mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from .channel import simulate_measurements
from .config import ConfigError, load_config_file, resolve_scene
from .dataset import DatasetFormatError, generate_dataset, load_dataset, save_dataset
from .direct import EstimationResult, estimate_direct, region_search_pso
from .evaluation import (ArtifactError, ScenarioSpec, check_bundle, heatmap, hybrid_config_from_dict,
                         make_estimator, run_scenario, write_heatmap_csv)
from .hybrid import estimate_hybrid
from .neural import DESK_MODEL, FULL_MODEL, Model, ModelConfig, TrainConfig, TrainingError
from .neural.train import CheckpointError, load_bundle, predict, save_bundle, train, write_history_csv
from .pso import PsoError
from .scene import build_scene, schedule_for

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_MISMATCH = 2, 3, 4, 5

logger = logging.getLogger("risloc")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(args) -> str:
    d = args.out_dir or os.environ.get("RISLOC_OUT_DIR") or "risloc_out"
    os.makedirs(d, exist_ok=True)
    return d


def _file_config(args) -> dict:
    return load_config_file(args.config) if args.config else {}


def _scene_from(args, file_cfg: dict, extra: dict | None = None):
    preset = args.scenario or file_cfg.get("scenario") or "z1"
    overrides = dict(file_cfg.get("scene", {}))
    overrides.update(extra or {})
    return resolve_scene(preset, overrides), preset


def _seed(args, file_cfg: dict, default: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    return int(file_cfg.get("seed", default))


def _limit_threads(n: int | None):
    if n:
        from threadpoolctl import threadpool_limits
        threadpool_limits(n)


def _emit(manifest: dict, out_dir: str):
    path = os.path.join(out_dir, f"manifest_{manifest['subcommand']}.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    print(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def cmd_scene(args):
    file_cfg = _file_config(args)
    cfg, preset = _scene_from(args, file_cfg)
    scene = build_scene(cfg)
    sched = schedule_for(cfg)
    print(f"scenario {preset}: K={scene.K} tiles, T={sched.T} pilots, "
          f"lambda={cfg.wavelength * 100:.3f} cm, z={cfg.mount_height_z} m, "
          f"multipath={'on' if cfg.multipath.enabled else 'off'}")
    print(f"BS at {scene.bs.tolist()}; UE region {cfg.ue_region} at z={cfg.z_ue} m")
    for t in scene.tiles[:: max(1, scene.K // 10)]:
        print(f"  tile {t.index:3d} centroid {np.round(t.centroid, 3).tolist()} normal {t.normal.tolist()}")
    return 0


def cmd_generate(args):
    t0 = time.perf_counter()
    file_cfg = _file_config(args)
    cfg, preset = _scene_from(args, file_cfg)
    seed = _seed(args, file_cfg)
    n = args.n or int(file_cfg.get("n", 1000))
    out_dir = _out_dir(args)
    out = args.out or os.path.join(out_dir, "dataset.bin")
    scene = build_scene(cfg)
    ds = generate_dataset(scene, schedule_for(cfg), n, seed)
    meta = save_dataset(ds, out)
    _emit({"subcommand": "generate", "scenario": preset, "config": cfg.to_dict(), "seed": seed,
           "n": n, "outputs": [out, out + ".meta.json"], "sha256": meta["sha256"],
           "split_sizes": meta["split_sizes"], "elapsed_s": time.perf_counter() - t0}, out_dir)
    return 0


def _model_config(args, file_cfg, T, K) -> ModelConfig:
    preset = FULL_MODEL if args.model == "full" else DESK_MODEL
    kw = dict(preset)
    kw.update(file_cfg.get("model", {}))
    if args.hidden:
        kw["hidden"] = args.hidden
    if "dense_dims" in kw:
        kw["dense_dims"] = tuple(kw["dense_dims"])
    return ModelConfig.for_scene(T, K, **kw)


def cmd_train(args):
    t0 = time.perf_counter()
    file_cfg = _file_config(args)
    ds = load_dataset(args.dataset)
    tkw = dict(file_cfg.get("train", {}))
    if args.epochs:
        tkw["epochs"] = args.epochs
    tkw["seed"] = _seed(args, file_cfg, tkw.get("seed", 0))
    if "betas" in tkw:
        tkw["betas"] = tuple(tkw["betas"])
    tcfg = TrainConfig(**tkw)
    mcfg = _model_config(args, file_cfg, ds.T, ds.K)
    model = Model(mcfg, seed=tcfg.seed, dtype=np.float64 if args.float64 else np.float32)
    out_dir = _out_dir(args)
    out = args.out or os.path.join(out_dir, "model.ckpt")
    bundle = train(model, ds, tcfg)
    save_bundle(bundle, out)
    hist = os.path.splitext(out)[0] + "_loss.csv"
    write_history_csv(bundle.history, hist)
    _emit({"subcommand": "train", "dataset": args.dataset, "dataset_sha256": _sha256(args.dataset),
           "model": mcfg.to_dict(), "train": asdict(tcfg), "outputs": [out, hist],
           "checkpoint_sha256": _sha256(out), "best_epoch": bundle.meta["best_epoch"],
           "best_val_mse": bundle.meta["best_val_mse"], "elapsed_s": time.perf_counter() - t0},
          out_dir)
    return 0


def _spec_from(args, file_cfg) -> ScenarioSpec:
    preset = args.scenario or file_cfg.get("scenario") or "z1"
    return ScenarioSpec(
        name=preset, preset=preset, overrides=dict(file_cfg.get("scene", {})),
        estimator=args.estimator, bundle_path=args.bundle,
        positions="grid" if getattr(args, "resolution", None) and args.cmd == "eval" else "random",
        n=args.n or int(file_cfg.get("n", 200)),
        resolution=getattr(args, "resolution", None) or 0.1, seed=_seed(args, file_cfg),
        pso=dict(file_cfg.get("pso", {})), hybrid=dict(file_cfg.get("hybrid", {})))


def _bundle(args):
    return load_bundle(args.bundle) if args.bundle else None


def cmd_eval(args):
    file_cfg = _file_config(args)
    spec = _spec_from(args, file_cfg)
    out_dir = _out_dir(args)
    report = run_scenario(spec, bundle=_bundle(args), out_dir=out_dir, threads=args.threads or 1)
    outputs = [os.path.join(out_dir, f) for f in ("percentiles.csv", "latency.csv", "errors.csv",
                                                  "summary.json")]
    _emit({"subcommand": "eval", "spec": asdict(spec), "outputs": outputs,
           "percentiles_sha256": _sha256(outputs[0]), "summary": report.summary}, out_dir)
    return 0


def cmd_heatmap(args):
    t0 = time.perf_counter()
    file_cfg = _file_config(args)
    cfg, preset = _scene_from(args, file_cfg)
    scene = build_scene(cfg)
    bundle = _bundle(args)
    pso_cfg = replace(region_search_pso(), **file_cfg.get("pso", {}))
    est = make_estimator(args.estimator, scene, bundle, pso_cfg,
                         hybrid_config_from_dict(file_cfg.get("hybrid", {})))
    seed = _seed(args, file_cfg)
    rows = heatmap(scene, est, args.resolution, seed=seed, threads=args.threads or 1)
    out_dir = _out_dir(args)
    out = os.path.join(out_dir, "heatmap.csv")
    write_heatmap_csv(rows, out)
    _emit({"subcommand": "heatmap", "scenario": preset, "estimator": args.estimator,
           "resolution": args.resolution, "points": len(rows), "seed": seed, "outputs": [out],
           "sha256": _sha256(out), "elapsed_s": time.perf_counter() - t0}, out_dir)
    return 0


def cmd_locate(args):
    file_cfg = _file_config(args)
    extra = {"noise_power_sigma2": args.sigma2} if args.sigma2 is not None else {}
    cfg, preset = _scene_from(args, file_cfg, extra)
    scene = build_scene(cfg)
    seed = _seed(args, file_cfg)
    rng = np.random.default_rng(seed)
    phi0 = args.phi0 if args.phi0 is not None else rng.uniform(0, 2 * np.pi)
    truth = np.asarray(args.pos, dtype=float)
    meas, beta = simulate_measurements(scene, schedule_for(cfg), truth, phi0, rng)
    bundle = _bundle(args)
    wanted = [args.estimator] if args.estimator else ["pso", "lstm", "hybrid"]
    print(f"truth  x={truth[0]:.6f} y={truth[1]:.6f} phi0={phi0:.6f}")
    pso_cfg = replace(region_search_pso(), seed=seed, **file_cfg.get("pso", {}))
    for name in wanted:
        if name != "pso" and bundle is None:
            if args.estimator:
                raise ArtifactError(f"estimator {name!r} needs --bundle")
            print(f"{name:6s} skipped (no --bundle)")
            continue
        check_bundle(bundle, scene, name)
        if name == "pso":
            res = estimate_direct(meas.y, beta, scene, pso_cfg)
        elif name == "lstm":
            p, dt = predict(bundle, meas.y, beta, with_latency=True)
            res = EstimationResult(position=p, latency_s=dt)
        else:
            res = estimate_hybrid(meas.y, beta, scene, bundle,
                                  hybrid_config_from_dict(file_cfg.get("hybrid", {})))
        err_mm = float(np.linalg.norm(res.position - truth) * 1000)
        print(f"{name:6s} x={res.position[0]:.6f} y={res.position[1]:.6f} "
              f"error={err_mm:.4f} mm latency={res.latency_s * 1e3:.2f} ms")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="cap on worker/BLAS threads")
    common.add_argument("--out-dir", help="output root (default $RISLOC_OUT_DIR or ./risloc_out)")
    common.add_argument("--scenario", help="preset: z1, z3, z1_mp, z3_mp, desk, desk_mp, desk_z3")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="risloc", description="RIS-assisted NLOS localization workbench")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("scene", parents=[common], help="print the scene layout")

    g = sub.add_parser("generate", parents=[common], help="simulate a fingerprint dataset")
    g.add_argument("--n", type=int)
    g.add_argument("--out")

    t = sub.add_parser("train", parents=[common], help="train the BiLSTM regressor")
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--model", choices=("desk", "full"), default="desk")
    t.add_argument("--hidden", type=int)
    t.add_argument("--float64", action="store_true")
    t.add_argument("--out")

    for name, helptext in (("eval", "evaluate an estimator on a scenario"),
                           ("heatmap", "error heatmap over the UE region")):
        e = sub.add_parser(name, parents=[common], help=helptext)
        e.add_argument("--estimator", choices=("pso", "lstm", "hybrid"), default="pso")
        e.add_argument("--bundle")
        e.add_argument("--n", type=int)
        e.add_argument("--resolution", type=float, default=None if name == "eval" else 0.1)

    lo = sub.add_parser("locate", parents=[common], help="simulate one sample and localize it")
    lo.add_argument("--pos", type=float, nargs=2, required=True, metavar=("X", "Y"))
    lo.add_argument("--phi0", type=float)
    lo.add_argument("--sigma2", type=float, help="noise power in watts (overrides the scene)")
    lo.add_argument("--estimator", choices=("pso", "lstm", "hybrid"))
    lo.add_argument("--bundle")
    return p


COMMANDS = {"scene": cmd_scene, "generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "heatmap": cmd_heatmap, "locate": cmd_locate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _limit_threads(args.threads)
        return COMMANDS[args.cmd](args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, (DatasetFormatError, CheckpointError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (TrainingError, PsoError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
