"""Command line: ``lio run``, ``lio simulate``, ``lio evaluate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from .config import Config, ConfigError
from .dataset_io import DataError, DatasetManifest, load_imu, write_trajectory
from .metrics import DEFAULT_SEGMENTS, MetricError, ate, read_tum, rpe

log = logging.getLogger("lio")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


def setup_logging():
    level = LOG_LEVELS.get(os.environ.get("LIO_LOG", "warn").strip().lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run_dataset(data_dir, config: Config):
    """Run odometry over a dataset directory; returns ``(odometry, seconds_per_scan)``."""
    from .odometry import Odometry

    manifest = DatasetManifest.load(data_dir)
    imu = load_imu(manifest.imu_file)
    odo = Odometry(config, manifest.extrinsics)
    odo.add_imu(imu)
    n = 0
    t0 = time.perf_counter()
    for cloud, start, end in manifest.iter_scans():
        odo.process_scan(cloud, end, t_start=start)
        n += 1
    elapsed = time.perf_counter() - t0
    return odo, (elapsed / n if n else 0.0)


def cmd_run(args) -> int:
    config = Config.from_file(args.config) if args.config else Config()
    if args.no_double_downsample:
        config.double_downsample = False
    if args.no_adaptive_regularization:
        config.adaptive_regularization = False
    if args.no_imu_averaging:
        config.average_imu = False
    if args.no_init:
        config.run_initialization = False
    odo, per_scan = run_dataset(args.data_dir, config)
    write_trajectory(odo.trajectory, args.output)
    log.info("%d scans, %.1f ms per scan", len(odo.trajectory), 1e3 * per_scan)
    if odo.warnings:
        log.warning("warnings: %s", odo.warnings)
    print(f"wrote {len(odo.trajectory)} poses to {args.output}")
    return 0


def cmd_simulate(args) -> int:
    from .sim import SimSpec, simulate_dataset, write_dataset

    spec = SimSpec.from_file(args.profile_file) if args.profile_file else SimSpec()
    if args.profile:
        spec.profile = args.profile
    if args.seed is not None:
        spec.seed = args.seed
    if args.duration is not None:
        spec.duration = args.duration
    if args.accel_noise_std is not None:
        spec.accel_noise_std = args.accel_noise_std
    if args.gyro_noise_std is not None:
        spec.gyro_noise_std = args.gyro_noise_std
    try:
        ds = simulate_dataset(spec)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = write_dataset(ds, args.output_dir, spec)
    print(f"wrote {len(ds.scans)} scans and {len(ds.imu)} IMU samples to {out}")
    return 0


def _parse_segments(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad segment list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("segments must be positive lengths")
    return vals


def cmd_evaluate(args) -> int:
    try:
        est = read_tum(args.estimate)
        ref = read_tum(args.reference)
    except OSError as e:
        raise DataError(str(e)) from e
    a = ate(est, ref)
    r = rpe(est, ref, args.segments)
    seg = ",".join(f"{s:g}" for s in args.segments)
    print("# ATE: position RMSE after SE(3) alignment (no scale), nearest-stamp pairs within 0.05 s")
    print(f"# RPE: mean translational error over segments {seg} m, percent")
    print(f"ATE {a:.3f} m")
    print("RPE n.a." if r is None else f"RPE {r:.2f} %")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write("metric,value\n")
            f.write(f"ate_m,{a!r}\n")
            f.write(f"rpe_percent,{'n.a.' if r is None else repr(r)}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lio", description="LiDAR-inertial odometry tools")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run odometry over a dataset directory")
    r.add_argument("--data-dir", required=True)
    r.add_argument("--config")
    r.add_argument("--output", default="trajectory.tum")
    r.add_argument("--no-double-downsample", action="store_true")
    r.add_argument("--no-adaptive-regularization", action="store_true")
    r.add_argument("--no-imu-averaging", action="store_true")
    r.add_argument("--no-init", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--profile", choices=["stationary", "constant_velocity", "figure8", "aggressive"])
    s.add_argument("--profile-file")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float)
    s.add_argument("--accel-noise-std", type=float)
    s.add_argument("--gyro-noise-std", type=float)
    s.add_argument("--output-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="ATE / RPE between two TUM trajectories")
    e.add_argument("estimate")
    e.add_argument("reference")
    e.add_argument("--segments", type=_parse_segments, default=list(DEFAULT_SEGMENTS))
    e.add_argument("--csv")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except (DataError, ConfigError, MetricError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
