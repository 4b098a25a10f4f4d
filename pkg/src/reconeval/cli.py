"""Command-line entry point: ``reconeval <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import PipelineConfig, load_config
from .core.io import load_image, load_pointcloud
from .errors import ConfigError, ReconEvalError
from .features import PreprocessConfig, detect_features, preprocess, ransac_sweep, write_sweep_csv
from .pipeline import (
    DEFAULT_LADDER,
    AnomalySpec,
    StageError,
    dump_views,
    render_views,
    run_detect_anomaly,
    run_evaluate,
    run_synth_bench,
    write_scene,
)
from .report import dumps, validate_report
from .synth import DegradeSpec, SceneSpec

log = logging.getLogger("reconeval")


def _parse_set(items: Sequence[str] | None) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(item, "expected key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value
    return out


def _config(args, flag_overrides: dict) -> PipelineConfig:
    overrides = _parse_set(getattr(args, "set", None))
    overrides.update({k: v for k, v in flag_overrides.items() if v is not None})
    return load_config(getattr(args, "config", None), overrides)


def _write_report(report: dict, out: str | None) -> None:
    validate_report(report)
    text = dumps(report)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key (repeatable)")


def cmd_evaluate(args) -> int:
    config = _config(args, {
        "paths.reference": args.reference,
        "paths.reconstructed": args.reconstructed,
        "paths.images": args.images,
        "paths.manifest": args.manifest,
        "render.dump_dir": args.dump_views,
    })
    _write_report(run_evaluate(config), args.out)
    return 0


def cmd_detect(args) -> int:
    config = _config(args, {
        "paths.reference": args.reference,
        "paths.baseline": args.baseline,
        "paths.anomalous": args.anomalous,
        "anomaly.threshold": args.threshold,
        "anomaly.dump_ply": args.dump_ply,
    })
    report = run_detect_anomaly(config)
    _write_report(report, args.out)
    return 0


def _scene(args) -> SceneSpec:
    return SceneSpec(seed=args.seed, surface_sample_density=args.density)


def cmd_synth(args) -> int:
    spec = DegradeSpec(args.noise, args.dropout, args.outliers, args.outlier_scale, args.seed + 1)
    anomaly = AnomalySpec(protrusion=args.protrusion) if args.anomaly else None
    written = write_scene(args.out, _scene(args), spec, anomaly)
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0


def cmd_bench(args) -> int:
    config = _config(args, {})
    if args.measure_latency is not None:
        config.report.measure_latency = args.measure_latency
    ladder = DEFAULT_LADDER
    if args.sigmas:
        ladder = tuple(DegradeSpec(noise_sigma=s, seed=11 + k) for k, s in enumerate(args.sigmas))
    anomaly = None if args.no_anomaly else AnomalySpec(protrusion=args.protrusion)
    rows, text, reports = run_synth_bench(_scene(args), ladder, anomaly, config, args.out)
    for rep in reports.values():
        validate_report(rep)
    sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    a, b = load_image(args.image_a), load_image(args.image_b)
    if args.preprocess:
        a, b = preprocess(a, PreprocessConfig()), preprocess(b, PreprocessConfig())
    fa, fb = detect_features(a), detect_features(b)
    rows = ransac_sweep(fa, fb, args.budgets, repeats=args.repeats, base_seed=args.seed, inlier_px=args.inlier_px)
    write_sweep_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_render(args) -> int:
    config = _config(args, {})
    reference = load_pointcloud(args.reference)
    other = load_pointcloud(args.reconstructed) if args.reconstructed else reference
    pairs = render_views(reference, other, config)
    dump_views(pairs, args.out)
    print(f"wrote {2 * len(pairs)} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reconeval", description="Evaluate 3D reconstructions against a reference point cloud.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="align a reconstruction and compute all metrics")
    p.add_argument("--reference")
    p.add_argument("--reconstructed")
    p.add_argument("--images", help="directory holding the captured images")
    p.add_argument("--manifest", help="CSV with path,timestamp,yaw[,x,y,z]")
    p.add_argument("--out", help="report path (stdout if omitted)")
    p.add_argument("--dump-views", metavar="DIR", help="also write the rendered view pairs as PNG")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect-anomaly", help="compare baseline and anomalous reconstructions")
    p.add_argument("--reference")
    p.add_argument("--baseline")
    p.add_argument("--anomalous")
    p.add_argument("--threshold", type=float)
    p.add_argument("--dump-ply", metavar="PATH", help="write the deviating points as PLY")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="write a synthetic reference and degraded reconstruction")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=35_000.0, help="surface samples per square metre")
    p.add_argument("--noise", type=float, default=0.002)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--outlier-scale", type=float, default=0.0)
    p.add_argument("--anomaly", action="store_true", help="also write an anomalous reconstruction")
    p.add_argument("--protrusion", type=float, default=0.04)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="run the synthetic degrade ladder with and without anomaly")
    p.add_argument("--out", help="directory for bench.csv and per-run reports")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=35_000.0)
    p.add_argument("--sigmas", type=float, nargs="+")
    p.add_argument("--protrusion", type=float, default=0.04)
    p.add_argument("--no-anomaly", action="store_true")
    lat = p.add_mutually_exclusive_group()
    lat.add_argument("--latency", dest="measure_latency", action="store_true", default=None)
    lat.add_argument("--no-latency", dest="measure_latency", action="store_false")
    _common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-ransac", help="inlier count and time versus RANSAC budget")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--budgets", type=int, nargs="+", default=[10, 100, 1000])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inlier-px", type=float, default=3.0)
    p.add_argument("--preprocess", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render-views", help="render the virtual camera rig to PNG")
    p.add_argument("--reference", required=True)
    p.add_argument("--reconstructed")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ReconEvalError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
