"""Command-line front end: ``shapelr {filter,shapes,run,synth}``.

Exit codes: 0 success, 2 input/I-O error (including bad flags), 3 validation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _kernels
from . import export
from .config import ConfigError, experiment_config, has_synth, parse_config_text, synthetic_spec
from .dataset import (
    DatasetError,
    mad_outlier_filter,
    read_landmark_csv,
    serialize_landmark_table,
    write_landmark_csv,
)
from .harness import ExperimentError, prepare, run_experiment, speaker_level_correlations
from .shapes import ConvergenceWarning, RankError, fit_pca, procrustes_align, tangent_coordinates
from .synth import generate_synthetic

EXIT_OK, EXIT_INPUT, EXIT_VALIDATION = 0, 2, 3


class InputError(Exception):
    pass


class ValidationError(Exception):
    pass


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    return {
        "shapelr": __version__,
        "kernels": _kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


class _Outputs:
    """Tracks written files so a failed command can remove its partial outputs."""

    def __init__(self):
        self.paths = []
        self.dirs = []

    def mkdir(self, d):
        d = Path(d)
        if not d.exists():
            d.mkdir(parents=True)
            self.dirs.append(d)
        return d

    def write(self, path, text):
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.paths.append(path)
        return str(path)

    def rollback(self):
        for p in self.paths:
            p.unlink(missing_ok=True)
        for d in reversed(self.dirs):
            try:
                d.rmdir()
            except OSError:
                pass


def _read_dataset(path):
    try:
        return read_landmark_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except DatasetError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_filter(args, out: _Outputs):
    ds = _read_dataset(args.input)
    if not args.threshold > 0:
        raise ValidationError("--threshold must be positive")
    try:
        kept, report = mad_outlier_filter(ds, args.threshold)
    except DatasetError as exc:
        raise ValidationError(str(exc)) from None
    output = Path(args.output)
    out.write(output, serialize_landmark_table(kept))
    report_path = Path(args.report) if args.report else output.with_suffix(".report.json")
    out.write(report_path, json.dumps(report.to_json_dict(), indent=2) + "\n")
    out.write(output.with_suffix(".manifest.json"), _manifest(
        "filter", {"threshold": args.threshold}, args.input, None,
        {"filtered": str(output), "report": str(report_path)}, {},
    ))
    print(f"removed {len(report.removed)}/{report.n_total} ({100 * report.fraction:.1f}%)")


def cmd_shapes(args, out: _Outputs):
    ds = _read_dataset(args.input)
    timings = {}
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        try:
            aligned = procrustes_align(ds.configs, args.mode)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        timings["align"] = time.perf_counter() - t0
        tangent = tangent_coordinates(aligned)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    t0 = time.perf_counter()
    try:
        pca = fit_pca(tangent, args.q, aligned.mean_shape.reshape(-1))
    except RankError as exc:
        raise ValidationError(str(exc)) from None
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    timings["pca"] = time.perf_counter() - t0
    d = out.mkdir(args.output)
    files = {
        "aligned": out.write(d / "aligned.csv", export.aligned_csv(ds.trials, aligned)),
        "loadings": out.write(d / "loadings.csv", export.loadings_csv(pca)),
        "scores": out.write(d / "pc_scores.csv", export.pc_scores_csv(ds.trials, pca.scores)),
        "explained": out.write(d / "explained_variance.csv", export.explained_csv(pca)),
        "effects": out.write(d / "effect_shapes.csv", export.effect_shapes_csv(pca)),
    }
    from .harness import export_speaker_mean_shapes

    files["speaker_means"] = out.write(
        d / "speaker_mean_shapes.csv", export_speaker_mean_shapes(aligned, ds.speaker_labels)
    )
    if len(ds.speakers) >= 3:
        files["correlations"] = out.write(
            d / "speaker_correlations.csv",
            export.correlations_csv(speaker_level_correlations(pca.scores, ds.speaker_labels)),
        )
    extra = {"converged": aligned.converged, "iterations": aligned.iterations}
    out.write(d / "manifest.json", _manifest(
        "shapes", {"mode": aligned.mode, "q": args.q}, args.input, None, files, timings, extra))
    print(f"aligned {len(ds)} trials ({aligned.mode}, {aligned.iterations} iterations); "
          f"PC1-{args.q} explain {100 * pca.explained_ratio.sum():.1f}% of variance")


def _load_run_config(path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    if p.suffix == ".json":
        try:
            cfg = json.loads(text)["config"]
        except (ValueError, KeyError) as exc:
            raise InputError(f"{path}: not a run manifest ({exc})") from None
        if not isinstance(cfg, dict):
            raise InputError(f"{path}: manifest config is not a mapping")
        return {k: str(v) for k, v in cfg.items()}, p.parent
    try:
        return parse_config_text(text), p.parent
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None


def cmd_run(args, out: _Outputs):
    cfg, base = _load_run_config(args.config)
    if args.seed is not None:
        cfg["experiment.seed"] = str(args.seed)
    if args.mode is not None:
        cfg["experiment.mode"] = args.mode
    if args.q is not None:
        cfg["experiment.q"] = str(args.q)
    if args.threshold is not None:
        cfg["experiment.mad_threshold"] = str(args.threshold)
    try:
        ecfg = experiment_config(cfg)
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None

    input_path = cfg.get("experiment.input")
    if input_path:
        input_path = str((base / input_path).resolve()) if not os.path.isabs(input_path) else input_path
        cfg["experiment.input"] = input_path
        ds = _read_dataset(input_path)
    elif has_synth(cfg):
        try:
            ds = generate_synthetic(synthetic_spec(cfg))
        except (ConfigError, ValueError) as exc:
            raise ValidationError(str(exc)) from None
    else:
        raise ValidationError("config names neither experiment.input nor synth.* parameters")

    output = args.output or cfg.get("experiment.output")
    if not output:
        raise ValidationError("no output directory (experiment.output or --output)")
    if not os.path.isabs(output) and not args.output:
        output = str((base / output).resolve())
    cfg["experiment.output"] = output

    try:
        prep = prepare(ds, ecfg)
        results = run_experiment(ds, ecfg, prep)
    except ExperimentError as exc:
        raise ValidationError(str(exc)) from None

    d = out.mkdir(output)
    files = {
        "metrics": out.write(d / "metrics.csv", export.metrics_csv(results)),
        "scores": out.write(d / "scores.csv", export.scores_csv(results)),
        "tippett": out.write(d / "tippett.csv", export.tippett_csv(results)),
        "metrics_json": out.write(d / "metrics.json", json.dumps(
            {r.label: r.metrics.to_json_dict() for r in results}, indent=2) + "\n"),
    }
    if prep.removal is not None:
        files["removal_report"] = out.write(
            d / "removal_report.json", json.dumps(prep.removal.to_json_dict(), indent=2) + "\n")
    extra = {
        "experiment": ecfg.as_dict(),
        "converged": prep.aligned.converged,
        "explained_ratio": [float(v) for v in prep.pca.explained_ratio],
        "n_speakers": len(prep.speakers),
        "dataset_sha256": hashlib.sha256(serialize_landmark_table(ds).encode()).hexdigest(),
    }
    out.write(d / "manifest.json", _manifest(
        "run", cfg, input_path, ecfg.seed, files, prep.timings, extra))
    width = max(len(r.label) for r in results)
    for r in results:
        print(f"{r.label:<{width}}  EER {r.metrics.eer_percent:5.1f}%  Cllr {r.metrics.cllr:.3f}")


def cmd_synth(args, out: _Outputs):
    try:
        cfg = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None
    if args.seed is not None:
        cfg["synth.seed"] = str(args.seed)
    try:
        spec = synthetic_spec(cfg)
        ds = generate_synthetic(spec)
    except (ConfigError, ValueError) as exc:
        raise ValidationError(str(exc)) from None
    output = Path(args.output)
    out.write(output, serialize_landmark_table(ds))
    out.write(output.with_suffix(".manifest.json"), _manifest(
        "synth", cfg, args.config, spec.seed, {"dataset": str(output)}, {}))
    print(f"wrote {len(ds)} trials ({spec.m} speakers x {spec.n}) to {output}")


def _manifest(command, config, input_path, seed, outputs, timings, extra=None) -> str:
    doc = {
        "command": command,
        "config": config,
        "input": str(input_path) if input_path else None,
        "input_sha256": _digest(input_path) if input_path else None,
        "seed": seed,
        "versions": _versions(),
        "timings_s": timings,
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, default=str) + "\n"


def build_parser():
    parser = argparse.ArgumentParser(prog="shapelr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="remove landmark-tracking outliers (MAD rule)")
    p.add_argument("--input", required=True, help="landmark CSV")
    p.add_argument("--output", required=True, help="filtered CSV to write")
    p.add_argument("--threshold", type=float, default=3.5, help="MAD multiple (default 3.5)")
    p.add_argument("--report", help="removal report JSON (default: <output>.report.json)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("shapes", help="Procrustes alignment, tangent PCA and effect shapes")
    p.add_argument("--input", required=True, help="landmark CSV (already filtered)")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--mode", choices=["size-and-shape", "shape"], default="size-and-shape")
    p.add_argument("--q", type=int, default=3, help="number of components (default 3)")
    p.set_defaults(func=cmd_shapes)

    p = sub.add_parser("run", help="cross-validated LR experiment over PC combinations")
    p.add_argument("--config", required=True, help="key = value config or a run manifest JSON")
    p.add_argument("--output", help="output directory (overrides experiment.output)")
    p.add_argument("--mode", choices=["size-and-shape", "shape"])
    p.add_argument("--seed", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--threshold", type=float, help="MAD multiple for the filter stage")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic landmark dataset")
    p.add_argument("--config", required=True, help="key = value file with synth.* keys")
    p.add_argument("--output", required=True, help="CSV to write")
    p.add_argument("--seed", type=int, help="override synth.seed")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = _Outputs()
    try:
        args.func(args, out)
    except InputError as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationError as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BaseException:
        out.rollback()
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
