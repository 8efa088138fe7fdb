"""Command-line entry point.

Subcommands: solve | entropy | rate | clt | compare.  Configs are JSON
documents mirroring ExperimentConfig field names; point-set files are
JSON arrays of coordinate arrays with optional weights.  Every run writes
a manifest alongside its outputs with the echoed config, seed, version
and timing, so that outputs are bit-reproducible from the manifest alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__
from .estimators import (
    entropy_estimate_ind,
    entropy_estimate_mg,
    entropy_estimate_paired,
)
from .experiments import (
    ExperimentConfig,
    compare_entropy_estimators,
    run_clt_experiment,
    run_rate_experiment,
)
from .measures import (
    DiscreteMeasure,
    GaussianMixture,
    NoiseModel,
    sample_mixture,
)
from .seeding import derive_seed
from .sinkhorn import CostSpec, NumericFailureError, solve
from .measures import convolve_with_noise

__all__ = ["run_cli", "main", "read_point_set", "write_point_set"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NOT_CONVERGED = 4


class ConfigError(ValueError):
    """Malformed config document or point-set file."""


def _fmt(x: float) -> str:
    """Lossless 17-significant-digit decimal formatting for CSV cells."""
    return format(float(x), ".17g")


def read_point_set(path: str) -> DiscreteMeasure:
    """Parse a point-set file: a JSON array of coordinate arrays, or an
    object {"points": [...], "weights": [...]} with optional weights."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read point set {path}: {exc}") from exc
    if isinstance(doc, dict):
        points = doc.get("points")
        weights = doc.get("weights")
    else:
        points, weights = doc, None
    if points is None:
        raise ConfigError(f"point set {path} has no points")
    pts = np.asarray(points, dtype=np.float64)
    try:
        if weights is None:
            return DiscreteMeasure.uniform(pts)
        return DiscreteMeasure(pts, np.asarray(weights, dtype=np.float64))
    except ValueError as exc:
        raise ConfigError(f"invalid point set {path}: {exc}") from exc


def write_point_set(measure: DiscreteMeasure, path: str) -> None:
    doc = {
        "points": measure.points.tolist(),
        "weights": measure.weights.tolist(),
    }
    _atomic_write_json(doc, path)


def _atomic_write_json(doc, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_csv(path: str, header: list[str], rows) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return f"v{__version__}"


def _write_manifest(out_dir, config_echo, root_seed, started, outputs, extra=None):
    doc = {
        "tool": "entot",
        "version": __version__,
        "build_id": _build_id(),
        "root_seed": root_seed,
        "config": config_echo,
        "duration_seconds": time.time() - started,
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    _atomic_write_json(doc, os.path.join(out_dir, "manifest.json"))


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _parse_mixture(doc) -> GaussianMixture:
    comps = doc.get("components")
    if not comps:
        raise ConfigError("mixture model needs a nonempty components list")
    try:
        return GaussianMixture(
            means=np.asarray([c["mean"] for c in comps], dtype=np.float64),
            variances=[c["variance"] for c in comps],
            weights=[c["weight"] for c in comps],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid mixture model: {exc}") from exc


def _parse_noise(doc) -> NoiseModel:
    try:
        return NoiseModel(sigma_g=float(doc["sigma_g"]), dim=int(doc["dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid noise model: {exc}") from exc


def _parse_experiment_config(doc: dict) -> ExperimentConfig:
    try:
        model = _parse_mixture(doc["model_P"])
    except KeyError as exc:
        raise ConfigError("config needs a model_P entry") from exc
    noise = _parse_noise(doc["noise"]) if doc.get("noise") else None
    kwargs = {}
    for key in (
        "epsilon",
        "reference",
        "tolerance",
        "max_iterations",
        "mc_draws",
        "quad_points",
        "quad_radius",
        "histogram_bins",
    ):
        if key in doc:
            kwargs[key] = doc[key]
    try:
        return ExperimentConfig(
            model_p=model,
            noise=noise,
            n_list=tuple(doc["n_list"]),
            reps=int(doc["reps"]),
            root_seed=int(doc["root_seed"]),
            dimension=int(doc.get("dimension", model.dim)),
            **kwargs,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def _cmd_solve(args) -> int:
    started = time.time()
    p = read_point_set(args.p)
    q = read_point_set(args.q)
    try:
        cost = CostSpec(args.eps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sol = solve(p, q, cost, args.tol, args.max_iterations)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "solution.json")
    _atomic_write_json(
        {
            "value": sol.value,
            "iterations": sol.iterations,
            "marginal_error": sol.marginal_error,
            "converged": sol.converged,
            "epsilon": args.eps,
            "potentials": {
                "f": sol.potentials.f.tolist(),
                "g": sol.potentials.g.tolist(),
            },
        },
        out_path,
    )
    config_echo = {"p": args.p, "q": args.q, "eps": args.eps, "tol": args.tol}
    _write_manifest(args.out, config_echo, None, started, [out_path])
    if args.strict and not sol.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _report_to_dict(report) -> dict:
    return {
        "estimate": report.estimate,
        "std_error": report.std_error,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "n": report.n,
        "m": report.m,
        "lambda": report.lam,
        "has_clt_guarantee": report.has_clt_guarantee,
        "diagnostics": report.diagnostics,
    }


def _cmd_entropy(args) -> int:
    started = time.time()
    doc = _load_json(args.config)
    variant = doc.get("variant")
    if variant not in ("ind", "paired", "mg"):
        raise ConfigError("entropy config needs variant: ind | paired | mg")
    if not doc.get("noise"):
        raise ConfigError("entropy config needs a noise model")
    model = _parse_mixture(doc.get("model_P") or {})
    noise = _parse_noise(doc["noise"])
    try:
        n = int(doc["n"])
        root_seed = int(doc["root_seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("entropy config needs integer n and root_seed") from exc
    tolerance = float(doc.get("tolerance", 1e-8))
    max_iterations = int(doc.get("max_iterations", 100_000))
    sample_p = sample_mixture(model, n, derive_seed(root_seed, n, 0, 0))
    if variant == "ind":
        m = int(doc.get("m", n))
        q_model = convolve_with_noise(model, noise)
        sample_q = sample_mixture(q_model, m, derive_seed(root_seed, n, 0, 1))
        report = entropy_estimate_ind(sample_p, sample_q, noise, tolerance, max_iterations)
    elif variant == "paired":
        report = entropy_estimate_paired(
            sample_p, noise, derive_seed(root_seed, n, 0, 2), tolerance, max_iterations
        )
    else:
        mc_draws = int(doc.get("mc_draws", 100_000))
        report = entropy_estimate_mg(
            sample_p, noise, mc_draws, derive_seed(root_seed, n, 0, 3)
        )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "report.json")
    _atomic_write_json(_report_to_dict(report), out_path)
    _write_manifest(args.out, doc, root_seed, started, [out_path])
    if args.strict and "marginal_error" in report.diagnostics:
        if report.diagnostics["marginal_error"] > tolerance:
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_rate(args) -> int:
    started = time.time()
    doc = _load_json(args.config)
    config = _parse_experiment_config(doc)
    result = run_rate_experiment(config)
    os.makedirs(args.out, exist_ok=True)
    rate_path = os.path.join(args.out, "rate.csv")
    _write_csv(
        rate_path,
        ["n", "rep", "estimate", "abs_error", "seed"],
        [
            [n, rep, _fmt(est), _fmt(err), seed]
            for n, rep, est, err, seed in result.per_rep
        ],
    )
    summary_path = os.path.join(args.out, "summary.csv")
    _write_csv(
        summary_path,
        ["n", "mean_abs_error", "sem"],
        [[row.n, _fmt(row.mean_abs_error), _fmt(row.sem)] for row in result.rows],
    )
    _write_manifest(
        args.out,
        doc,
        config.root_seed,
        started,
        [rate_path, summary_path],
        extra={
            "slope": result.slope if result.slope_defined else None,
            "intercept": result.intercept if result.slope_defined else None,
            "reference_value": result.reference_value,
        },
    )
    return EXIT_OK


def _cmd_clt(args) -> int:
    started = time.time()
    doc = _load_json(args.config)
    config = _parse_experiment_config(doc)
    result = run_clt_experiment(config)
    os.makedirs(args.out, exist_ok=True)
    fluct_path = os.path.join(args.out, "fluctuations.csv")
    _write_csv(
        fluct_path,
        ["rep", "estimate", "rescaled"],
        [
            [rep, _fmt(est), _fmt(res)]
            for rep, (est, res) in enumerate(zip(result.estimates, result.rescaled))
        ],
    )
    hist_path = os.path.join(args.out, "histogram.csv")
    _write_csv(
        hist_path,
        ["bin_low", "bin_high", "count"],
        [
            [_fmt(lo), _fmt(hi), int(c)]
            for lo, hi, c in zip(
                result.histogram_edges[:-1],
                result.histogram_edges[1:],
                result.histogram_counts,
            )
        ],
    )
    ks_path = os.path.join(args.out, "ks.json")
    _atomic_write_json(
        {
            "statistic": None if math.isnan(result.ks_statistic) else result.ks_statistic,
            "p_value": None if math.isnan(result.ks_p_value) else result.ks_p_value,
            "degenerate": result.degenerate,
            "n": result.n,
            "m": result.m,
            "plug_in_variance": result.plug_in_variance,
            "analytic_variance": result.analytic_variance,
        },
        ks_path,
    )
    _write_manifest(
        args.out, doc, config.root_seed, started, [fluct_path, hist_path, ks_path]
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    started = time.time()
    doc = _load_json(args.config)
    config = _parse_experiment_config(doc)
    result = compare_entropy_estimators(config)
    os.makedirs(args.out, exist_ok=True)
    compare_path = os.path.join(args.out, "compare.csv")
    _write_csv(
        compare_path,
        ["n", "rep", "estimator", "estimate", "abs_error", "seed"],
        [
            [n, rep, name, _fmt(est), _fmt(err), seed]
            for n, rep, name, est, err, seed in result.per_rep
        ],
    )
    summary_path = os.path.join(args.out, "compare_summary.csv")
    _write_csv(
        summary_path,
        ["n", "estimator", "mean_abs_error", "sem"],
        [[n, name, _fmt(m), _fmt(s)] for n, name, m, s in result.summary],
    )
    _write_manifest(
        args.out,
        doc,
        config.root_seed,
        started,
        [compare_path, summary_path],
        extra={"ground_truth": result.ground_truth},
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entot",
        description="Entropic optimal transport estimation and experiments",
    )
    parser.add_argument(
        "--strict",
        action="store_true",
        help="exit with code 4 when the solver does not converge",
    )
    sub = parser.add_subparsers(dest="command")

    p_solve = sub.add_parser("solve", help="solve one entropic OT problem")
    p_solve.add_argument("--p", required=True, help="point-set file for P")
    p_solve.add_argument("--q", required=True, help="point-set file for Q")
    p_solve.add_argument("--eps", type=float, required=True)
    p_solve.add_argument("--tol", type=float, default=1e-8)
    p_solve.add_argument("--max-iterations", type=int, default=100_000)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(fn=_cmd_solve)

    for name, fn in (
        ("entropy", _cmd_entropy),
        ("rate", _cmd_rate),
        ("clt", _cmd_clt),
        ("compare", _cmd_compare),
    ):
        p_cmd = sub.add_parser(name)
        p_cmd.add_argument("--config", required=True)
        p_cmd.add_argument("--out", required=True)
        p_cmd.set_defaults(fn=fn)
    return parser


def run_cli(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailureError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
