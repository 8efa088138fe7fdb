"""Monte Carlo experiment harness.

Rate-of-convergence curves against a quadrature (or closed-form) reference,
CLT fluctuation histograms with variance and normality checks, and the
three-way entropy estimator comparison.  Every repetition's random stream
is derived solely from (root_seed, n, rep_index, role), so result tables
are bit-identical regardless of the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .estimators import (
    asymptotic_variance_noise,
    entropic_cost_estimate,
    entropy_estimate_ind,
    entropy_estimate_mg,
    entropy_estimate_paired,
)
from .measures import (
    GaussianMixture,
    NoiseModel,
    convolve_with_noise,
    entropy_by_quadrature,
    quadrature_measure,
    sample_mixture,
)
from .seeding import derive_seed
from .sinkhorn import CostSpec, solve

__all__ = [
    "ExperimentConfig",
    "RateRow",
    "RateResult",
    "CltResult",
    "CompareResult",
    "run_rate_experiment",
    "run_clt_experiment",
    "compare_entropy_estimators",
    "fit_loglog_slope",
    "ks_test_normal",
]

# stream roles within one repetition
_ROLE_P = 0
_ROLE_Q = 1
_ROLE_PAIRED = 2
_ROLE_MG = 3

_REFERENCES = ("quadrature", "closed-form", "none")


@dataclass(frozen=True)
class ExperimentConfig:
    model_p: GaussianMixture
    n_list: tuple[int, ...]
    reps: int
    root_seed: int
    dimension: int
    noise: NoiseModel | None = None
    epsilon: float = 1.0
    reference: str = "quadrature"
    tolerance: float = 1e-6
    max_iterations: int = 100_000
    mc_draws: int = 20_000
    quad_points: int = 2000
    quad_radius: float = 8.0
    histogram_bins: int = 30

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if len(self.n_list) == 0 or any(n < 1 for n in self.n_list):
            raise ValueError("n_list must contain positive sample sizes")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be strictly increasing")
        if self.reps < 2:
            raise ValueError("reps must be >= 2")
        if self.dimension != self.model_p.dim:
            raise ValueError("dimension must match the mixture dimension")
        if self.noise is not None and self.noise.dim != self.dimension:
            raise ValueError("noise dimension must match the mixture dimension")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.reference not in _REFERENCES:
            raise ValueError(f"reference must be one of {_REFERENCES}")


def worker_count() -> int:
    env = os.environ.get("ENTOT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, tasks):
    """Deterministic parallel map: results in task order, any worker count."""
    workers = worker_count()
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(tasks) // (4 * workers))
        return list(pool.map(fn, tasks, chunksize=chunk))


def _q_law(config: ExperimentConfig) -> GaussianMixture:
    if config.noise is not None:
        return convolve_with_noise(config.model_p, config.noise)
    return config.model_p


def fit_loglog_slope(pairs) -> tuple[float, float]:
    """Ordinary least squares of log(value) on log(n)."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two (n, value) pairs")
    ns = np.array([p[0] for p in pairs], dtype=np.float64)
    vals = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.any(vals <= 0.0):
        raise ValueError("values must be positive for a log-log fit")
    slope, intercept = np.polyfit(np.log(ns), np.log(vals), 1)
    return float(slope), float(intercept)


def ks_test_normal(samples, mean: float, stddev: float) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test against N(mean, stddev^2).

    The p-value uses the asymptotic Kolmogorov distribution,
    2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2) with t = sqrt(N) D, truncated
    at 100 terms and clipped to [0, 1].
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    if n < 8:
        raise ValueError("need at least 8 samples")
    if not (stddev > 0.0):
        raise ValueError("stddev must be positive")
    cdf = norm.cdf((x - mean) / stddev)
    grid = np.arange(1, n + 1) / n
    stat = float(max((grid - cdf).max(), (cdf - (grid - 1.0 / n)).max()))
    t = math.sqrt(n) * stat
    k = np.arange(1, 101)
    p = 2.0 * float(np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * t**2)))
    return stat, float(min(max(p, 0.0), 1.0))


# ---------------------------------------------------------------------------
# rate experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateRow:
    n: int
    mean_abs_error: float
    sem: float
    reps: int


@dataclass(frozen=True)
class RateResult:
    rows: tuple[RateRow, ...]
    per_rep: tuple[tuple, ...]  # (n, rep, estimate, abs_error, seed)
    slope: float
    intercept: float
    slope_defined: bool
    reference_value: float


def _reference_cost(config: ExperimentConfig) -> float:
    """Population value S* of the entropic cost, for use as ground truth."""
    if config.reference == "quadrature":
        if config.dimension > 3:
            raise ValueError("quadrature reference requires d <= 3")
        p_ref = quadrature_measure(config.model_p, config.quad_points, config.quad_radius)
        q_ref = quadrature_measure(_q_law(config), config.quad_points, config.quad_radius)
        return solve(p_ref, q_ref, CostSpec(config.epsilon), 1e-9).value
    if config.reference == "closed-form":
        if config.noise is None or config.model_p.n_components != 1:
            raise ValueError(
                "closed-form reference needs a single-gaussian model with noise"
            )
        sigma2 = config.noise.sigma_g**2
        if abs(config.epsilon - sigma2) > 1e-12:
            raise ValueError("closed-form reference requires epsilon = sigma_g^2")
        d = config.dimension
        total_var = float(config.model_p.variances[0]) + sigma2
        h_q = 0.5 * d * math.log(2.0 * math.pi * math.e * total_var)
        return sigma2 * (h_q - config.noise.log_z_g)
    raise ValueError("rate experiment requires a resolvable reference")


def _rate_rep(task) -> tuple:
    config, n, rep = task
    seed_p = derive_seed(config.root_seed, n, rep, _ROLE_P)
    seed_q = derive_seed(config.root_seed, n, rep, _ROLE_Q)
    p_n = sample_mixture(config.model_p, n, seed_p)
    q_n = sample_mixture(_q_law(config), n, seed_q)
    sol = solve(p_n, q_n, CostSpec(config.epsilon), config.tolerance, config.max_iterations)
    return n, rep, sol.value, seed_p


def run_rate_experiment(config: ExperimentConfig) -> RateResult:
    """Mean absolute error of S(P_n, Q_n) against S* for each n, with slope fit."""
    s_star = _reference_cost(config)
    tasks = [(config, n, rep) for n in config.n_list for rep in range(config.reps)]
    results = _pmap(_rate_rep, tasks)
    per_rep = tuple(
        (n, rep, est, abs(est - s_star), seed) for n, rep, est, seed in results
    )
    rows = []
    for n in config.n_list:
        errs = np.array([r[3] for r in per_rep if r[0] == n])
        rows.append(
            RateRow(
                n=n,
                mean_abs_error=float(errs.mean()),
                sem=float(errs.std(ddof=1) / math.sqrt(len(errs))),
                reps=len(errs),
            )
        )
    mean_errors = [(row.n, row.mean_abs_error) for row in rows]
    slope_defined = all(v > 0.0 for _, v in mean_errors) and len(rows) >= 2
    if slope_defined:
        slope, intercept = fit_loglog_slope(mean_errors)
    else:
        slope, intercept = math.nan, math.nan
    return RateResult(
        rows=tuple(rows),
        per_rep=per_rep,
        slope=slope,
        intercept=intercept,
        slope_defined=slope_defined,
        reference_value=s_star,
    )


# ---------------------------------------------------------------------------
# CLT experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CltResult:
    n: int
    m: int
    estimates: np.ndarray
    rescaled: np.ndarray
    plug_in_variance: float
    analytic_variance: float | None
    ks_statistic: float
    ks_p_value: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    degenerate: bool


def _clt_rep(task) -> tuple[float, float]:
    config, n, rep = task
    seed_p = derive_seed(config.root_seed, n, rep, _ROLE_P)
    seed_q = derive_seed(config.root_seed, n, rep, _ROLE_Q)
    p_n = sample_mixture(config.model_p, n, seed_p)
    q_n = sample_mixture(_q_law(config), n, seed_q)
    if config.noise is not None:
        report = entropy_estimate_ind(
            p_n, q_n, config.noise, config.tolerance, config.max_iterations
        )
    else:
        report = entropic_cost_estimate(
            p_n, q_n, CostSpec(config.epsilon), config.tolerance, config.max_iterations
        )
    lam = report.lam
    plug_in = (1.0 - lam) * report.diagnostics["var_f"] + lam * report.diagnostics["var_g"]
    return report.estimate, plug_in


def run_clt_experiment(
    config: ExperimentConfig, force_identical_seeds: bool = False
) -> CltResult:
    """Rescaled centered fluctuations of the plug-in estimator at fixed n = m.

    Uses the largest entry of n_list.  The expectation E S(P_n, Q_m) is
    unobservable and replaced by the across-repetitions mean.
    force_identical_seeds collapses every repetition onto rep index 0
    (degenerate-input handling check).
    """
    n = config.n_list[-1]
    m = n
    tasks = [
        (config, n, 0 if force_identical_seeds else rep) for rep in range(config.reps)
    ]
    results = _pmap(_clt_rep, tasks)
    estimates = np.array([r[0] for r in results])
    plug_in = float(np.mean([r[1] for r in results]))
    rescaled = math.sqrt(m * n / (m + n)) * (estimates - estimates.mean())
    analytic = None
    if config.noise is not None and config.dimension <= 3 and config.reference != "none":
        analytic = asymptotic_variance_noise(
            config.model_p,
            config.noise,
            n / (n + m),
            config.quad_points,
            config.quad_radius,
        )
    v_ref = analytic if analytic is not None else plug_in
    degenerate = float(rescaled.std()) == 0.0 or v_ref <= 0.0
    if degenerate:
        stat, p = math.nan, math.nan
    else:
        stat, p = ks_test_normal(rescaled, 0.0, math.sqrt(v_ref))
    counts, edges = np.histogram(rescaled, bins=config.histogram_bins)
    return CltResult(
        n=n,
        m=m,
        estimates=estimates,
        rescaled=rescaled,
        plug_in_variance=plug_in,
        analytic_variance=analytic,
        ks_statistic=stat,
        ks_p_value=p,
        histogram_edges=edges,
        histogram_counts=counts,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# estimator comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompareResult:
    ground_truth: float
    per_rep: tuple[tuple, ...]  # (n, rep, estimator, estimate, abs_error, seed)
    summary: tuple[tuple, ...]  # (n, estimator, mean_abs_error, sem)


_ESTIMATOR_NAMES = ("ind", "paired", "mg")


def _compare_rep(task) -> list[tuple]:
    config, n, rep = task
    seed_p = derive_seed(config.root_seed, n, rep, _ROLE_P)
    p_n = sample_mixture(config.model_p, n, seed_p)
    q_n = sample_mixture(
        _q_law(config), n, derive_seed(config.root_seed, n, rep, _ROLE_Q)
    )
    reports = {
        "ind": entropy_estimate_ind(
            p_n, q_n, config.noise, config.tolerance, config.max_iterations
        ),
        "paired": entropy_estimate_paired(
            p_n,
            config.noise,
            derive_seed(config.root_seed, n, rep, _ROLE_PAIRED),
            config.tolerance,
            config.max_iterations,
        ),
        "mg": entropy_estimate_mg(
            p_n,
            config.noise,
            config.mc_draws,
            derive_seed(config.root_seed, n, rep, _ROLE_MG),
        ),
    }
    return [(n, rep, name, reports[name].estimate, seed_p) for name in _ESTIMATOR_NAMES]


def compare_entropy_estimators(config: ExperimentConfig) -> CompareResult:
    """Run the three entropy estimators on shared P-samples per repetition."""
    if config.noise is None:
        raise ValueError("estimator comparison requires a noise model")
    if config.dimension > 3:
        raise ValueError("quadrature ground truth requires d <= 3")
    truth = entropy_by_quadrature(
        _q_law(config), config.quad_points, config.quad_radius
    )
    tasks = [(config, n, rep) for n in config.n_list for rep in range(config.reps)]
    nested = _pmap(_compare_rep, tasks)
    per_rep = tuple(
        (n, rep, name, est, abs(est - truth), seed)
        for rows in nested
        for n, rep, name, est, seed in rows
    )
    summary = []
    for n in config.n_list:
        for name in _ESTIMATOR_NAMES:
            errs = np.array(
                [r[4] for r in per_rep if r[0] == n and r[2] == name]
            )
            summary.append(
                (
                    n,
                    name,
                    float(errs.mean()),
                    float(errs.std(ddof=1) / math.sqrt(len(errs))),
                )
            )
    return CompareResult(
        ground_truth=truth, per_rep=per_rep, summary=tuple(summary)
    )
