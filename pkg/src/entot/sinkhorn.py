"""Entropic optimal transport between weighted discrete measures.

Log-domain stabilized Sinkhorn solver for the halved squared-euclidean
cost, dual/primal value computation, out-of-sample potential extension,
a brute-force oracle for 2x2 uniform instances, and potential-envelope
diagnostics based on the subgaussian variance proxy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .measures import DiscreteMeasure, subgaussian_proxy

__all__ = [
    "CostSpec",
    "DualPotentials",
    "SinkhornSolution",
    "NumericFailureError",
    "solve",
    "extend_potential",
    "primal_value",
    "brute_force_value_2x2",
    "potential_bound_check",
]


class NumericFailureError(ArithmeticError):
    """NaN or overflow encountered while evaluating the cost or the kernel."""


@dataclass(frozen=True)
class CostSpec:
    """Cost c(x, y) = 0.5 ||x - y||^2 with entropic regularization epsilon."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0.0) or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be a positive finite real")


@dataclass(frozen=True)
class DualPotentials:
    """Dual potential vectors on the support points of P (f) and Q (g)."""

    f: np.ndarray
    g: np.ndarray
    epsilon: float

    def __post_init__(self):
        f = np.asarray(self.f, dtype=np.float64).ravel()
        g = np.asarray(self.g, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError("potential entries must be finite")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class SinkhornSolution:
    """Converged (or truncated) solver state with diagnostics."""

    potentials: DualPotentials
    value: float
    iterations: int
    marginal_error: float
    converged: bool


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise halved squared-euclidean costs, shape (n, m)."""
    c = 0.5 * cdist(x, y, "sqeuclidean")
    if not np.all(np.isfinite(c)):
        raise NumericFailureError("cost matrix overflowed to non-finite values")
    return c


# absorb the diagonal scalings into (f, g) before they reach this magnitude
_SCALING_CAP = 1e80
# internal stopping factor: stop well below the requested tolerance so the
# recomputed full marginal error (rows + columns) stays under it
_STOP_FACTOR = 0.1


def _log_domain_refresh(C, logw, logv, eps, f, g):
    """One full log-sum-exp double update; always finite."""
    f = -eps * logsumexp((g[None, :] - C) / eps + logv[None, :], axis=1)
    g = -eps * logsumexp((f[:, None] - C) / eps + logw[:, None], axis=0)
    return f, g


def _build_kernel(C, f, g, eps, out):
    """out = exp((f_i + g_j - C_ij) / eps), built in place."""
    np.subtract(f[:, None], C, out=out)
    np.add(out, g[None, :], out=out)
    if eps != 1.0:
        np.divide(out, eps, out=out)
    np.exp(out, out=out)
    return out


def _scaling_loop(C, w, v, logw, logv, eps, tol, max_iter, f, g):
    """Stabilized Sinkhorn: kernel-form scaling steps, log-domain absorption.

    The state is (f, g, a, b) with plan pi = diag(w a) K diag(v b) and
    K = exp((f_i + g_j - C_ij) / eps).  Row marginals are exact after each
    a-update; the convergence measure is the L1 column deviation.
    """
    n, m = C.shape
    buf = np.empty_like(C)
    K = _build_kernel(C, f, g, eps, buf)
    a = np.ones(n)
    b = np.ones(m)
    it = 0
    stop = _STOP_FACTOR * tol
    while it < max_iter:
        it += 1
        Kvb = K @ (v * b)
        ok = np.all(Kvb > 0.0) and np.all(np.isfinite(Kvb))
        if ok:
            a = 1.0 / Kvb
            t = K.T @ (w * a)
            ok = np.all(t > 0.0) and np.all(np.isfinite(t))
        if not ok:
            # kernel under/overflow: recompute the potentials stably
            f, g = _log_domain_refresh(C, logw, logv, eps, f, g)
            K = _build_kernel(C, f, g, eps, buf)
            a[:] = 1.0
            b[:] = 1.0
            continue
        err = float(np.abs(v * (b * t - 1.0)).sum())
        if err <= stop:
            f = f + eps * np.log(a)
            g = g + eps * np.log(b)
            return f, g, it, err, True
        b = 1.0 / t
        if (
            a.max() > _SCALING_CAP
            or b.max() > _SCALING_CAP
            or a.min() < 1.0 / _SCALING_CAP
            or b.min() < 1.0 / _SCALING_CAP
        ):
            f = f + eps * np.log(a)
            g = g + eps * np.log(b)
            K = _build_kernel(C, f, g, eps, buf)
            a[:] = 1.0
            b[:] = 1.0
    f = f + eps * np.log(a)
    g = g + eps * np.log(b)
    return f, g, it, np.inf, False


def _plan_pass(C, w, v, f, g, eps, need_objective=True, block=1024):
    """Row-blocked pass over the implied plan pi_ij = w_i v_j e^{(f+g-C)/eps}.

    Returns (total_mass, row_sums, col_sums, transport_cost, entropy_term)
    where entropy_term = sum pi log(pi / (w v)) with 0 log 0 := 0.  The two
    objective sums are skipped when need_objective is false.
    """
    n, m = C.shape
    rows = np.empty(n)
    cols = np.zeros(m)
    cost_sum = 0.0
    ent_sum = 0.0
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        M = (f[lo:hi, None] + g[None, :] - C[lo:hi]) / eps
        pi = np.exp(M)
        pi *= w[lo:hi, None] * v[None, :]
        rows[lo:hi] = pi.sum(axis=1)
        cols += pi.sum(axis=0)
        if need_objective:
            cost_sum += float((pi * C[lo:hi]).sum())
            ent_sum += float((pi * M).sum())
    if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(cols))):
        raise NumericFailureError("transport plan overflowed to non-finite values")
    return float(rows.sum()), rows, cols, cost_sum, ent_sum


def _subsampled_median(C: np.ndarray, cap: int = 1 << 17) -> float:
    flat = C.ravel()
    if flat.size <= cap:
        return float(np.median(flat))
    step = flat.size // cap
    return float(np.median(flat[:: step]))


def solve(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    cost: CostSpec,
    tolerance: float = 1e-8,
    max_iterations: int = 100_000,
) -> SinkhornSolution:
    """Run Sinkhorn iterations until the L1 marginal error drops below tolerance.

    The dual value returned is
        sum w_i f_i + sum v_j g_j - eps (sum_ij w_i v_j e^{(f_i+g_j-c_ij)/eps} - 1),
    and the potentials are normalized to equal weighted means.  On
    non-convergence within max_iterations the solution is returned with
    converged=False; the caller decides what to do with it.
    """
    if P.dim != Q.dim:
        raise ValueError("P and Q must share the same dimension")
    if not (tolerance > 0.0):
        raise ValueError("tolerance must be positive")
    eps = cost.epsilon
    C = cost_matrix(P.points, Q.points)
    w, v = P.weights, Q.weights
    logw, logv = np.log(w), np.log(v)
    f = np.zeros(P.n)
    g = np.zeros(Q.n)

    total_it = 0
    # epsilon-scaling warm start for small regularization
    med = _subsampled_median(C)
    if eps < 0.05 * med and max_iterations > 10:
        warm_tol = max(tolerance, 1e-4)
        warm_cap = max(1, max_iterations // 10)
        for stage_eps in np.geomspace(10.0 * eps, eps, 5)[:-1]:
            f, g, it, _, _ = _scaling_loop(
                C, w, v, logw, logv, stage_eps, warm_tol, warm_cap, f, g
            )
            total_it += it

    f, g, it, _, loop_converged = _scaling_loop(
        C, w, v, logw, logv, eps, tolerance, max_iterations - total_it, f, g
    )
    total_it += it

    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericFailureError("potentials diverged to non-finite values")

    # normalize to equal weighted means (gauge fixing; plan unchanged)
    shift = 0.5 * (float(w @ f) - float(v @ g))
    f = f - shift
    g = g + shift

    total, rows, cols, _, _ = _plan_pass(C, w, v, f, g, eps, need_objective=False)
    marginal_error = float(np.abs(rows - w).sum() + np.abs(cols - v).sum())
    value = float(w @ f) + float(v @ g) - eps * (total - 1.0)
    converged = loop_converged and marginal_error <= tolerance
    return SinkhornSolution(
        potentials=DualPotentials(f=f, g=g, epsilon=eps),
        value=value,
        iterations=total_it,
        marginal_error=marginal_error,
        converged=converged,
    )


def extend_potential(
    potentials_on_support: np.ndarray,
    support: DiscreteMeasure,
    x: np.ndarray,
    cost: CostSpec,
) -> float:
    """Smooth out-of-sample extension of the first potential.

    f(x) = -eps log sum_j v_j exp((g_j - c(x, y_j)) / eps).  Evaluated at a
    support point of a converged solution this reproduces that point's
    potential up to the solver tolerance.
    """
    g = np.asarray(potentials_on_support, dtype=np.float64).ravel()
    if support.n == 0 or g.shape[0] != support.n:
        raise ValueError("potential vector must match a nonempty support")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != support.dim:
        raise ValueError("x has wrong dimension")
    eps = cost.epsilon
    c = 0.5 * np.einsum("nd,nd->n", support.points - x, support.points - x)
    return float(-eps * logsumexp((g - c) / eps + np.log(support.weights)))


def primal_value(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    potentials: DualPotentials,
    cost: CostSpec,
) -> float:
    """Primal objective of the plan implied by the potentials.

    Materializes pi_ij = w_i v_j e^{(f_i+g_j-c_ij)/eps} row block by row
    block and returns sum pi c + eps sum pi log(pi / (w v)).
    """
    if potentials.f.shape[0] != P.n or potentials.g.shape[0] != Q.n:
        raise ValueError("potentials are not dimensioned to P and Q")
    C = cost_matrix(P.points, Q.points)
    _, _, _, cost_sum, ent_sum = _plan_pass(
        C, P.weights, Q.weights, potentials.f, potentials.g, cost.epsilon
    )
    return cost_sum + cost.epsilon * ent_sum


def _golden_minimize(fn, lo: float, hi: float, width: float = 1e-10) -> float:
    """Golden-section minimizer of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def brute_force_value_2x2(
    P: DiscreteMeasure, Q: DiscreteMeasure, cost: CostSpec
) -> float:
    """Independent oracle for 2x2 uniform instances.

    The coupling has a single free entry p = pi_11 in [0, 1/2]; the
    objective cost + eps KL(pi | product) is minimized by golden-section
    search, independent of the Sinkhorn code path.
    """
    if P.n != 2 or Q.n != 2:
        raise ValueError("brute force oracle requires n = m = 2")
    if not (P.is_uniform() and Q.is_uniform()):
        raise ValueError("brute force oracle requires uniform weights")
    C = cost_matrix(P.points, Q.points)
    eps = cost.epsilon

    def xlogx(t: float) -> float:
        return t * math.log(t) if t > 0.0 else 0.0

    def objective(p: float) -> float:
        pi = np.array([[p, 0.5 - p], [0.5 - p, p]])
        transport = float((pi * C).sum())
        # KL against the product coupling, whose entries are all 1/4
        kl = sum(xlogx(t) - t * math.log(0.25) for t in pi.ravel())
        return transport + eps * kl

    p_star = _golden_minimize(objective, 0.0, 0.5)
    return objective(p_star)


@dataclass(frozen=True)
class PotentialBoundReport:
    """Counts of potential entries inside the subgaussian envelope."""

    checked: int
    violations: int

    @property
    def fraction_ok(self) -> float:
        return 1.0 - self.violations / self.checked


def potential_bound_check(
    solution: SinkhornSolution,
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    warn: bool = True,
) -> PotentialBoundReport:
    """Check normalized potentials against the subgaussian envelope.

    With sigma2 = max of the empirical subgaussian proxies of P and Q, each
    potential entry at a point x should satisfy
        -d sigma2 (1 + 0.5 (||x|| + sqrt(2 d) sigma)^2) - 1 <= f(x)
        f(x) <= 0.5 (||x|| + sqrt(2 d) sigma)^2.
    The empirical mean normalization differs from the population one by
    o(1), so violations are reported as warnings, never raised.
    """
    d = P.dim
    sigma2 = max(subgaussian_proxy(P), subgaussian_proxy(Q))
    sigma = math.sqrt(sigma2)

    def env(points: np.ndarray):
        norms = np.linalg.norm(points, axis=1)
        shifted = 0.5 * (norms + math.sqrt(2.0 * d) * sigma) ** 2
        return -d * sigma2 * (1.0 + shifted) - 1.0, shifted

    checked = 0
    violations = 0
    for vec, pts in ((solution.potentials.f, P.points), (solution.potentials.g, Q.points)):
        lower, upper = env(pts)
        checked += vec.shape[0]
        violations += int(np.count_nonzero((vec < lower) | (vec > upper)))
    if violations and warn:
        warnings.warn(
            f"{violations} of {checked} potential entries violate the "
            "subgaussian envelope bounds",
            RuntimeWarning,
            stacklevel=2,
        )
    return PotentialBoundReport(checked=checked, violations=violations)
