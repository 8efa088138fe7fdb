"""Acceptance suite.

Each criterion runs at its stated scale and tolerance and prints one
pass/fail line (visible with `pytest -s`, or in captured output).
Criteria 5 and 6 share one Monte Carlo run through a module fixture.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from entot.estimators import entropy_estimate_ind
from entot.experiments import (
    ExperimentConfig,
    compare_entropy_estimators,
    run_clt_experiment,
    run_rate_experiment,
)
from entot.measures import (
    DiscreteMeasure,
    GaussianMixture,
    NoiseModel,
    rescale_measure,
    sample_mixture,
)
from entot.seeding import derive_seed
from entot.sinkhorn import (
    CostSpec,
    brute_force_value_2x2,
    potential_bound_check,
    primal_value,
    solve,
)

STD_NORMAL = GaussianMixture(means=[[0.0]], variances=[1.0], weights=[1.0])
BIMODAL_MIXTURE = GaussianMixture(
    means=[[1.0], [-1.0]], variances=[1.0, 1.0], weights=[0.5, 0.5]
)
UNIT_NOISE = NoiseModel(sigma_g=1.0, dim=1)
GAUSS_ENTROPY_VAR2 = 1.7655121234846454  # 0.5 log(4 pi e)


def _verdict(num: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"criterion {num:2d} [{status}] {name}: {detail}", flush=True)
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def test_criterion_01_solver_vs_brute_force_oracle():
    rng = np.random.default_rng(1001)
    worst = 0.0
    for _ in range(100):
        eps = float(rng.choice([0.1, 1.0, 10.0]))
        p = DiscreteMeasure.uniform(rng.uniform(-2.0, 2.0, size=(2, 1)))
        q = DiscreteMeasure.uniform(rng.uniform(-2.0, 2.0, size=(2, 1)))
        cost = CostSpec(eps)
        sol = solve(p, q, cost, tolerance=1e-10)
        worst = max(worst, abs(sol.value - brute_force_value_2x2(p, q, cost)))
    _verdict(1, "solver vs 2x2 oracle", worst <= 1e-6, f"max |error| = {worst:.3e}")


def test_criterion_02_duality_gap():
    rng = np.random.default_rng(1002)
    worst = 0.0
    for i in range(50):
        d = 1 if i % 2 == 0 else 2
        eps = 0.5 if i % 4 < 2 else 1.0
        p = DiscreteMeasure.uniform(rng.uniform(-2.0, 2.0, size=(50, d)))
        q = DiscreteMeasure.uniform(rng.uniform(-2.0, 2.0, size=(50, d)))
        sol = solve(p, q, CostSpec(eps), tolerance=1e-8)
        gap = abs(sol.value - primal_value(p, q, sol.potentials, CostSpec(eps)))
        worst = max(worst, gap)
    _verdict(2, "duality gap", worst <= 10 * 1e-8, f"max gap = {worst:.3e}")


def test_criterion_03_rescaling_identity():
    rng = np.random.default_rng(1003)
    worst = 0.0
    for i in range(20):
        eps = float(rng.uniform(0.3, 3.0))
        d = 1 if i % 2 == 0 else 2
        p = DiscreteMeasure.uniform(rng.uniform(-2.0, 2.0, size=(30, d)))
        q = DiscreteMeasure.uniform(rng.uniform(-2.0, 2.0, size=(30, d)))
        direct = solve(p, q, CostSpec(eps), tolerance=1e-10).value
        scaled = eps * solve(
            rescale_measure(p, eps),
            rescale_measure(q, eps),
            CostSpec(1.0),
            tolerance=1e-10,
        ).value
        worst = max(worst, abs(direct - scaled))
    _verdict(3, "rescaling identity", worst <= 1e-6, f"max |error| = {worst:.3e}")


def test_criterion_04_rate_slope():
    config = ExperimentConfig(
        model_p=BIMODAL_MIXTURE,
        n_list=(100, 200, 400, 800, 1600, 3200),
        reps=200,
        root_seed=1004,
        dimension=1,
    )
    result = run_rate_experiment(config)
    ok = result.slope_defined and -0.65 <= result.slope <= -0.35
    _verdict(4, "rate slope", ok, f"slope = {result.slope:.4f}, target [-0.65, -0.35]")


@pytest.fixture(scope="module")
def clt_run():
    config = ExperimentConfig(
        model_p=STD_NORMAL,
        n_list=(2000,),
        reps=500,
        root_seed=1005,
        dimension=1,
        noise=UNIT_NOISE,
    )
    return run_clt_experiment(config)


def test_criterion_05_clt_variance(clt_run):
    var = float(clt_run.rescaled.var())
    ok = 0.8 * 0.25 <= var <= 1.2 * 0.25
    _verdict(5, "CLT variance", ok, f"rescaled variance = {var:.4f}, target 0.25 +/- 20%")


def test_criterion_06_clt_normality(clt_run):
    ok = (not clt_run.degenerate) and clt_run.ks_p_value > 0.01
    _verdict(
        6,
        "CLT normality",
        ok,
        f"KS p-value = {clt_run.ks_p_value:.4f} vs N(0, 0.25), threshold 0.01",
    )


def test_criterion_07_entropy_consistency():
    model_q = GaussianMixture(means=[[0.0]], variances=[2.0], weights=[1.0])
    hits = 0
    for run in range(100):
        p = sample_mixture(STD_NORMAL, 4000, derive_seed(1007, 4000, run, 0))
        q = sample_mixture(model_q, 4000, derive_seed(1007, 4000, run, 1))
        rep = entropy_estimate_ind(p, q, UNIT_NOISE, tolerance=1e-6)
        if abs(rep.estimate - GAUSS_ENTROPY_VAR2) <= 3.0 * rep.std_error:
            hits += 1
    _verdict(7, "entropy consistency", hits >= 95, f"{hits}/100 runs within 3 SE")


def test_criterion_08_paired_dominates_ind():
    config = ExperimentConfig(
        model_p=BIMODAL_MIXTURE,
        n_list=(250, 500, 1000, 2000),
        reps=100,
        root_seed=4242,
        dimension=1,
        noise=UNIT_NOISE,
    )
    result = compare_entropy_estimators(config)
    errs = {(n, name): m for n, name, m, _s in result.summary}
    detail = ", ".join(
        f"n={n}: paired {errs[(n, 'paired')]:.4f} vs ind {errs[(n, 'ind')]:.4f}"
        for n in config.n_list
    )
    ok = all(errs[(n, "paired")] <= errs[(n, "ind")] for n in config.n_list)
    _verdict(8, "paired <= ind mean |error|", ok, detail)


def test_criterion_09_determinism_across_worker_counts(tmp_path):
    cfg_doc = {
        "model_P": {
            "components": [
                {"mean": [1.0], "variance": 1.0, "weight": 0.5},
                {"mean": [-1.0], "variance": 1.0, "weight": 0.5},
            ]
        },
        "n_list": [50, 100],
        "reps": 20,
        "root_seed": 1009,
        "quad_points": 500,
    }
    cfg = str(tmp_path / "cfg.json")
    with open(cfg, "w") as fh:
        json.dump(cfg_doc, fh)
    outputs = {}
    for threads in ("1", "2"):
        out = str(tmp_path / f"out{threads}")
        env = dict(os.environ, ENTOT_THREADS=threads)
        subprocess.run(
            [sys.executable, "-c",
             "import sys; from entot.cli import run_cli; sys.exit(run_cli(sys.argv[1:]))",
             "rate", "--config", cfg, "--out", out],
            env=env,
            check=True,
        )
        outputs[threads] = {
            name: open(os.path.join(out, name), "rb").read()
            for name in ("rate.csv", "summary.csv")
        }
    ok = outputs["1"] == outputs["2"]
    _verdict(9, "determinism vs ENTOT_THREADS", ok, "CSV outputs byte-identical")


def test_criterion_10_potential_bound_envelope():
    p = sample_mixture(BIMODAL_MIXTURE, 1000, seed=101001)
    q = sample_mixture(BIMODAL_MIXTURE, 1000, seed=101002)
    sol = solve(p, q, CostSpec(1.0))
    assert sol.converged
    report = potential_bound_check(sol, p, q, warn=False)
    _verdict(
        10,
        "potential-bound envelope",
        report.fraction_ok >= 0.99,
        f"{report.checked - report.violations}/{report.checked} entries inside envelope",
    )
