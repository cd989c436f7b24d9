"""Acceptance battery: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s`.  Every tolerance is pinned
here; seeds are fixed so reruns are bit-identical.  Monte Carlo criteria use
seeds verified once against their stated error budgets.
"""
import math
import os

import numpy as np
import pytest

import sandlab as sl
from sandlab.cli import main as cli_main
from sandlab.streams import stream
from tests.test_greens import spectral_identity_residual

COS_MODE = sl.TestFunction(1, {(1,): 0.5})   # f(x) = cos(2 pi x)

# effective stable scale of symmetric pareto(1.5, 1) under k^(-2/3) sums,
# estimated by the normalized-sum probe (k = 30000, 120k replicas; see
# test_laws.test_normalized_sum_probe_pareto_scale_stabilizes for the
# stabilization check).  Frozen rather than derived from any formula.
PARETO_15_EFFECTIVE_SCALE = 1.8245


def _verdict(num: int, message: str) -> None:
    print(f"[criterion {num:02d}] PASS: {message}")


@pytest.fixture(scope="module")
def conserved_runs():
    """Five seeded conserved Gaussian configurations on the 16^2 torus,
    toppled under both schedules at tolerance 1e-10 (shared by 2 and 3)."""
    grid = sl.TorusGrid(2, 16)
    runs = []
    for seed in range(5):
        config = sl.init_configuration(
            grid, sl.HeavyTailLaw.gaussian(1.0), conserve=True,
            rng=stream(seed, "acceptance-odometer"),
        )
        sync = sl.topple_to_stability(config, tol=1e-10)
        checker = sl.topple_to_stability(config, tol=1e-10, schedule="checkerboard")
        runs.append((config, sync, checker))
    return grid, runs


def test_criterion_01_green_spectral_identity():
    worst = 0.0
    for d in (1, 2):
        for n in (4, 8, 16):
            worst = max(worst, spectral_identity_residual(sl.TorusGrid(d, n)))
    assert worst < 1e-12
    _verdict(1, f"spectral row identity residual {worst:.2e} < 1e-12 (d<=2, n<=16)")


def test_criterion_02_odometer_oracle_equivalence(conserved_runs):
    grid, runs = conserved_runs
    worst = 0.0
    for config, sync, _ in runs:
        assert sync.stabilized
        exact = sl.odometer_exact(grid, config)
        shifted = sync.odometer.values - sync.odometer.values.min()
        worst = max(worst, float(np.abs(shifted - exact.values).max()))
    assert worst < 1e-6
    _verdict(2, f"simulated vs spectral odometer sup gap {worst:.2e} < 1e-6 (5 seeds)")


def test_criterion_03_schedule_independence(conserved_runs):
    _, runs = conserved_runs
    worst = 0.0
    for _, sync, checker in runs:
        worst = max(worst, float(np.abs(sync.odometer.values - checker.odometer.values).max()))
    assert worst < 1e-8
    _verdict(3, f"synchronous vs checkerboard odometers within {worst:.2e} < 1e-8")


def test_criterion_04_quadratic_closed_form():
    kernel = sl.kernel_kn(sl.TorusGrid(1, 64), COS_MODE, 2.0)
    gap = abs(kernel.alpha_sum - 0.5) / 0.5
    assert gap < 0.02
    limit = sl.limit_functional(COS_MODE, 2.0)
    assert abs(limit - 0.5) < 1e-8
    _verdict(4, f"sum|k|^2 within {gap:.2%} of 1/2 at n=64; limit functional exact to {abs(limit-0.5):.1e}")


def test_criterion_05_single_mode_limits():
    # independent 1-d oracle for int_0^1 |cos(2 pi t)| dt on the quarter period
    xs, ws = np.polynomial.legendre.leggauss(2000)
    t = 0.125 * (xs + 1.0)
    oracle = float(4.0 * (np.cos(2 * np.pi * t) @ (0.125 * ws)))
    value = sl.limit_functional(COS_MODE, 1.0)
    assert abs(value - oracle) < 1e-6
    assert abs(value - 2.0 / math.pi) < 1e-6
    worst = 0.0
    for alpha in (1.0, 1.3, 1.5, 1.8, 2.0):
        base = sl.limit_functional(COS_MODE, alpha, check=False)
        for c in (0.37, 2.25):
            lhs = sl.limit_functional(COS_MODE.scaled(c), alpha, check=False)
            worst = max(worst, abs(lhs - c**alpha * base) / max(1.0, abs(base)))
    assert worst < 1e-10
    _verdict(5, f"L_1(cos) = 2/pi to {abs(value - 2/math.pi):.1e}; homogeneity drift {worst:.1e} < 1e-10")


def test_criterion_06_convergence_sweep():
    final_gaps = []
    for d in (1, 2):
        f = sl.TestFunction(d, {tuple([1] + [0] * (d - 1)): 0.5})
        for alpha in (1.3, 1.5, 1.8):
            rows = sl.convergence_sweep(f, alpha, [8, 16, 32, 64])
            gaps = [row["rel_gap"] for row in rows]
            assert all(b < a for a, b in zip(gaps, gaps[1:])), (d, alpha, gaps)
            if d == 1:
                assert gaps[-1] < 0.05
                final_gaps.append(gaps[-1])
    _verdict(6, f"alpha-sum gaps decreasing over n<=64 (d<=2); d=1 final gaps {[f'{g:.2%}' for g in final_gaps]}")


def test_criterion_07_mc_vs_exact_cf():
    kernel = sl.kernel_kn(sl.TorusGrid(1, 32), COS_MODE, 1.5)
    replicas = 100_000
    est = sl.mc_cf(kernel, sl.HeavyTailLaw.sas(1.5), replicas,
                   rng=stream(0, "acceptance-mccf"))
    gap = abs(est.value.real - sl.exact_cf_finite_n(kernel))
    assert gap < 3.0 / math.sqrt(replicas)
    _verdict(7, f"|MC - exact| = {gap:.5f} < 3/sqrt(M) = {3/math.sqrt(replicas):.5f}")


def test_criterion_08_universality_drift():
    law = sl.HeavyTailLaw.pareto(1.5)
    rho = sl.HeavyTailLaw.sas(1.5, PARETO_15_EFFECTIVE_SCALE)
    drifts = []
    probs = []
    for n in (16, 32, 64):
        kernel = sl.kernel_kn(sl.TorusGrid(1, n), COS_MODE, 1.5)
        est = sl.mc_cf(kernel, law, 200_000, rng=stream(0, "acceptance-universality", n))
        drifts.append(abs(est.value.real - sl.exact_cf_finite_n(kernel, scale=rho.scale)))
        stats = sl.coupling_probe(kernel, law, rho, 10_000,
                                  rng=stream(0, "acceptance-couple", n))
        probs.append(stats.exceedance[0.1])
    assert drifts[0] > drifts[1] > drifts[2], drifts
    assert probs[0] > probs[1] > probs[2], probs
    _verdict(8, f"CF drift {[round(x, 4) for x in drifts]} and coupling exceedance "
                f"{probs} both decreasing over n in (16, 32, 64)")


def test_criterion_09_killed_green_oracle():
    single = sl.killed_green(sl.BoxDomain(2, 0), (0, 0))
    assert float(single.values.reshape(())) == pytest.approx(1.0, abs=1e-12)
    box = sl.BoxDomain(2, 8)
    exact = sl.killed_green(box, (0, 0))
    mc = sl.killed_green_mc(box, (0, 0), 100_000, stream(0, "acceptance-killed-green"))
    assert np.all(mc.stderr > 0)
    z = float((np.abs(mc.values - exact.values) / mc.stderr).max())
    assert z < 3.0
    _verdict(9, f"solver vs Monte Carlo row within {z:.2f} standard errors at every site")


def test_criterion_10_dichotomy_trends():
    sub = sl.dichotomy_experiment(
        2, sl.HeavyTailLaw.gaussian(1.0), 0.9, (8, 16, 32, 64), 20, seed=101
    )
    assert sub.counts["plateau"] >= 18, sub.counts
    sup = sl.dichotomy_experiment(
        2, sl.HeavyTailLaw.gaussian(1.0), 1.1, (8, 16, 32, 64), 20, seed=102
    )
    assert sup.counts["growth"] >= 18, sup.counts
    crit = sl.dichotomy_experiment(
        3, sl.HeavyTailLaw.pareto(1.5), 1.0, (4, 8, 16, 32), 20, seed=103
    )
    assert crit.counts["growth"] > 10, crit.counts
    _verdict(10, f"mu=0.9: {sub.counts['plateau']}/20 plateau; mu=1.1: "
                 f"{sup.counts['growth']}/20 growth; critical d=3: "
                 f"{crit.counts['growth']}/20 growth")


def test_criterion_11_nu_trends():
    grow = [sl.nu_alpha(sl.BoxDomain(3, m), 1.3) for m in (4, 8, 16, 32)]
    increments = np.diff(grow)
    assert np.all(increments > 0)
    assert np.all(np.diff(increments) > 0)  # accelerating: no plateau in sight
    settle = [sl.nu_alpha(sl.BoxDomain(5, m), 1.9) for m in (4, 8, 16)]
    inc = np.diff(settle)
    assert np.all(inc > 0)
    assert inc[1] < 0.85 * inc[0]           # geometric-type shrinkage
    _verdict(11, f"d=3 alpha=1.3 diverging ({[round(x,1) for x in grow]}); "
                 f"d=5 alpha=1.9 increments shrink {inc[1]/inc[0]:.2f}x per doubling")


def test_criterion_12_quantitative_bounds():
    rows = sl.kn_sup_check(COS_MODE, 1.5, [8, 16, 32, 64, 128])
    sups = [row["normalized_sup"] for row in rows]
    band = max(sups) / min(sups)
    assert band < 2.0
    disc_rows = sl.fourier_discrepancy(COS_MODE, [8, 16, 32, 64, 128, 256])
    disc = max(row["normalized_discrepancy"] for row in disc_rows)
    assert disc < 1.0
    coeff = np.arange(1, 3164, dtype=float) ** -2.0
    tb = sl.tail_bound_check(coeff, 1.5, 1.05, [4.0, 8.0, 16.0], 30_000,
                             rng=stream(0, "acceptance-tailbound"))
    probs = [row.probability for row in tb]
    assert probs[0] > probs[1] > probs[2], probs
    _verdict(12, f"sup band {band:.3f} < 2; discrepancy {disc:.1e} bounded; "
                 f"tail probabilities {probs} decreasing")


def test_criterion_13_determinism(tmp_path):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        for tag in ("x", "y"):
            assert cli_main([
                "dichotomy", "--d", "2", "--law", "pareto", "--alpha", "1.5",
                "--mean", "1.0", "--radii", "4,8,16", "--reps", "3",
                "--seed", "77", "--out", f"run_{tag}",
            ]) == 0
            assert cli_main([
                "scaling", "mccf", "--d", "1", "--modes", "1:0.5", "--alpha", "1.5",
                "--law", "sas", "--n", "16", "--count", "20000",
                "--seed", "78", "--out", f"cf_{tag}",
            ]) == 0
        for stem in ("run", "cf"):
            csvs = sorted(p.name for p in tmp_path.iterdir()
                          if p.name.startswith(f"{stem}_x") and p.suffix == ".csv")
            assert csvs
            for name in csvs:
                twin = name.replace(f"{stem}_x", f"{stem}_y")
                assert (tmp_path / name).read_bytes() == (tmp_path / twin).read_bytes()
    finally:
        os.chdir(cwd)
    _verdict(13, "repeated seeded runs produced byte-identical CSV bodies")
