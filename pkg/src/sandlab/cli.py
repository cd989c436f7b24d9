"""Command-line front end: `sandpile <subcommand> [flags] [--config file]`.

Flags can come from a TOML or JSON config file; explicit command-line flags
override file values.  Every stochastic subcommand requires --seed (no
ambient entropy), and each run writes a manifest echoing the fully resolved
configuration, so any output is reproducible from its manifest alone.

Exit codes: 0 all internal checks passed, 1 a check failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import (
    dichotomy_experiment,
    init_configuration,
    nested_stabilize,
    odometer_exact,
    tail_bound_check,
    topple_to_stability,
    ve_series_probe,
)
from .greens import BoxDomain, killed_green, lattice_green_series, nu_alpha, torus_green_row
from .laws import HeavyTailLaw, empirical_cf, normalized_sum_probe, quantile, sample
from .report import ExperimentReport, write_atomic, write_report
from .scaling import (
    TestFunction,
    convergence_sweep,
    coupling_probe,
    exact_cf_finite_n,
    fourier_discrepancy,
    kernel_kn,
    kn_sup_check,
    limit_functional,
    mc_cf,
)
from .streams import stream
from .torus import SiteField, TorusGrid, dump_site_field, laplacian_eigenvalues

MAX_SITES = 1 << 24  # up-front memory guard for dense domains


class UsageError(Exception):
    pass


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in str(text).replace(",", " ").split()]


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in str(text).replace(",", " ").split()]


def _law_from(cfg: dict) -> HeavyTailLaw:
    kind = cfg.get("law", "sas")
    law = HeavyTailLaw(
        kind,
        alpha=float(cfg.get("alpha", 2.0)),
        scale=float(cfg.get("scale", 1.0)),
    )
    if cfg.get("shift"):
        law = law.shifted(float(cfg["shift"]))
    return law


def _require(cfg: dict, *names: str) -> None:
    for name in names:
        if name not in cfg or cfg[name] is None:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")


def _dense_domain_guard(sites: int) -> None:
    if sites > MAX_SITES:
        raise UsageError(
            f"domain has {sites} sites; the dense-field budget is {MAX_SITES}"
        )


# ---------------------------------------------------------------------------
# Subcommand handlers.  Each takes the resolved config dict and returns an
# ExperimentReport.

def _run_sample(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "count")
    law = _law_from(cfg)
    rng = stream(int(cfg["seed"]), "cli-sample")
    draws = sample(law, rng, size=int(cfg["count"]))
    if "out" not in cfg:  # emit one float per line on stdout
        sys.stdout.write("\n".join(repr(float(v)) for v in draws) + "\n")
        tables = {}
    else:
        tables = {"samples": [{"value": float(v)} for v in draws]}
    return ExperimentReport(manifest={}, tables=tables, summary={
        "count": int(cfg["count"]),
        "mean": float(np.mean(draws)),
        "median": float(np.median(draws)),
    })


def _run_cfprobe(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "count")
    law = _law_from(cfg)
    thetas = _floats(cfg.get("thetas", "0.5,1.0,2.0"))
    rng = stream(int(cfg["seed"]), "cli-cfprobe")
    draws = sample(law, rng, size=int(cfg["count"]))
    est = empirical_cf(draws, thetas)
    rows = [
        {
            "theta": float(t),
            "re": float(v.real),
            "im": float(v.imag),
            "stderr": est.stderr,
        }
        for t, v in zip(est.thetas, est.values)
    ]
    checks = {}
    if law.symmetric:
        checks["imaginary_part_within_noise"] = bool(
            np.all(np.abs(est.values.imag) <= 4.0 * est.stderr)
        )
    return ExperimentReport(manifest={}, tables={"cf": rows}, checks=checks)


def _run_probe_scale(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "reps")
    law = _law_from(cfg)
    ks = _ints(cfg.get("counts", "100,1000"))
    thetas = np.array(_floats(cfg.get("thetas", "0.25,0.4,0.6,0.9,1.3")))
    rng = stream(int(cfg["seed"]), "cli-probe-scale")
    rows_out = []
    for row in normalized_sum_probe(law, ks, int(cfg["reps"]), thetas, rng):
        rows_out.append({"k": row.k, "fitted_scale": row.fitted_scale})
    return ExperimentReport(manifest={}, tables={"scale": rows_out})


def _run_green(cfg: dict) -> ExperimentReport:
    out_prefix = cfg["_out_prefix"]
    if cfg.get("torus") is not None:
        grid = TorusGrid(int(cfg.get("d", 2)), int(cfg["torus"]))
        _dense_domain_guard(grid.n_sites)
        site = _ints(cfg.get("site", ",".join(["0"] * grid.d)))
        row = torus_green_row(grid, site)
        field = SiteField(grid, row.values)
        path = Path(str(out_prefix) + ".field.bin")
        dump_site_field(field, path)
        summary = {"kind": "torus", "n": grid.n, "d": grid.d, "gauge_sum": float(row.values.sum())}
        checks = {"mean_zero_gauge": abs(float(row.values.sum())) < 1e-9}
    elif cfg.get("box") is not None:
        box = BoxDomain(int(cfg.get("d", 2)), int(cfg["box"]))
        _dense_domain_guard(box.site_count)
        site = _ints(cfg.get("site", ",".join(["0"] * box.d)))
        row = killed_green(box, site)
        path = Path(str(out_prefix) + ".field.bin")
        write_atomic(path, _box_field_bytes(box, row.values))
        summary = {"kind": "box", "m": box.m, "d": box.d, "source_value": float(row.values[box.index_of(site)])}
        checks = {"nonnegative": bool(row.values.min() >= -1e-12)}
    else:
        raise UsageError("green needs --torus N or --box M")
    return ExperimentReport(manifest={}, summary=summary, checks=checks)


def _box_field_bytes(box: BoxDomain, values: np.ndarray) -> bytes:
    header = {"d": box.d, "n": box.side, "dtype": "f64", "order": "row-major, axis 0 slowest"}
    return (json.dumps(header, sort_keys=True) + "\n").encode() + np.ascontiguousarray(
        values, dtype="<f8"
    ).tobytes()


def _run_nu(cfg: dict) -> ExperimentReport:
    _require(cfg, "d", "alpha", "radii")
    rows = []
    previous = None
    monotone = True
    for m in _ints(cfg["radii"]):
        value = nu_alpha(BoxDomain(int(cfg["d"]), m), float(cfg["alpha"]))
        if previous is not None and value < previous - 1e-9:
            monotone = False
        previous = value
        rows.append({"m": m, "nu": value})
    return ExperimentReport(
        manifest={},
        tables={"nu": rows},
        checks={"monotone_in_radius": monotone},
    )


def _run_greenseries(cfg: dict) -> ExperimentReport:
    _require(cfg, "d", "exponent", "radius")
    result = lattice_green_series(int(cfg["d"]), float(cfg["exponent"]), int(cfg["radius"]))
    rows = [
        {"shell": r, "shell_sum": float(s)} for r, s in enumerate(result.shell_sums)
    ]
    return ExperimentReport(
        manifest={},
        tables={"shells": rows},
        summary={
            "partial_sum": result.partial_sum,
            "last_shell_share": result.last_shell_share,
        },
    )


def _run_stabilize(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "d", "n")
    grid = TorusGrid(int(cfg["d"]), int(cfg["n"]))
    _dense_domain_guard(grid.n_sites)
    law = _law_from(cfg)
    conserve = bool(cfg.get("conserve", False))
    config = init_configuration(
        grid,
        law,
        mean=float(cfg.get("mean", 1.0)),
        conserve=conserve,
        rng=stream(int(cfg["seed"]), "cli-stabilize"),
    )
    result = topple_to_stability(
        config,
        tol=float(cfg.get("tol", 1e-10)),
        max_rounds=int(cfg.get("max_rounds", 200_000)),
        schedule=cfg.get("schedule", "synchronous"),
    )
    checks = {"stabilized_at_tolerance": bool(result.stabilized)}
    summary = {
        "rounds": result.rounds,
        "max_excess": result.max_excess,
        "odometer_min": float(result.odometer.values.min()),
        "odometer_max": float(result.odometer.values.max()),
    }
    if conserve:
        exact = odometer_exact(grid, config)
        shifted = result.odometer.values - result.odometer.values.min()
        gap = float(np.abs(shifted - exact.values).max())
        summary["exact_odometer_gap"] = gap
        checks["matches_exact_odometer"] = gap < 1e-6
    rows = [
        {
            "n": grid.n,
            "d": grid.d,
            "rounds": result.rounds,
            "stabilized": bool(result.stabilized),
            "max_excess": result.max_excess,
            "odometer_max": float(result.odometer.values.max()),
        }
    ]
    return ExperimentReport(manifest={}, tables={"stabilize": rows}, summary=summary, checks=checks)


def _run_nested(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "d", "radii")
    law = _law_from(cfg)
    trace = nested_stabilize(
        int(cfg["d"]),
        law,
        float(cfg.get("mean", 1.0)),
        _ints(cfg["radii"]),
        tol=float(cfg.get("tol", 1e-8)),
        rng=stream(int(cfg["seed"]), "cli-nested"),
        solver=cfg.get("solver", "sor"),
        max_rounds=int(cfg.get("max_rounds", 200_000)),
    )
    rows = [
        {
            "m": m,
            "u_origin": float(u),
            "rounds": int(r),
            "stabilized": bool(s),
        }
        for m, u, r, s in zip(trace.radii, trace.u_origin, trace.rounds, trace.stabilized)
    ]
    monotone = bool(np.all(np.diff(trace.u_origin) >= -1e-6))
    return ExperimentReport(
        manifest={},
        tables={"nested": rows},
        summary={"truncated": trace.truncated},
        checks={"odometer_monotone_in_radius": monotone},
    )


def _run_dichotomy(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "d", "radii", "reps")
    law = _law_from(cfg)
    report = dichotomy_experiment(
        int(cfg["d"]),
        law,
        float(cfg.get("mean", 1.0)),
        _ints(cfg["radii"]),
        int(cfg["reps"]),
        seed=int(cfg["seed"]),
        tol=float(cfg.get("tol", 1e-8)),
        max_rounds=int(cfg.get("max_rounds", 200_000)),
    )
    rows = []
    for rep, (label, trace) in enumerate(zip(report.classifications, report.traces)):
        row = {"rep": rep, "classification": label}
        for m, u in zip(report.radii, trace):
            row[f"u_{m}"] = float(u)
        rows.append(row)
    majority = max(report.counts, key=report.counts.get)
    return ExperimentReport(
        manifest={},
        tables={"dichotomy": rows},
        summary={"counts": report.counts, "majority": majority},
    )


def _run_veseries(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "d", "reps")
    law = _law_from(cfg)
    rep = ve_series_probe(
        int(cfg["d"]),
        law,
        _ints(cfg.get("terms", "500,1000")),
        int(cfg["reps"]),
        rng=stream(int(cfg["seed"]), "cli-veseries"),
    )
    ks_rows = [{"n_terms": n, "ks_to_doubled": k} for n, k in rep.ks_rows]
    tail_rows = [{"threshold": m, "left_tail_freq": p} for m, p in rep.left_tail]
    quantile_rows = []
    for i, n in enumerate(rep.n_terms):
        for p, q in zip(rep.quantile_probs, rep.quantiles[i]):
            quantile_rows.append({"n_terms": n, "p": float(p), "quantile": float(q)})
    return ExperimentReport(
        manifest={},
        tables={"ks": ks_rows, "left_tail": tail_rows, "quantiles": quantile_rows},
    )


def _run_tailbound(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "alpha", "delta", "reps")
    power = float(cfg.get("power", 2.0))
    terms = int(cfg.get("terms", 3163))
    coeff = np.arange(1, terms + 1, dtype=float) ** (-power)
    rows = tail_bound_check(
        coeff,
        float(cfg["alpha"]),
        float(cfg["delta"]),
        _floats(cfg.get("thresholds", "4,8,16")),
        int(cfg["reps"]),
        rng=stream(int(cfg["seed"]), "cli-tailbound"),
    )
    table = [
        {
            "threshold": r.threshold,
            "cutoff": r.cutoff,
            "probability": r.probability,
            "fitted_bound": r.fitted_bound,
        }
        for r in rows
    ]
    return ExperimentReport(manifest={}, tables={"tailbound": table})


def _test_function_from(cfg: dict) -> TestFunction:
    _require(cfg, "d", "modes")
    return TestFunction.parse(int(cfg["d"]), str(cfg["modes"]))


def _run_scaling_sweep(cfg: dict) -> ExperimentReport:
    f = _test_function_from(cfg)
    alpha = float(cfg.get("alpha", 2.0))
    ns = _ints(cfg.get("ns", "8,16,32,64"))
    rows = convergence_sweep(f, alpha, ns)
    gaps = np.array([row["rel_gap"] for row in rows])
    summary = {"final_gap": float(gaps[-1])}
    if np.all(gaps > 0):  # observed decay rate of the gap, reported only
        summary["fitted_rate"] = float(np.polyfit(np.log(ns), np.log(gaps), 1)[0])
    return ExperimentReport(
        manifest={},
        tables={"sweep": rows},
        summary=summary,
        checks={"gap_decreasing": bool(np.all(np.diff(gaps) < 0))},
    )


def _run_scaling_mccf(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "n", "count")
    f = _test_function_from(cfg)
    alpha = float(cfg.get("alpha", 1.5))
    law = _law_from({**cfg, "law": cfg.get("law", "sas")})
    theta = float(cfg.get("theta", 1.0))
    rows = []
    checks = {}
    for n in _ints(str(cfg["n"])):
        kernel = kernel_kn(TorusGrid(f.d, n), f, alpha)
        est = mc_cf(
            kernel,
            law,
            int(cfg["count"]),
            rng=stream(int(cfg["seed"]), "cli-mccf", n),
            theta=theta,
        )
        exact = exact_cf_finite_n(kernel, scale=float(cfg.get("ref_scale", law.scale)), theta=theta)
        rows.append(
            {
                "n": n,
                "mc_re": float(est.value.real),
                "mc_im": float(est.value.imag),
                "stderr": est.stderr,
                "exact_sas": exact,
                "abs_gap": abs(est.value.real - exact),
            }
        )
        if law.kind == "sas":
            checks[f"mc_matches_exact_n{n}"] = bool(
                abs(est.value.real - exact) < 3.0 * est.stderr
            )
    return ExperimentReport(manifest={}, tables={"mccf": rows}, checks=checks)


def _run_scaling_couple(cfg: dict) -> ExperimentReport:
    _require(cfg, "seed", "ns", "count")
    f = _test_function_from(cfg)
    alpha = float(cfg.get("alpha", 1.5))
    sigma_law = _law_from({**cfg, "law": cfg.get("law", "pareto")})
    rho_law = HeavyTailLaw.sas(alpha, float(cfg.get("ref_scale", 1.0)))
    rows = []
    series = []
    for n in _ints(cfg["ns"]):
        kernel = kernel_kn(TorusGrid(f.d, n), f, alpha)
        stats = coupling_probe(
            kernel,
            sigma_law,
            rho_law,
            int(cfg["count"]),
            rng=stream(int(cfg["seed"]), "cli-couple", n),
        )
        for eps, prob in stats.exceedance.items():
            rows.append({"n": n, "eps": eps, "exceedance": prob, "l1_normalized": stats.l1_normalized_mean})
        series.append(stats.exceedance[0.1])
    return ExperimentReport(
        manifest={},
        tables={"couple": rows},
        checks={"exceedance_decreasing": bool(np.all(np.diff(series) <= 0))},
    )


def _run_scaling_supcheck(cfg: dict) -> ExperimentReport:
    f = _test_function_from(cfg)
    alpha = float(cfg.get("alpha", 1.5))
    rows = kn_sup_check(f, alpha, _ints(cfg.get("ns", "8,16,32,64,128")))
    values = [row["normalized_sup"] for row in rows]
    band = max(values) / min(values) if min(values) > 0 else float("inf")
    return ExperimentReport(
        manifest={},
        tables={"supcheck": rows},
        summary={"band_ratio": band},
        checks={"band_ratio_below_2": band < 2.0},
    )


def _run_scaling_fourier(cfg: dict) -> ExperimentReport:
    f = _test_function_from(cfg)
    rows = fourier_discrepancy(f, _ints(cfg.get("ns", "8,16,32,64,128,256")))
    worst = max(row["normalized_discrepancy"] for row in rows)
    return ExperimentReport(
        manifest={},
        tables={"fourier": rows},
        summary={"max_normalized_discrepancy": worst},
        checks={"discrepancy_bounded": worst < 10.0},
    )


def _run_scaling_limit(cfg: dict) -> ExperimentReport:
    f = _test_function_from(cfg)
    alpha = float(cfg.get("alpha", 2.0))
    value = limit_functional(f, alpha)
    return ExperimentReport(manifest={}, summary={"limit_functional": value})


# ---------------------------------------------------------------------------
# Self test: the cross-module invariant battery at desk scale.

def _selftest_rows() -> list[tuple[str, bool, str]]:
    results = []

    worst = 0.0
    for d in (1, 2):
        for n in (4, 8, 16):
            grid = TorusGrid(d, n)
            lam = laplacian_eigenvalues(grid)
            coords = grid.axis_coordinates()
            row0 = torus_green_row(grid, (0,) * d)
            ghat = np.fft.fftn(row0.values) / grid.n_sites
            resid = np.abs(lam * ghat + 2.0 * d / grid.n_sites)
            mask = np.ones(grid.shape, dtype=bool)
            mask[(0,) * d] = False
            worst = max(worst, float(resid[mask].max()))
            del coords
    results.append(("green-spectral-identity", worst < 1e-12, f"max residual {worst:.2e}"))

    grid = TorusGrid(2, 16)
    gap = 0.0
    for seed in (0, 1):
        config = init_configuration(
            grid, HeavyTailLaw.gaussian(1.0), conserve=True, rng=stream(seed, "selftest-odometer")
        )
        result = topple_to_stability(config, tol=1e-10)
        shifted = result.odometer.values - result.odometer.values.min()
        gap = max(gap, float(np.abs(shifted - odometer_exact(grid, config).values).max()))
    results.append(("odometer-cross-check", gap < 1e-6, f"sup gap {gap:.2e}"))

    f = TestFunction(1, {(1,): 0.5})
    kernel = kernel_kn(TorusGrid(1, 64), f, 2.0)
    parseval_gap = abs(kernel.alpha_sum - 0.5) / 0.5
    limit_gap = abs(limit_functional(f, 2.0) - 0.5)
    ok = parseval_gap < 0.02 and limit_gap < 1e-8
    results.append(
        ("quadratic-parseval", ok, f"kernel gap {parseval_gap:.2e}, limit gap {limit_gap:.2e}")
    )

    kernel = kernel_kn(TorusGrid(1, 32), f, 1.5)
    est = mc_cf(kernel, HeavyTailLaw.sas(1.5), 30_000, rng=stream(3, "selftest-mccf"))
    cf_gap = abs(est.value.real - exact_cf_finite_n(kernel))
    results.append(
        ("mc-vs-exact-cf", cf_gap < 3.0 * est.stderr, f"|mc-exact| {cf_gap:.4f} vs 3se {3*est.stderr:.4f}")
    )

    law = HeavyTailLaw.sas(1.5)
    draws = np.sort(sample(law, stream(4, "selftest-quantile"), size=200_000))
    ps = np.arange(0.1, 0.95, 0.1)
    emp = np.searchsorted(draws, quantile(law, ps)) / draws.size
    qgap = float(np.abs(emp - ps).max())
    results.append(("quantile-consistency", qgap < 0.005, f"max CDF gap {qgap:.4f}"))
    return results


def _run_selftest(cfg: dict) -> ExperimentReport:
    rows = []
    checks = {}
    for name, ok, detail in _selftest_rows():
        rows.append({"check": name, "passed": ok, "detail": detail})
        checks[name] = ok
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}")
    return ExperimentReport(manifest={}, tables={"selftest": rows}, checks=checks)


_HANDLERS = {
    "sample": _run_sample,
    "cfprobe": _run_cfprobe,
    "probescale": _run_probe_scale,
    "green": _run_green,
    "nu": _run_nu,
    "greenseries": _run_greenseries,
    "stabilize": _run_stabilize,
    "nested": _run_nested,
    "dichotomy": _run_dichotomy,
    "veseries": _run_veseries,
    "tailbound": _run_tailbound,
    "scaling-sweep": _run_scaling_sweep,
    "scaling-mccf": _run_scaling_mccf,
    "scaling-couple": _run_scaling_couple,
    "scaling-supcheck": _run_scaling_supcheck,
    "scaling-fourier": _run_scaling_fourier,
    "scaling-limit": _run_scaling_limit,
    "selftest": _run_selftest,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON file with option values")
    p.add_argument("--seed", type=int, help="master seed (required for stochastic runs)")
    p.add_argument("--out", help="output path prefix (default runs/<command>-seed<seed>)")
    p.add_argument("--format", choices=("csv", "json"), dest="fmt", help="table format")


def _law_flags(p: argparse.ArgumentParser, with_alpha: bool = True) -> None:
    p.add_argument("--law", choices=("sas", "pareto", "gaussian", "point"))
    if with_alpha:
        p.add_argument("--alpha", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--shift", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sandpile",
        description="divisible sandpile laboratory: toppling, odometers, "
        "Green diagnostics, and stable scaling limits",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def new(name, **kwargs):
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS, **kwargs)
        _add_common(p)
        return p

    p = new("sample", help="emit i.i.d. draws, one float per line")
    _law_flags(p)
    p.add_argument("--count", type=int)

    p = new("cfprobe", help="empirical characteristic function as CSV")
    _law_flags(p)
    p.add_argument("--count", type=int)
    p.add_argument("--thetas")

    p = new("probescale", help="fitted stable scale of normalized sums")
    _law_flags(p)
    p.add_argument("--counts")
    p.add_argument("--reps", type=int)
    p.add_argument("--thetas")

    p = new("green", help="Green-row snapshot (torus or killed box)")
    p.add_argument("--torus", type=int)
    p.add_argument("--box", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--site")

    p = new("nu", help="killed-row alpha norms over growing boxes")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--radii")

    p = new("greenseries", help="partial sums of g(0,y)^beta over shells")
    p.add_argument("--d", type=int)
    p.add_argument("--exponent", type=float)
    p.add_argument("--radius", type=int)

    p = new("stabilize", help="topple a torus configuration to stability")
    _law_flags(p)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--mean", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--conserve", action="store_true")
    p.add_argument("--schedule", choices=("synchronous", "checkerboard"))
    p.add_argument("--max-rounds", type=int, dest="max_rounds")

    p = new("nested", help="odometer at the origin over nested boxes")
    _law_flags(p)
    p.add_argument("--d", type=int)
    p.add_argument("--mean", type=float)
    p.add_argument("--radii")
    p.add_argument("--tol", type=float)
    p.add_argument("--solver", choices=("sor", "synchronous", "checkerboard"))
    p.add_argument("--max-rounds", type=int, dest="max_rounds")

    p = new("dichotomy", help="replicated growth/plateau classification")
    _law_flags(p)
    p.add_argument("--d", type=int)
    p.add_argument("--mean", type=float)
    p.add_argument("--radii")
    p.add_argument("--reps", type=int)
    p.add_argument("--tol", type=float)

    p = new("veseries", help="truncated potential series distribution probe")
    _law_flags(p)
    p.add_argument("--d", type=int)
    p.add_argument("--terms")
    p.add_argument("--reps", type=int)

    p = new("tailbound", help="truncated-series exceedance bound probe")
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--power", type=float)
    p.add_argument("--terms", type=int)
    p.add_argument("--thresholds")
    p.add_argument("--reps", type=int)

    scaling = sub.add_parser("scaling", help="rescaled-odometer pairings and limits")
    ssub = scaling.add_subparsers(dest="subcommand", required=True)

    def new_scaling(name, **kwargs):
        p = ssub.add_parser(name, argument_default=argparse.SUPPRESS, **kwargs)
        _add_common(p)
        p.add_argument("--d", type=int)
        p.add_argument("--modes", help="test function literal, e.g. '1:0.5' or '1,0:0.5;2,1:0,0.25'")
        p.add_argument("--alpha", type=float)
        return p

    p = new_scaling("sweep", help="kernel alpha-sums against the limit functional")
    p.add_argument("--ns")

    p = new_scaling("mccf", help="Monte Carlo vs exact characteristic function")
    _law_flags(p, with_alpha=False)
    p.add_argument("--n")
    p.add_argument("--count", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--ref-scale", type=float, dest="ref_scale")

    p = new_scaling("couple", help="quantile-coupling remainder probe")
    _law_flags(p, with_alpha=False)
    p.add_argument("--ns")
    p.add_argument("--count", type=int)
    p.add_argument("--ref-scale", type=float, dest="ref_scale")

    p = new_scaling("supcheck", help="normalized kernel sup bound")
    p.add_argument("--ns")

    p = new_scaling("fourier", help="mesh Fourier-coefficient discrepancy")
    p.add_argument("--ns")

    p = new_scaling("limit", help="evaluate the limit functional")

    new("selftest", help="run the cross-module invariant battery")
    return parser


def _load_config_file(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(text.decode("utf-8"))
    try:
        import tomllib  # py >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text.decode("utf-8"))


def resolve_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    ns = vars(args).copy()
    command = ns.pop("command")
    subcommand = ns.pop("subcommand", None)
    if subcommand:
        command = f"{command}-{subcommand}"
    config_path = ns.pop("config", None)
    if config_path:
        file_cfg = _load_config_file(config_path)
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a table of options")
        if isinstance(file_cfg.get("law"), dict):  # nested law table form
            law_table = file_cfg.pop("law")
            file_cfg["law"] = law_table.get("kind", "sas")
            for key in ("alpha", "scale", "shift"):
                if key in law_table:
                    file_cfg.setdefault(key, law_table[key])
        cfg.update({str(k).replace("-", "_"): v for k, v in file_cfg.items()})
    cfg.update(ns)  # explicit flags win
    cfg["_command"] = command
    return cfg


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    command = cfg.pop("_command")
    handler = _HANDLERS.get(command)
    if handler is None:
        raise UsageError(f"unknown command {command}")
    stochastic = command not in (
        "green", "nu", "greenseries", "selftest",
        "scaling-sweep", "scaling-supcheck", "scaling-fourier", "scaling-limit",
    )
    if stochastic and cfg.get("seed") is None:
        raise UsageError("--seed is required (no ambient entropy)")
    seed_part = f"-seed{cfg['seed']}" if cfg.get("seed") is not None else ""
    out_prefix = cfg.get("out") or str(Path("runs") / f"{command}{seed_part}")
    cfg["_out_prefix"] = out_prefix
    fmt = cfg.get("fmt") or "csv"

    started = time.perf_counter()
    report = handler(cfg)
    report.walltime_s = time.perf_counter() - started
    report.manifest = {
        "command": command,
        "version": __version__,
        "config": {k: v for k, v in sorted(cfg.items()) if not k.startswith("_")},
    }
    paths = write_report(report, out_prefix, fmt)
    for path in paths:
        print(f"wrote {path}")
    print(f"walltime {report.walltime_s:.2f}s")
    if not report.passed:
        failed = [name for name, ok in report.checks.items() if not ok]
        print(f"FAILED checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
