"""Toppling dynamics, odometers, and stabilization probes.

A site with mass above 1 keeps 1 and sends the excess in equal parts to its
2d neighbors.  The odometer stores the mass emitted to EACH neighbor, so the
total emitted by x is 2d * u(x) and after any number of rounds the algebraic
identity s_0 + D u = s_current holds exactly (D the unnormalized Laplacian,
Dirichlet outside a box).

Schedules:

* ``synchronous``   all unstable sites topple at once (canonical);
* ``checkerboard``  even-parity sites, then odd-parity sites;
* ``sor``           projected overrelaxation on the odometer complementarity
                    system.  Not a toppling schedule, but it converges to the
                    same odometer (tested against the schedules above) and is
                    orders of magnitude faster on large boxes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .greens import BoxDomain, dirichlet_neighbor_sum, shell_enumeration, zd_green_values
from .laws import HeavyTailLaw, sample
from .streams import stream
from .torus import NonConservedMassError, SiteField, TorusGrid, poisson_solve

__all__ = [
    "MassField",
    "OdometerField",
    "ToppleResult",
    "init_configuration",
    "topple_to_stability",
    "odometer_exact",
    "NestedTrace",
    "nested_stabilize",
    "DichotomyReport",
    "dichotomy_experiment",
    "classify_trace",
    "VeSeriesReport",
    "ve_series_probe",
    "TailBoundRow",
    "tail_bound_check",
]

Domain = Union[TorusGrid, BoxDomain]


@dataclass
class MassField:
    domain: Domain
    values: np.ndarray                     # one mass per domain site
    absorbed: Optional[np.ndarray] = None  # box only: ring accumulator (padded shape)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError("mass values do not match the domain shape")

    def total(self) -> float:
        extra = float(self.absorbed.sum()) if self.absorbed is not None else 0.0
        return float(self.values.sum()) + extra


@dataclass
class OdometerField:
    domain: Domain
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError("odometer values do not match the domain shape")
        if float(self.values.min(initial=0.0)) < -1e-12:
            raise ValueError("odometer must be nonnegative")


def init_configuration(
    domain: Domain,
    law: HeavyTailLaw,
    mean: float = 1.0,
    conserve: bool = False,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> MassField:
    """i.i.d. configuration s = mean + sigma; conserving recenters to sum n^d.

    With ``conserve`` (torus only) the field is s = 1 + sigma - avg(sigma), so
    the total mass equals the number of sites exactly and the configuration
    stabilizes to the all-1 state.
    """
    if rng is None:
        rng = stream(0 if seed is None else seed, "init-configuration")
    noise = sample(law, rng, size=domain.shape)
    if conserve:
        if not isinstance(domain, TorusGrid):
            raise NonConservedMassError("conserved configurations require the torus")
        if mean != 1.0:
            raise ValueError("conserve fixes the mean at 1")
        values = 1.0 + noise - noise.mean()
    else:
        values = mean + noise
    return MassField(domain, values)


# ---------------------------------------------------------------------------
# Toppling.

@dataclass
class ToppleResult:
    mass: MassField
    odometer: OdometerField
    rounds: int
    stabilized: bool
    max_excess: float


def _torus_laplacian(a: np.ndarray, d: int) -> np.ndarray:
    out = (-2.0 * d) * a
    for ax in range(d):
        out = out + np.roll(a, 1, axis=ax) + np.roll(a, -1, axis=ax)
    return out


def _parity_mask(shape: tuple[int, ...]) -> np.ndarray:
    grids = np.indices(shape)
    return (grids.sum(axis=0) % 2).astype(bool)


def topple_to_stability(
    config: MassField,
    tol: float = 1e-10,
    max_rounds: int = 200_000,
    schedule: str = "synchronous",
    check_every: int = 100,
) -> ToppleResult:
    """Run toppling rounds until the maximal excess drops below ``tol``.

    Torus inputs must conserve mass (sum s = n^d); on boxes the exterior ring
    absorbs whatever crosses the boundary and never topples.  If the round
    budget runs out the partial state is returned flagged unstabilized.
    """
    if schedule not in ("synchronous", "checkerboard", "sor"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if isinstance(config.domain, TorusGrid):
        if schedule == "sor":
            raise ValueError("the sor solver is implemented for boxes only")
        return _topple_torus(config, tol, max_rounds, schedule, check_every)
    if schedule == "sor":
        return _box_odometer_sor(config, tol, max_rounds)
    return _topple_box(config, tol, max_rounds, schedule, check_every)


def _topple_torus(config, tol, max_rounds, schedule, check_every) -> ToppleResult:
    grid: TorusGrid = config.domain
    d = grid.d
    s0 = config.values
    total0 = float(s0.sum())
    if abs(total0 - grid.n_sites) > 1e-9 * grid.n_sites * max(1.0, np.abs(s0).max()):
        raise NonConservedMassError(
            f"torus toppling needs sum s = n^d; got deviation {total0 - grid.n_sites:.3e}"
        )
    s = s0.copy()
    u = np.zeros_like(s)
    masks = [None] if schedule == "synchronous" else [~_parity_mask(s.shape), _parity_mask(s.shape)]
    rounds = 0
    max_excess = float(np.maximum(s - 1.0, 0.0).max())
    while rounds < max_rounds:
        if max_excess < tol:
            break
        for mask in masks:
            excess = np.maximum(s - 1.0, 0.0)
            if mask is not None:
                excess = np.where(mask, excess, 0.0)
            share = excess / (2.0 * d)
            u += share
            s -= excess
            for ax in range(d):
                s += np.roll(share, 1, axis=ax) + np.roll(share, -1, axis=ax)
        rounds += 1
        max_excess = float(np.maximum(s - 1.0, 0.0).max())
        if check_every and rounds % check_every == 0:
            _check_torus_identity(s0, u, s, d)
    stabilized = max_excess < tol
    _check_torus_identity(s0, u, s, d)
    return ToppleResult(
        MassField(grid, s), OdometerField(grid, u), rounds, stabilized, max_excess
    )


def _check_torus_identity(s0, u, s, d) -> None:
    scale = max(1.0, float(np.abs(s0).max()))
    drift = float(np.abs(s0 + _torus_laplacian(u, d) - s).max())
    if drift > 1e-9 * scale:
        raise RuntimeError(f"toppling identity violated: |s0 + Du - s| = {drift:.3e}")


def _topple_box(config, tol, max_rounds, schedule, check_every) -> ToppleResult:
    box: BoxDomain = config.domain
    d = box.d
    inner = (slice(1, -1),) * d
    padded = np.zeros(tuple(n + 2 for n in box.shape))
    padded[inner] = config.values
    s0 = config.values.copy()
    total0 = padded.sum()
    u = np.zeros(box.shape)
    masks = [None]
    if schedule == "checkerboard":
        par = _parity_mask(box.shape)
        masks = [~par, par]
    rounds = 0
    max_excess = float(np.maximum(padded[inner] - 1.0, 0.0).max())
    share_pad = np.zeros_like(padded)
    while rounds < max_rounds:
        if max_excess < tol:
            break
        for mask in masks:
            excess = np.maximum(padded[inner] - 1.0, 0.0)
            if mask is not None:
                excess = np.where(mask, excess, 0.0)
            share = excess / (2.0 * d)
            u += share
            share_pad[inner] = share
            padded[inner] -= excess
            for ax in range(d):
                padded += np.roll(share_pad, 1, axis=ax) + np.roll(share_pad, -1, axis=ax)
        rounds += 1
        max_excess = float(np.maximum(padded[inner] - 1.0, 0.0).max())
        if check_every and rounds % check_every == 0:
            _check_box_identity(s0, u, padded[inner], d)
    if abs(padded.sum() - total0) > 1e-9 * max(1.0, abs(total0)):
        raise RuntimeError("box toppling lost mass")
    _check_box_identity(s0, u, padded[inner], d)
    absorbed = padded.copy()
    absorbed[inner] = 0.0
    stabilized = max_excess < tol
    return ToppleResult(
        MassField(box, padded[inner].copy(), absorbed),
        OdometerField(box, u),
        rounds,
        stabilized,
        max_excess,
    )


def _check_box_identity(s0, u, s, d) -> None:
    scale = max(1.0, float(np.abs(s0).max()))
    implied = s0 + dirichlet_neighbor_sum(u) - 2.0 * d * u
    drift = float(np.abs(implied - s).max())
    if drift > 1e-9 * scale:
        raise RuntimeError(f"box toppling identity violated: {drift:.3e}")


def _box_odometer_sor(config, tol, max_sweeps) -> ToppleResult:
    """Projected SOR for the box odometer complementarity system.

    Solves u >= 0, s0 + D u <= 1, u (1 - s0 - D u) = 0 with red-black sweeps;
    the fixed point is the same odometer the toppling schedules converge to.
    """
    box: BoxDomain = config.domain
    d = box.d
    s0 = config.values
    u = np.zeros(box.shape)
    par = _parity_mask(box.shape)
    omega = 2.0 / (1.0 + math.sin(math.pi / (box.side + 1)))
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        change = 0.0
        for mask in (~par, par):
            excess = s0 + dirichlet_neighbor_sum(u) - 2.0 * d * u - 1.0
            updated = np.maximum(0.0, u + omega * excess / (2.0 * d))
            delta = np.where(mask, updated - u, 0.0)
            u += delta
            change = max(change, float(np.abs(delta).max()))
        sweeps += 1
        if change < tol / (2.0 * d):
            excess = s0 + dirichlet_neighbor_sum(u) - 2.0 * d * u - 1.0
            if float(excess.max()) < tol:
                converged = True
                break
    final = s0 + dirichlet_neighbor_sum(u) - 2.0 * d * u
    inner = (slice(1, -1),) * d
    padded = np.zeros(tuple(n + 2 for n in box.shape))
    share_pad = np.zeros_like(padded)
    share_pad[inner] = u
    absorbed = np.zeros_like(padded)
    for ax in range(d):
        absorbed += np.roll(share_pad, 1, axis=ax) + np.roll(share_pad, -1, axis=ax)
    absorbed[inner] = 0.0
    max_excess = float((final - 1.0).max())
    return ToppleResult(
        MassField(box, final, absorbed),
        OdometerField(box, u),
        sweeps,
        converged,
        max_excess,
    )


def odometer_exact(grid: TorusGrid, config: MassField) -> OdometerField:
    """Spectral odometer of a conserved torus configuration.

    Solves D v = 1 - s and returns u = v - min v, the unique odometer with
    min u = 0 of the configuration that stabilizes to the all-1 state.
    """
    if not isinstance(config.domain, TorusGrid) or config.domain != grid:
        raise ValueError("configuration does not live on the given grid")
    s = config.values
    if abs(float(s.sum()) - grid.n_sites) > 1e-9 * grid.n_sites * max(1.0, np.abs(s).max()):
        raise NonConservedMassError("odometer_exact requires sum s = n^d")
    v = poisson_solve(grid, SiteField(grid, 1.0 - s))
    u = v.values - v.values.min()
    return OdometerField(grid, u)


# ---------------------------------------------------------------------------
# Nested-volume probes.

@dataclass
class NestedTrace:
    radii: list[int]
    u_origin: np.ndarray
    rounds: np.ndarray
    stabilized: np.ndarray
    truncated: bool


def nested_stabilize(
    d: int,
    law: HeavyTailLaw,
    mean: float,
    radii: Sequence[int],
    tol: float = 1e-8,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    solver: str = "sor",
    max_rounds: int = 200_000,
) -> NestedTrace:
    """Odometer at the origin for a nested family of boxes.

    One i.i.d. field is sampled on the largest box; each radius m topples
    only the sites of [-m, m]^d, restriction of the same field, so the traces
    are coupled and u_m(origin) is non-decreasing in m.
    """
    radii = [int(m) for m in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    if rng is None:
        rng = stream(seed, "nested-stabilize")
    big = max(radii)
    noise = sample(law, rng, size=(2 * big + 1,) * d)
    u_at_origin, rounds, flags = [], [], []
    truncated = False
    previous = 0.0
    for m in radii:
        lo, hi = big - m, big + m + 1
        view = noise[(slice(lo, hi),) * d]
        config = MassField(BoxDomain(d, m), mean + view)
        result = topple_to_stability(config, tol=tol, max_rounds=max_rounds, schedule=solver)
        origin_u = float(result.odometer.values[config.domain.origin_index])
        if origin_u < previous - 100.0 * tol:
            raise RuntimeError("nested odometer decreased; abelian monotonicity broken")
        previous = max(previous, origin_u)
        u_at_origin.append(origin_u)
        rounds.append(result.rounds)
        flags.append(result.stabilized)
        if not result.stabilized:
            truncated = True
            break
    return NestedTrace(
        radii[: len(u_at_origin)],
        np.array(u_at_origin),
        np.array(rounds),
        np.array(flags, dtype=bool),
        truncated,
    )


def classify_trace(
    u_origin: np.ndarray,
    plateau_ratio: float = 1.05,
    growth_ratio: float = 1.5,
    floor: float = 1e-9,
) -> str:
    """Label a nested odometer trace by its last doubling ratio.

    The thresholds are pragmatic reporting devices, not theorems: a ratio
    under ``plateau_ratio`` reads as saturation, above ``growth_ratio`` as
    growth, anything between is inconclusive.
    """
    if len(u_origin) < 2:
        raise ValueError("need at least two radii to classify")
    prev, last = float(u_origin[-2]), float(u_origin[-1])
    if last < floor:
        return "plateau"
    if prev < floor:
        return "growth"
    ratio = last / prev
    if ratio < plateau_ratio:
        return "plateau"
    if ratio > growth_ratio:
        return "growth"
    return "inconclusive"


@dataclass
class DichotomyReport:
    radii: list[int]
    classifications: list[str]
    counts: dict
    traces: np.ndarray


def dichotomy_experiment(
    d: int,
    law: HeavyTailLaw,
    mean: float,
    radii: Sequence[int],
    reps: int,
    seed: int = 0,
    tol: float = 1e-8,
    solver: str = "sor",
    max_rounds: int = 200_000,
) -> DichotomyReport:
    """Replicated nested traces with growth/plateau classification."""
    classifications = []
    traces = []
    for rep in range(int(reps)):
        rng = stream(seed, "dichotomy", rep)
        trace = nested_stabilize(
            d, law, mean, radii, tol=tol, rng=rng, solver=solver, max_rounds=max_rounds
        )
        padded = np.full(len(radii), np.nan)
        padded[: len(trace.u_origin)] = trace.u_origin
        traces.append(padded)
        classifications.append(
            classify_trace(trace.u_origin) if len(trace.u_origin) >= 2 else "inconclusive"
        )
    counts = {
        label: classifications.count(label)
        for label in ("plateau", "growth", "inconclusive")
    }
    return DichotomyReport(list(radii), classifications, counts, np.array(traces))


# ---------------------------------------------------------------------------
# Series probes for the doubly transient regime.

@dataclass
class VeSeriesReport:
    n_terms: list[int]
    quantile_probs: np.ndarray
    quantiles: np.ndarray          # len(n_terms) x len(quantile_probs)
    ks_rows: list[tuple[int, float]]        # (N, KS(v_N, v_2N))
    left_tail: list[tuple[float, float]]    # (M, P(v_max < -M))


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())


def ve_series_probe(
    d: int,
    law: HeavyTailLaw,
    n_terms: Sequence[int],
    reps: int,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
    tail_thresholds: Sequence[float] = (0.5, 1.0, 2.0, 5.0, 10.0),
    quantile_probs: Sequence[float] = (0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99),
) -> VeSeriesReport:
    """Distribution of the truncated potential series (2d)^-1 sum g(o,y_j) Y_j.

    Sites are enumerated by sup-norm shells (lexicographic inside a shell);
    the same noise path is extended from N to 2N terms so the Kolmogorov-
    Smirnov distance between v_N and v_2N isolates the tail contribution.
    """
    if d < 3:
        raise ValueError("the series probe needs a transient lattice, d >= 3")
    if rng is None:
        rng = stream(seed, "ve-series")
    n_terms = sorted(int(n) for n in n_terms)
    checkpoints = sorted({n for n in n_terms} | {2 * n for n in n_terms})
    jmax = checkpoints[-1]
    sites = shell_enumeration(d, jmax)
    coeff = zd_green_values(d, sites) / (2.0 * d)
    reps = int(reps)
    snapshots = {}
    total = np.zeros(reps)
    done = 0
    block = max(1, 4_000_000 // reps)
    for stop in checkpoints:
        while done < stop:
            j = min(stop - done, block)
            noise = sample(law, rng, size=(reps, j))
            total += noise @ coeff[done : done + j]
            done += j
        snapshots[stop] = total.copy()
    probs = np.asarray(quantile_probs)
    quantiles = np.array(
        [np.quantile(snapshots[n], probs) for n in n_terms]
    )
    ks_rows = [(n, _ks_statistic(snapshots[n], snapshots[2 * n])) for n in n_terms]
    deepest = snapshots[checkpoints[-1]]
    left_tail = [(float(m), float(np.mean(deepest < -m))) for m in tail_thresholds]
    return VeSeriesReport(n_terms, probs, quantiles, ks_rows, left_tail)


# ---------------------------------------------------------------------------
# Quantitative tail bound probe.

@dataclass
class TailBoundRow:
    threshold: float     # M
    cutoff: int          # n1(M), 1-based index of the first retained term
    probability: float   # empirical P(|sum_{j >= n1} c_j Z_j| > 1/M)
    fitted_bound: float  # M^-a with a fitted across the table


def tail_bound_check(
    coefficients,
    alpha: float,
    delta: float,
    thresholds: Sequence[float],
    reps: int,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
    law: Optional[HeavyTailLaw] = None,
) -> list[TailBoundRow]:
    """Probe the truncated-series exceedance bound for RV(-alpha) noise.

    For each threshold M the cutoff n1 is the smallest index satisfying
    (C.1) sum_{j >= n1} |c_j|^delta < (1/M)^(2 delta) and
    (C.2) |c_j| <= min(1, (1/M) / x_star) for all j >= n1,
    where x_star is the point beyond which the Pareto tail and truncated
    second moment obey their regular-variation envelopes
    P(|Z| > x) <= x^-delta / 2 and E[Z^2 1_{|Z| <= x}] <= x^(2-delta) / 2.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError("the tail bound probe requires alpha in (1, 2)")
    if not 0.0 < delta < alpha:
        raise ValueError("delta must lie in (0, alpha)")
    if law is None:
        law = HeavyTailLaw.pareto(alpha, 1.0)
    if law.kind != "pareto" or not law.symmetric:
        raise ValueError("threshold selection is implemented for symmetric pareto noise")
    if rng is None:
        rng = stream(seed, "tail-bound")
    c = np.abs(np.asarray(coefficients, dtype=float).ravel())
    powers = c**delta
    tail_power = np.concatenate([np.cumsum(powers[::-1])[::-1], [0.0]])
    if c.size >= 100 and tail_power[0] > 0:
        tail_share = tail_power[int(0.9 * c.size)] / tail_power[0]
        if tail_share > 0.05:
            warnings.warn(
                f"sum |c_j|^delta looks slowly convergent (last decade holds "
                f"{tail_share:.1%}); cutoffs may be unreliable",
                stacklevel=2,
            )
    # envelope thresholds for the exact pareto law, scale 1
    x1 = 2.0 ** (1.0 / (alpha - delta))
    x2 = (2.0 * alpha / (2.0 - alpha)) ** (1.0 / (alpha - delta))
    x_star = max(x1, x2)
    rows = []
    probabilities = []
    for m in thresholds:
        eps = 1.0 / float(m)
        ceiling = min(1.0, eps / x_star)
        violations = np.where(c > ceiling)[0]
        n1 = int(violations.max()) + 1 if violations.size else 0
        while n1 < c.size and tail_power[n1] >= eps ** (2.0 * delta):
            n1 += 1
        active = c[n1:]
        exceed = np.zeros(int(reps), dtype=bool)
        if active.size:
            total = np.zeros(int(reps))
            block = max(1, 4_000_000 // int(reps))
            for j0 in range(0, active.size, block):
                noise = sample(law, rng, size=(int(reps), min(block, active.size - j0)))
                total += noise @ active[j0 : j0 + min(block, active.size - j0)]
            exceed = np.abs(total) > eps
        probabilities.append(float(exceed.mean()))
        rows.append(TailBoundRow(float(m), n1 + 1, float(exceed.mean()), math.nan))
    ms = np.log(np.asarray([row.threshold for row in rows]))
    ps = -np.log(np.maximum(np.asarray(probabilities), 1.0 / int(reps)))
    slope = float((ms @ ps) / (ms @ ms)) if float(ms @ ms) > 0 else 0.0
    for row in rows:
        row.fitted_bound = float(row.threshold ** (-slope))
    return rows
