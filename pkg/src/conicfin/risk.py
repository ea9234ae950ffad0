"""Dynamic convex risk measures and acceptability indices on dividend streams.

A dividend stream is an adapted process D_0..D_T. The time-t risk of a
stream under a convex regular driver is the nonlinear expectation of
-(D_t + ... + D_T); the induced functional is local, cash-additive,
monotone for the tail order, convex, and time consistent, and positively
homogeneous drivers make it coherent.

An acceptability index is built from an increasing family of drivers: the
index is the largest family level at which the risk of the stream stays
nonpositive. Values are found by per-node bisection, vectorized through a
driver whose family level varies with the level-t ancestor of each slot
(locality makes the per-node values equal their scalar-level counterparts).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bsde import solve_bsde
from .drivers import Driver, DriverFamily
from .tree import AdaptedProcess, FiltrationTree, MartingaleSpec, single_payment

DividendStream = AdaptedProcess

AXIOM_TOL = 1e-10
INDEX_TOL = 1e-8
X_MIN = 1e-6
X_MAX = 1e6


@dataclass(frozen=True)
class RiskMeasure:
    """Stream risk induced by a convex regular driver."""

    driver: Driver

    @property
    def coherent(self) -> bool:
        return self.driver.convex and self.driver.positive_homogeneous

    def __call__(self, stream: AdaptedProcess, t: int) -> np.ndarray:
        return risk(self.driver, stream, t)


def risk(driver: Driver, stream: AdaptedProcess, t: int) -> np.ndarray:
    """Time-t risk of the stream: nonlinear expectation of minus its tail sum."""
    terminal = -stream.future_sum(t)
    return solve_bsde(driver, terminal, driver.walk).Y[t]


@dataclass(frozen=True)
class AcceptabilityIndex:
    """Largest family level at which the stream's tail risk is nonpositive.

    Bisection on [x_min, x_max] with absolute tolerance x_tol; the bracket
    ends act as sentinels: 0 when even x_min is not acceptable, +inf when
    x_max still is.
    """

    family: DriverFamily
    x_min: float = X_MIN
    x_max: float = X_MAX
    x_tol: float = INDEX_TOL

    def __call__(self, stream: AdaptedProcess, t: int) -> np.ndarray:
        return acceptability_index(
            self.family, stream, t, x_min=self.x_min, x_max=self.x_max, x_tol=self.x_tol
        )


def _risk_at_levels(family: DriverFamily, terminal: np.ndarray, t: int, x_nodes: np.ndarray):
    """Risk per level-t node when node v uses family level x_nodes[v]."""
    tr = family.tree
    x_levels = [None] * (tr.horizon + 1)
    for u in range(1, tr.horizon + 1):
        if u - 1 >= t:
            x_levels[u] = np.take(x_nodes, tr.ancestor_map(u - 1, t), axis=-1)
        else:
            x_levels[u] = np.ones(tr.n_nodes(u - 1))
    drv = family.slotwise(x_levels)
    return solve_bsde(drv, terminal, family.walk).Y[t]


def acceptability_index(
    family: DriverFamily,
    stream: AdaptedProcess,
    t: int,
    x_min: float = X_MIN,
    x_max: float = X_MAX,
    x_tol: float = INDEX_TOL,
) -> np.ndarray:
    """Per-node acceptability level of the stream at time t."""
    tr = family.tree
    terminal = -stream.future_sum(t)
    n = tr.n_nodes(t)
    lo = np.full(n, x_min)
    hi = np.full(n, x_max)
    feas_lo = _risk_at_levels(family, terminal, t, lo) <= 0.0
    feas_hi = _risk_at_levels(family, terminal, t, hi) <= 0.0
    alpha = np.empty(n)
    alpha[~feas_lo] = 0.0
    alpha[feas_hi] = np.inf
    active = feas_lo & ~feas_hi
    while np.any(active & (hi - lo > x_tol)):
        mid = np.where(active, 0.5 * (lo + hi), lo)
        feas = _risk_at_levels(family, terminal, t, mid) <= 0.0
        take_lo = active & feas
        take_hi = active & ~feas
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_hi, mid, hi)
    alpha[active] = lo[active]
    return alpha


# ---- axiom batteries --------------------------------------------------------


@dataclass(frozen=True)
class AxiomResult:
    name: str
    passed: bool
    worst: float
    note: str = ""


@dataclass(frozen=True)
class AxiomReport:
    results: tuple
    passed: bool

    def __getitem__(self, name: str) -> AxiomResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def random_streams(
    tree: FiltrationTree, rng: np.random.Generator, count: int, scale: float = 1.0
) -> list:
    out = []
    for _ in range(count):
        vals = [scale * rng.normal(size=tree.n_nodes(s)) for s in range(tree.horizon + 1)]
        out.append(AdaptedProcess(tree, tuple(vals)))
    return out


def _nonneg_tail(tree: FiltrationTree, rng: np.random.Generator, t: int) -> AdaptedProcess:
    vals = [np.zeros(tree.n_nodes(s)) for s in range(t)]
    vals += [np.abs(rng.normal(size=tree.n_nodes(s))) for s in range(t, tree.horizon + 1)]
    return AdaptedProcess(tree, tuple(vals))


def _tilted_streams(walk) -> list:
    """Streams whose indices are strictly interior: a small positive mean on
    top of a real downside, so acceptability switches at a finite level.

    Random batteries tend to land on indices of 0 or infinity everywhere,
    which hides any level dependence; these designed payoffs anchor the
    scale-invariance probe."""
    tr = walk.tree
    out = []
    for t_star in sorted({1, tr.horizon}):
        p = np.asarray(walk.path_values()[t_star], dtype=float)
        m = float(np.max(np.abs(p)))
        if m <= 0.0:
            continue
        vals = [np.zeros(tr.n_nodes(t)) for t in range(tr.horizon + 1)]
        vals[t_star] = 0.95 * p / m + 0.05
        out.append(AdaptedProcess(tr, tuple(vals)))
    return out


def _level_lambdas(rng: np.random.Generator, n: int, values=(0.0, 0.25, 0.5, 0.75, 1.0)):
    return rng.choice(np.asarray(values, dtype=float), size=n)


def check_dcrm_axioms(
    driver: Driver,
    streams: Optional[Sequence[AdaptedProcess]] = None,
    times: Optional[Sequence[int]] = None,
    seed: int = 0,
    tol: float = AXIOM_TOL,
) -> AxiomReport:
    """Sampled audit of the convex risk-measure axioms for one driver.

    Locality, convexity, tail monotonicity, cash additivity, one-step time
    consistency, and (for positively homogeneous drivers) positive
    homogeneity are checked on a battery of streams, random localization
    sets, and node-wise weights. Worst violations are reported per axiom.
    """
    tr = driver.tree
    rng = np.random.default_rng(seed)
    if streams is None:
        streams = random_streams(tr, rng, 6)
    if times is None:
        times = list(range(tr.horizon + 1))
    rho = lambda D, t: risk(driver, D, t)

    worst = {k: 0.0 for k in ("locality", "convexity", "monotonicity", "cash", "consistency")}
    for D in streams:
        for t in times:
            n = tr.n_nodes(t)
            base = rho(D, t)
            ind = (rng.random(n) < 0.5).astype(float)
            if not ind.any():
                ind[int(rng.integers(n))] = 1.0
            loc = rho(D.scale_from(ind, t), t)
            worst["locality"] = max(worst["locality"], float(np.max(np.abs(ind * (base - loc)))))
            other = streams[int(rng.integers(len(streams)))]
            lam = _level_lambdas(rng, n)
            mix = D.combine(other, lam, t)
            gap = rho(mix, t) - (lam * base + (1.0 - lam) * rho(other, t))
            worst["convexity"] = max(worst["convexity"], float(np.max(gap)))
            bump = _nonneg_tail(tr, rng, t)
            worst["monotonicity"] = max(
                worst["monotonicity"], float(np.max(rho(D.add(bump), t) - rho(D, t)))
            )
            s = int(rng.integers(t, tr.horizon + 1))
            m = rng.normal(size=n)
            paid = D.add(single_payment(tr, s, tr.broadcast(m, t, s)))
            worst["cash"] = max(worst["cash"], float(np.max(np.abs(rho(paid, t) - (base - m)))))
            if t < tr.horizon:
                inner = rho(D, t + 1)
                nested = rho(single_payment(tr, t + 1, -inner), t) - D.at(t)
                worst["consistency"] = max(
                    worst["consistency"], float(np.max(np.abs(base - nested)))
                )
    results = [
        AxiomResult("adapted", True, 0.0, "values live on level arrays by construction"),
        AxiomResult("locality", worst["locality"] <= tol, worst["locality"]),
        AxiomResult("convexity", worst["convexity"] <= tol, worst["convexity"]),
        AxiomResult("monotonicity", worst["monotonicity"] <= tol, worst["monotonicity"]),
        AxiomResult("cash_additivity", worst["cash"] <= tol, worst["cash"]),
        AxiomResult("time_consistency", worst["consistency"] <= tol, worst["consistency"]),
    ]
    if driver.positive_homogeneous:
        worst_h = 0.0
        for D in streams:
            for t in times:
                n = tr.n_nodes(t)
                lam = rng.choice(np.array([0.0, 0.5, 1.0, 2.0]), size=n)
                gap = np.abs(risk(driver, D.scale_from(lam, t), t) - lam * risk(driver, D, t))
                worst_h = max(worst_h, float(np.max(gap)))
        results.append(AxiomResult("positive_homogeneity", worst_h <= tol, worst_h))
    passed = all(r.passed for r in results)
    return AxiomReport(results=tuple(results), passed=passed)


def check_dai_axioms(
    family: DriverFamily,
    streams: Optional[Sequence[AdaptedProcess]] = None,
    times: Optional[Sequence[int]] = None,
    seed: int = 0,
    x_tol: float = INDEX_TOL,
) -> AxiomReport:
    """Sampled audit of the acceptability-index axioms for one family.

    Locality, quasi-concavity, tail monotonicity, the two directions of
    scale monotonicity, and one-step consistency are checked; exact scale
    invariance is probed separately and reported as scale_invariance with a
    witness note when it fails (expected for families that are not
    positively homogeneous).
    """
    tr = family.tree
    rng = np.random.default_rng(seed)
    if streams is None:
        streams = _tilted_streams(family.walk) + random_streams(tr, rng, 3)
    if times is None:
        times = list(range(tr.horizon + 1))
    tol = 200.0 * x_tol
    alpha = lambda D, t: acceptability_index(family, D, t, x_tol=x_tol)

    def gap_below(a, b):
        """max over nodes of (b - a) treating equal infinities as zero gap."""
        both_inf = np.isinf(a) & np.isinf(b)
        with np.errstate(invalid="ignore"):
            diff = np.where(both_inf, 0.0, b - a)
        return float(np.max(diff)) if diff.size else 0.0

    worst = {k: 0.0 for k in ("locality", "quasiconcavity", "monotonicity", "scale")}
    for D in streams:
        for t in times:
            n = tr.n_nodes(t)
            a = alpha(D, t)
            ind = (rng.random(n) < 0.5).astype(float)
            if not ind.any():
                ind[int(rng.integers(n))] = 1.0
            loc = alpha(D.scale_from(ind, t), t)
            on = ind > 0.5
            worst["locality"] = max(worst["locality"], gap_below(loc[on], a[on]), gap_below(a[on], loc[on]))
            other = streams[int(rng.integers(len(streams)))]
            lam = _level_lambdas(rng, n, values=(0.25, 0.5, 0.75))
            mixed = alpha(D.combine(other, lam, t), t)
            floor = np.minimum(a, alpha(other, t))
            worst["quasiconcavity"] = max(worst["quasiconcavity"], gap_below(mixed, floor))
            bump = _nonneg_tail(tr, rng, t)
            worst["monotonicity"] = max(worst["monotonicity"], gap_below(alpha(D.add(bump), t), a))
            lam_small = _level_lambdas(rng, n, values=(0.25, 0.5, 0.75, 1.0))
            worst["scale"] = max(worst["scale"], gap_below(alpha(D.scale_from(lam_small, t), t), a))
            lam_big = _level_lambdas(rng, n, values=(1.0, 1.5, 2.5))
            worst["scale"] = max(worst["scale"], gap_below(a, alpha(D.scale_from(lam_big, t), t)))

    worst_c = 0.0
    vacuous = 0
    for k, D0 in enumerate(streams[:3]):
        for t in range(tr.horizon):
            up = AdaptedProcess(
                tr,
                tuple(np.abs(v) if s == t else v for s, v in enumerate(D0.values)),
            )
            dn_src = streams[(k + 1) % len(streams)]
            dn = AdaptedProcess(
                tr,
                tuple(-np.abs(v) if s == t else v for s, v in enumerate(dn_src.values)),
            )
            a_up = alpha(up, t + 1)
            a_dn = alpha(dn, t + 1)
            lo_up = np.minimum.reduceat(a_up, tr.offsets[t + 1][:-1])
            hi_dn = np.maximum.reduceat(a_dn, tr.offsets[t + 1][:-1])
            m = np.where(
                np.isinf(lo_up) & np.isfinite(hi_dn),
                hi_dn + 1.0,
                0.5 * (lo_up + hi_dn),
            )
            usable = np.isfinite(m) & (lo_up >= hi_dn) & (m > 0.0)
            if not usable.any():
                vacuous += 1
                continue
            au, ad = alpha(up, t), alpha(dn, t)
            m_safe = np.where(usable, m, 0.0)
            bad = np.where(usable, np.maximum(m_safe - au, ad - m_safe), -np.inf)
            worst_c = max(worst_c, float(np.max(np.where(np.isneginf(bad), 0.0, bad))))

    scale_worst = 0.0
    witness = ""
    for D in streams[:3]:
        for t in times:
            n = tr.n_nodes(t)
            for lam_val in (0.25, 0.5, 0.75):
                scaled = alpha(D.scale_from(np.full(n, lam_val), t), t)
                base = alpha(D, t)
                finite = np.isfinite(scaled) & np.isfinite(base)
                if finite.any():
                    g = float(np.max(np.abs(scaled[finite] - base[finite])))
                    if g > scale_worst:
                        scale_worst = g
                        witness = f"lambda={lam_val}, t={t}, gap={g:.3e}"
    results = (
        AxiomResult("adapted", True, 0.0, "values live on level arrays by construction"),
        AxiomResult("locality", worst["locality"] <= tol, worst["locality"]),
        AxiomResult("quasiconcavity", worst["quasiconcavity"] <= tol, worst["quasiconcavity"]),
        AxiomResult("monotonicity", worst["monotonicity"] <= tol, worst["monotonicity"]),
        AxiomResult("scale_monotonicity", worst["scale"] <= tol, worst["scale"]),
        AxiomResult("time_consistency", worst_c <= tol, worst_c, f"vacuous batches: {vacuous}"),
        AxiomResult(
            "scale_invariance",
            scale_worst <= tol,
            scale_worst,
            witness if scale_worst > tol else "invariant on battery",
        ),
    )
    core = [r for r in results if r.name != "scale_invariance"]
    return AxiomReport(results=results, passed=all(r.passed for r in core))


@dataclass(frozen=True)
class DualityReport:
    consistent: bool
    decisive_nodes: int
    mismatches: int
    worst_alpha_gap: float


def level_set_duality(
    family: DriverFamily,
    stream: AdaptedProcess,
    t: int,
    gamma: float,
    margin: float = 1e-6,
) -> DualityReport:
    """Check that {index >= gamma} coincides with {level-gamma risk <= 0}.

    Nodes whose index sits within `margin` of gamma, or whose risk sits at
    round-off of zero, are boundary cases and excluded from the comparison.
    """
    alpha = acceptability_index(family, stream, t)
    val = risk(family.make(gamma), stream, t)
    alpha_side = alpha >= gamma
    val_side = val <= 0.0
    decisive = (np.abs(np.where(np.isinf(alpha), np.inf, alpha - gamma)) > margin) & (
        np.abs(val) > 1e-10
    )
    mismatch = decisive & (alpha_side != val_side)
    return DualityReport(
        consistent=not bool(mismatch.any()),
        decisive_nodes=int(np.count_nonzero(decisive)),
        mismatches=int(np.count_nonzero(mismatch)),
        worst_alpha_gap=float(np.min(np.abs(alpha - gamma))) if alpha.size else 0.0,
    )
