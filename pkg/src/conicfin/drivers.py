"""Driver functions g(t, z) for backward difference equations.

A driver is predictable (its time-t coefficients are known on the level t-1
slots), uniformly Lipschitz in z, and vanishes at z = 0. Drivers evaluate
elementwise: z arrays of shape (..., n_{t-1}) map to the same shape, with
per-slot coefficients broadcast along the last axis.

"Regular" means the one-step comparison argument applies to the driver. A
positive strict-Lipschitz margin (max_t sup |c_t dW_t| < 1) is sufficient;
linear drivers qualify when every reweighting 1 + x_t dW_t stays positive;
the entropic driver qualifies on trees where max |dW_t| never exceeds the
one-step quadratic variation, because its divided differences then stay
strictly inside the unit reweighting band. That certificate is carried by
the comparison_certified flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tree import MartingaleSpec

LIPSCHITZ_TOL = 1e-9
ZERO_TOL = 1e-12
CERT_TOL = 1e-12


class DriverError(ValueError):
    """Base class for driver construction and validation failures."""


class ParamOutOfRange(DriverError):
    """A driver parameter violates its admissible range."""


class NotRandomWalk(DriverError):
    """Operation needs the symmetric walk with its generated filtration."""


def _lncosh_half(a: np.ndarray) -> np.ndarray:
    """log(0.5*exp(-a) + 0.5*exp(a)), stable for large |a|."""
    m = np.abs(a)
    return m - np.log(2.0) + np.log1p(np.exp(-2.0 * m))


def _lse3(z: np.ndarray) -> np.ndarray:
    """log((1 + exp(-z) + exp(z)) / 3), stable for large |z|."""
    m = np.abs(z)
    return m + np.log1p(np.exp(-m) + np.exp(-2.0 * m)) - np.log(3.0)


class Driver:
    """Base driver: subclasses fill in eval/lipschitz and the flags."""

    kind: str = "abstract"
    convex: bool = False
    positive_homogeneous: bool = False
    linear: bool = False
    comparison_certified: bool = False

    def __init__(self, walk: MartingaleSpec):
        self.walk = walk
        self.tree = walk.tree

    def eval(self, t: int, z) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self, t: int) -> np.ndarray:
        """Declared Lipschitz constants on the level t-1 slots."""
        raise NotImplementedError

    def slope(self, t: int) -> np.ndarray:
        raise DriverError(f"driver kind {self.kind!r} has no linear slope")

    def _slots(self, t: int) -> int:
        return self.tree.n_nodes(t - 1)


class ZeroDriver(Driver):
    kind = "zero"
    convex = True
    positive_homogeneous = True
    linear = True

    def eval(self, t, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def lipschitz(self, t):
        return np.zeros(self._slots(t))

    def slope(self, t):
        return np.zeros(self._slots(t))


class LinearDriver(Driver):
    """g(t, z) = x_t z with a predictable slope x_t."""

    kind = "linear"
    convex = True
    positive_homogeneous = True
    linear = True

    def __init__(self, walk, slopes):
        super().__init__(walk)
        T = self.tree.horizon
        if not isinstance(slopes, (list, tuple)) and np.ndim(slopes) == 0:
            self._x = [None] + [np.full(self._slots(t), float(slopes)) for t in range(1, T + 1)]
        else:
            seq = list(slopes)
            if len(seq) == T + 1:
                seq = seq[1:]
            if len(seq) != T:
                raise ParamOutOfRange(
                    f"linear driver needs one slope per period (got {len(seq)}, horizon {T})"
                )
            self._x = [None]
            for t in range(1, T + 1):
                self._x.append(
                    np.broadcast_to(np.asarray(seq[t - 1], dtype=float), (self._slots(t),)).copy()
                )

    def eval(self, t, z):
        return self._x[t] * np.asarray(z, dtype=float)

    def lipschitz(self, t):
        return np.abs(self._x[t])

    def slope(self, t):
        return self._x[t]


class CoherentAbsDriver(Driver):
    """g(t, z) = c |z| with constant c in [0, 1)."""

    kind = "coherent_abs"
    convex = True
    positive_homogeneous = True

    def __init__(self, walk, c: float):
        super().__init__(walk)
        c = float(c)
        if not 0.0 <= c < 1.0:
            raise ParamOutOfRange(f"coherent_abs needs 0 <= c < 1, got {c}")
        self.c = c

    def eval(self, t, z):
        return self.c * np.abs(np.asarray(z, dtype=float))

    def lipschitz(self, t):
        return np.full(self._slots(t), self.c)


class LogSumExpDriver(Driver):
    """g(t, z) = K/((K+1) * sup|dW_t|) * log((1 + e^-z + e^z)/3)."""

    kind = "logsumexp"
    convex = True

    def __init__(self, walk, K: float):
        super().__init__(walk)
        K = float(K)
        if K <= 0.0:
            raise ParamOutOfRange(f"logsumexp needs K > 0, got {K}")
        self.K = K
        T = self.tree.horizon
        self._coeff = [None] + [
            K / ((K + 1.0) * walk.sup_abs_dW(t)) for t in range(1, T + 1)
        ]

    def eval(self, t, z):
        return self._coeff[t] * _lse3(np.asarray(z, dtype=float))

    def lipschitz(self, t):
        # the slope of _lse3 stays strictly inside (-1, 1)
        return np.full(self._slots(t), self._coeff[t])


class EntropicDriver(Driver):
    """g(t, z) = (gamma / dqv_t) * log(0.5 e^{-z/gamma} + 0.5 e^{z/gamma}).

    Its sharpest Lipschitz constant equals 1/dqv_t (a supremum that is never
    attained), so the strict-margin criterion is borderline. Comparison is
    still certified whenever max |dW_t| <= dqv_t slot by slot: the divided
    differences of the driver along any two solutions then keep every
    reweighting 1 + x dW strictly positive.
    """

    kind = "entropic"
    convex = True

    def __init__(self, walk, gamma: float):
        super().__init__(walk)
        gamma = float(gamma)
        if gamma <= 0.0:
            raise ParamOutOfRange(f"entropic needs gamma > 0, got {gamma}")
        self.gamma = gamma
        T = self.tree.horizon
        self.comparison_certified = all(
            np.all(walk.max_abs_dW(t) <= walk.dqv(t) * (1.0 + CERT_TOL))
            for t in range(1, T + 1)
        )

    def eval(self, t, z):
        z = np.asarray(z, dtype=float)
        return (self.gamma / self.walk.dqv(t)) * _lncosh_half(z / self.gamma)

    def lipschitz(self, t):
        return 1.0 / self.walk.dqv(t)


class CallableDriver(Driver):
    """Wrap a plain function g(t, z) with declared flags and constants.

    Used for custom and deliberately ill-behaved drivers in validation
    work; the declared Lipschitz constant is taken on faith and audited by
    validate_assumption_A.
    """

    kind = "callable"

    def __init__(self, walk, fn, lipschitz_const, convex=False,
                 positive_homogeneous=False, comparison_certified=False):
        super().__init__(walk)
        self._fn = fn
        self._c = float(lipschitz_const)
        self.convex = convex
        self.positive_homogeneous = positive_homogeneous
        self.comparison_certified = comparison_certified

    def eval(self, t, z):
        return np.asarray(self._fn(t, np.asarray(z, dtype=float)), dtype=float)

    def lipschitz(self, t):
        return np.full(self._slots(t), self._c)


class RiskInducedDriver(Driver):
    """Driver read off a dynamic risk measure through walk-increment probes.

    rho(t, X) must map a leaf-level payoff array (..., n_T) to its time-t
    risk (..., n_t), vectorized over leading axes. The induced driver is
    g(t, z) = rho(t-1, z dW_t) / dqv_t, which reproduces rho on the
    symmetric walk with its generated filtration.
    """

    kind = "risk_induced"

    def __init__(self, walk, rho: Callable, convex: bool = True):
        if not walk.predictable_representation:
            raise NotRandomWalk(
                "reading a driver off a risk measure needs the symmetric walk "
                "with its generated filtration"
            )
        super().__init__(walk)
        self._rho = rho
        self.convex = convex
        self._lip = None

    def eval(self, t, z):
        tr, w = self.tree, self.walk
        z = np.asarray(z, dtype=float)
        z_leaf = np.take(
            np.broadcast_to(z, z.shape[:-1] + (tr.n_nodes(t - 1),)),
            tr.ancestor_map(tr.horizon, t - 1),
            axis=-1,
        )
        dw_leaf = tr.broadcast(w.dW(t), t, tr.horizon)
        return self._rho(t - 1, z_leaf * dw_leaf) / w.dqv(t)

    def lipschitz(self, t):
        if self._lip is None:
            grid = np.linspace(-8.0, 8.0, 65)
            worst = 0.0
            for u in range(1, self.tree.horizon + 1):
                vals = np.stack([self.eval(u, np.full(self._slots(u), g)) for g in grid])
                diffs = np.abs(np.diff(vals, axis=0)) / np.diff(grid)[:, None]
                worst = max(worst, float(diffs.max()))
            self._lip = worst
        return np.full(self._slots(t), self._lip)


# ---- parametric families ---------------------------------------------------


class DriverFamily:
    """An increasing family x -> g_x of drivers indexed by a level x > 0."""

    kind: str = "abstract"
    positive_homogeneous: bool = False

    def __init__(self, walk: MartingaleSpec):
        self.walk = walk
        self.tree = walk.tree

    def make(self, x: float) -> Driver:
        raise NotImplementedError

    def eval_with_x(self, t: int, x, z) -> np.ndarray:
        """g_x(t, z) with x scalar or a per-slot array."""
        raise NotImplementedError

    def slotwise(self, x_levels: Sequence) -> "SlotwiseFamilyDriver":
        """Driver whose family level varies with the level t-1 slot.

        Locality makes the induced nonlinear expectation agree, node by
        node, with the scalar-level one; this is what vectorizes the
        per-node bisection for acceptability indices.
        """
        return SlotwiseFamilyDriver(self, x_levels)

    def _check_level(self, x: float) -> float:
        x = float(x)
        if x <= 0.0:
            raise ParamOutOfRange(f"family level must be positive, got {x}")
        return x


class SlotwiseFamilyDriver(Driver):
    kind = "family_slotwise"

    def __init__(self, family: DriverFamily, x_levels: Sequence):
        super().__init__(family.walk)
        self.family = family
        self.convex = True
        self.positive_homogeneous = family.positive_homogeneous
        self._x = [None]
        for t in range(1, self.tree.horizon + 1):
            x = np.broadcast_to(
                np.asarray(x_levels[t], dtype=float), (self.tree.n_nodes(t - 1),)
            )
            if np.any(x <= 0.0):
                raise ParamOutOfRange("family levels must be positive")
            self._x.append(x.copy())

    def eval(self, t, z):
        return self.family.eval_with_x(t, self._x[t], np.asarray(z, dtype=float))

    def lipschitz(self, t):
        return self.family.lipschitz_with_x(t, self._x[t])


class CoherentFamily(DriverFamily):
    """g_x(z) = x/(x+1) |z|: positively homogeneous at every level."""

    kind = "coherent"
    positive_homogeneous = True

    def make(self, x):
        return CoherentAbsDriver(self.walk, self._check_level(x) / (self._check_level(x) + 1.0))

    def eval_with_x(self, t, x, z):
        c = x / (x + 1.0)
        return c * np.abs(z)

    def lipschitz_with_x(self, t, x):
        return np.broadcast_to(x / (x + 1.0), (self.tree.n_nodes(t - 1),))


class QuasiconcaveLseFamily(DriverFamily):
    """g_x(z) = x/(x+1) log((1 + e^-z + e^z)/3): not positively homogeneous."""

    kind = "quasiconcave_lse"
    positive_homogeneous = False

    def make(self, x):
        x = self._check_level(x)
        drv = CallableDriver(
            self.walk,
            lambda t, z, c=x / (x + 1.0): c * _lse3(z),
            lipschitz_const=x / (x + 1.0),
            convex=True,
        )
        drv.kind = "quasiconcave_lse"
        return drv

    def eval_with_x(self, t, x, z):
        return (x / (x + 1.0)) * _lse3(z)

    def lipschitz_with_x(self, t, x):
        return np.broadcast_to(x / (x + 1.0), (self.tree.n_nodes(t - 1),))


class EntropicFamily(DriverFamily):
    """g_x(z) = 1/(x dqv_t) log(0.5 e^{-xz} + 0.5 e^{xz}): gamma = 1/x."""

    kind = "entropic"
    positive_homogeneous = False

    def make(self, x):
        return EntropicDriver(self.walk, gamma=1.0 / self._check_level(x))

    def eval_with_x(self, t, x, z):
        return _lncosh_half(x * z) / (x * self.walk.dqv(t))

    def lipschitz_with_x(self, t, x):
        return np.broadcast_to(1.0 / self.walk.dqv(t), (self.tree.n_nodes(t - 1),))


_FAMILY_KINDS = {
    "coherent": CoherentFamily,
    "quasiconcave_lse": QuasiconcaveLseFamily,
    "entropic": EntropicFamily,
}


def builtin_family(kind: str, walk: MartingaleSpec) -> DriverFamily:
    if kind not in _FAMILY_KINDS:
        raise ParamOutOfRange(f"unknown family kind {kind!r}; have {sorted(_FAMILY_KINDS)}")
    return _FAMILY_KINDS[kind](walk)


def builtin_driver(kind: str, walk: MartingaleSpec, **params) -> Driver:
    if kind == "zero":
        return ZeroDriver(walk)
    if kind == "linear":
        return LinearDriver(walk, params.get("slope", params.get("slopes", 0.0)))
    if kind == "coherent_abs":
        return CoherentAbsDriver(walk, params["c"])
    if kind == "logsumexp":
        return LogSumExpDriver(walk, params["K"])
    if kind == "entropic":
        return EntropicDriver(walk, params["gamma"])
    raise ParamOutOfRange(f"unknown driver kind {kind!r}")


def driver_from_risk_measure(rho, walk, convex: bool = True) -> RiskInducedDriver:
    """Driver whose nonlinear expectation reproduces the risk measure rho."""
    return RiskInducedDriver(walk, rho, convex=convex)


# ---- validation reports -----------------------------------------------------


DEFAULT_Z_GRID = np.linspace(-10.0, 10.0, 161)


@dataclass(frozen=True)
class AssumptionAReport:
    zero_at_zero: float
    lipschitz_declared: float
    lipschitz_estimate: float
    lipschitz_ok: bool
    passed: bool


def validate_assumption_A(g: Driver, z_grid=None) -> AssumptionAReport:
    """Audit g(t,0)=0 and the declared Lipschitz constants on a z grid.

    The estimate is the largest divided difference between neighboring grid
    points, taken over all levels and slots; it must not exceed the declared
    constant (plus 1e-9). A super-linear driver fails on any grid wide
    enough to reveal the growth.
    """
    grid = DEFAULT_Z_GRID if z_grid is None else np.asarray(z_grid, dtype=float)
    tr = g.tree
    worst_zero = 0.0
    worst_est = 0.0
    declared = 0.0
    ok = True
    for t in range(1, tr.horizon + 1):
        slots = tr.n_nodes(t - 1)
        zero = np.abs(g.eval(t, np.zeros(slots)))
        worst_zero = max(worst_zero, float(zero.max()))
        c_t = np.max(g.lipschitz(t))
        declared = max(declared, float(c_t))
        vals = np.stack([g.eval(t, np.full(slots, z)) for z in grid])
        diffs = np.abs(np.diff(vals, axis=0)) / np.diff(grid)[:, None]
        est = float(diffs.max())
        worst_est = max(worst_est, est)
        if est > np.min(g.lipschitz(t)) + LIPSCHITZ_TOL:
            # compare slotwise: each slot's differences against its own constant
            slot_est = diffs.max(axis=0)
            if np.any(slot_est > g.lipschitz(t) + LIPSCHITZ_TOL):
                ok = False
    passed = worst_zero <= ZERO_TOL and ok
    return AssumptionAReport(
        zero_at_zero=worst_zero,
        lipschitz_declared=declared,
        lipschitz_estimate=worst_est,
        lipschitz_ok=ok,
        passed=passed,
    )


@dataclass(frozen=True)
class RegularityReport:
    regular: bool
    margin: float
    reason: str


def is_regular(g: Driver) -> RegularityReport:
    """Decide whether the comparison argument is available for g.

    margin = 1 - max_t max_slots (c_t * max|dW_t|). Positive margin is
    sufficient on its own; linear drivers pass when every reweighting
    1 + x_t dW_t stays positive; otherwise a comparison certificate
    (e.g. the entropic divided-difference bound) is honored.
    """
    w = g.walk
    worst = 0.0
    for t in range(1, g.tree.horizon + 1):
        worst = max(worst, float(np.max(g.lipschitz(t) * w.max_abs_dW(t))))
    margin = 1.0 - worst
    if margin > 0.0:
        return RegularityReport(True, margin, "strict-lipschitz-margin")
    if g.linear:
        ok = True
        for t in range(1, g.tree.horizon + 1):
            weights = 1.0 + g.slope(t)[g.tree.parent[t]] * w.dW(t)
            ok = ok and bool(np.all(weights > CERT_TOL))
        if ok:
            return RegularityReport(True, margin, "linear-positive-weights")
    if g.comparison_certified:
        return RegularityReport(True, max(margin, 0.0), "certified-comparison")
    return RegularityReport(False, margin, "not-regular")


def lipschitz_dominance_check(g1: Driver, g2: Driver, z_grid=None, tol: float = 1e-6):
    """Empirical check that g1's sharp constant is dominated by g2's.

    For convex Lipschitz drivers with g(0) = 0 and g1 <= g2 pointwise the
    dominance is automatic; this estimates both constants by divided
    differences and reports (ok, c1_estimate, c2_estimate).
    """
    grid = DEFAULT_Z_GRID if z_grid is None else np.asarray(z_grid, dtype=float)

    def estimate(g):
        worst = 0.0
        for t in range(1, g.tree.horizon + 1):
            slots = g.tree.n_nodes(t - 1)
            vals = np.stack([g.eval(t, np.full(slots, z)) for z in grid])
            diffs = np.abs(np.diff(vals, axis=0)) / np.diff(grid)[:, None]
            worst = max(worst, float(diffs.max()))
        return worst

    c1, c2 = estimate(g1), estimate(g2)
    return c1 <= c2 + tol, c1, c2


@dataclass(frozen=True)
class FamilyReport:
    monotone_in_level: bool
    monotone_worst: float
    each_level_convex: bool
    each_level_regular: bool
    left_continuous: bool
    passed: bool
    levels: tuple


def validate_family(
    family: DriverFamily,
    x_grid=(0.1, 0.5, 1.0, 2.0, 5.0, 20.0),
    z_grid=None,
    tol: float = 1e-12,
) -> FamilyReport:
    """Audit the family axioms on grids of levels and z values.

    Checks pointwise monotonicity of x -> g_x, midpoint convexity and
    regularity of each g_x, and continuity from the left in x.
    """
    grid = np.linspace(-6.0, 6.0, 49) if z_grid is None else np.asarray(z_grid, dtype=float)
    tr = family.tree
    xs = sorted(float(x) for x in x_grid)
    mono_worst = 0.0
    convex_ok = True
    regular_ok = True
    left_ok = True
    for t in range(1, tr.horizon + 1):
        slots = tr.n_nodes(t - 1)
        vals = {}
        for x in xs:
            vals[x] = np.stack([family.eval_with_x(t, x, np.full(slots, z)) for z in grid])
        for lo, hi in zip(xs, xs[1:]):
            mono_worst = max(mono_worst, float(np.max(vals[lo] - vals[hi])))
        for x in xs:
            v = vals[x]
            mid = np.stack(
                [family.eval_with_x(t, x, np.full(slots, 0.5 * (a + b)))
                 for a, b in zip(grid, grid[1:])]
            )
            if np.max(mid - 0.5 * (v[:-1] + v[1:])) > 1e-10:
                convex_ok = False
            eps_v = np.stack(
                [family.eval_with_x(t, max(x - 1e-9, x * 0.5e-9), np.full(slots, z))
                 for z in grid]
            )
            if np.max(np.abs(eps_v - v)) > 1e-6:
                left_ok = False
    for x in xs:
        if not is_regular(family.make(x)).regular:
            regular_ok = False
    mono_ok = mono_worst <= tol
    return FamilyReport(
        monotone_in_level=mono_ok,
        monotone_worst=mono_worst,
        each_level_convex=convex_ok,
        each_level_regular=regular_ok,
        left_continuous=left_ok,
        passed=mono_ok and convex_ok and regular_ok and left_ok,
        levels=tuple(xs),
    )
