"""Bid and ask prices for dividend streams under acceptability constraints.

At acceptability level gamma, the time-t ask of phi shares of a stream D is
the nonlinear expectation of phi * (D_{t+1} + ... + D_T), taken under the
level-gamma driver of the chosen family; the bid is minus the expectation
of the negated payoff. Ask dominates bid, prices are time consistent one
step at a time, convex/concave in the stream, and market impact moves the
per-share price against large orders. When the driver is linear both sides
collapse to the discounted expectation under the reweighted measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bsde import solve_bsde
from .drivers import DriverFamily, LinearDriver
from .risk import random_streams
from .tree import AdaptedProcess, MartingaleSpec, single_payment

PRICE_TOL = 1e-10


class LevelNonpositive(ValueError):
    """Acceptability levels must be strictly positive."""


class NegativeQuantity(ValueError):
    """Share counts phi must be nonnegative."""


@dataclass(frozen=True)
class PriceQuote:
    side: str
    family_kind: str
    gamma: float
    t: int
    phi: np.ndarray
    value: np.ndarray


def _check_inputs(family: DriverFamily, gamma: float, phi, t: int):
    if not gamma > 0.0:
        raise LevelNonpositive(f"acceptability level must be positive, got {gamma}")
    tr = family.tree
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (tr.n_nodes(t),)).copy() \
        if np.asarray(phi).ndim <= 1 else np.asarray(phi, dtype=float)
    phi = tr.check_level_array(phi, t)
    if np.min(phi) < 0.0:
        raise NegativeQuantity(f"phi must be nonnegative, min is {np.min(phi)}")
    return phi


def _tail_payoff(stream: AdaptedProcess, phi: np.ndarray, t: int) -> np.ndarray:
    tr = stream.tree
    return tr.broadcast(phi, t, tr.horizon) * stream.future_sum(t + 1)


def ask(
    family: DriverFamily, gamma: float, phi, stream: AdaptedProcess, t: int
) -> PriceQuote:
    """Time-t ask price of phi shares of the stream's strictly future payments."""
    phi = _check_inputs(family, gamma, phi, t)
    g = family.make(gamma)
    value = solve_bsde(g, _tail_payoff(stream, phi, t), family.walk).Y[t]
    return PriceQuote("ask", family.kind, float(gamma), t, phi, value)


def bid(
    family: DriverFamily, gamma: float, phi, stream: AdaptedProcess, t: int
) -> PriceQuote:
    """Time-t bid price; minus the nonlinear expectation of the negated payoff."""
    phi = _check_inputs(family, gamma, phi, t)
    g = family.make(gamma)
    value = -solve_bsde(g, -_tail_payoff(stream, phi, t), family.walk).Y[t]
    return PriceQuote("bid", family.kind, float(gamma), t, phi, value)


def price(side: str, family, gamma, phi, stream, t) -> PriceQuote:
    if side == "ask":
        return ask(family, gamma, phi, stream, t)
    if side == "bid":
        return bid(family, gamma, phi, stream, t)
    raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")


def cumulative_price(
    side: str, family: DriverFamily, gamma: float, stream: AdaptedProcess, t: int
) -> np.ndarray:
    """Dividends collected through t plus the quoted price of the remainder."""
    quote = price(side, family, gamma, 1.0, stream, t)
    return stream.cumulative_through(t) + quote.value


@dataclass(frozen=True)
class ConsistencyReport:
    worst_residual: float
    passed: bool


def time_consistency_check(
    side: str,
    family: DriverFamily,
    gamma: float,
    stream: AdaptedProcess,
    tol: float = PRICE_TOL,
) -> ConsistencyReport:
    """One-step nesting: the time-t quote equals the quote of a single payment
    at t+1 worth the next dividend plus the time-(t+1) quote."""
    tr = family.tree
    worst = 0.0
    for t in range(tr.horizon):
        inner = price(side, family, gamma, 1.0, stream, t + 1).value
        nested_stream = single_payment(tr, t + 1, stream.at(t + 1) + inner)
        lhs = price(side, family, gamma, 1.0, stream, t).value
        rhs = price(side, family, gamma, 1.0, nested_stream, t).value
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return ConsistencyReport(worst_residual=worst, passed=worst <= tol)


@dataclass(frozen=True)
class CrossCompareReport:
    ask_ge_bid_ok: bool
    worst_cross_gap: float
    ask_monotone_ok: bool
    bid_antitone_ok: bool
    worst_level_gap: float


def cross_compare(
    family1: DriverFamily,
    gamma1: float,
    family2: DriverFamily,
    gamma2: float,
    stream: AdaptedProcess,
    t: int,
    gammas: Optional[Sequence[float]] = None,
    tol: float = PRICE_TOL,
) -> CrossCompareReport:
    """Ask under one driver dominates bid under another, at any levels;
    within one family asks rise and bids fall as the level tightens."""
    a1 = ask(family1, gamma1, 1.0, stream, t).value
    b2 = bid(family2, gamma2, 1.0, stream, t).value
    worst_cross = float(np.max(b2 - a1))
    mono_ok, anti_ok, worst_level = True, True, 0.0
    if gammas:
        gs = sorted(float(g) for g in gammas)
        for fam in (family1, family2):
            asks = [ask(fam, g, 1.0, stream, t).value for g in gs]
            bids = [bid(fam, g, 1.0, stream, t).value for g in gs]
            for lo, hi in zip(range(len(gs) - 1), range(1, len(gs))):
                gap_a = float(np.max(asks[lo] - asks[hi]))
                gap_b = float(np.max(bids[hi] - bids[lo]))
                worst_level = max(worst_level, gap_a, gap_b)
                mono_ok = mono_ok and gap_a <= tol
                anti_ok = anti_ok and gap_b <= tol
    return CrossCompareReport(
        ask_ge_bid_ok=worst_cross <= tol,
        worst_cross_gap=worst_cross,
        ask_monotone_ok=mono_ok,
        bid_antitone_ok=anti_ok,
        worst_level_gap=worst_level,
    )


@dataclass(frozen=True)
class ImpactReport:
    subscale_ok: bool
    superscale_ok: bool
    shares_identity_ok: bool
    convexity_ok: bool
    worst: float
    passed: bool


def market_impact_check(
    family: DriverFamily,
    gamma: float,
    stream: AdaptedProcess,
    t: int,
    phi=1.0,
    lams=(0.25, 0.5, 0.75, 1.5, 2.0),
    seed: int = 0,
    tol: float = PRICE_TOL,
) -> ImpactReport:
    """Scaling and convexity behavior of the ask (mirrored for the bid).

    Shrinking an order can only improve the per-share ask (ask(lam*phi) <=
    lam*ask(phi) for lam <= 1, the reverse for lam >= 1); pricing phi shares
    equals pricing one share of the phi-scaled stream; and the ask is convex
    in the stream while the bid is concave.
    """
    tr = family.tree
    phi = _check_inputs(family, gamma, phi, t)
    base = ask(family, gamma, phi, stream, t).value
    worst_sub, worst_super = 0.0, 0.0
    for lam in lams:
        scaled = ask(family, gamma, lam * phi, stream, t).value
        if lam <= 1.0:
            worst_sub = max(worst_sub, float(np.max(scaled - lam * base)))
        if lam >= 1.0:
            worst_super = max(worst_super, float(np.max(lam * base - scaled)))
    one_share = ask(family, gamma, 1.0, stream.scale_from(phi, t), t).value
    ident = float(np.max(np.abs(one_share - base)))
    rng = np.random.default_rng(seed)
    others = random_streams(tr, rng, 2)
    worst_cvx = 0.0
    for other in others:
        for lam in (0.25, 0.5, 0.75):
            mix = stream.combine(other, np.full(tr.n_nodes(t), lam), t)
            a_mix = ask(family, gamma, 1.0, mix, t).value
            a_split = lam * ask(family, gamma, 1.0, stream, t).value + (1 - lam) * ask(
                family, gamma, 1.0, other, t
            ).value
            worst_cvx = max(worst_cvx, float(np.max(a_mix - a_split)))
            b_mix = bid(family, gamma, 1.0, mix, t).value
            b_split = lam * bid(family, gamma, 1.0, stream, t).value + (1 - lam) * bid(
                family, gamma, 1.0, other, t
            ).value
            worst_cvx = max(worst_cvx, float(np.max(b_split - b_mix)))
    worst = max(worst_sub, worst_super, ident, worst_cvx)
    return ImpactReport(
        subscale_ok=worst_sub <= tol,
        superscale_ok=worst_super <= tol,
        shares_identity_ok=ident <= tol,
        convexity_ok=worst_cvx <= tol,
        worst=worst,
        passed=worst <= tol,
    )


@dataclass(frozen=True)
class AgreementReport:
    holds: bool
    worst_residual: float
    slope_sup: float
    slopes_admissible: bool


def agreement_diagnostic(
    family1: DriverFamily,
    gamma1: float,
    family2: DriverFamily,
    gamma2: float,
    phi,
    stream: AdaptedProcess,
    t: int,
    indicator=None,
    fractions=(0.0, 0.25, 0.5, 0.75, 1.0),
    tol: float = 1e-9,
) -> AgreementReport:
    """Certify bid-ask agreement on a level-t event through a linear driver.

    The candidate slope at each slot is the dominating driver's chord along
    its own solution of the localized full-size payoff; agreement holds on
    the event exactly when, for every order size between 0 and phi, both
    quotes coincide with the linear expectation under that driver.
    """
    tr = family1.tree
    walk = family1.walk
    phi = _check_inputs(family1, gamma1, phi, t)
    ind = np.ones(tr.n_nodes(t)) if indicator is None else tr.check_level_array(indicator, t)
    g1 = family1.make(gamma1)
    localized = tr.broadcast(ind * phi, t, tr.horizon) * stream.future_sum(t + 1)
    sol = solve_bsde(g1, localized, walk)
    slopes = [None]
    sup_slope = 0.0
    admissible = True
    for s in range(1, tr.horizon + 1):
        z = sol.Z[s]
        safe = np.where(np.abs(z) > 1e-14, z, 1.0)
        x = np.where(np.abs(z) > 1e-14, g1.eval(s, z) / safe, 0.0)
        slopes.append(x)
        if x.size:
            sup_slope = max(sup_slope, float(np.max(np.abs(x))))
        if np.any(np.abs(x) > g1.lipschitz(s) + 1e-9):
            admissible = False
    linear = LinearDriver(walk, slopes)
    ind_leaf = tr.broadcast(ind, t, tr.horizon)
    worst = 0.0
    for frac in fractions:
        lam = frac * phi
        a_val = ask(family1, gamma1, lam, stream, t).value
        b_val = bid(family2, gamma2, lam, stream, t).value
        lin_val = solve_bsde(
            linear, ind_leaf * tr.broadcast(lam, t, tr.horizon) * stream.future_sum(t + 1), walk
        ).Y[t]
        worst = max(worst, float(np.max(np.abs(ind * a_val - lin_val))))
        worst = max(worst, float(np.max(np.abs(ind * b_val - lin_val))))
    return AgreementReport(
        holds=worst <= tol and admissible,
        worst_residual=worst,
        slope_sup=sup_slope,
        slopes_admissible=admissible,
    )
