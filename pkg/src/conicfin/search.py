"""Deterministic derivative-free search over trading-strategy legs.

Strategy search spaces are flattened to nonnegative parameter vectors: one
dimension per (security, long/short, rebalance date, slot). The optimizer
is a seeded multi-start coordinate ascent over shrinking grids; batched
objectives evaluate whole candidate sets at once. An exhaustive product
grid is available for small instances where a sweep of the entire space is
wanted.

Every dimension touches exactly one subtree of the evaluation root, so
objectives that decompose across level-t nodes can merge per-node winners
from different starts into one strategy; dim_subtree_map exposes the
dimension-to-node assignment for that.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .market import MarketModel


class InstanceTooLarge(ValueError):
    """The exhaustive grid would be astronomically large."""


@dataclass(frozen=True)
class SearchConfig:
    grid_points: int = 21
    bound: Optional[float] = None
    multi_starts: int = 8
    sweeps: int = 4
    refine_rounds: int = 3
    seed: int = 0
    exhaustive: bool = False
    exhaustive_target: int = 200_000
    max_dims: int = 24
    tol: float = 1e-9


@dataclass(frozen=True)
class LegBlock:
    kind: str
    security: int
    time: int
    col_start: int
    n_slots: int


@dataclass(frozen=True)
class LegLayout:
    """Column layout of the flattened leg vector for one market and entry."""

    market: MarketModel
    entry: int
    blocks: tuple
    dims: int

    def to_legs(self, params: np.ndarray):
        """Split a (..., dims) parameter array into long/short leg lists."""
        tr = self.market.tree
        T = tr.horizon
        batch = params.shape[:-1]
        K = len(self.market.securities)
        zeros = lambda t: np.zeros(batch + (tr.n_nodes(t - 1),))
        long = [[None] + [zeros(t) for t in range(1, T + 1)] for _ in range(K)]
        short = [[None] + [zeros(t) for t in range(1, T + 1)] for _ in range(K)]
        for b in self.blocks:
            target = long if b.kind == "long" else short
            target[b.security][b.time] = params[..., b.col_start : b.col_start + b.n_slots]
        return long, short

    def dim_subtree_map(self, t: int) -> np.ndarray:
        """Level-t ancestor node of each dimension's slot."""
        tr = self.market.tree
        out = np.empty(self.dims, dtype=np.int64)
        for b in self.blocks:
            anc = tr.ancestor_map(b.time - 1, t)
            out[b.col_start : b.col_start + b.n_slots] = anc
        return out


def leg_layout(market: MarketModel, entry: int = 0) -> LegLayout:
    tr = market.tree
    blocks = []
    col = 0
    for i in range(len(market.securities)):
        for kind in ("long", "short"):
            for u in range(entry + 1, tr.horizon + 1):
                n = tr.n_nodes(u - 1)
                blocks.append(LegBlock(kind, i, u, col, n))
                col += n
    return LegLayout(market=market, entry=entry, blocks=tuple(blocks), dims=col)


def auto_bound(market: MarketModel, entry: int = 0) -> float:
    """Position cap from the scale of unit quotes and dividends.

    Books additionally cap positions at just under half the posted depth so
    a full round trip (build then unwind) never walks past the ladder.
    """
    tr = market.tree
    scale = 1.0
    depth_cap = np.inf
    for sec in market.securities:
        for stream in (sec.stream_ask, sec.stream_bid):
            for t in range(tr.horizon + 1):
                scale = max(scale, float(np.max(np.abs(stream.at(t)))))
        for op in (sec.op_ask, sec.op_bid):
            depth = getattr(op, "depth", None)
            if depth is not None:
                depth_cap = min(depth_cap, 0.45 * depth)
            for t in range(entry, tr.horizon):
                probe = np.minimum(1.0, depth if depth is not None else 1.0)
                unit = op.price(t, np.full(tr.n_nodes(t), probe))
                if probe > 0:
                    scale = max(scale, float(np.max(np.abs(unit))) / probe)
    bound = 2.0 * np.ceil(scale)
    return float(min(bound, depth_cap))


@dataclass(frozen=True)
class SearchOutcome:
    params: np.ndarray
    score: float
    evaluations: int
    exhaustive_total: int = 0


def maximize(
    evaluate: Callable[[np.ndarray], np.ndarray],
    dims: int,
    cfg: SearchConfig,
    bound: float,
) -> SearchOutcome:
    """Seeded multi-start coordinate ascent on [0, bound]^dims.

    evaluate maps a (B, dims) batch to (B,) scores; ties resolve to the
    earlier candidate so reruns with one seed are bit-identical. The zero
    vector is always the first start.
    """
    if dims == 0:
        return SearchOutcome(np.zeros(0), float(evaluate(np.zeros((1, 0)))[0]), 1)
    rng = np.random.default_rng(cfg.seed)
    base_grid = np.linspace(0.0, bound, cfg.grid_points)
    starts = [np.zeros(dims)]
    for _ in range(max(cfg.multi_starts - 1, 0)):
        raw = rng.choice(base_grid, size=dims)
        mask = rng.random(dims) < 0.35
        starts.append(raw * mask)
    best_p, best_s = None, -np.inf
    evals = 0
    for p0 in starts:
        p = p0.copy()
        s = float(evaluate(p[None, :])[0])
        evals += 1
        span = bound
        for _ in range(cfg.refine_rounds):
            for _ in range(cfg.sweeps):
                improved = False
                for d in range(dims):
                    cand = np.clip(
                        np.linspace(p[d] - span, p[d] + span, cfg.grid_points), 0.0, bound
                    )
                    cand = np.unique(np.concatenate([cand, [0.0, p[d]]]))
                    batch = np.repeat(p[None, :], cand.size, axis=0)
                    batch[:, d] = cand
                    scores = np.asarray(evaluate(batch), dtype=float)
                    evals += cand.size
                    k = int(np.argmax(scores))
                    if scores[k] > s + 1e-13:
                        p, s = batch[k].copy(), float(scores[k])
                        improved = True
                if not improved:
                    break
            span *= 0.5
        if s > best_s:
            best_p, best_s = p.copy(), s
    return SearchOutcome(params=best_p, score=best_s, evaluations=evals)


def exhaustive_grid(
    evaluate: Callable[[np.ndarray], np.ndarray],
    dims: int,
    cfg: SearchConfig,
    bound: float,
    chunk: int = 8192,
) -> SearchOutcome:
    """Sweep the full product grid on [0, bound]^dims.

    The per-dimension point count is sized so the total grid lands at or
    above the configured target without exploding; instances whose grid
    would pass five million nodes (or whose dimension exceeds the cap) are
    refused.
    """
    if dims > cfg.max_dims:
        raise InstanceTooLarge(f"{dims} dimensions exceed the exhaustive cap {cfg.max_dims}")
    points = max(2, int(round(cfg.exhaustive_target ** (1.0 / dims))))
    while points ** dims < cfg.exhaustive_target:
        points += 1
    total = points ** dims
    if total > 5_000_000:
        raise InstanceTooLarge(f"exhaustive grid would hold {total} strategies")
    grid = np.linspace(0.0, bound, points)
    best_p, best_s = None, -np.inf
    evals = 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        multi = np.stack(np.unravel_index(flat, (points,) * dims), axis=-1)
        rows = grid[multi]
        scores = np.asarray(evaluate(rows), dtype=float)
        evals += rows.shape[0]
        k = int(np.argmax(scores))
        if scores[k] > best_s:
            best_p, best_s = rows[k].copy(), float(scores[k])
    return SearchOutcome(params=best_p, score=best_s, evaluations=evals, exhaustive_total=total)
