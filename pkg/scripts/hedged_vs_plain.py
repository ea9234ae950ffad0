"""Compare plain and hedged quotes for a claim next to a traded security.

Trading the security can only improve quotes. On a conic market the hedged
spread stays positive but narrows; when the security instead trades
frictionlessly at the plain expectation of its dividends, hedging its own
stream collapses both quotes onto the market price. Run as

    python3 scripts/hedged_vs_plain.py --seed 11
"""

import argparse

import numpy as np

from conicfin import (
    AdaptedProcess,
    DirectOperator,
    MarketModel,
    SearchConfig,
    Security,
    ask,
    bid,
    builtin_family,
    conic_security,
    hedged_price,
    symmetric_random_walk,
    uniform_binary_tree,
)


def random_stream(tree, rng, scale):
    vals = [np.zeros(tree.n_nodes(t)) for t in range(tree.horizon + 1)]
    for t in range(1, tree.horizon + 1):
        vals[t] = rng.normal(scale=scale, size=tree.n_nodes(t))
    return AdaptedProcess(tree, tuple(vals))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--levels", type=float, nargs="+", default=[1.0, 2.0, 4.0])
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    walk = symmetric_random_walk(uniform_binary_tree(2))
    tree = walk.tree
    fam = builtin_family("entropic", walk)
    cfg = SearchConfig(grid_points=15, multi_starts=4, sweeps=3, refine_rounds=8, seed=args.seed)

    traded = random_stream(tree, rng, scale=0.4)
    claim = random_stream(tree, rng, scale=0.6)
    market = MarketModel(walk=walk, securities=(conic_security("note", fam, traded, 2.0),), name="conic")

    print("claim quoted next to a conic security (entropic operator, level 2)")
    header = f"{'level':>6}{'plain ask':>13}{'hedged ask':>13}{'plain bid':>13}{'hedged bid':>13}{'spread cut':>12}"
    print(header)
    print("-" * len(header))
    for level in args.levels:
        a = float(ask(fam, level, 1.0, claim, 0).value[0])
        b = float(bid(fam, level, 1.0, claim, 0).value[0])
        ha = float(hedged_price("ask", fam, level, 1.0, claim, market, 0, cfg).value[0])
        hb = float(hedged_price("bid", fam, level, 1.0, claim, market, 0, cfg).value[0])
        cut = (a - b) - (ha - hb)
        print(f"{level:>6.2f}{a:>13.6f}{ha:>13.6f}{b:>13.6f}{hb:>13.6f}{cut:>12.6f}")

    tables = [
        tree.conditional_expectation(traded.future_sum(t + 1), tree.horizon, t)
        for t in range(tree.horizon)
    ]
    tables.append(np.zeros(tree.n_leaves))
    op = DirectOperator(tree, tables)
    flat = MarketModel(
        walk=walk,
        securities=(Security(sid="repl", stream_ask=traded, stream_bid=traded, op_ask=op, op_bid=op),),
        name="frictionless",
    )
    price0 = float(tables[0][0])
    print()
    print(f"same stream traded frictionlessly at its expectation price {price0:+.6f}")
    deep = SearchConfig(grid_points=21, multi_starts=2, sweeps=2, refine_rounds=20, seed=args.seed)
    for level in args.levels:
        a = float(ask(fam, level, 1.0, traded, 0).value[0])
        b = float(bid(fam, level, 1.0, traded, 0).value[0])
        ha = float(hedged_price("ask", fam, level, 1.0, traded, flat, 0, deep).value[0])
        hb = float(hedged_price("bid", fam, level, 1.0, traded, flat, 0, deep).value[0])
        print(
            f"level {level:>5.2f}: plain ({a:+.6f}, {b:+.6f}) -> hedged ({ha:+.6f}, {hb:+.6f})"
            f"  |ask-price|={abs(ha - price0):.2e} |bid-price|={abs(hb - price0):.2e}"
        )


if __name__ == "__main__":
    main()
