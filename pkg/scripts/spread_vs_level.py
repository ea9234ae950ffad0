"""Print bid/ask quotes across acceptability levels for the builtin families.

Asks rise and bids fall as the level tightens, every ask dominates every
bid, and the linear limit collapses the spread. Run as

    python3 scripts/spread_vs_level.py --horizon 3 --seed 7
"""

import argparse

import numpy as np

from conicfin import AdaptedProcess, ask, bid, builtin_family, symmetric_random_walk, uniform_binary_tree


def build_stream(tree, seed):
    rng = np.random.default_rng(seed)
    vals = [np.zeros(tree.n_nodes(t)) for t in range(tree.horizon + 1)]
    for t in range(1, tree.horizon + 1):
        vals[t] = rng.normal(scale=0.5, size=tree.n_nodes(t))
    return AdaptedProcess(tree, tuple(vals))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--levels", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    args = parser.parse_args()

    walk = symmetric_random_walk(uniform_binary_tree(args.horizon))
    stream = build_stream(walk.tree, args.seed)
    expectation = float(walk.tree.expectation(stream.future_sum(1), walk.tree.horizon)[0])
    print(f"dividend stream on a {args.horizon}-period walk, plain expected payout {expectation:+.6f}")
    print()
    header = f"{'family':<18}{'level':>8}{'ask':>14}{'bid':>14}{'spread':>14}"
    print(header)
    print("-" * len(header))
    for kind in ("entropic", "coherent", "quasiconcave_lse"):
        fam = builtin_family(kind, walk)
        for level in args.levels:
            a = float(ask(fam, level, 1.0, stream, 0).value[0])
            b = float(bid(fam, level, 1.0, stream, 0).value[0])
            print(f"{kind:<18}{level:>8.2f}{a:>14.8f}{b:>14.8f}{a - b:>14.8f}")
        print()


if __name__ == "__main__":
    main()
