"""Market operators, self-financing strategies, and arbitrage certificates."""

from fractions import Fraction

import numpy as np
import pytest

from conicfin import (
    AdaptedProcess,
    DepthExceeded,
    DirectOperator,
    MarketError,
    MarketModel,
    NegativeLeg,
    NotStoppingTime,
    OrderBookOperator,
    Security,
    TradingStrategy,
    builtin_family,
    cds_streams,
    complete_bank_leg,
    conic_security,
    find_arbitrage,
    liquidation_value,
    setup_cost,
    stock_stream,
    symmetric_random_walk,
    uniform_binary_tree,
    validate_certificate,
    validate_market_axioms,
    validate_self_financing,
    zero_process,
    zero_strategy,
)
from conicfin.pricing import ask, bid
from conicfin.search import SearchConfig

SELF_FIN_ATOL = 1e-9

AAPL_ASK = [(116.61, 200), (116.62, 700), (116.63, 543), (116.64, 643), (116.65, 343)]
AAPL_BID = [(116.59, 400), (116.58, 400), (116.57, 800), (116.56, 500), (116.55, 543)]


def make_walk(horizon=2):
    return symmetric_random_walk(uniform_binary_tree(horizon))


def direct_two_period_market():
    """Two-period stock with hand-picked unit price tables and no dividends."""
    walk = make_walk(2)
    tree = walk.tree
    stream = zero_process(tree)
    sec = Security(
        sid="stk",
        stream_ask=stream,
        stream_bid=stream,
        op_ask=DirectOperator(tree, [[10.0], [12.0, 11.0], [13.0, 11.0, 12.0, 10.0]]),
        op_bid=DirectOperator(tree, [[10.0], [11.0, 10.0], [12.0, 10.0, 11.0, 9.0]]),
    )
    return MarketModel(walk=walk, securities=(sec,), name="two-period-tables")


def conic_market(horizon=2, gamma=2.0):
    walk = make_walk(horizon)
    tree = walk.tree
    fam = builtin_family("entropic", walk)
    vals = [np.zeros(tree.n_nodes(t)) for t in range(horizon + 1)]
    rng = np.random.default_rng(7)
    for t in range(1, horizon + 1):
        vals[t] = rng.normal(scale=0.4, size=tree.n_nodes(t))
    stream = AdaptedProcess(tree, tuple(vals))
    sec = conic_security("cds", fam, stream, gamma)
    return MarketModel(walk=walk, securities=(sec,), name="conic")


def test_direct_operator_is_per_share_and_exact():
    tree = uniform_binary_tree(2)
    op = DirectOperator(tree, [[10.0], [12.0, 11.0], [13.0, 11.0, 12.0, 10.0]])
    assert np.allclose(op.price(1, np.array([2.0, 3.0])), [24.0, 33.0])
    assert op.exact_price(1, 0, Fraction(3, 2)) == Fraction(18)
    with pytest.raises(MarketError):
        DirectOperator(tree, [[10.0], [12.0, 11.0]])


def test_order_book_walks_the_ladder_exactly():
    book = OrderBookOperator("ask", AAPL_ASK, tick_scale=100)
    assert float(book.price(0, np.array([200.0]))[0]) == 23322.00
    assert float(book.price(0, np.array([500.0]))[0]) == 58308.00
    assert book.exact_price(0, 0, Fraction(200)) == Fraction(23322)
    assert book.exact_price(0, 0, Fraction(500)) == Fraction(58308)
    assert book.depth == 200 + 700 + 543 + 643 + 343
    bid_book = OrderBookOperator("bid", AAPL_BID, tick_scale=100)
    assert float(bid_book.price(0, np.array([300.0]))[0]) == 34977.00
    grid = np.linspace(0.0, book.depth, 97)
    exact = [float(book.exact_price(0, 0, Fraction(x).limit_denominator(10**6))) for x in grid]
    approx = book.price(0, grid)
    assert np.max(np.abs(approx - exact)) < 1e-5


def test_order_book_rejects_bad_orders_and_ladders():
    book = OrderBookOperator("ask", AAPL_ASK)
    with pytest.raises(DepthExceeded):
        book.price(0, np.array([book.depth + 1.0]))
    with pytest.raises(DepthExceeded):
        book.exact_price(0, 0, Fraction(book.depth) + 1)
    with pytest.raises(NegativeLeg):
        book.price(0, np.array([-1.0]))
    with pytest.raises(MarketError):
        OrderBookOperator("ask", [(116.61, 200), (116.60, 100)])
    with pytest.raises(MarketError):
        OrderBookOperator("bid", [(116.59, 200), (116.60, 100)])
    with pytest.raises(MarketError):
        OrderBookOperator("ask", [(116.611234, 200)])
    with pytest.raises(NegativeLeg):
        OrderBookOperator("ask", [(116.61, 0.0)])
    with pytest.raises(MarketError):
        OrderBookOperator("mid", AAPL_ASK)
    with pytest.raises(MarketError):
        OrderBookOperator("ask", [])


def test_conic_operator_prices_match_quote_functions():
    market = conic_market()
    sec = market.security("cds")
    fam = builtin_family("entropic", market.walk)
    stream = sec.stream_ask
    for t in range(market.tree.horizon):
        phi = np.linspace(0.5, 2.0, market.tree.n_nodes(t))
        a = ask(fam, 2.0, phi, stream, t).value
        b = bid(fam, 2.0, phi, stream, t).value
        assert np.allclose(sec.op_ask.price(t, phi), a, atol=1e-12)
        assert np.allclose(sec.op_bid.price(t, phi), b, atol=1e-12)
    assert not market.supports_exact
    assert direct_two_period_market().supports_exact


def test_market_lookup_and_frictionless_flag():
    market = direct_two_period_market()
    assert market.security("stk").sid == "stk"
    with pytest.raises(MarketError):
        market.security("missing")
    assert not market.security("stk").frictionless
    walk = market.walk
    stream = zero_process(walk.tree)
    op = DirectOperator(walk.tree, [[1.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0]])
    flat = Security(sid="flat", stream_ask=stream, stream_bid=stream, op_ask=op, op_bid=op)
    assert flat.frictionless


def test_zero_strategy_costs_and_delivers_nothing():
    market = direct_two_period_market()
    strat = zero_strategy(market)
    assert np.allclose(setup_cost(strat, market, 0), 0.0)
    assert np.allclose(liquidation_value(strat, market, 2), 0.0)
    rep = validate_self_financing(strat, market)
    assert rep.passed and rep.max_residual == 0.0


def test_completed_bank_leg_is_self_financing_for_random_legs():
    for market in (direct_two_period_market(), conic_market()):
        tr = market.tree
        rng = np.random.default_rng(31)
        for entry in range(tr.horizon):
            long = [[None] + [rng.random(tr.n_nodes(t - 1)) for t in range(1, 3)]]
            short = [[None] + [rng.random(tr.n_nodes(t - 1)) for t in range(1, 3)]]
            for u in range(1, entry + 1):
                long[0][u] = np.zeros(tr.n_nodes(u - 1))
                short[0][u] = np.zeros(tr.n_nodes(u - 1))
            strat = complete_bank_leg(long, short, market, entry)
            rep = validate_self_financing(strat, market, entry)
            assert rep.passed, f"residual {rep.max_residual} (entry {entry})"
            assert rep.zero_before_ok
            assert np.max(np.abs(setup_cost(strat, market, entry))) < SELF_FIN_ATOL


def test_completed_bank_leg_rejects_bad_entry_times():
    market = direct_two_period_market()
    legs = lambda: [[None, np.zeros(1), np.zeros(2)]]
    with pytest.raises(MarketError):
        complete_bank_leg(legs(), legs(), market, entry=2)
    with pytest.raises(MarketError):
        complete_bank_leg(legs(), legs(), market, entry=-1)


def test_buy_and_hold_liquidation_identity():
    market = direct_two_period_market()
    tr = market.tree
    long = [[None, np.array([1.0]), np.ones(2)]]
    short = [[None, np.zeros(1), np.zeros(2)]]
    strat = complete_bank_leg(long, short, market, 0)
    assert np.allclose(strat.bank[1], [-10.0])
    assert np.allclose(strat.bank[2], [-10.0, -10.0])
    v = liquidation_value(strat, market, 2)
    assert np.allclose(v, np.array([12.0, 10.0, 11.0, 9.0]) - 10.0)


def test_market_axioms_pass_for_all_operator_flavors():
    walk = make_walk(1)
    tree = walk.tree
    stream = zero_process(tree)
    book_sec = Security(
        sid="book",
        stream_ask=stream,
        stream_bid=stream,
        op_ask=OrderBookOperator("ask", AAPL_ASK),
        op_bid=OrderBookOperator("bid", AAPL_BID),
    )
    book_market = MarketModel(walk=walk, securities=(book_sec,), name="book")
    for market in (direct_two_period_market(), conic_market(), book_market):
        rep = validate_market_axioms(market, seed=5)
        assert rep.passed, (market.name, rep)
        assert rep.zero_at_zero == 0.0


def test_explicit_certificate_on_hand_tables():
    """Buy one share at 10, sell a period later at 11 or 10: never lose,
    gain one when the first move is up."""
    market = direct_two_period_market()
    long = [[None, np.array([1.0]), np.zeros(2)]]
    short = [[None, np.zeros(1), np.zeros(2)]]
    strat = complete_bank_leg(long, short, market, 0)
    assert np.allclose(strat.bank[1], [-10.0])
    assert np.allclose(strat.bank[2], [1.0, 0.0])
    v = liquidation_value(strat, market, 2)
    assert np.array_equal(v, np.array([1.0, 1.0, 0.0, 0.0]))
    rep = validate_certificate(strat, market, 0)
    assert rep.valid and rep.exact
    assert rep.min_terminal == 0.0
    assert rep.max_terminal == 1.0
    assert rep.prob_positive == pytest.approx(0.5)


def test_search_finds_entry_zero_arbitrage_but_not_entry_one():
    market = direct_two_period_market()
    found = find_arbitrage(market, entry=0)
    assert found.found
    assert found.certificate.valid and found.certificate.exact
    assert found.certificate.min_terminal >= 0.0
    assert found.certificate.max_terminal > 0.0
    none = find_arbitrage(market, entry=1, cfg=SearchConfig(exhaustive=True, bound=3.0))
    assert not none.found
    assert none.best_score == pytest.approx(1.0)
    assert none.exhaustive_total >= 200_000


def test_cds_streams_pay_protection_and_bleed_premium():
    tree = uniform_binary_tree(2)
    tau = [3, 3, 1, 1]
    long, short = cds_streams(tree, tau, delta=0.6, kappa_ask=0.02, kappa_bid=0.01)
    assert np.allclose(long.at(0), [0.0])
    assert np.allclose(long.at(1), [-0.02, 0.6])
    assert np.allclose(long.at(2), [-0.02, -0.02, 0.0, 0.0])
    assert np.allclose(short.at(1), [-0.01, 0.6])
    assert np.allclose(short.at(2), [-0.01, -0.01, 0.0, 0.0])


def test_cds_default_times_must_be_stopping_times():
    tree = uniform_binary_tree(2)
    with pytest.raises(NotStoppingTime):
        cds_streams(tree, [1, 2, 1, 2], 0.6, 0.02, 0.01)
    with pytest.raises(NotStoppingTime):
        cds_streams(tree, [0, 3, 3, 3], 0.6, 0.02, 0.01)
    with pytest.raises(NotStoppingTime):
        cds_streams(tree, [3, 3, 3], 0.6, 0.02, 0.01)


def test_stock_stream_adds_terminal_value_at_the_horizon():
    tree = uniform_binary_tree(2)
    divs = [[0.0], [0.5, 0.5], [0.25, 0.25, 0.25, 0.25]]
    stk = stock_stream(tree, divs, [4.0, 2.0, 2.0, 1.0])
    assert np.allclose(stk.at(1), [0.5, 0.5])
    assert np.allclose(stk.at(2), [4.25, 2.25, 2.25, 1.25])


def test_strategy_leg_accessor_and_batch_shape():
    market = direct_two_period_market()
    tr = market.tree
    long = [[None, np.array([1.0]), np.zeros(2)]]
    short = [[None, np.zeros(1), np.zeros(2)]]
    strat = complete_bank_leg(long, short, market, 0)
    assert strat.batch_shape() == ()
    assert strat.n_securities == 1
    assert np.allclose(strat.leg("long", 0, 1), [1.0])
    assert np.allclose(strat.leg("bank", 0, 1), [-10.0])
    batched = zero_strategy(market, batch=(3,))
    assert batched.batch_shape() == (3,)
    assert liquidation_value(batched, market, 2).shape == (3, 4)
