"""Conic pricing, dynamic risk, and acceptability on finite probability trees."""

from .tree import (
    AdaptedProcess,
    DegenerateIncrement,
    EmptyLevel,
    FiltrationTree,
    LevelMismatch,
    MartingaleSpec,
    NonMartingaleIncrement,
    NonstochasticProbabilities,
    NotBinaryTree,
    NotSymmetric,
    PredictableProcess,
    TreeError,
    build_tree,
    martingale_from_increments,
    single_payment,
    symmetric_random_walk,
    tail_of,
    uniform_binary_tree,
    zero_process,
)
from .drivers import (
    AssumptionAReport,
    Driver,
    DriverError,
    DriverFamily,
    FamilyReport,
    NotRandomWalk,
    ParamOutOfRange,
    RegularityReport,
    builtin_driver,
    builtin_family,
    driver_from_risk_measure,
    is_regular,
    lipschitz_dominance_check,
    validate_assumption_A,
    validate_family,
)
from .bsde import (
    BsdeSolution,
    ComparisonReport,
    LinearMeasure,
    MeasureNotEquivalent,
    PreconditionViolated,
    SolutionDiagnostics,
    compare_solutions,
    detect_linear_driver,
    diagnose_solution,
    extract_linear_measure,
    g_expectation,
    g_expectation_solution,
    solve_bsde,
)
from .risk import (
    AcceptabilityIndex,
    AxiomReport,
    AxiomResult,
    DividendStream,
    DualityReport,
    RiskMeasure,
    acceptability_index,
    check_dai_axioms,
    check_dcrm_axioms,
    level_set_duality,
    random_streams,
    risk,
)
from .pricing import (
    AgreementReport,
    ConsistencyReport,
    CrossCompareReport,
    ImpactReport,
    LevelNonpositive,
    NegativeQuantity,
    PriceQuote,
    agreement_diagnostic,
    ask,
    bid,
    cross_compare,
    cumulative_price,
    market_impact_check,
    price,
    time_consistency_check,
)
from .market import (
    ConicOperator,
    DepthExceeded,
    DirectOperator,
    MarketAxiomReport,
    MarketError,
    MarketModel,
    NegativeLeg,
    NotStoppingTime,
    OrderBookOperator,
    PricingOperator,
    Security,
    SelfFinancingReport,
    TradingStrategy,
    cds_streams,
    complete_bank_leg,
    conic_security,
    dividends_collected,
    liquidation_value,
    order_book_operator,
    rebalancing_cost,
    setup_cost,
    stock_stream,
    validate_market_axioms,
    validate_self_financing,
    zero_strategy,
)
from .search import (
    InstanceTooLarge,
    LegLayout,
    SearchConfig,
    SearchOutcome,
    auto_bound,
    exhaustive_grid,
    leg_layout,
    maximize,
)
from .arbitrage import (
    ArbitrageSearchResult,
    CertificateReport,
    find_arbitrage,
    validate_certificate,
)
from .hedging import (
    HedgedConvexityReport,
    HedgedLevelReport,
    HedgedQuote,
    NgdReport,
    SandwichReport,
    check_ngd,
    hedged_convexity_check,
    hedged_level_monotonicity,
    hedged_price,
    hedged_sandwich,
)
from .scenario import (
    ScenarioError,
    load_scenario,
    render_summary,
    run_scenario,
    write_csv,
    write_json,
)

__version__ = "0.1.0"
