"""Arbitrage pricing with countably many assets.

Library surface for the market model, shock sampling, valuation,
expected-utility optimization over growing market segments, risk-neutral
density construction, and the arbitrage demos.  The ``apmlab`` console
script exposes the batch workflows.
"""
from .arbitrage import (
    ArbitrageReport,
    ClosednessReport,
    CLTReport,
    FreeLunchReport,
    arbitrage_strategy,
    asymptotic_arbitrage_construct,
    closedness_failure_demo,
    clt_normalized_check,
    free_lunch_demo_aba,
)
from .market import (
    MarketParams,
    ReducedParams,
    SharpeSums,
    Strategy,
    factor_to_raw,
    raw_to_factor,
    reduce_params,
    sharpe_sum,
)
from .optimizer import (
    EvalStats,
    GapReport,
    OptimizationProblem,
    OptimizationResult,
    SweepReport,
    UnboundedObjectiveError,
    maximize_segment,
    objective_and_gradient,
    pool_escalation_report,
    segment_sweep,
    truncation_gap,
)
from .risk_neutral import (
    CertificationResult,
    DensityEstimate,
    MomentReport,
    PSchedule,
    RecursiveBuildReport,
    StageError,
    StageResult,
    VerificationReport,
    construct_density,
    density_moment_report,
    p_schedule,
    recursive_density_builder,
    result_density,
    stages_needed,
    verify_risk_neutral,
)
from .sequences import PrefixSequence, TailRule, ZERO_TAIL
from .shocks import (
    AssumptionReport,
    ShockFamily,
    aba_two_point,
    bounded_tail_power,
    check_assumption_relevant,
    gaussian,
    law_moments,
    rademacher,
    sample,
    student_t,
    two_point,
)
from .utility import (
    ConstantUtilityError,
    Delta2Report,
    UtilityFunction,
    YoungPair,
    check_concave_nondecreasing,
    check_growth_certificate,
    check_loss_domination,
    exponential_bounded,
    from_callables,
    lena_constants,
    make_proof_u1,
    make_proof_un,
    piecewise_linear,
    power_moderate,
    young_pair,
)
from .valuation import (
    Moments,
    SamplePool,
    build_pool,
    expectation_under_density,
    truncation_bounds,
    value_moments,
    value_samples,
    value_samples_streamed,
)

__version__ = "0.1.0"

__all__ = [
    "ArbitrageReport",
    "ClosednessReport",
    "CLTReport",
    "FreeLunchReport",
    "arbitrage_strategy",
    "asymptotic_arbitrage_construct",
    "closedness_failure_demo",
    "clt_normalized_check",
    "free_lunch_demo_aba",
    "MarketParams",
    "ReducedParams",
    "SharpeSums",
    "Strategy",
    "factor_to_raw",
    "raw_to_factor",
    "reduce_params",
    "sharpe_sum",
    "EvalStats",
    "GapReport",
    "OptimizationProblem",
    "OptimizationResult",
    "SweepReport",
    "UnboundedObjectiveError",
    "maximize_segment",
    "objective_and_gradient",
    "pool_escalation_report",
    "segment_sweep",
    "truncation_gap",
    "CertificationResult",
    "DensityEstimate",
    "MomentReport",
    "PSchedule",
    "RecursiveBuildReport",
    "StageError",
    "StageResult",
    "VerificationReport",
    "construct_density",
    "density_moment_report",
    "p_schedule",
    "recursive_density_builder",
    "result_density",
    "stages_needed",
    "verify_risk_neutral",
    "PrefixSequence",
    "TailRule",
    "ZERO_TAIL",
    "AssumptionReport",
    "ShockFamily",
    "aba_two_point",
    "bounded_tail_power",
    "check_assumption_relevant",
    "gaussian",
    "law_moments",
    "rademacher",
    "sample",
    "student_t",
    "two_point",
    "ConstantUtilityError",
    "Delta2Report",
    "UtilityFunction",
    "YoungPair",
    "check_concave_nondecreasing",
    "check_growth_certificate",
    "check_loss_domination",
    "exponential_bounded",
    "from_callables",
    "lena_constants",
    "make_proof_u1",
    "make_proof_un",
    "piecewise_linear",
    "power_moderate",
    "young_pair",
    "Moments",
    "SamplePool",
    "build_pool",
    "expectation_under_density",
    "truncation_bounds",
    "value_moments",
    "value_samples",
    "value_samples_streamed",
]
