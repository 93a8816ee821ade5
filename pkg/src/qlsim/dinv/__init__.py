"""Discretized-inverse preparation, solution-norm estimation and the linear-system solver."""
from .instance import LinearSystemInstance, diagonal_instance, random_instance
from .inverter import (
    BoundsReport,
    CumulativeCoefficients,
    DeterministicPlan,
    DinvResult,
    DinvSpec,
    InverterVTA,
    ProbabilityFamily,
    build_inverter_vta,
    check_multiplicative_bounds,
    deterministic_plan,
    eigenvalue_bands,
    premerge_count,
    prepare_dinv,
    probability_family,
)
from .norm import AmplitudeOracle, NormEstimate, estimate_solution_norm
from .solve import GroverExpectations, SolveResult, grover_fixture, solve_qls
