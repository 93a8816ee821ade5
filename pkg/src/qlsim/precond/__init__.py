"""Block preconditioning: scaling operators, self-preconditioned solver, application systems."""
from .applications import (
    ApplicationResult,
    DiagonalizableMatrix,
    GroundStateParams,
    OdeParams,
    PreconditionReport,
    QeveParams,
    QevtBlockParams,
    QevtParams,
    as_diagonalizable,
    precondition_application,
    random_diagonalizable,
    run_application_pipeline,
)
from .inversion import InversionSolve, contraction_dilation, inversion_query_count, inversion_solve
from .scaling import (
    Preconditioner,
    SelfPreconditionedResult,
    inflation_bound,
    projector_onto,
    scaling_operator,
    self_preconditioned_solve,
)
from .systems import (
    ChebCoeffState,
    PaddedSystem,
    PolyBoundReport,
    TaylorSystem,
    build_padded_system,
    build_taylor_system,
    cheb_coeff_state,
    check_poly_bounds,
    chebyshev_u_blocks,
    taylor_stepping_oracle,
)

__all__ = [
    "ApplicationResult",
    "ChebCoeffState",
    "DiagonalizableMatrix",
    "GroundStateParams",
    "InversionSolve",
    "OdeParams",
    "PaddedSystem",
    "PolyBoundReport",
    "PreconditionReport",
    "Preconditioner",
    "QeveParams",
    "QevtBlockParams",
    "QevtParams",
    "SelfPreconditionedResult",
    "TaylorSystem",
    "as_diagonalizable",
    "build_padded_system",
    "build_taylor_system",
    "cheb_coeff_state",
    "check_poly_bounds",
    "chebyshev_u_blocks",
    "contraction_dilation",
    "inflation_bound",
    "inversion_query_count",
    "inversion_solve",
    "precondition_application",
    "projector_onto",
    "random_diagonalizable",
    "run_application_pipeline",
    "scaling_operator",
    "self_preconditioned_solve",
    "taylor_stepping_oracle",
]
