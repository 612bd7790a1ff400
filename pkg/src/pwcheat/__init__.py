"""Forward/inverse toolkit for 1-D heat conduction with piecewise-constant conductivity."""

from .completeness import (
    ExponentialCoefficients,
    MomentMatrix,
    exponential_coefficients,
    growth_lower_bound,
    growth_ratio,
    last_discontinuity,
    moment_matrix,
    orthogonality_identity_defect,
    product_moment,
    product_moment_scaled,
    verify_report,
)
from .dataset import TransferDataset
from .estimator import PiecewiseConductivityEstimator
from .exceptions import (
    NumericalError,
    TailDominationError,
    UnderdeterminedError,
    ValidationError,
)
from .inverse import (
    ProfileParameterization,
    ReconstructionResult,
    jacobian,
    model_select,
    reconstruct,
    residuals,
)
from .laplace import (
    FluxSolution,
    TemperatureSolution,
    constant_transfer,
    flux_integral_residual,
    solve_flux,
    solve_temperature,
    transfer_curve,
    transfer_function,
)
from .piecewise import (
    ConductivityProfile,
    PiecewiseFunction,
    distance,
    profile_from_json,
    profile_to_json,
)
from .timedomain import (
    FluxSpec,
    TimeSeries,
    laplace_of_samples,
    laplace_tail_bound,
    simulate,
    synthesize_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "ConductivityProfile",
    "ExponentialCoefficients",
    "FluxSolution",
    "FluxSpec",
    "MomentMatrix",
    "NumericalError",
    "PiecewiseConductivityEstimator",
    "PiecewiseFunction",
    "ProfileParameterization",
    "ReconstructionResult",
    "TailDominationError",
    "TemperatureSolution",
    "TimeSeries",
    "TransferDataset",
    "UnderdeterminedError",
    "ValidationError",
    "constant_transfer",
    "distance",
    "exponential_coefficients",
    "flux_integral_residual",
    "growth_lower_bound",
    "growth_ratio",
    "jacobian",
    "laplace_of_samples",
    "laplace_tail_bound",
    "last_discontinuity",
    "model_select",
    "moment_matrix",
    "orthogonality_identity_defect",
    "product_moment",
    "product_moment_scaled",
    "profile_from_json",
    "profile_to_json",
    "reconstruct",
    "residuals",
    "simulate",
    "solve_flux",
    "solve_temperature",
    "synthesize_dataset",
    "transfer_curve",
    "transfer_function",
    "verify_report",
]
