"""Measure-valued simulation of trait-transfer population dynamics."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateMassError,
    EmptyMeasureError,
    NumericalError,
    UnequalMassError,
    WindowTooLargeError,
)
from .measures import (
    AtomicMeasure,
    CompressionReport,
    compress,
    moment,
    sample,
    tv_distance,
    w1_distance,
)
from .kernels import (
    AtomsKernelSpec,
    DensityKernelSpec,
    DiracKernelSpec,
    KernelSpec,
    TransferKernel,
    kernel_sample,
    make_kernel,
    parse_kernel_spec,
)
from .transfer import (
    PredictedMoments,
    k_b,
    predicted_moments,
    t_b,
    t_b_mc,
)
from .fixedpoint import (
    FixedPointReport,
    dirac_displacement,
    iterate_fixed_point,
    transfer_product,
    zero_mass_flow,
)
from .cauchy import (
    AffineCappedGrowth,
    ConstantGrowth,
    Scenario,
    SolverSettings,
    SourcePiece,
    SourceSpec,
    TableGrowth,
    Trajectory,
    evolve,
    evolve_atomic,
    evolve_grid_picard,
    evolve_particles,
    mild_residual,
    validate_scenario,
)
from .oracles import MomentODEState, enumerate_t_b, moment_ode_solve

__all__ = [
    "__version__",
    "AtomicMeasure",
    "CompressionReport",
    "compress",
    "moment",
    "sample",
    "tv_distance",
    "w1_distance",
    "AtomsKernelSpec",
    "DensityKernelSpec",
    "DiracKernelSpec",
    "KernelSpec",
    "TransferKernel",
    "kernel_sample",
    "make_kernel",
    "parse_kernel_spec",
    "PredictedMoments",
    "k_b",
    "predicted_moments",
    "t_b",
    "t_b_mc",
    "FixedPointReport",
    "dirac_displacement",
    "iterate_fixed_point",
    "transfer_product",
    "zero_mass_flow",
    "AffineCappedGrowth",
    "ConstantGrowth",
    "Scenario",
    "SolverSettings",
    "SourcePiece",
    "SourceSpec",
    "TableGrowth",
    "Trajectory",
    "evolve",
    "evolve_atomic",
    "evolve_grid_picard",
    "evolve_particles",
    "mild_residual",
    "validate_scenario",
    "MomentODEState",
    "enumerate_t_b",
    "moment_ode_solve",
    "CapacityError",
    "ConfigError",
    "DegenerateMassError",
    "EmptyMeasureError",
    "NumericalError",
    "UnequalMassError",
    "WindowTooLargeError",
]
