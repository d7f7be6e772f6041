"""hflow: proximal backward-Euler solvers for porous-medium / fast-diffusion
equations and their Cahn-Hilliard-type regularization, plus the verification
harness for the energy estimates both discretizations satisfy exactly."""

from .grid import DiscreteOperators, Field, Grid, NumericalConsistencyError, build_operators
from .nonlinearity import PiEps, PowerLawBeta
from .problems import (
    DerivedConstants,
    ManufacturedCase,
    ModelSpec,
    compute_constants,
    constant_profile,
    forcing_potential,
    gaussian_bump,
    initial_field,
    manufactured_case,
    neumann_cosine_profile,
    resolvent_initialize,
    smoothed_step,
    source_at,
    static_source,
)
from .stepping import (
    DEFAULT_NEWTON,
    NewtonSettings,
    StepFailure,
    Trajectory,
    chemical_potential_p,
    chemical_potential_pep,
    integrate,
    step_p,
    step_pep,
)
from .verification import (
    CheckRecord,
    ConvergenceStudy,
    DoublingRecord,
    ErrorFunctional,
    RateRecord,
    SweepResult,
    VerificationReport,
    check_apriori_p,
    check_apriori_pep,
    check_resolvent_init,
    domain_doubling_study,
    eps_sweep,
    error_functional,
    rate_fit,
    spatial_study,
    temporal_study,
    verify_spec,
)

__version__ = "0.1.0"

__all__ = [
    "CheckRecord",
    "ConvergenceStudy",
    "DEFAULT_NEWTON",
    "DerivedConstants",
    "DiscreteOperators",
    "DoublingRecord",
    "ErrorFunctional",
    "Field",
    "Grid",
    "ManufacturedCase",
    "ModelSpec",
    "NewtonSettings",
    "NumericalConsistencyError",
    "PiEps",
    "PowerLawBeta",
    "RateRecord",
    "StepFailure",
    "SweepResult",
    "Trajectory",
    "VerificationReport",
    "build_operators",
    "check_apriori_p",
    "check_apriori_pep",
    "check_resolvent_init",
    "chemical_potential_p",
    "chemical_potential_pep",
    "compute_constants",
    "constant_profile",
    "domain_doubling_study",
    "eps_sweep",
    "error_functional",
    "forcing_potential",
    "gaussian_bump",
    "initial_field",
    "integrate",
    "manufactured_case",
    "neumann_cosine_profile",
    "rate_fit",
    "resolvent_initialize",
    "smoothed_step",
    "source_at",
    "spatial_study",
    "static_source",
    "step_p",
    "step_pep",
    "temporal_study",
    "verify_spec",
]
