"""Inference functionals composed with observation operators.

Estimating equations, their Godambe information, and the ordering
``I_classical >= I_O >= G_Psi`` for point, kernel-weighted and interval
observation of location and location-scale families.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"

from .errors import (
    BoundaryError,
    ConfigError,
    DegenerateError,
    DomainError,
    EstimationError,
    NoRootError,
    ObsInferError,
    QuadratureError,
    SingularMatrixError,
    UnsupportedPairingError,
    VariantMismatchError,
)
from .estimation import EstimationResult, ecf_phase_estimator, gmm, interval_mle_benchmark, solve_z
from .inference import (
    InferenceFunctional,
    interval_score_if,
    interval_sinusoidal,
    population_moments,
    pushforward_score_if,
    recenter,
    regularity_report,
    score_if,
    sinusoidal,
    stack,
    weak_cf_if,
    weak_moment_if,
)
from .information import (
    are_curve,
    elliptical_are,
    elliptical_are_direction,
    fisher_binned,
    fisher_classical,
    fisher_interval,
    fisher_kernel_weighted,
    godambe_numeric,
    godambe_sinusoidal_closed,
    hierarchy_report,
    locscale_are,
    locscale_godambe,
    pushforward_information,
)
from .kernels import CLASSICAL, KernelProfile, weak_cf, weak_cumulants, weak_moment, weak_summary
from .models import (
    ModelFamily,
    cauchy_location,
    elliptical,
    gaussian_location,
    location_scale,
    student_t_location,
    two_component_mixture,
)
from .nuisance import PartitionedModel, bhapkar_godambe_project, nuisance_godambe, orthogonality_check
from .observation import BinGrid, ObservationOperator, observe, observe_many
from .specialfn import DEFAULT_SPEC, TIGHT_SPEC, QuadratureSpec, bessel_k, integrate, radial_generator
