"""Transverse-measure laboratory: intensity and intersection covolume of
cross sections, with Monte-Carlo estimators cross-checked against closed
forms and an exact finite oracle."""

from .errors import (
    GroupMismatchError,
    InvarianceViolation,
    InvariantViolation,
    PreconditionError,
    ResourceBudgetError,
    UsageError,
    WindowMismatchError,
)
from .estimators import (
    Estimate,
    InequalityReport,
    MeckeReport,
    MonotonicityReport,
    TestFunction,
    builtin_test_functions,
    estimate_covolume_alt,
    estimate_covolume_kac,
    estimate_intensity,
    inequality_report,
    mecke_check,
    monotonicity_report,
)
from .geometry import (
    Config,
    CyclicGroup,
    GroupPoint,
    RealGroup,
    Window,
    canonical_order,
    config_from_json,
    config_to_json,
    cyclic_config,
    difference_set,
    intersect,
    real_config,
)
from .models import (
    AmbientSample,
    AnalyticValues,
    Cyclic,
    CutProject,
    Extension,
    Lattice,
    PalmSample,
    Poisson,
    Suspension,
    analytic_values,
    lambda_probe,
    sample_ambient,
    sample_palm,
    validate_spec,
)
from .oracle import (
    CyclicSystem,
    exact_basic_inequality,
    exact_covolume,
    exact_injective_cover,
    exact_intensity,
    exact_inverse,
    exact_mecke,
    exact_partition_of_unity,
    exact_transverse,
)
from .voronoi import VoronoiCellResult, cell_at_identity, tessellate

__version__ = "0.1.0"
