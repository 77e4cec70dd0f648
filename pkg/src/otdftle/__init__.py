"""Finite-time Lyapunov exponents from full tangent dynamics and OTD reductions."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateBasisError,
    DegenerateInputError,
    DimensionError,
    IntegrationDivergedError,
    InvalidSpectrumError,
    NearDegenerateError,
    NumericalDegeneracyError,
    OtdFtleError,
)
from .integrators import IntegratorConfig, integrate_coupled, integrate_state  # noqa: E402
from .models import (  # noqa: E402
    AbcFlow,
    AbcParams,
    CdvModel,
    CdvParams,
    DynamicalSystem,
    FunctionSystem,
    LinearSystem,
    available_models,
    make_model,
    register_model,
)
from .tangent import (  # noqa: E402
    FdConfig,
    cauchy_green,
    deformation_gradient_fd,
    deformation_gradient_variational,
    ftle,
    ftle_from_gradient,
)
from .otd import (  # noqa: E402
    evolve_otd,
    ftle_history,
    otd_init,
    reduced_fundamental,
    reduced_ftle,
    reduced_ftle_pipeline,
)
from .diagnostics import detect_crossing, lancaster_rate, subspace_distance  # noqa: E402
