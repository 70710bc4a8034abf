"""Rate-induced tipping detection with nonautonomous stability spectra."""

from .detect import (
    DetectionResult,
    DetectorSettings,
    Method,
    QAngleSeries,
    critical_rate_search,
    q_angle_detect,
    q_angle_series,
    run_detectors,
    steklov_detect,
    tracking_radius_detect,
)
from .drift import DriftKind, ParameterDrift, lambda_at, lambda_dot_at
from .integrate import (
    IntegrationError,
    IntegrationOptions,
    StiffnessError,
    Trajectory,
    active_backend,
    compiled_available,
    integrate,
    integrate_with_qr,
)
from .spectra import SpectralEstimate, SteklovSeries, adjoint_lower_estimates, lyapunov_estimates, steklov_series
from .systems import (
    BUILTIN_NAMES,
    QSECurve,
    Stability,
    SystemModel,
    builtin_system,
    linear_system,
    polynomial_system,
    qse_branches,
    resource_consumer_system,
)

BACKEND = active_backend()

__version__ = "0.1.0"
