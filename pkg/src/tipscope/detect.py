"""Tipping detectors and critical-rate bisection.

Three detectors are provided:

* tracking radius: the first time the state leaves a fixed distance of the
  stable quasi-static equilibrium (QSE) it started on;
* Steklov derivative: a sustained, eventually positive change in the windowed
  growth rates after a reference run has settled;
* Q-angle: a dip in the angle between the leading orthogonal vectors of a
  test run and an untipped reference run.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np
from scipy.signal import find_peaks

from .drift import lambda_at
from .integrate import IntegrationOptions, Trajectory, integrate, integrate_with_qr
from .spectra import DEFAULT_WINDOW, SteklovSeries, steklov_series
from .systems import QSECurve, SystemModel, builtin_system, default_radius, tracked_branch

DEFAULT_EPSILON = 1e-3
DEFAULT_H = 1.0
RISE_MIN = 0.01
SKIP_FRACTION = 0.05
FLIP_TOL = 0.05
HORIZON_FACTOR = 10.0


class DetectorInputError(ValueError):
    pass


class DetectorConfigError(DetectorInputError):
    pass


class DetectorInapplicableError(RuntimeError):
    pass


class DimensionError(DetectorInputError):
    pass


class Method(str, enum.Enum):
    TRACKING_RADIUS = "TrackingRadius"
    STEKLOV_DERIVATIVE = "SteklovDerivative"
    Q_ANGLE = "QAngle"


@dataclass
class DetectionResult:
    method: Method
    tipped: bool
    tip_time: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tipped and self.tip_time is not None:
            raise ValueError("an untipped result carries no tip time")

    @property
    def status(self) -> str:
        return self.diagnostics.get("status", "tipped" if self.tipped else "not_tipped")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "tipped": self.tipped,
            "tip_time": self.tip_time,
            "status": self.status,
            "diagnostics": self.diagnostics,
        }


@dataclass
class QAngleSeries:
    times: np.ndarray
    angles: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class DetectorSettings:
    """Tunable detector parameters; ``None`` means derive a default from the system."""

    epsilon: float = DEFAULT_EPSILON
    h: float = DEFAULT_H
    window: float = DEFAULT_WINDOW
    radius: float | None = None
    transient_skip: float | None = None
    rise_min: float = RISE_MIN
    reference_rate: float | None = None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorSettings":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown detector settings: {sorted(unknown)}")
        return cls(**data)


# -- tracking radius --------------------------------------------------------

def tracking_radius_detect(traj: Trajectory, qse: QSECurve | None, radius: float, drift=None) -> DetectionResult:
    """First grid time at which ``|x_1 - qse_1(lambda(t))|`` exceeds ``radius``.

    Only the first state component is compared, so slaved extra components
    do not shift the detection time. A trajectory that hit the divergence
    cutoff has left every finite radius by its last sample.
    """
    if qse is None:
        raise DetectorConfigError("tracking radius needs a stable QSE branch")
    if not radius > 0:
        raise DetectorConfigError("radius must be positive")
    lams = traj.lambdas if drift is None else np.array([lambda_at(drift, t) for t in traj.times])
    ref = np.array([qse.branch(lam)[0] for lam in lams])
    dist = np.abs(traj.states[:, 0] - ref)
    out = np.nonzero(dist > radius)[0]
    diag = {"radius": radius, "max_distance": float(np.max(dist)) if len(dist) else 0.0}
    if len(out):
        return DetectionResult(Method.TRACKING_RADIUS, True, float(traj.times[out[0]]), diag)
    if traj.diverged:
        diag["note"] = "diverged"
        return DetectionResult(Method.TRACKING_RADIUS, True, float(traj.times[-1]), diag)
    return DetectionResult(Method.TRACKING_RADIUS, False, None, diag)


# -- Steklov derivative -----------------------------------------------------

def settling_index(derivs: np.ndarray, epsilon: float) -> int:
    """Index after which every component satisfies ``|dmu/dt| <= epsilon``."""
    bad = np.nonzero(np.any(np.abs(derivs) > epsilon, axis=1))[0]
    return 0 if len(bad) == 0 else int(bad[-1]) + 1


def _check_grid(t_a: np.ndarray, t_b: np.ndarray) -> int:
    m = min(len(t_a), len(t_b))
    if m == 0:
        raise DetectorInputError("empty series")
    if not np.allclose(t_a[:m], t_b[:m], rtol=0.0, atol=1e-9 * max(1.0, abs(t_a[m - 1]))):
        raise DetectorInputError("series do not share a time grid")
    return m


def steklov_detect(
    ref_series: SteklovSeries,
    test_series: SteklovSeries,
    epsilon: float = DEFAULT_EPSILON,
    h: float = DEFAULT_H,
    tracking_lost: bool | None = None,
) -> DetectionResult:
    """Sustained growth-rate change in ``test_series`` after ``ref_series`` settles.

    The settling time ``T`` is the first grid time after which every
    derivative of the reference series stays within ``epsilon``. Tipping is
    reported at ``t + h`` for the first ``t > T`` such that some component's
    derivative exceeds ``epsilon`` in magnitude on all of ``[t, t + h]`` and
    is positive at ``t + h``.

    ``tracking_lost`` only labels a non-detection as ``inconclusive`` when
    the run is known to have left its tracking radius.
    """
    if not (epsilon > 0 and h > 0):
        raise DetectorInputError("epsilon and h must be positive")
    if ref_series.window != test_series.window:
        raise DetectorInputError("series use different windows")
    _check_grid(ref_series.times, test_series.times)
    times = test_series.times
    dt = ref_series.dt if len(ref_series) > 1 else test_series.dt
    T_idx = settling_index(ref_series.derivatives, epsilon)
    if T_idx >= len(ref_series):
        raise DetectorInapplicableError("reference Steklov derivatives never settle below epsilon")
    T = float(ref_series.times[T_idx])
    k = int(round(h / dt))
    if k < 1:
        raise DetectorInputError("h shorter than the sampling step")
    d = test_series.derivatives
    big = np.abs(d) > epsilon
    diag = {"settling_time": T, "epsilon": epsilon, "h": h, "window": test_series.window}

    # Runs of consecutive exceedances per component: run[j, i] counts how many
    # samples up to j have |d| > eps without interruption.
    m = len(times)
    run = np.zeros(big.shape, dtype=int)
    if m:
        run[0] = big[0]
        for j in range(1, m):
            run[j] = np.where(big[j], run[j - 1] + 1, 0)
    start = T_idx + 1
    for j in range(start + k, m):
        hit = (run[j] >= k + 1) & (d[j] > 0)
        if np.any(hit):
            diag["component"] = int(np.argmax(hit))
            return DetectionResult(Method.STEKLOV_DERIVATIVE, True, float(times[j]), diag)
    if tracking_lost:
        diag["status"] = "inconclusive"
    return DetectionResult(Method.STEKLOV_DERIVATIVE, False, None, diag)


# -- Q-angle ----------------------------------------------------------------

def q_angle_series(ref_traj: Trajectory, test_traj: Trajectory) -> QAngleSeries:
    """Angle between the first orthogonal columns of two runs on their common grid.

    Equals ``arccos(q_ref . q_test)`` with values in ``[0, pi]``.
    """
    if not (ref_traj.has_qr and test_traj.has_qr):
        raise DetectorInputError("both trajectories need Q factors")
    if ref_traj.dim < 2 or test_traj.dim < 2:
        raise DimensionError("the Q-angle needs at least two dimensions")
    if ref_traj.dim != test_traj.dim:
        raise DetectorInputError("trajectories differ in dimension")
    m = _check_grid(ref_traj.times, test_traj.times)
    u = ref_traj.q_factors[:m, :, 0]
    v = test_traj.q_factors[:m, :, 0]
    # arccos(u.v) for unit vectors, in a form that stays accurate near 0 and pi
    angles = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))
    return QAngleSeries(times=np.array(test_traj.times[:m]), angles=np.clip(angles, 0.0, math.pi))


def q_angle_detect(
    series: QAngleSeries,
    transient_skip: float | None = None,
    rise_min: float = RISE_MIN,
    flip_tol: float = FLIP_TOL,
) -> DetectionResult:
    """Locate the dip after which the angle stays raised.

    Candidate dips are local minima with prominence at least ``rise_min``
    after ``transient_skip`` (default 5% of the interval). A dip next to a
    peak within ``flip_tol`` of pi is part of a full rotation of the leading
    vector past the reference one, not a dip-and-rise, and is skipped. Each
    remaining dip is scored by how far the angle stays above it until the
    next dip: the lowest value between its first following peak and that
    dip. The highest score wins if it reaches ``rise_min``.
    """
    t, a = series.times, series.angles
    if len(t) < 3:
        return DetectionResult(Method.Q_ANGLE, False, None, {"reason": "series too short"})
    if transient_skip is None:
        transient_skip = SKIP_FRACTION * (t[-1] - t[0])
    dips, _ = find_peaks(-a, prominence=rise_min)
    peaks, _ = find_peaks(a, prominence=rise_min)
    flips = peaks[a[peaks] > math.pi - flip_tol]
    diag = {"transient_skip": float(transient_skip), "rise_min": rise_min, "candidates": [], "rotations": []}
    best, best_rise = None, -math.inf
    for n, i in enumerate(dips):
        if t[i] < t[0] + transient_skip or i == len(a) - 1:
            continue
        j = dips[n + 1] if n + 1 < len(dips) else len(a)
        before = peaks[peaks < i]
        after = peaks[(peaks > i) & (peaks < j)]
        if (len(before) and before[-1] in flips) or (len(after) and after[0] in flips):
            diag["rotations"].append(float(t[i]))
            continue
        diag["candidates"].append(float(t[i]))
        hold = a[after[0]:j].min() if len(after) else a[i:j].max()
        rise = float(hold - a[i])
        if rise > best_rise:
            best, best_rise = i, rise
    if best is None:
        return DetectionResult(Method.Q_ANGLE, False, None, diag)
    diag.update(min_angle=float(a[best]), rise=best_rise)
    if best_rise < rise_min:
        return DetectionResult(Method.Q_ANGLE, False, None, diag)
    return DetectionResult(Method.Q_ANGLE, True, float(t[best]), diag)


# -- experiment helpers -----------------------------------------------------

def reference_rate_for(system: SystemModel, settings: DetectorSettings) -> float | None:
    return settings.reference_rate if settings.reference_rate is not None else system.reference_rate


def tracking_for(system: SystemModel, traj: Trajectory, settings: DetectorSettings) -> DetectionResult:
    qse = tracked_branch(system)
    radius = settings.radius if settings.radius is not None else default_radius(system)
    return tracking_radius_detect(traj, qse, radius)


def run_detectors(
    system: SystemModel,
    settings: DetectorSettings | None = None,
    opts: IntegrationOptions | None = None,
    x0=None,
    t_span=None,
) -> dict:
    """Integrate a test run (and its reference) and apply every applicable detector.

    Returns ``{"test": Trajectory, "reference": Trajectory | None,
    "steklov": SteklovSeries, "reference_steklov": ..., "angle": QAngleSeries | None,
    "results": [DetectionResult, ...]}``.
    """
    settings = settings or DetectorSettings()
    test = integrate_with_qr(system, x0=x0, t_span=t_span, opts=opts)
    out = {"test": test, "reference": None, "steklov": None, "reference_steklov": None, "angle": None, "results": []}
    results = out["results"]
    tracking = None
    if system.tracking and system.equilibria is not None:
        tracking = tracking_for(system, test, settings)
        results.append(tracking)
    if len(test) > round(settings.window / test.dt_out):
        out["steklov"] = steklov_series(test, settings.window)
    rr = reference_rate_for(system, settings)
    if rr is None:
        return out
    ref = integrate_with_qr(system.with_rate(rr), x0=x0, t_span=t_span, opts=opts)
    out["reference"] = ref
    if out["steklov"] is not None and len(ref) > round(settings.window / ref.dt_out):
        out["reference_steklov"] = steklov_series(ref, settings.window)
        lost = tracking.tipped if tracking is not None else None
        try:
            res = steklov_detect(out["reference_steklov"], out["steklov"], settings.epsilon, settings.h, lost)
        except DetectorInapplicableError as exc:
            res = DetectionResult(Method.STEKLOV_DERIVATIVE, False, None, {"status": "inapplicable", "reason": str(exc)})
        results.append(res)
    if system.dim >= 2:
        out["angle"] = q_angle_series(ref, test)
        results.append(q_angle_detect(out["angle"], settings.transient_skip, settings.rise_min))
    return out


# -- critical rate ----------------------------------------------------------

@dataclass
class CriticalRateResult:
    rate: float
    bracket: tuple[float, float]
    history: list[tuple[float, bool]]


def _classifier(name: str, method: Method, settings: DetectorSettings, opts, horizon) -> Callable[[float], bool]:
    t0, t1 = builtin_system(name, -1e-3 if name == "resource_consumer" else 0.0).t_span
    span = (t0, t0 + horizon * (t1 - t0))

    def tipped(rate: float) -> bool:
        system = builtin_system(name, rate)
        if method is Method.TRACKING_RADIUS:
            if not system.tracking:
                raise DetectorConfigError(f"tracking radius is not applied to {name}")
            traj = integrate(system, t_span=span, opts=opts)
            return tracking_for(system, traj, settings).tipped
        res = run_detectors(system, settings, opts, t_span=span)
        return any(r.method is method and r.tipped for r in res["results"])

    return tipped


def critical_rate_search(
    name: str,
    r_lo: float,
    r_hi: float,
    detector: Method | str = Method.TRACKING_RADIUS,
    tol: float = 1e-4,
    settings: DetectorSettings | None = None,
    opts: IntegrationOptions | None = None,
    horizon: float = HORIZON_FACTOR,
) -> CriticalRateResult:
    """Bisect between a no-tip rate ``r_lo`` and a tipping rate ``r_hi``.

    Runs use ``horizon`` times the system's default interval: close to the
    critical rate the passage past the unstable QSE slows down without
    bound, so a short interval would misclassify slightly supercritical
    rates. For decreasing drifts pass negative rates; the bisection acts on
    the magnitude either way.
    """
    method = Method(detector)
    if not tol > 0:
        raise DetectorInputError("tol must be positive")
    if not horizon >= 1:
        raise DetectorInputError("horizon must be at least one interval")
    settings = settings or DetectorSettings()
    tipped = _classifier(name, method, settings, opts, horizon)
    history = []
    lo_tip = tipped(r_lo)
    hi_tip = tipped(r_hi)
    history += [(r_lo, lo_tip), (r_hi, hi_tip)]
    if lo_tip or not hi_tip:
        raise DetectorInputError(
            f"bracket [{r_lo}, {r_hi}] does not straddle the threshold (tipped: {lo_tip}, {hi_tip})"
        )
    lo, hi = r_lo, r_hi
    while abs(hi - lo) >= tol:
        mid = 0.5 * (lo + hi)
        tip = tipped(mid)
        history.append((mid, tip))
        if tip:
            hi = mid
        else:
            lo = mid
    return CriticalRateResult(rate=0.5 * (lo + hi), bracket=(lo, hi), history=history)
