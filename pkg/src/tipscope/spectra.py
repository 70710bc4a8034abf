"""Steklov averages and finite-time Lyapunov / Sacker-Sell estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .integrate import IntegrationOptions, Trajectory, integrate_with_qr
from .systems import SystemModel

DEFAULT_WINDOW = 2.0
TRANSIENT = 10.0


class SpectraInputError(ValueError):
    pass


class EmptySeriesError(SpectraInputError):
    pass


@dataclass
class SteklovSeries:
    """``values[k, i]`` is the mean of ``B_ii`` over ``[times[k], times[k] + window]``."""

    times: np.ndarray
    window: float
    values: np.ndarray
    derivatives: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else float("nan")

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class SpectralEstimate:
    """Finite-time stand-ins for the spectral endpoints.

    ``upper_lyapunov`` averages ``B_ii`` over the whole trajectory;
    ``sacker_sell_lo``/``sacker_sell_hi`` are the extreme window-``H``
    averages once the initial transient is dropped.
    """

    upper_lyapunov: np.ndarray
    sacker_sell_lo: np.ndarray
    sacker_sell_hi: np.ndarray
    window: float
    t_end: float


def _require_qr(traj: Trajectory) -> None:
    if traj.b_diag is None or len(traj) == 0:
        raise SpectraInputError("trajectory carries no diagonal of B(t); integrate with QR first")


def cumulative_growth(traj: Trajectory, quadrature: str = "auto") -> np.ndarray:
    """Running integral of ``b_diag`` from ``times[0]``.

    ``auto`` uses the integrator's own accumulated growth when present and
    falls back to the composite trapezoidal rule on the sampled diagonal.
    """
    _require_qr(traj)
    if quadrature not in ("auto", "exact", "trapezoid"):
        raise SpectraInputError(f"unknown quadrature {quadrature!r}")
    if quadrature != "trapezoid" and traj.log_growth is not None:
        return np.asarray(traj.log_growth, dtype=float)
    if quadrature == "exact":
        raise SpectraInputError("trajectory has no accumulated growth")
    b = np.asarray(traj.b_diag, dtype=float)
    out = np.zeros_like(b)
    out[1:] = np.cumsum(0.5 * (b[1:] + b[:-1]) * traj.dt_out, axis=0)
    return out


def _window_steps(H: float, dt: float) -> int:
    k = H / dt
    if abs(k - round(k)) > 1e-9 * max(1.0, k):
        raise SpectraInputError(f"window {H} is not a multiple of the sampling step {dt}")
    return int(round(k))


def steklov_series(traj: Trajectory, H: float = DEFAULT_WINDOW, quadrature: str = "auto") -> SteklovSeries:
    _require_qr(traj)
    if H < 0 or not math.isfinite(H):
        raise SpectraInputError("window must be finite and non-negative")
    dt = traj.dt_out
    if H == 0:
        values = np.array(traj.b_diag, dtype=float)
        times = traj.times
    else:
        if H < dt:
            raise SpectraInputError(f"window {H} shorter than sampling step {dt}")
        k = _window_steps(H, dt)
        if len(traj) <= k:
            raise EmptySeriesError(f"trajectory spans {len(traj)} samples, window needs {k + 1}")
        c = cumulative_growth(traj, quadrature)
        values = (c[k:] - c[:-k]) / H
        times = traj.times[: len(values)]
    if len(values) > 1:
        derivs = np.gradient(values, dt, axis=0)
    else:
        derivs = np.zeros_like(values)
    return SteklovSeries(times=np.asarray(times), window=float(H), values=values, derivatives=derivs)


def lyapunov_estimates(traj: Trajectory, H: float = DEFAULT_WINDOW, transient: float = TRANSIENT) -> SpectralEstimate:
    _require_qr(traj)
    if len(traj) < 2:
        raise SpectraInputError("need at least two samples")
    c = cumulative_growth(traj)
    span = traj.times[-1] - traj.times[0]
    upper = (c[-1] - c[0]) / span
    series = steklov_series(traj, H)
    keep = series.times >= traj.times[0] + max(transient, H)
    vals = series.values[keep] if np.any(keep) else series.values
    return SpectralEstimate(
        upper_lyapunov=upper,
        sacker_sell_lo=vals.min(axis=0),
        sacker_sell_hi=vals.max(axis=0),
        window=float(H),
        t_end=float(traj.times[-1]),
    )


def adjoint_lower_estimates(
    system: SystemModel, traj: Trajectory, opts: IntegrationOptions | None = None
) -> np.ndarray:
    """Lower Lyapunov exponent estimates from the adjoint system ``y' = -A(t)^T y``.

    The adjoint's upper exponents are the negated lower exponents of the
    original system; the result is sorted in decreasing order to pair with
    ``upper_lyapunov``.
    """
    if not traj.has_qr:
        raise SpectraInputError("trajectory carries no orthogonal factors")
    opts = replace(opts or IntegrationOptions(), dt_out=traj.dt_out)
    adj = integrate_with_qr(
        system,
        x0=traj.states[0],
        t_span=(float(traj.times[0]), float(traj.times[-1])),
        opts=opts,
        adjoint=True,
    )
    c = cumulative_growth(adj)
    upper_adj = (c[-1] - c[0]) / (adj.times[-1] - adj.times[0])
    return np.sort(-upper_adj)[::-1]
