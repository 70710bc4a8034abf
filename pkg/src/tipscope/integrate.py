"""Integration of the state equation and the coupled continuous-QR system.

The orthogonal factor ``Q(t)`` of a fundamental solution of ``u' = A(t) u``
obeys ``Q' = Q S(Q, A)`` with ``S`` built from the strictly lower part of
``Q^T A Q``. Along with ``x`` and ``Q`` we integrate the cumulative growth
``rho_i(t) = int_0^t (Q^T A Q)_ii``, from which windowed averages follow
exactly.

Two backends implement the stepping loops: the compiled :mod:`tipscope._core`
for the built-in families and :mod:`tipscope._pykernels` for everything else
(or when ``TIPSCOPE_BACKEND=python``).
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import _pykernels
from .drift import DRIFT_CODES, lambda_at
from .systems import SystemModel

log = logging.getLogger(__name__)

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

ORTHO_WARN = 1e-6


class IntegrationError(RuntimeError):
    """Newton failure in the implicit scheme; ``t`` is where it happened."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class StiffnessError(IntegrationError):
    """Adaptive step size underflowed."""


class OrthogonalityWarning(RuntimeWarning):
    pass


def compiled_available() -> bool:
    return _core is not None


def active_backend(system: SystemModel | None = None) -> str:
    forced = os.environ.get("TIPSCOPE_BACKEND", "").lower()
    if forced == "python" or _core is None:
        return "python"
    if system is not None and system.native is None:
        return "python"
    return "compiled"


@dataclass(frozen=True)
class IntegrationOptions:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    dt_out: float = 0.01
    implicit: bool | None = None  # None: follow the system's preference
    implicit_dt: float = 1e-3
    divergence_cutoff: float = 1e8
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "IntegrationOptions":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown integration options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Trajectory:
    """Uniformly sampled solution, optionally with its continuous-QR data.

    ``b_diag[k]`` is ``diag(Q^T A Q)`` at ``times[k]`` and ``log_growth[k]``
    its integral from ``times[0]``. A diverged trajectory stops at the last
    sample before the divergence cutoff was crossed.
    """

    times: np.ndarray
    states: np.ndarray
    lambdas: np.ndarray
    dt_out: float
    q_factors: np.ndarray | None = None
    b_diag: np.ndarray | None = None
    log_growth: np.ndarray | None = None
    diverged: bool = False
    t_span: tuple[float, float] = (0.0, 0.0)
    system_name: str = ""
    rate: float = float("nan")
    adjoint: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def has_qr(self) -> bool:
        return self.q_factors is not None

    def __len__(self) -> int:
        return len(self.times)


def skew_projection(Q: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``S(Q, A)``: strictly lower part of ``Q^T A Q`` minus its transpose."""
    return _pykernels.skew(np.asarray(Q).T @ np.asarray(A) @ np.asarray(Q))


def reorthonormalize(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt with positive diagonal of the implied triangular factor."""
    return _pykernels.mgs(np.asarray(Z, dtype=float))


def _grid(t_span, dt_out) -> int:
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise ValueError(f"empty or invalid time span {t_span!r}")
    if dt_out <= 0:
        raise ValueError("dt_out must be positive")
    return int(math.floor((t1 - t0) / dt_out + 1e-9)) + 1


def _callables(system: SystemModel):
    drift = system.drift
    return (
        lambda t, x: system.rhs(x, lambda_at(drift, t)),
        lambda t, x: system.jacobian(x, lambda_at(drift, t)),
    )


def _run(system, x0, Q0, t_span, opts, with_qr, adjoint):
    opts = opts or IntegrationOptions()
    x0 = np.array(system.x0 if x0 is None else x0, dtype=float).ravel()
    if x0.shape != (system.dim,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"initial condition must be {system.dim} finite values, got {x0!r}")
    t_span = system.t_span if t_span is None else (float(t_span[0]), float(t_span[1]))
    nout = _grid(t_span, opts.dt_out)
    t0 = t_span[0]
    n = system.dim
    if Q0 is None:
        Q0 = np.eye(n)
    Q0 = np.ascontiguousarray(Q0, dtype=float)
    if with_qr and (Q0.shape != (n, n) or np.linalg.norm(Q0.T @ Q0 - np.eye(n)) >= 1e-12):
        raise ValueError("Q0 must be an orthogonal n x n matrix")
    implicit = system.implicit if opts.implicit is None else opts.implicit
    backend = active_backend(system)

    if implicit:
        substeps = opts.dt_out / opts.implicit_dt
        if abs(substeps - round(substeps)) > 1e-9 or round(substeps) < 1:
            raise ValueError("dt_out must be an integer multiple of implicit_dt")
        substeps = int(round(substeps))

    if backend == "compiled":
        spec, drift = system.native, system.drift
        head = (spec.family, spec.coupling, DRIFT_CODES[drift.kind], drift.rate, drift.lambda0, drift.lambda1,
                np.array(spec.params, dtype=float), x0, Q0, t0, opts.dt_out, nout)
        if implicit:
            res = _core.implicit_run(*head, opts.implicit_dt, substeps, opts.newton_tol, opts.newton_max_iter,
                                     opts.divergence_cutoff, with_qr, adjoint)
        else:
            res = _core.explicit_run(*head, opts.abs_tol, opts.rel_tol, opts.divergence_cutoff, with_qr, adjoint)
        if len(res) == 2:
            _raise(*res)
    else:
        f, jac = _callables(system)
        try:
            if implicit:
                res = _pykernels.implicit_run(f, jac, x0, Q0, t0, opts.dt_out, nout, opts.implicit_dt, substeps,
                                              opts.newton_tol, opts.newton_max_iter, opts.divergence_cutoff,
                                              with_qr, adjoint)
            else:
                res = _pykernels.explicit_run(f, jac, x0, Q0, t0, opts.dt_out, nout, opts.abs_tol, opts.rel_tol,
                                              opts.divergence_cutoff, with_qr, adjoint)
        except _pykernels.KernelFailure as exc:
            _raise(exc.status, exc.t)

    times, states, qs, bs, logs, diverged, max_defect, nsteps = res
    if diverged:
        log.info("%s (r=%g) diverged after t=%g", system.name, system.rate, times[-1])
    if max_defect > ORTHO_WARN:
        warnings.warn(f"orthogonality defect {max_defect:.2e} before projection", OrthogonalityWarning, stacklevel=3)
    lambdas = np.array([lambda_at(system.drift, t) for t in times])
    return Trajectory(
        times=times,
        states=states,
        lambdas=lambdas,
        dt_out=opts.dt_out,
        q_factors=qs,
        b_diag=bs,
        log_growth=logs,
        diverged=diverged,
        t_span=t_span,
        system_name=system.name,
        rate=system.rate,
        adjoint=adjoint,
        diagnostics={
            "backend": backend,
            "scheme": "implicit_euler" if implicit else "dopri5",
            "steps": nsteps,
            "max_orthogonality_defect": max_defect,
        },
    )


def _raise(status, t):
    if status == _pykernels.STATUS_UNDERFLOW:
        raise StiffnessError("step size underflow", t)
    raise IntegrationError("Newton iteration did not converge", t)


def integrate(system: SystemModel, x0=None, t_span=None, opts: IntegrationOptions | None = None) -> Trajectory:
    """Solve ``x' = f(x, lambda(t))`` and sample it on the uniform output grid."""
    return _run(system, x0, None, t_span, opts, with_qr=False, adjoint=False)


def integrate_with_qr(
    system: SystemModel,
    x0=None,
    Q0=None,
    t_span=None,
    opts: IntegrationOptions | None = None,
    adjoint: bool = False,
) -> Trajectory:
    """Solve the state equation together with the orthogonal factor ``Q(t)``.

    With ``adjoint=True`` the orthogonal factor follows ``y' = -A(t)^T y``
    along the same state trajectory.
    """
    return _run(system, x0, Q0, t_span, opts, with_qr=True, adjoint=adjoint)
