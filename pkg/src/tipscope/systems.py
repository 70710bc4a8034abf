"""Benchmark nonautonomous systems, their frozen-parameter equilibria and critical rates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .drift import ParameterDrift, lambda_at

DELTA = 0.5
RESOURCE_CONSUMER_PARAMS = {"a": 1.0, "e": 1.0, "K": 10.0, "m": 0.75, "eps": 0.01, "R_h": 2.0}


class Stability(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    SADDLE = "saddle"


class UnknownSystemError(LookupError):
    pass


class SingularityError(ArithmeticError):
    pass


# Integer codes shared with the compiled kernels.
FAMILY_UNIQUE, FAMILY_BISTABLE, FAMILY_RESOURCE_CONSUMER = 0, 1, 2
COUPLING_NONE, COUPLING_LINEAR, COUPLING_QUADRATIC = 0, 1, 2


@dataclass(frozen=True)
class NativeSpec:
    """Description of a built-in family the compiled kernels can evaluate directly."""

    family: int
    coupling: int
    params: tuple[float, ...]


@dataclass(frozen=True)
class QSECurve:
    branch: Callable[[float], np.ndarray]
    stability: Stability


@dataclass(frozen=True)
class SystemModel:
    """A system ``x' = f(x, lambda(t))`` together with its linearization.

    ``rhs`` and ``jacobian`` take ``(x, lam)``; ``x0`` and ``t_span`` are the
    default experiment settings. ``native`` is set for built-in families so
    the compiled integrators can bypass Python callbacks.
    """

    name: str
    dim: int
    drift: ParameterDrift
    rhs: Callable[[np.ndarray, float], np.ndarray]
    jacobian: Callable[[np.ndarray, float], np.ndarray]
    x0: tuple[float, ...]
    t_span: tuple[float, float]
    params: dict = field(default_factory=dict)
    native: NativeSpec | None = None
    equilibria: Callable[[float], list[np.ndarray]] | None = None
    reference_rate: float | None = None
    implicit: bool = False
    tracking: bool = True

    @property
    def rate(self) -> float:
        return self.drift.rate

    def f(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.rhs(x, lambda_at(self.drift, t))

    def A(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.jacobian(x, lambda_at(self.drift, t))

    def with_rate(self, rate: float) -> "SystemModel":
        return replace(self, drift=self.drift.with_rate(rate))

    def with_drift(self, drift: ParameterDrift) -> "SystemModel":
        return replace(self, drift=drift)


def classify(jac: np.ndarray) -> Stability:
    re = np.linalg.eigvals(np.atleast_2d(jac)).real
    if np.all(re < 0):
        return Stability.STABLE
    if np.all(re > 0):
        return Stability.UNSTABLE
    return Stability.SADDLE


# -- polynomial families ----------------------------------------------------

def _poly_terms(family: int, delta: float):
    if family == FAMILY_UNIQUE:
        return (lambda u: -u * (u - delta)), (lambda u: -(2.0 * u - delta)), (0.0, delta)
    if family == FAMILY_BISTABLE:
        return (lambda u: -u * (u * u - delta * delta)), (lambda u: delta * delta - 3.0 * u * u), (-delta, 0.0, delta)
    raise ValueError(f"unknown polynomial family {family}")


def polynomial_system(
    family: str,
    drift: ParameterDrift,
    delta: float = DELTA,
    coupling: str | None = None,
    x0: Sequence[float] | None = None,
    t_span: tuple[float, float] = (0.0, 60.0),
    name: str | None = None,
    reference_rate: float | None = None,
) -> SystemModel:
    """Coordinate-shift polynomial family in ``u = x - lambda``.

    ``family`` is ``"unique"`` (``x' = -u (u - delta)``) or ``"bistable"``
    (``x' = -u (u^2 - delta^2)``). ``coupling`` adds a slaved second state,
    ``"linear"`` for ``y' = x - y`` or ``"quadratic"`` for ``y' = x^2/2 - y``.
    """
    fam = {"unique": FAMILY_UNIQUE, "bistable": FAMILY_BISTABLE}[family]
    coup = {None: COUPLING_NONE, "linear": COUPLING_LINEAR, "quadratic": COUPLING_QUADRATIC}[coupling]
    fu, fu_x, offsets = _poly_terms(fam, delta)
    dim = 1 if coup == COUPLING_NONE else 2

    if dim == 1:
        def rhs(x, lam):
            return np.array([fu(x[0] - lam)])

        def jacobian(x, lam):
            return np.array([[fu_x(x[0] - lam)]])

        def equilibria(lam):
            return [np.array([lam + c]) for c in offsets]
    else:
        quad = coup == COUPLING_QUADRATIC

        def rhs(x, lam):
            return np.array([fu(x[0] - lam), (0.5 * x[0] * x[0] if quad else x[0]) - x[1]])

        def jacobian(x, lam):
            return np.array([[fu_x(x[0] - lam), 0.0], [x[0] if quad else 1.0, -1.0]])

        def equilibria(lam):
            out = []
            for c in offsets:
                xs = lam + c
                out.append(np.array([xs, 0.5 * xs * xs if quad else xs]))
            return out

    if x0 is None:
        x0 = (0.5,) * dim
    return SystemModel(
        name=name or f"{family}_{drift.kind.value}" + ("" if dim == 1 else "_2d"),
        dim=dim,
        drift=drift,
        rhs=rhs,
        jacobian=jacobian,
        x0=tuple(float(v) for v in x0),
        t_span=(float(t_span[0]), float(t_span[1])),
        params={"delta": delta, "family": family, "coupling": coupling},
        native=NativeSpec(fam, coup, (float(delta),)),
        equilibria=equilibria,
        reference_rate=reference_rate,
    )


# -- resource-consumer ------------------------------------------------------

def resource_consumer_system(drift: ParameterDrift, **overrides: float) -> SystemModel:
    """Resource ``R`` and consumer ``C`` with multiplicative growth ``lambda(t)``."""
    p = dict(RESOURCE_CONSUMER_PARAMS, **overrides)
    a, e, K, m, eps, Rh = (p[k] for k in ("a", "e", "K", "m", "eps", "R_h"))

    def rhs(x, lam):
        R, C = x
        D = R + Rh
        return np.array([lam * R * (1.0 - R / K) - a * C * R / D, eps * (e * a * C * R / D - m * C)])

    def jacobian(x, lam):
        R, C = x
        D = R + Rh
        return np.array([
            [lam * (1.0 - 2.0 * R / K) - a * C * Rh / (D * D), -a * R / D],
            [eps * e * a * C * Rh / (D * D), eps * (e * a * R / D - m)],
        ])

    def equilibria(lam):
        if e * a == m:
            raise SingularityError("e*a == m: coexistence equilibrium undefined")
        Rs = m * Rh / (e * a - m)
        if Rs + Rh == 0.0:
            raise SingularityError("R* + R_h == 0")
        Cs = lam * (1.0 - Rs / K) * (Rs + Rh) / a
        return [np.array([Rs, Cs]), np.array([0.0, 0.0]), np.array([K, 0.0])]

    return SystemModel(
        name="resource_consumer",
        dim=2,
        drift=drift,
        rhs=rhs,
        jacobian=jacobian,
        x0=(6.0, 16.0),
        t_span=(0.0, 2500.0),
        params=p,
        native=NativeSpec(FAMILY_RESOURCE_CONSUMER, COUPLING_NONE, (a, e, K, m, eps, Rh)),
        equilibria=equilibria,
        reference_rate=-0.001,
        implicit=True,
        tracking=False,
    )


# -- registry ---------------------------------------------------------------

# name -> (family, drift kind, coupling, interval end, reference rate)
_POLY_TABLE = {
    "unique_linear": ("unique", "linear", None, 60.0, 0.06),
    "bistable_linear": ("bistable", "linear", None, 140.0, 0.048),
    "unique_logistic": ("unique", "logistic", None, 60.0, 0.49),
    "bistable_logistic": ("bistable", "logistic", None, 100.0, 0.377),
    "bistable_linear_2d": ("bistable", "linear", "linear", 140.0, 0.048),
    "bistable_logistic_2d": ("bistable", "logistic", "quadratic", 100.0, 0.377),
}

BUILTIN_NAMES = tuple(_POLY_TABLE) + ("resource_consumer",)

_CRITICAL_RATES = {
    "unique_linear": DELTA * DELTA / 4.0,
    "bistable_linear": 0.049,
    "unique_logistic": 0.5,
    "bistable_logistic": 0.377,
    "bistable_linear_2d": 0.049,
    "bistable_logistic_2d": 0.377,
    "resource_consumer": -0.002,
}


def builtin_system(name: str, rate: float, lambda0: float | None = None) -> SystemModel:
    if name == "resource_consumer":
        return resource_consumer_system(ParameterDrift.create("affine", rate, lambda0))
    try:
        family, kind, coupling, t_end, ref = _POLY_TABLE[name]
    except KeyError:
        raise UnknownSystemError(f"unknown system {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    return polynomial_system(
        family,
        ParameterDrift.create(kind, rate, lambda0),
        coupling=coupling,
        t_span=(0.0, t_end),
        name=name,
        reference_rate=ref,
    )


def linear_system(A: Callable[[float], np.ndarray] | np.ndarray, t_span=(0.0, 10.0), name="linear") -> SystemModel:
    """``x' = A(t) x`` where ``A`` is constant or a function of time.

    The drift is a unit linear ramp so ``lambda`` equals ``t``.
    """
    if callable(A):
        At = A
    else:
        Ac = np.array(A, dtype=float)
        At = lambda t: Ac  # noqa: E731
    dim = np.atleast_2d(At(0.0)).shape[0]
    return SystemModel(
        name=name,
        dim=dim,
        drift=ParameterDrift.create("linear", 1.0, 0.0),
        rhs=lambda x, lam: np.atleast_2d(At(lam)) @ x,
        jacobian=lambda x, lam: np.atleast_2d(At(lam)),
        x0=(0.0,) * dim,
        t_span=tuple(float(v) for v in t_span),
        tracking=False,
    )


def qse_branches(system: SystemModel, lam: float) -> list[tuple[np.ndarray, Stability]]:
    """Equilibria of the frozen-``lambda`` system with stability labels."""
    if system.equilibria is None:
        raise UnknownSystemError(f"system {system.name!r} has no equilibrium algebra")
    return [(xs, classify(system.jacobian(xs, lam))) for xs in system.equilibria(lam)]


def tracked_branch(system: SystemModel) -> QSECurve:
    """Stable branch the default initial condition starts closest to."""
    lam0 = lambda_at(system.drift, system.t_span[0])
    branches = qse_branches(system, lam0)
    stable = [i for i, (_, s) in enumerate(branches) if s is Stability.STABLE]
    if not stable:
        raise UnknownSystemError(f"system {system.name!r} has no stable QSE")
    idx = min(stable, key=lambda i: abs(branches[i][0][0] - system.x0[0]))
    return QSECurve(lambda lam, _i=idx: system.equilibria(lam)[_i], Stability.STABLE)


def default_radius(system: SystemModel) -> float:
    """First-component distance from the tracked stable QSE to the nearest non-stable one."""
    lam0 = lambda_at(system.drift, system.t_span[0])
    stable = tracked_branch(system).branch(lam0)[0]
    others = [xs[0] for xs, s in qse_branches(system, lam0) if s is not Stability.STABLE]
    if not others:
        raise UnknownSystemError(f"system {system.name!r} has no unstable QSE to define a radius")
    return float(min(abs(stable - o) for o in others))


def analytic_critical_rate(name: str) -> float:
    try:
        return _CRITICAL_RATES[name]
    except KeyError:
        raise UnknownSystemError(f"no critical rate known for {name!r}") from None


def invariant_line_offsets(delta: float, rate: float) -> tuple[float, float]:
    """Offsets ``u = x - lambda`` of the invariant lines of the unique linear family.

    Roots of ``u^2 - delta u + r = 0``; the larger root is the attracting line.
    """
    disc = delta * delta - 4.0 * rate
    if disc < 0:
        raise SingularityError(f"no invariant lines for rate {rate} > delta^2/4")
    s = math.sqrt(disc)
    return (delta - s) / 2.0, (delta + s) / 2.0


def bistable_collision_rate(delta: float = DELTA) -> float:
    """Rate at which two invariant lines of the bistable linear family collide."""
    return 2.0 * delta ** 3 / (3.0 * math.sqrt(3.0))
