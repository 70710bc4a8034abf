"""Time-dependent parameter laws ``lambda(t)`` driving the nonautonomous systems."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class DriftKind(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    AFFINE = "affine"


#: Integer codes shared with the compiled kernels.
DRIFT_CODES = {DriftKind.LINEAR: 0, DriftKind.LOGISTIC: 1, DriftKind.AFFINE: 2}

DEFAULT_LAMBDA0 = {DriftKind.LINEAR: 0.0, DriftKind.LOGISTIC: 1e-6, DriftKind.AFFINE: 5.0}


class DriftError(ValueError):
    """Invalid drift parameters or evaluation point."""


@dataclass(frozen=True)
class ParameterDrift:
    """Parameter law ``lambda(t)`` with rate ``r``.

    ``linear`` and ``affine`` ramp as ``lambda0 + r t`` (affine is the
    decreasing ramp of the resource-consumer model, so ``r < 0``).
    ``logistic`` is ``exp(r t) / (lambda1 + exp(r t))`` with
    ``lambda1 = (1 - lambda0) / lambda0``, which solves
    ``dlambda/dt = r lambda (1 - lambda)`` with ``lambda(0) = lambda0``.
    """

    kind: DriftKind
    rate: float
    lambda0: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DriftKind(self.kind))
        if not (math.isfinite(self.rate) and math.isfinite(self.lambda0)):
            raise DriftError("drift rate and lambda0 must be finite")
        if self.kind is DriftKind.LOGISTIC and not 0.0 < self.lambda0 < 1.0:
            raise DriftError("logistic drift needs 0 < lambda0 < 1")
        if self.kind is DriftKind.AFFINE and not self.rate < 0.0:
            raise DriftError("affine (decreasing) drift needs rate < 0")

    @property
    def lambda1(self) -> float:
        """Logistic shape constant; only meaningful for logistic drift."""
        return (1.0 - self.lambda0) / self.lambda0 if self.kind is DriftKind.LOGISTIC else 0.0

    @classmethod
    def create(cls, kind: str | DriftKind, rate: float, lambda0: float | None = None) -> "ParameterDrift":
        kind = DriftKind(kind)
        return cls(kind, float(rate), DEFAULT_LAMBDA0[kind] if lambda0 is None else float(lambda0))

    def with_rate(self, rate: float) -> "ParameterDrift":
        return ParameterDrift(self.kind, float(rate), self.lambda0)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "rate": self.rate, "lambda0": self.lambda0}

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterDrift":
        try:
            return cls.create(data["kind"], data["rate"], data.get("lambda0"))
        except (KeyError, TypeError) as exc:
            raise DriftError(f"bad drift specification {data!r}") from exc
        except ValueError as exc:
            raise DriftError(str(exc)) from exc

    def __call__(self, t: float) -> float:
        return lambda_at(self, t)


def _logistic(rt: float, lambda1: float) -> float:
    # both branches avoid exp overflow
    if rt >= 0.0:
        return 1.0 / (1.0 + lambda1 * math.exp(-rt))
    e = math.exp(rt)
    return e / (lambda1 + e)


def lambda_at(drift: ParameterDrift, t: float) -> float:
    if not math.isfinite(t):
        raise DriftError(f"non-finite time {t!r}")
    if drift.kind is DriftKind.LOGISTIC:
        return _logistic(drift.rate * t, drift.lambda1)
    return drift.lambda0 + drift.rate * t


def lambda_dot_at(drift: ParameterDrift, t: float) -> float:
    if not math.isfinite(t):
        raise DriftError(f"non-finite time {t!r}")
    if drift.kind is DriftKind.LOGISTIC:
        lam = _logistic(drift.rate * t, drift.lambda1)
        return drift.rate * lam * (1.0 - lam)
    return drift.rate
