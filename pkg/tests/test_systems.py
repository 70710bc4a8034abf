import math

import numpy as np
import pytest

from tipscope.drift import ParameterDrift
from tipscope.systems import (
    BUILTIN_NAMES,
    SingularityError,
    Stability,
    UnknownSystemError,
    analytic_critical_rate,
    bistable_collision_rate,
    builtin_system,
    classify,
    default_radius,
    invariant_line_offsets,
    qse_branches,
    resource_consumer_system,
    tracked_branch,
)

RATES = {"resource_consumer": -0.002}


def fd_jacobian(f, x, lam, eps=1e-6):
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        J[:, j] = (f(x + e, lam) - f(x - e, lam)) / (2 * eps)
    return J


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_jacobian_matches_finite_differences(name, rng):
    s = builtin_system(name, RATES.get(name, 0.05))
    for _ in range(100):
        if name == "resource_consumer":
            x, lam = rng.uniform(0.1, 12.0, 2), rng.uniform(0.0, 5.0)
        else:
            x, lam = rng.uniform(-2.0, 3.0, s.dim), rng.uniform(0.0, 2.0)
        J = s.jacobian(x, lam)
        F = fd_jacobian(s.rhs, x, lam)
        assert np.allclose(J, F, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(J).max()))


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_qse_residual_and_labels(name, rng):
    s = builtin_system(name, RATES.get(name, 0.05))
    for lam in rng.uniform(0.0, 5.0, 100):
        for xs, label in qse_branches(s, lam):
            assert np.max(np.abs(s.rhs(xs, lam))) < 1e-12
            re = np.linalg.eigvals(s.jacobian(xs, lam)).real
            if label is Stability.STABLE:
                assert np.all(re < 0)
            elif label is Stability.UNSTABLE:
                assert np.all(re > 0)
            else:
                assert re.min() < 0 < re.max() or np.any(re == 0)


def test_polynomial_branches():
    ul = qse_branches(builtin_system("unique_linear", 0.06), 0.0)
    assert [(float(x[0]), s) for x, s in ul] == [(0.0, Stability.UNSTABLE), (0.5, Stability.STABLE)]
    bl = qse_branches(builtin_system("bistable_linear", 0.05), 1.0)
    assert sorted((float(x[0]), s) for x, s in bl) == [
        (0.5, Stability.STABLE), (1.0, Stability.UNSTABLE), (1.5, Stability.STABLE)]
    two = qse_branches(builtin_system("bistable_linear_2d", 0.05), 1.0)
    assert {s for _, s in two} == {Stability.STABLE, Stability.SADDLE}


def test_builtin_metadata():
    ul = builtin_system("unique_linear", 0.065)
    assert ul.dim == 1 and ul.t_span == (0.0, 60.0) and ul.x0 == (0.5,)
    assert ul.params["delta"] == 0.5
    x = np.array([0.3])
    lam = 0.2
    assert ul.rhs(x, lam)[0] == pytest.approx(-(0.3 - lam) * (0.3 - lam - 0.5))
    bl2 = builtin_system("bistable_logistic_2d", 0.378)
    assert bl2.rhs(np.array([0.6, 0.1]), 0.0)[1] == pytest.approx(0.5 * 0.36 - 0.1)
    assert bl2.x0 == (0.5, 0.5) and bl2.t_span == (0.0, 100.0)
    rc = builtin_system("resource_consumer", -0.002)
    assert rc.x0 == (6.0, 16.0) and rc.t_span == (0.0, 2500.0) and rc.implicit
    assert rc.f(0.0, np.array([6.0, 16.0])) == pytest.approx([0.0, 0.0], abs=1e-12)
    with pytest.raises(UnknownSystemError):
        builtin_system("compost_bomb", 0.1)


def test_resource_consumer_equilibria():
    rc = builtin_system("resource_consumer", -0.002)
    coexist, origin, capacity = rc.equilibria(5.0)
    assert np.allclose(coexist, [6.0, 16.0], atol=1e-10, rtol=0)
    assert classify(rc.jacobian(coexist, 5.0)) is Stability.STABLE
    assert classify(rc.jacobian(capacity, 5.0)) is Stability.SADDLE
    # R = 0 is an equilibrium only with C = 0
    assert np.abs(rc.rhs(np.array([0.0, 3.0]), 5.0)).max() > 0
    with pytest.raises(SingularityError):
        resource_consumer_system(ParameterDrift.create("affine", -0.002), m=1.0).equilibria(5.0)


def test_critical_rates_and_invariant_lines():
    assert analytic_critical_rate("unique_linear") == 0.0625
    assert analytic_critical_rate("unique_logistic") == 0.5
    assert analytic_critical_rate("bistable_logistic") == 0.377
    assert analytic_critical_rate("bistable_linear_2d") == analytic_critical_rate("bistable_linear")
    with pytest.raises(UnknownSystemError):
        analytic_critical_rate("nope")
    # invariant lines of the unique linear family move with speed r
    s = builtin_system("unique_linear", 0.06)
    for u in invariant_line_offsets(0.5, 0.06):
        for t in (0.0, 13.0, 59.0):
            lam = 0.06 * t
            assert abs(s.rhs(np.array([lam + u]), lam)[0] - 0.06) < 1e-12
    with pytest.raises(SingularityError):
        invariant_line_offsets(0.5, 0.07)
    # cubic u^3 - delta^2 u + r has a double root at the collision rate
    rc = bistable_collision_rate(0.5)
    u = 0.5 / math.sqrt(3.0)
    assert abs(u ** 3 - 0.25 * u + rc) < 1e-15
    assert abs(3 * u ** 2 - 0.25) < 1e-15
    assert 0.048 < rc < 0.049


def test_tracked_branch_and_radius():
    for name in ("unique_linear", "bistable_linear", "bistable_logistic_2d"):
        s = builtin_system(name, 0.05)
        br = tracked_branch(s)
        assert br.stability is Stability.STABLE
        assert br.branch(0.0)[0] == pytest.approx(0.5)
        assert default_radius(s) == pytest.approx(0.5)
    assert not builtin_system("resource_consumer", -0.002).tracking


def test_with_rate_is_a_copy():
    s = builtin_system("unique_logistic", 0.49)
    t = s.with_rate(0.5001)
    assert s.rate == 0.49 and t.rate == 0.5001 and t.name == s.name
