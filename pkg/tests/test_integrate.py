import importlib
import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from tipscope.drift import ParameterDrift
from tipscope.integrate import (
    IntegrationError,
    IntegrationOptions,
    OrthogonalityWarning,
    StiffnessError,
    integrate,
    integrate_with_qr,
    reorthonormalize,
    skew_projection,
)
from tipscope.systems import SystemModel, builtin_system, linear_system

integ = importlib.import_module("tipscope.integrate")

SHORT = {
    "unique_linear": (0.065, (0.0, 58.0)),
    "bistable_logistic": (0.378, (0.0, 60.0)),
    "bistable_linear_2d": (0.049, (0.0, 20.0)),
    "bistable_logistic_2d": (0.378, (0.0, 20.0)),
    "resource_consumer": (-0.002, (0.0, 5.0)),
}


def test_skew_projection_examples():
    assert skew_projection(np.eye(1), np.array([[3.0]])) == 0.0
    S = skew_projection(np.eye(2), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(S, [[0.0, -3.0], [3.0, 0.0]])


@settings(max_examples=50)
@given(arrays(float, (3, 3), elements=st.floats(-10, 10)), arrays(float, (3, 3), elements=st.floats(-10, 10)))
def test_skew_projection_is_skew(Z, A):
    Q, _ = np.linalg.qr(Z + 20 * np.eye(3))
    S = skew_projection(Q, A)
    assert np.array_equal(S + S.T, np.zeros((3, 3)))
    M = Q.T @ A @ Q
    assert np.allclose(np.tril(S, -1), np.tril(M, -1))


def test_reorthonormalize_positive_diagonal(rng):
    Z = rng.normal(size=(4, 4))
    Q, r = reorthonormalize(Z)
    assert np.all(r > 0)
    assert np.linalg.norm(Q.T @ Q - np.eye(4)) < 1e-13
    R = Q.T @ Z
    assert np.allclose(np.diag(R), r) and np.allclose(np.tril(R, -1), 0, atol=1e-12)


def test_scalar_decay():
    traj = integrate(linear_system([[-1.0]], (0.0, 10.0)), x0=[1.0])
    assert len(traj) == 1001 and traj.times[-1] == pytest.approx(10.0)
    assert abs(traj.states[-1, 0] - math.exp(-10.0)) < 1e-9
    assert np.allclose(np.diff(traj.times), 0.01, atol=1e-12)


def test_scalar_qr_is_trivial(backend):
    s = builtin_system("unique_linear", 0.06)
    traj = integrate_with_qr(s)
    assert traj.diagnostics["backend"] == backend
    assert np.all(traj.q_factors == 1.0)
    fx = np.array([s.jacobian(x, lam)[0, 0] for x, lam in zip(traj.states, traj.lambdas)])
    assert np.allclose(traj.b_diag[:, 0], fx, rtol=0, atol=1e-14)


def test_constant_diagonal():
    traj = integrate_with_qr(linear_system(np.diag([-1.0, -2.0])), x0=[1.0, 1.0])
    assert np.allclose(traj.q_factors, np.eye(2), atol=1e-15)
    assert np.allclose(traj.b_diag, [-1.0, -2.0], atol=1e-15)


def fundamental_qr(A_of_t, Q0, t_end):
    n = Q0.shape[0]
    sol = solve_ivp(lambda t, y: (A_of_t(t) @ y.reshape(n, n)).ravel(), (0.0, t_end), Q0.ravel(),
                    method="DOP853", rtol=1e-13, atol=1e-13)
    X = sol.y[:, -1].reshape(n, n)
    _, r = reorthonormalize(X)
    return r


def test_rotation_preserves_volume():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    traj = integrate_with_qr(linear_system(A, (0.0, 5.0)), x0=[1.0, 0.0])
    assert np.allclose(traj.b_diag, 0.0, atol=1e-13)
    assert np.allclose(traj.log_growth[-1], 0.0, atol=1e-12)
    assert np.allclose(fundamental_qr(lambda t: A, np.eye(2), 5.0), 1.0, atol=1e-10)


def test_growth_matches_fundamental_matrix(rng):
    for _ in range(3):
        C0, C1 = rng.uniform(-1, 1, (2, 2, 2))
        A_of_t = lambda t, C0=C0, C1=C1: C0 + np.sin(t) * C1  # noqa: E731
        traj = integrate_with_qr(linear_system(A_of_t, (0.0, 5.0)), x0=[0.0, 0.0])
        r = fundamental_qr(A_of_t, np.eye(2), 5.0)
        assert np.allclose(traj.log_growth[-1], np.log(r), atol=1e-8)


def test_stored_diagonal_matches_recomputation():
    s = builtin_system("bistable_logistic_2d", 0.378)
    traj = integrate_with_qr(s)
    for k in range(0, len(traj), 997):
        Q = traj.q_factors[k]
        M = Q.T @ s.jacobian(traj.states[k], traj.lambdas[k]) @ Q
        assert np.allclose(traj.b_diag[k], np.diag(M), rtol=0, atol=1e-13)


def test_states_match_reference_solver():
    s = builtin_system("bistable_logistic_2d", 0.378)
    traj = integrate(s)
    sol = solve_ivp(s.f, s.t_span, s.x0, method="DOP853", rtol=1e-13, atol=1e-13, t_eval=traj.times)
    assert np.max(np.abs(sol.y.T - traj.states)) < 1e-8


@pytest.mark.parametrize("name", sorted(SHORT))
def test_backends_agree(name, monkeypatch):
    if not integ.compiled_available():
        pytest.skip("compiled extension not built")
    rate, span = SHORT[name]
    s = builtin_system(name, rate)
    runs = {}
    for b in ("compiled", "python"):
        monkeypatch.setenv("TIPSCOPE_BACKEND", b)
        runs[b] = integrate_with_qr(s, t_span=span)
        assert runs[b].diagnostics["backend"] == b
    a, p = runs["compiled"], runs["python"]
    assert len(a) == len(p) and a.diverged == p.diverged
    scale = max(1.0, np.abs(p.states).max())
    assert np.max(np.abs(a.states - p.states)) < 1e-9 * scale
    assert np.max(np.abs(a.log_growth - p.log_growth)) < 1e-9
    assert np.max(np.abs(a.q_factors - p.q_factors)) < 1e-9


def test_divergence_truncates(backend):
    traj = integrate_with_qr(builtin_system("unique_linear", 0.08))
    assert traj.diverged
    assert traj.times[-1] < 60.0
    assert np.all(np.isfinite(traj.states)) and np.abs(traj.states).max() <= 1e8
    assert len(traj.q_factors) == len(traj.b_diag) == len(traj.log_growth) == len(traj)


def test_resource_consumer_collapse():
    traj = integrate(builtin_system("resource_consumer", -0.002))
    assert traj.diagnostics["scheme"] == "implicit_euler"
    assert traj.states[:, 0].min() < 0.1
    assert np.all(traj.states[: int(1500 / 0.01), 0] > 3.0)


def test_implicit_euler_first_order():
    s = builtin_system("resource_consumer", -0.001)
    ends = []
    for dt in (4e-3, 2e-3, 1e-3):
        opts = IntegrationOptions(dt_out=0.04, implicit_dt=dt)
        ends.append(integrate(s, opts=opts).states[-1, 0])
    e1, e2 = abs(ends[0] - ends[1]), abs(ends[1] - ends[2])
    assert e1 / e2 == pytest.approx(2.0, rel=0.1)


def blowup_system():
    return SystemModel(
        name="blowup",
        dim=1,
        drift=ParameterDrift.create("linear", 1.0),
        rhs=lambda x, lam: x * x,
        jacobian=lambda x, lam: np.array([[2.0 * x[0]]]),
        x0=(1.0,),
        t_span=(0.0, 2.0),
    )


def test_step_underflow_raises():
    with pytest.raises(StiffnessError) as exc:
        integrate(blowup_system(), opts=IntegrationOptions(divergence_cutoff=1e300))
    assert 0.99 < exc.value.t < 1.0


def test_newton_failure_raises(backend):
    opts = IntegrationOptions(newton_max_iter=1, newton_tol=1e-30)
    with pytest.raises(IntegrationError) as exc:
        integrate(builtin_system("resource_consumer", -0.002), t_span=(0.0, 1.0), opts=opts)
    assert exc.value.t == pytest.approx(1e-3)


def test_orthogonality_warning(monkeypatch):
    monkeypatch.setattr(integ, "ORTHO_WARN", 0.0)
    with pytest.warns(OrthogonalityWarning):
        integrate_with_qr(builtin_system("bistable_linear_2d", 0.049), t_span=(0.0, 1.0))


def test_input_validation():
    s = builtin_system("bistable_linear_2d", 0.049)
    with pytest.raises(ValueError):
        integrate(s, t_span=(1.0, 1.0))
    with pytest.raises(ValueError):
        integrate(s, x0=[0.5])
    with pytest.raises(ValueError):
        integrate(s, x0=[0.5, float("nan")])
    with pytest.raises(ValueError):
        integrate_with_qr(s, Q0=np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        integrate(builtin_system("resource_consumer", -0.002), opts=IntegrationOptions(implicit_dt=3e-3))


def test_options_round_trip():
    o = IntegrationOptions(abs_tol=1e-10, implicit=True)
    assert IntegrationOptions.from_dict(o.to_dict()) == o
    assert replace(o, dt_out=0.02).dt_out == 0.02
    with pytest.raises(ValueError):
        IntegrationOptions.from_dict({"stepper": "rk4"})


def test_grid_lengths():
    traj = integrate(builtin_system("unique_linear", 0.06))
    assert len(traj) == 6001 and traj.times[-1] == pytest.approx(60.0, abs=1e-12)
    assert not traj.diverged and abs(traj.states[-1, 0] - traj.lambdas[-1] - 0.5) < 0.5
