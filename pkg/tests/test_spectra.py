import math

import numpy as np
import pytest

from tipscope.integrate import IntegrationOptions, Trajectory, integrate, integrate_with_qr
from tipscope.spectra import (
    EmptySeriesError,
    SpectraInputError,
    adjoint_lower_estimates,
    cumulative_growth,
    lyapunov_estimates,
    steklov_series,
)
from tipscope.systems import builtin_system, linear_system

EIG13 = np.array([[-3.0, 0.0], [-2.0, -1.0]])  # eigenvalues -1, -3, not normal


def synthetic(b, dt=0.01, log_growth=None):
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    n = b.shape[1]
    M = len(b)
    return Trajectory(
        times=dt * np.arange(M),
        states=np.zeros((M, n)),
        lambdas=np.zeros(M),
        dt_out=dt,
        q_factors=np.tile(np.eye(n), (M, 1, 1)),
        b_diag=b,
        log_growth=log_growth,
    )


def test_constant_average():
    s = steklov_series(synthetic(np.full(500, -0.7)), 2.0)
    assert len(s) == 300
    assert np.allclose(s.values, -0.7, atol=1e-14)
    assert np.allclose(s.derivatives, 0.0, atol=1e-12)


def test_linear_integrand_trapezoid_exact():
    t = 0.01 * np.arange(1001)
    s = steklov_series(synthetic(t), 2.0, quadrature="trapezoid")
    assert np.allclose(s.values[:, 0], s.times + 1.0, atol=1e-12)
    assert np.allclose(s.derivatives, 1.0, atol=1e-9)
    exact = synthetic(t, log_growth=(0.5 * t * t)[:, None])
    assert np.allclose(steklov_series(exact, 2.0).values[:, 0], s.times + 1.0, atol=1e-12)


def test_zero_window_returns_diagonal():
    tr = synthetic(np.linspace(0, 1, 50))
    s = steklov_series(tr, 0.0)
    assert np.array_equal(s.values, tr.b_diag) and len(s) == 50


def test_errors():
    tr = synthetic(np.zeros(100))
    with pytest.raises(SpectraInputError):
        steklov_series(tr, 0.015)
    with pytest.raises(SpectraInputError):
        steklov_series(tr, 0.005)
    with pytest.raises(EmptySeriesError):
        steklov_series(tr, 2.0)
    with pytest.raises(SpectraInputError):
        steklov_series(tr, -1.0)
    with pytest.raises(SpectraInputError):
        cumulative_growth(tr, "simpson")
    with pytest.raises(SpectraInputError):
        cumulative_growth(tr, "exact")
    bare = integrate(builtin_system("unique_linear", 0.06))
    with pytest.raises(SpectraInputError):
        steklov_series(bare, 2.0)
    with pytest.raises(SpectraInputError):
        lyapunov_estimates(bare)


def test_unique_linear_settles_on_invariant_line():
    traj = integrate_with_qr(builtin_system("unique_linear", 0.06))
    s = steklov_series(traj, 2.0)
    assert abs(s.values[-1, 0] + math.sqrt(0.25 - 0.24)) < 1e-3


def test_additivity_exact():
    traj = integrate_with_qr(builtin_system("bistable_logistic_2d", 0.378))
    one, two = steklov_series(traj, 2.0), steklov_series(traj, 4.0)
    k = 200
    half = 0.5 * (one.values[: len(two)] + one.values[k: k + len(two)])
    assert np.max(np.abs(two.values - half)) < 1e-10


def test_quadrature_consistency_under_refinement():
    s = builtin_system("unique_linear", 0.06)
    coarse = steklov_series(integrate_with_qr(s), 2.0)
    fine = steklov_series(integrate_with_qr(s, opts=IntegrationOptions(dt_out=0.005)), 2.0)
    assert np.max(np.abs(fine.values[::2][: len(coarse)] - coarse.values)) < 1e-8


def test_window_length_changes_scale_not_limit():
    traj = integrate_with_qr(builtin_system("unique_linear", 0.06))
    ends, slopes = [], []
    for H in (1.0, 2.0, 4.0):
        s = steklov_series(traj, H)
        ends.append(s.values[-1, 0])
        slopes.append(np.sign(s.derivatives[-1, 0]))
    assert max(ends) - min(ends) < 1e-3
    assert len(set(slopes)) == 1


def test_constant_diagonal_estimates():
    traj = integrate_with_qr(linear_system(np.diag([-1.0, -2.0]), (0.0, 20.0)), x0=[1.0, 1.0])
    est = lyapunov_estimates(traj)
    assert np.allclose(est.upper_lyapunov, [-1.0, -2.0], atol=1e-12)
    assert np.allclose(adjoint_lower_estimates(linear_system(np.diag([-1.0, -2.0]), (0.0, 20.0)), traj),
                       [-1.0, -2.0], atol=1e-12)


def test_scalar_decay_estimates():
    system = linear_system([[-1.0]], (0.0, 20.0))
    traj = integrate_with_qr(system, x0=[1.0])
    est = lyapunov_estimates(traj)
    assert est.upper_lyapunov == pytest.approx([-1.0])
    assert est.sacker_sell_lo == pytest.approx([-1.0]) and est.sacker_sell_hi == pytest.approx([-1.0])
    adj = integrate_with_qr(system, x0=[1.0], adjoint=True)
    assert lyapunov_estimates(adj).upper_lyapunov == pytest.approx([1.0])
    assert adjoint_lower_estimates(system, traj) == pytest.approx([-1.0])


def test_nonnormal_constant_matrix():
    system = linear_system(EIG13, (0.0, 100.0))
    traj = integrate_with_qr(system, x0=[1.0, 1.0])
    est = lyapunov_estimates(traj)
    assert np.allclose(est.upper_lyapunov, [-1.0, -3.0], atol=1e-3)
    assert np.allclose(adjoint_lower_estimates(system, traj), [-1.0, -3.0], atol=1e-3)
    # point spectrum: windowed averages collapse once the basis has aligned
    assert np.all(est.sacker_sell_hi - est.sacker_sell_lo < 1e-6)
    assert np.all(est.sacker_sell_lo <= est.sacker_sell_hi)


def test_estimates_ordered_on_builtin_run():
    est = lyapunov_estimates(integrate_with_qr(builtin_system("bistable_linear_2d", 0.048)))
    assert np.all(est.sacker_sell_lo <= est.sacker_sell_hi)
    assert np.all(np.isfinite(est.upper_lyapunov))
    assert est.window == 2.0 and est.t_end == pytest.approx(140.0)
