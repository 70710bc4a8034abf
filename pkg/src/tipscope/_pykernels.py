"""Pure-Python integration kernels.

These are the reference implementations; ``_core`` (Cython) mirrors them
step for step for the built-in families. Both return the same tuple::

    (times, states, q_factors, b_diag, log_growth, diverged, max_defect, nsteps)

``q_factors``, ``b_diag`` and ``log_growth`` are ``None`` when the orthogonal
factor is not integrated.
"""

from __future__ import annotations

import math

import numpy as np

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

SAFETY, FAC_MIN, FAC_MAX = 0.9, 0.2, 5.0
STATUS_OK, STATUS_UNDERFLOW, STATUS_NEWTON = 0, 1, 2


class KernelFailure(Exception):
    def __init__(self, status: int, t: float):
        super().__init__(status, t)
        self.status = status
        self.t = t


def skew(M: np.ndarray) -> np.ndarray:
    S = np.tril(M, -1)
    return S - S.T


def mgs(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt; returns ``Q`` and the (positive) diagonal of ``R``."""
    n = Z.shape[0]
    Q = np.array(Z, dtype=float, copy=True)
    r = np.empty(n)
    for j in range(n):
        v = Q[:, j]
        for i in range(j):
            v -= (Q[:, i] @ v) * Q[:, i]
        r[j] = math.sqrt(v @ v)
        Q[:, j] = v / r[j]
    return Q, r


def _qr_derivative(f, jac, n, adjoint):
    nn = n * n

    def F(t, z):
        x = z[:n]
        Q = z[n:n + nn].reshape(n, n)
        A = jac(t, x)
        if adjoint:
            A = -A.T
        M = Q.T @ A @ Q
        out = np.empty_like(z)
        out[:n] = f(t, x)
        out[n:n + nn] = (Q @ skew(M)).ravel()
        out[n + nn:] = np.diag(M)
        return out

    return F


def _bdiag(jac, t, x, Q, adjoint):
    A = jac(t, x)
    if adjoint:
        A = -A.T
    return np.einsum("ji,jk,ki->i", Q, A, Q)


def explicit_run(f, jac, x0, q0, t0, dt_out, nout, atol, rtol, cutoff, with_qr, adjoint=False):
    n = len(x0)
    nn = n * n
    if with_qr:
        F = _qr_derivative(f, jac, n, adjoint)
        z = np.concatenate([np.asarray(x0, float), np.asarray(q0, float).ravel(), np.zeros(n)])
    else:
        F = lambda t, z: np.asarray(f(t, z), dtype=float)  # noqa: E731
        z = np.array(x0, dtype=float)

    times = t0 + dt_out * np.arange(nout)
    states = np.empty((nout, n))
    qs = np.empty((nout, n, n)) if with_qr else None
    bs = np.empty((nout, n)) if with_qr else None
    logs = np.empty((nout, n)) if with_qr else None

    def record(k, t, z):
        states[k] = z[:n]
        if with_qr:
            Q = z[n:n + nn].reshape(n, n)
            qs[k] = Q
            bs[k] = _bdiag(jac, t, z[:n], Q, adjoint)
            logs[k] = z[n + nn:]

    record(0, t0, z)
    t = t0
    h = min(1e-3, dt_out)
    max_defect = 0.0
    nsteps = 0
    diverged = False
    k = 1
    fac_max = FAC_MAX
    while k < nout:
        t_target = times[k]
        clipped = t + h >= t_target - 1e-12 * abs(t_target)
        hs = t_target - t if clipped else h
        if hs < 1e-14 * max(1.0, abs(t)):
            raise KernelFailure(STATUS_UNDERFLOW, t)
        k1 = F(t, z)
        k2 = F(t + C2 * hs, z + hs * (A21 * k1))
        k3 = F(t + C3 * hs, z + hs * (A31 * k1 + A32 * k2))
        k4 = F(t + C4 * hs, z + hs * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = F(t + C5 * hs, z + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = F(t + hs, z + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        zn = z + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = F(t + hs, zn)
        ev = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(z), np.abs(zn))
        err = math.sqrt(np.mean((ev / sc) ** 2))
        if not math.isfinite(err):
            err = 1e10
        if err <= 1.0:
            fac = fac_max if err == 0.0 else min(fac_max, max(FAC_MIN, SAFETY * err ** -0.2))
            t = t_target if clipped else t + hs
            z = zn
            nsteps += 1
            fac_max = FAC_MAX
            if np.any(~np.isfinite(z[:n])) or np.any(np.abs(z[:n]) > cutoff):
                diverged = True
                break
            if with_qr:
                Qp = z[n:n + nn].reshape(n, n)
                defect = np.linalg.norm(Qp.T @ Qp - np.eye(n))
                max_defect = max(max_defect, defect)
                Qn, _ = mgs(Qp)
                z[n:n + nn] = Qn.ravel()
            if clipped:
                record(k, t, z)
                k += 1
            h = hs * fac
        else:
            h = hs * max(FAC_MIN, SAFETY * err ** -0.2)
            fac_max = 1.0
    return _finish(times, states, qs, bs, logs, k, diverged, max_defect, nsteps)


def implicit_run(f, jac, x0, q0, t0, dt_out, nout, dt, substeps, newton_tol, newton_max, cutoff, with_qr, adjoint=False):
    """Fixed-step implicit Euler with Newton iteration.

    The orthogonal factor advances by the implicit-Euler step of the
    variational equation followed by re-orthonormalization,
    ``Q_{k+1} R_k = (I - dt A_{k+1})^{-1} Q_k``, and ``log diag R_k``
    accumulates the growth.
    """
    n = len(x0)
    x = np.array(x0, dtype=float)
    Q = np.array(q0, dtype=float) if with_qr else None
    rho = np.zeros(n)
    eye = np.eye(n)

    times = t0 + dt_out * np.arange(nout)
    states = np.empty((nout, n))
    qs = np.empty((nout, n, n)) if with_qr else None
    bs = np.empty((nout, n)) if with_qr else None
    logs = np.empty((nout, n)) if with_qr else None

    def record(k, t):
        states[k] = x
        if with_qr:
            qs[k] = Q
            bs[k] = _bdiag(jac, t, x, Q, adjoint)
            logs[k] = rho

    record(0, t0)
    diverged = False
    nsteps = 0
    k = 1
    while k < nout:
        for s in range(1, substeps + 1):
            step = (k - 1) * substeps + s
            t = t0 + step * dt
            xo = x.copy()
            for it in range(newton_max):
                A = jac(t, x)
                g = x - xo - dt * f(t, x)
                d = np.linalg.solve(eye - dt * A, g)
                x = x - d
                if np.max(np.abs(d)) <= newton_tol * (1.0 + np.max(np.abs(x))):
                    break
            else:
                raise KernelFailure(STATUS_NEWTON, t)
            nsteps += 1
            if np.any(~np.isfinite(x)) or np.any(np.abs(x) > cutoff):
                diverged = True
                break
            if with_qr:
                A = jac(t, x)
                if adjoint:
                    A = -A.T
                Q, r = mgs(np.linalg.solve(eye - dt * A, Q))
                rho = rho + np.log(r)
        if diverged:
            break
        record(k, times[k])
        k += 1
    return _finish(times, states, qs, bs, logs, k, diverged, 0.0, nsteps)


def _finish(times, states, qs, bs, logs, k, diverged, max_defect, nsteps):
    cut = slice(0, k)
    return (
        times[cut],
        states[cut],
        None if qs is None else qs[cut],
        None if bs is None else bs[cut],
        None if logs is None else logs[cut],
        diverged,
        max_defect,
        nsteps,
    )
