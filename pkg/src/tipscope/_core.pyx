# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernels for the built-in system families.

Same algorithms and return layout as :mod:`tipscope._pykernels`; the model
right-hand sides are evaluated in C so no Python callbacks occur per stage.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, log, fabs, isfinite

cnp.import_array()

cdef enum:
    MAXN = 4
    MAXZ = 24  # n + n*n + n for n = MAXN

cdef enum:
    FAM_UNIQUE = 0
    FAM_BISTABLE = 1
    FAM_RC = 2
    COUP_NONE = 0
    COUP_LINEAR = 1
    COUP_QUADRATIC = 2
    DRIFT_LINEAR = 0
    DRIFT_LOGISTIC = 1
    DRIFT_AFFINE = 2

cdef enum:
    STATUS_OK = 0
    STATUS_UNDERFLOW = 1
    STATUS_NEWTON = 2

cdef struct Model:
    int family
    int coupling
    int drift_kind
    int n
    double rate
    double lam0
    double lam1
    double p[6]

# Dormand-Prince 5(4)
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double SAFETY = 0.9, FAC_MIN = 0.2, FAC_MAX = 5.0


cdef inline double lam_at(Model* m, double t) noexcept nogil:
    cdef double rt, e
    if m.drift_kind == DRIFT_LOGISTIC:
        rt = m.rate * t
        if rt >= 0.0:
            return 1.0 / (1.0 + m.lam1 * exp(-rt))
        e = exp(rt)
        return e / (m.lam1 + e)
    return m.lam0 + m.rate * t


cdef void model_fj(Model* m, double t, double* x, double* f, double* J) noexcept nogil:
    """Right-hand side into ``f`` (may be NULL) and row-major Jacobian into ``J`` (may be NULL)."""
    cdef double lam = lam_at(m, t)
    cdef double u, d, R, C, D, a, e, K, mm, eps, Rh
    if m.family == FAM_RC:
        a = m.p[0]; e = m.p[1]; K = m.p[2]; mm = m.p[3]; eps = m.p[4]; Rh = m.p[5]
        R = x[0]; C = x[1]; D = R + Rh
        if f != NULL:
            f[0] = lam * R * (1.0 - R / K) - a * C * R / D
            f[1] = eps * (e * a * C * R / D - mm * C)
        if J != NULL:
            J[0] = lam * (1.0 - 2.0 * R / K) - a * C * Rh / (D * D)
            J[1] = -a * R / D
            J[2] = eps * e * a * C * Rh / (D * D)
            J[3] = eps * (e * a * R / D - mm)
        return
    d = m.p[0]
    u = x[0] - lam
    if m.family == FAM_UNIQUE:
        if f != NULL:
            f[0] = -u * (u - d)
        if J != NULL:
            J[0] = -(2.0 * u - d)
    else:
        if f != NULL:
            f[0] = -u * (u * u - d * d)
        if J != NULL:
            J[0] = d * d - 3.0 * u * u
    if m.coupling == COUP_NONE:
        return
    if f != NULL:
        if m.coupling == COUP_LINEAR:
            f[1] = x[0] - x[1]
        else:
            f[1] = 0.5 * x[0] * x[0] - x[1]
    if J != NULL:
        J[1] = 0.0
        J[2] = 1.0 if m.coupling == COUP_LINEAR else x[0]
        J[3] = -1.0


cdef void coeff(Model* m, double t, double* x, bint adjoint, double* A) noexcept nogil:
    cdef double J[MAXN * MAXN]
    cdef int i, j, n = m.n
    model_fj(m, t, x, NULL, J)
    for i in range(n):
        for j in range(n):
            A[i * n + j] = -J[j * n + i] if adjoint else J[i * n + j]


cdef void qtaq(int n, double* Q, double* A, double* M) noexcept nogil:
    """M = Q^T A Q for row-major n x n matrices."""
    cdef double AQ[MAXN * MAXN]
    cdef int i, j, k
    cdef double s
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += A[i * n + k] * Q[k * n + j]
            AQ[i * n + j] = s
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += Q[k * n + i] * AQ[k * n + j]
            M[i * n + j] = s


cdef void deriv(Model* m, double t, double* z, double* out, bint qr, bint adjoint) noexcept nogil:
    cdef int n = m.n, nn = m.n * m.n, i, j, k
    cdef double A[MAXN * MAXN]
    cdef double M[MAXN * MAXN]
    cdef double S[MAXN * MAXN]
    cdef double s
    if not qr:
        model_fj(m, t, z, out, NULL)
        return
    model_fj(m, t, z, out, NULL)
    coeff(m, t, z, adjoint, A)
    qtaq(n, &z[n], A, M)
    for i in range(n):
        for j in range(n):
            if i > j:
                S[i * n + j] = M[i * n + j]
            elif i < j:
                S[i * n + j] = -M[j * n + i]
            else:
                S[i * n + j] = 0.0
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += z[n + i * n + k] * S[k * n + j]
            out[n + i * n + j] = s
    for i in range(n):
        out[n + nn + i] = M[i * n + i]


cdef void mgs(int n, double* Q, double* r) noexcept nogil:
    """In-place modified Gram-Schmidt on the columns of row-major ``Q``."""
    cdef int i, j, k
    cdef double dot, nrm
    for j in range(n):
        for i in range(j):
            dot = 0.0
            for k in range(n):
                dot += Q[k * n + i] * Q[k * n + j]
            for k in range(n):
                Q[k * n + j] -= dot * Q[k * n + i]
        nrm = 0.0
        for k in range(n):
            nrm += Q[k * n + j] * Q[k * n + j]
        nrm = sqrt(nrm)
        r[j] = nrm
        for k in range(n):
            Q[k * n + j] /= nrm


cdef double orth_defect(int n, double* Q) noexcept nogil:
    cdef int i, j, k
    cdef double s, acc = 0.0
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += Q[k * n + i] * Q[k * n + j]
            if i == j:
                s -= 1.0
            acc += s * s
    return sqrt(acc)


cdef int solve_small(int n, double* M, double* B, int ncols) noexcept nogil:
    """Solve M X = B in place (B is n x ncols row-major) by Gaussian elimination with partial pivoting."""
    cdef int i, j, k, p
    cdef double piv, tmp, fct
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if fabs(M[i * n + k]) > fabs(M[p * n + k]):
                p = i
        if M[p * n + k] == 0.0:
            return 1
        if p != k:
            for j in range(n):
                tmp = M[k * n + j]; M[k * n + j] = M[p * n + j]; M[p * n + j] = tmp
            for j in range(ncols):
                tmp = B[k * ncols + j]; B[k * ncols + j] = B[p * ncols + j]; B[p * ncols + j] = tmp
        piv = M[k * n + k]
        for i in range(k + 1, n):
            fct = M[i * n + k] / piv
            for j in range(k, n):
                M[i * n + j] -= fct * M[k * n + j]
            for j in range(ncols):
                B[i * ncols + j] -= fct * B[k * ncols + j]
    for k in range(n - 1, -1, -1):
        for j in range(ncols):
            tmp = B[k * ncols + j]
            for i in range(k + 1, n):
                tmp -= M[k * n + i] * B[i * ncols + j]
            B[k * ncols + j] = tmp / M[k * n + k]
    return 0


cdef Model make_model(int family, int coupling, int drift_kind, double rate, double lam0, double lam1,
                      double[::1] params, int n):
    cdef Model m
    cdef int i
    m.family = family
    m.coupling = coupling
    m.drift_kind = drift_kind
    m.n = n
    m.rate = rate
    m.lam0 = lam0
    m.lam1 = lam1
    for i in range(6):
        m.p[i] = params[i] if i < params.shape[0] else 0.0
    return m


cdef void record(Model* m, int k, double t, double* z, bint qr, bint adjoint,
                 double[:, ::1] states, double[:, :, ::1] qs, double[:, ::1] bs, double[:, ::1] logs) noexcept nogil:
    cdef int n = m.n, nn = m.n * m.n, i, j
    cdef double A[MAXN * MAXN]
    cdef double M[MAXN * MAXN]
    for i in range(n):
        states[k, i] = z[i]
    if not qr:
        return
    coeff(m, t, z, adjoint, A)
    qtaq(n, &z[n], A, M)
    for i in range(n):
        for j in range(n):
            qs[k, i, j] = z[n + i * n + j]
        bs[k, i] = M[i * n + i]
        logs[k, i] = z[n + nn + i]


def explicit_run(int family, int coupling, int drift_kind, double rate, double lam0, double lam1,
                 double[::1] params, double[::1] x0, double[:, ::1] q0, double t0, double dt_out,
                 Py_ssize_t nout, double atol, double rtol, double cutoff, bint with_qr, bint adjoint=False):
    cdef int n = x0.shape[0], nn = n * n
    cdef int N = n + nn + n if with_qr else n
    cdef Model m = make_model(family, coupling, drift_kind, rate, lam0, lam1, params, n)
    cdef double z[MAXZ]
    cdef double zn[MAXZ]
    cdef double tmp[MAXZ]
    cdef double k1[MAXZ]
    cdef double k2[MAXZ]
    cdef double k3[MAXZ]
    cdef double k4[MAXZ]
    cdef double k5[MAXZ]
    cdef double k6[MAXZ]
    cdef double k7[MAXZ]
    cdef double rdiag[MAXN]
    cdef int i, j
    cdef Py_ssize_t k
    cdef double t, h, hs, t_target, err, ev, sc, fac, fac_max, defect, max_defect = 0.0
    cdef bint clipped, diverged = False
    cdef long nsteps = 0
    cdef int status = STATUS_OK

    if n > MAXN:
        raise ValueError("state dimension too large for compiled kernel")
    times = t0 + dt_out * np.arange(nout)
    states_a = np.empty((nout, n))
    qs_a = np.empty((nout if with_qr else 1, n, n))
    bs_a = np.empty((nout if with_qr else 1, n))
    logs_a = np.empty((nout if with_qr else 1, n))
    cdef double[::1] tv = times
    cdef double[:, ::1] states = states_a
    cdef double[:, :, ::1] qs = qs_a
    cdef double[:, ::1] bs = bs_a
    cdef double[:, ::1] logs = logs_a

    for i in range(n):
        z[i] = x0[i]
    if with_qr:
        for i in range(n):
            for j in range(n):
                z[n + i * n + j] = q0[i, j]
            z[n + nn + i] = 0.0

    with nogil:
        record(&m, 0, t0, z, with_qr, adjoint, states, qs, bs, logs)
        t = t0
        h = 1e-3 if dt_out > 1e-3 else dt_out
        k = 1
        fac_max = FAC_MAX
        while k < nout:
            t_target = tv[k]
            clipped = t + h >= t_target - 1e-12 * fabs(t_target)
            hs = t_target - t if clipped else h
            if hs < 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                status = STATUS_UNDERFLOW
                break
            deriv(&m, t, z, k1, with_qr, adjoint)
            for i in range(N):
                tmp[i] = z[i] + hs * (A21 * k1[i])
            deriv(&m, t + C2 * hs, tmp, k2, with_qr, adjoint)
            for i in range(N):
                tmp[i] = z[i] + hs * (A31 * k1[i] + A32 * k2[i])
            deriv(&m, t + C3 * hs, tmp, k3, with_qr, adjoint)
            for i in range(N):
                tmp[i] = z[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            deriv(&m, t + C4 * hs, tmp, k4, with_qr, adjoint)
            for i in range(N):
                tmp[i] = z[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            deriv(&m, t + C5 * hs, tmp, k5, with_qr, adjoint)
            for i in range(N):
                tmp[i] = z[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            deriv(&m, t + hs, tmp, k6, with_qr, adjoint)
            for i in range(N):
                zn[i] = z[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
            deriv(&m, t + hs, zn, k7, with_qr, adjoint)
            err = 0.0
            for i in range(N):
                ev = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                sc = atol + rtol * (fabs(z[i]) if fabs(z[i]) > fabs(zn[i]) else fabs(zn[i]))
                err += (ev / sc) * (ev / sc)
            err = sqrt(err / N)
            if not isfinite(err):
                err = 1e10
            if err <= 1.0:
                if err == 0.0:
                    fac = fac_max
                else:
                    fac = SAFETY * err ** -0.2
                    if fac < FAC_MIN:
                        fac = FAC_MIN
                    if fac > fac_max:
                        fac = fac_max
                t = t_target if clipped else t + hs
                for i in range(N):
                    z[i] = zn[i]
                nsteps += 1
                fac_max = FAC_MAX
                for i in range(n):
                    if not isfinite(z[i]) or fabs(z[i]) > cutoff:
                        diverged = True
                if diverged:
                    break
                if with_qr:
                    defect = orth_defect(n, &z[n])
                    if defect > max_defect:
                        max_defect = defect
                    mgs(n, &z[n], rdiag)
                if clipped:
                    record(&m, k, t, z, with_qr, adjoint, states, qs, bs, logs)
                    k += 1
                h = hs * fac
            else:
                fac = SAFETY * err ** -0.2
                h = hs * (fac if fac > FAC_MIN else FAC_MIN)
                fac_max = 1.0

    if status != STATUS_OK:
        return status, t
    return _finish(times, states_a, qs_a, bs_a, logs_a, k, diverged, max_defect, nsteps, with_qr)


def implicit_run(int family, int coupling, int drift_kind, double rate, double lam0, double lam1,
                 double[::1] params, double[::1] x0, double[:, ::1] q0, double t0, double dt_out,
                 Py_ssize_t nout, double dt, long substeps, double newton_tol, int newton_max,
                 double cutoff, bint with_qr, bint adjoint=False):
    cdef int n = x0.shape[0], nn = n * n
    cdef Model m = make_model(family, coupling, drift_kind, rate, lam0, lam1, params, n)
    cdef double z[MAXZ]
    cdef double xo[MAXN]
    cdef double fv[MAXN]
    cdef double g[MAXN]
    cdef double J[MAXN * MAXN]
    cdef double A[MAXN * MAXN]
    cdef double rdiag[MAXN]
    cdef int i, j, it
    cdef Py_ssize_t k
    cdef long s, step
    cdef double t = t0, dmax, xmax
    cdef bint diverged = False, converged
    cdef long nsteps = 0
    cdef int status = STATUS_OK

    if n > MAXN:
        raise ValueError("state dimension too large for compiled kernel")
    times = t0 + dt_out * np.arange(nout)
    states_a = np.empty((nout, n))
    qs_a = np.empty((nout if with_qr else 1, n, n))
    bs_a = np.empty((nout if with_qr else 1, n))
    logs_a = np.empty((nout if with_qr else 1, n))
    cdef double[::1] tv = times
    cdef double[:, ::1] states = states_a
    cdef double[:, :, ::1] qs = qs_a
    cdef double[:, ::1] bs = bs_a
    cdef double[:, ::1] logs = logs_a

    for i in range(n):
        z[i] = x0[i]
    if with_qr:
        for i in range(n):
            for j in range(n):
                z[n + i * n + j] = q0[i, j]
            z[n + nn + i] = 0.0

    with nogil:
        record(&m, 0, t0, z, with_qr, adjoint, states, qs, bs, logs)
        k = 1
        while k < nout:
            for s in range(1, substeps + 1):
                step = (k - 1) * substeps + s
                t = t0 + step * dt
                for i in range(n):
                    xo[i] = z[i]
                converged = False
                for it in range(newton_max):
                    model_fj(&m, t, z, fv, J)
                    for i in range(n):
                        g[i] = z[i] - xo[i] - dt * fv[i]
                        for j in range(n):
                            J[i * n + j] = (1.0 if i == j else 0.0) - dt * J[i * n + j]
                    if solve_small(n, J, g, 1) != 0:
                        break
                    dmax = 0.0
                    xmax = 0.0
                    for i in range(n):
                        z[i] -= g[i]
                        if fabs(g[i]) > dmax:
                            dmax = fabs(g[i])
                        if fabs(z[i]) > xmax:
                            xmax = fabs(z[i])
                    if dmax <= newton_tol * (1.0 + xmax):
                        converged = True
                        break
                if not converged:
                    status = STATUS_NEWTON
                    break
                nsteps += 1
                for i in range(n):
                    if not isfinite(z[i]) or fabs(z[i]) > cutoff:
                        diverged = True
                if diverged:
                    break
                if with_qr:
                    coeff(&m, t, z, adjoint, A)
                    for i in range(n):
                        for j in range(n):
                            A[i * n + j] = (1.0 if i == j else 0.0) - dt * A[i * n + j]
                    if solve_small(n, A, &z[n], n) != 0:
                        status = STATUS_NEWTON
                        break
                    mgs(n, &z[n], rdiag)
                    for i in range(n):
                        z[n + nn + i] += log(rdiag[i])
            if status != STATUS_OK or diverged:
                break
            record(&m, k, tv[k], z, with_qr, adjoint, states, qs, bs, logs)
            k += 1

    if status != STATUS_OK:
        return status, t
    return _finish(times, states_a, qs_a, bs_a, logs_a, k, diverged, 0.0, nsteps, with_qr)


def _finish(times, states, qs, bs, logs, Py_ssize_t k, bint diverged, double max_defect, long nsteps, bint with_qr):
    return (
        times[:k],
        states[:k],
        qs[:k] if with_qr else None,
        bs[:k] if with_qr else None,
        logs[:k] if with_qr else None,
        bool(diverged),
        max_defect,
        int(nsteps),
    )
