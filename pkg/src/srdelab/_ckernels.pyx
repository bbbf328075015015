# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; signatures mirror ``_pykernels``."""

from libc.math cimport fabs, pow, sqrt, copysign, isfinite, isnan

import numpy as np

cdef enum:
    C_DRIFT_POWER = 0
    C_DIFF_ADDITIVE = 1
    C_EXIT_RADIUS = 1
    C_EXIT_NONFINITE = 2


# Powers with exponent k or k + 1/2 (0 <= k <= 8) are evaluated by repeated
# multiplication and sqrt, a few ulp from pow and several times faster.
cdef struct Plan:
    double p
    int k
    bint half


cdef Plan _plan(double p):
    cdef Plan q
    q.p = p
    q.k = -1
    q.half = False
    if 0.0 <= p <= 8.5 and 2.0 * p == <double>(<int>(2.0 * p)):
        q.k = <int>p
        q.half = p != q.k
    return q


cdef inline double _pw(double a, Plan q) nogil:
    cdef double r
    cdef int i
    if q.k < 0:
        return pow(a, q.p)
    r = sqrt(a) if q.half else 1.0
    for i in range(q.k):
        r = r * a
    return r


cdef inline double _inv_root(double x, int m, double e) nogil:
    # x^(-1/m)
    if m == 1:
        return 1.0 / x
    if m == 2:
        return 1.0 / sqrt(x)
    if m == 4:
        return 1.0 / sqrt(sqrt(x))
    return pow(x, e)


cdef inline double _flow(double u, Plan bm1, int m, double c, double e) nogil:
    cdef double a = fabs(u)
    if a <= 1.0:
        return u * _inv_root(1.0 + c * _pw(a, bm1), m, e)
    if bm1.k >= 0:
        return copysign(_inv_root(1.0 / _pw(a, bm1) + c, m, e), u)
    return copysign(pow(pow(a, -bm1.p) + c, e), u)


def drift_flow(u, double beta, double k1, double dt):
    cdef double[::1] flat = u.reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef double c = k1 * (beta - 1.0) * dt
    cdef double e = -1.0 / (beta - 1.0)
    cdef Plan bm1 = _plan(beta - 1.0)
    cdef int m = <int>(beta - 1.0) if bm1.k >= 0 and not bm1.half else 0
    with nogil:
        for i in range(n):
            flat[i] = _flow(flat[i], bm1, m, c, e)
    return u


def noise_term(v, dw, out, double gamma, double k2, int diffusion_kind):
    cdef double[::1] vv = v.reshape(-1)
    cdef double[::1] ww = dw.reshape(-1)
    cdef double[::1] oo = out.reshape(-1)
    cdef Py_ssize_t i, n = vv.shape[0]
    cdef Plan g = _plan(gamma)
    with nogil:
        if diffusion_kind == C_DIFF_ADDITIVE:
            for i in range(n):
                oo[i] = k2 * ww[i]
        else:
            for i in range(n):
                oo[i] = k2 * (1.0 + _pw(fabs(vv[i]), g)) * ww[i]
    return out


def tamed_bracket(u, dw, out, double beta, double k1, double gamma, double k2,
                  double dt, int drift_kind, int diffusion_kind):
    cdef double[::1] uu = u.reshape(-1)
    cdef double[::1] ww = dw.reshape(-1)
    cdef double[::1] oo = out.reshape(-1)
    cdef Py_ssize_t i, n = uu.shape[0]
    cdef double f, g, x
    cdef Plan gp = _plan(gamma)
    cdef Plan bp = _plan(beta - 1.0)
    with nogil:
        for i in range(n):
            x = uu[i]
            if diffusion_kind == C_DIFF_ADDITIVE:
                g = k2 * ww[i]
            else:
                g = k2 * (1.0 + _pw(fabs(x), gp)) * ww[i]
            if drift_kind == C_DRIFT_POWER:
                f = -k1 * _pw(fabs(x), bp) * x
                g = g + dt * f / (1.0 + dt * fabs(f))
            oo[i] = g + x
    return out


cdef inline double _level(double c0, long k) nogil:
    return c0 * pow(3.0, <double>k)


def ladder_scan(values, times, double c0, bint started, long n, double prev):
    cdef double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] tt = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t i, m = vv.shape[0]
    cdef long k
    cdef double s, t
    out = []
    for i in range(m):
        s = vv[i]
        t = tt[i]
        if not isfinite(s):
            break
        if not started:
            if isnan(prev):
                k = 1
                while _level(c0, k) < s:
                    k += 1
                if _level(c0, k) == s:
                    started = True
                    n = k
                    out.append((t, 1, k))
            elif s > prev:
                k = 1
                while _level(c0, k) <= prev:
                    k += 1
                if _level(c0, k) <= s:
                    started = True
                    n = k
                    out.append((t, 1, k))
            elif s < prev:
                k = 1
                while _level(c0, k + 1) < prev:
                    k += 1
                if s <= _level(c0, k) and _level(c0, k) < prev:
                    started = True
                    n = k
                    out.append((t, -1, k))
        if started:
            while True:
                if s >= _level(c0, n + 1):
                    n += 1
                    out.append((t, 1, n))
                elif n >= 2 and s <= _level(c0, n - 1):
                    n -= 1
                    out.append((t, -1, n))
                else:
                    break
        prev = s
    return bool(started), n, prev, out


def sde_advance(double[:, ::1] x, const double[:, :, ::1] dB, unsigned char[::1] active,
                long long[::1] exit_step, signed char[::1] reason, long long step0,
                double beta, double gamma, double drift_c, double noise_c,
                double dt, double radius, bint tamed, double[:, :, ::1] path):
    cdef Py_ssize_t B = x.shape[0], d = x.shape[1], n_steps = dB.shape[1]
    cdef Py_ssize_t b, i, j
    cdef bint record = path.shape[1] > 0
    cdef double norm, fc, scale, g, nsq, xv
    cdef double r2 = radius * radius
    cdef Plan bp = _plan(beta - 1.0)
    cdef Plan gp = _plan(gamma)
    with nogil:
        for b in range(B):
            if not active[b]:
                continue
            for i in range(n_steps):
                nsq = 0.0
                for j in range(d):
                    nsq = nsq + x[b, j] * x[b, j]
                norm = sqrt(nsq)
                if norm > 0.0:
                    fc = -drift_c * _pw(norm, bp)
                else:
                    fc = 0.0
                if tamed:
                    scale = dt / (1.0 + dt * fabs(fc) * norm)
                else:
                    scale = dt
                g = noise_c * _pw(1.0 + norm, gp)
                nsq = 0.0
                for j in range(d):
                    xv = x[b, j] + (scale * fc) * x[b, j] + g * dB[b, i, j]
                    x[b, j] = xv
                    nsq = nsq + xv * xv
                    if record:
                        path[b, i, j] = xv
                if not isfinite(nsq):
                    active[b] = 0
                    reason[b] = C_EXIT_NONFINITE
                    exit_step[b] = step0 + i + 1
                    break
                if nsq > r2:
                    active[b] = 0
                    reason[b] = C_EXIT_RADIUS
                    exit_step[b] = step0 + i + 1
                    break
