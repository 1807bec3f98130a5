# cython: language_level=3
"""Compiled kernels: closed-form CRPS per family, truncated-GEV mean,
empirical-ensemble CRPS and the stationary bootstrap resampler.

Semantics are identical to ``_kernels_py``; see that module for the
definitions of the helper integrals.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, expm1, sqrt, fabs, pow, INFINITY, NAN, isinf
from scipy.special.cython_special cimport gamma, gammainc, expi, ndtr, log_ndtr

cnp.import_array()

cdef double EULER = 0.57721566490153286061
cdef double LN2 = 0.69314718055994530942
cdef double SQRT_PI = 1.77245385090551602730
cdef double HALF_LOG_2PI = 0.91893853320467274178
cdef double XI_ZERO = 1e-8
cdef double XI_INTERP = 1e-4
cdef double Z_SERIES = 1.5
cdef double DEGENERATE_MASS = 1e-12
cdef int N_SERIES = 48


cdef inline double _snap(double xi) noexcept nogil:
    return 0.0 if fabs(xi) < XI_ZERO else xi


cdef double _neglog_gev(double x, double mu, double sigma, double xi) noexcept nogil:
    cdef double z = (x - mu) / sigma
    cdef double t
    if xi == 0.0:
        return exp(-z)
    t = xi * z
    if 1.0 + t <= 0.0:
        return INFINITY if xi > 0.0 else 0.0
    return exp(-log1p(t) / xi)


cdef inline double _h(double s, double xi) noexcept nogil:
    if xi == 0.0:
        return -log(s)
    return expm1(-xi * log(s)) / xi


cdef double _h1_series(double z, double xi) noexcept nogil:
    cdef double hz, total = 0.0, term = z, k
    cdef int n
    if z <= 0.0:
        return 0.0
    hz = _h(z, xi)
    for n in range(N_SERIES):
        k = n + 1.0
        total += term * (k * hz + 1.0) / (k * (k - xi))
        term *= -z / k
    return total


cdef double _h2_series(double y0, double xi) noexcept nogil:
    cdef double hz, e0, total = 0.0, term = y0, pow2 = 1.0, k, weight
    cdef int n
    if y0 <= 0.0:
        return 0.0
    hz = _h(y0, xi)
    e0 = exp(-y0)
    for n in range(N_SERIES):
        k = n + 1.0
        weight = -expm1(-y0) if n == 0 else pow2 - e0
        total += term * weight * (k * hz + 1.0) / (k * (k - xi))
        term *= -y0 / k
        pow2 *= 2.0
    return total


cdef double _h1_closed(double z, double xi) noexcept nogil:
    cdef double a
    if xi == 0.0:
        if isinf(z):
            return EULER
        return EULER + exp(-z) * log(z) - expi(-z)
    a = 1.0 - xi
    if isinf(z):
        return (gamma(a) - 1.0) / xi
    return (gamma(a) * gammainc(a, z) + expm1(-z)) / xi


cdef double _h2_closed(double y0, double xi) noexcept nogil:
    cdef double a, e1, first
    if xi == 0.0:
        if isinf(y0):
            return 0.5 * (EULER + LN2)
        e1 = exp(-y0)
        return (EULER * (0.5 - e1) + 0.5 * LN2 - 0.5 * e1 * e1 * log(y0)
                - 0.5 * expi(-2.0 * y0) + e1 * expi(-y0))
    a = 1.0 - xi
    if isinf(y0):
        return (pow(2.0, xi - 1.0) * gamma(a) - 0.5) / xi
    e1 = exp(-y0)
    first = (pow(2.0, xi - 1.0) * gamma(a) * gammainc(a, 2.0 * y0) + 0.5 * expm1(-2.0 * y0)) / xi
    return first - e1 * _h1_closed(y0, xi)


cdef double _h1(double z, double xi) noexcept nogil:
    cdef double d = XI_INTERP, f0, fp, fm
    if z <= Z_SERIES:
        return _h1_series(z, xi)
    if xi == 0.0 or fabs(xi) >= XI_INTERP:
        return _h1_closed(z, xi)
    f0 = _h1_closed(z, 0.0)
    fp = _h1_closed(z, d)
    fm = _h1_closed(z, -d)
    return f0 + xi * (fp - fm) / (2 * d) + xi * xi * (fp - 2 * f0 + fm) / (2 * d * d)


cdef double _h2(double y0, double xi) noexcept nogil:
    cdef double d = XI_INTERP, f0, fp, fm
    if y0 <= Z_SERIES:
        return _h2_series(y0, xi)
    if xi == 0.0 or fabs(xi) >= XI_INTERP:
        return _h2_closed(y0, xi)
    f0 = _h2_closed(y0, 0.0)
    fp = _h2_closed(y0, d)
    fm = _h2_closed(y0, -d)
    return f0 + xi * (fp - fm) / (2 * d) + xi * xi * (fp - 2 * f0 + fm) / (2 * d * d)


cdef double _crps_tgev(double mu, double sigma, double xi, double x) noexcept nogil:
    cdef double y0, mass, xc, yx, g0x
    xi = _snap(xi)
    y0 = _neglog_gev(0.0, mu, sigma, xi)
    mass = -expm1(-y0)
    if mass <= DEGENERATE_MASS:
        return fabs(x)
    xc = x if x > 0.0 else 0.0
    yx = _neglog_gev(xc, mu, sigma, xi)
    if yx > y0:
        yx = y0
    if isinf(yx):
        g0x = 0.0
    else:
        g0x = exp(-yx) * -expm1(yx - y0) / mass
    return ((xc - mu) * (2.0 * g0x - 1.0)
            + 2.0 * sigma * (_h1(yx, xi) / mass - _h2(y0, xi) / (mass * mass))
            + (xc - x))


cdef double _tgev_mean(double mu, double sigma, double xi) noexcept nogil:
    cdef double y0, mass
    xi = _snap(xi)
    if xi >= 1.0:
        return INFINITY
    y0 = _neglog_gev(0.0, mu, sigma, xi)
    mass = -expm1(-y0)
    if mass <= DEGENERATE_MASS:
        return 0.0
    if xi > 0.0 and xi * mu - sigma > 0.0:
        return mu + sigma * _h1(INFINITY, xi)
    return mu + sigma * _h1(y0, xi) / mass


cdef double _crps_gev(double mu, double sigma, double xi, double x) noexcept nogil:
    cdef double d = XI_INTERP, f0, fp, fm
    xi = _snap(xi)
    if xi >= 1.0:
        return NAN
    if xi == 0.0 or fabs(xi) >= XI_INTERP:
        return _crps_gev_closed(mu, sigma, xi, x)
    f0 = _crps_gev_closed(mu, sigma, 0.0, x)
    fp = _crps_gev_closed(mu, sigma, d, x)
    fm = _crps_gev_closed(mu, sigma, -d, x)
    return f0 + xi * (fp - fm) / (2 * d) + xi * xi * (fp - 2 * f0 + fm) / (2 * d * d)


cdef double _crps_gev_closed(double mu, double sigma, double xi, double x) noexcept nogil:
    cdef double y, g, a, gam, low
    y = _neglog_gev(x, mu, sigma, xi)
    g = exp(-y)
    if xi == 0.0:
        if isinf(y):
            return mu - x + sigma * (EULER - LN2)
        if y < 1e-300:
            return x - mu - sigma * (EULER + LN2)
        return mu - x + sigma * (EULER - LN2) - 2.0 * sigma * expi(-y)
    a = 1.0 - xi
    gam = gamma(a)
    low = gam if isinf(y) else gam * gammainc(a, y)
    return (mu - x - sigma / xi) * (1.0 - 2.0 * g) - sigma / xi * (pow(2.0, xi) * gam - 2.0 * low)


cdef double _crps_tn(double mu, double sigma, double x) noexcept nogil:
    cdef double xc = x if x > 0.0 else 0.0
    cdef double s = mu / sigma
    cdef double z = (xc - mu) / sigma
    cdef double lp = log_ndtr(s)
    cdef double r1 = exp(log_ndtr(-z) - lp)
    cdef double r2 = exp(-0.5 * z * z - HALF_LOG_2PI - lp)
    cdef double r3 = exp(log_ndtr(sqrt(2.0) * s) - 2.0 * lp)
    return sigma * (z * (1.0 - 2.0 * r1) + 2.0 * r2 - r3 / SQRT_PI) + (xc - x)


cdef double _crps_ln(double mu, double sigma, double x) noexcept nogil:
    cdef double xc = x if x > 0.0 else 0.0
    cdef double m = exp(mu + 0.5 * sigma * sigma)
    cdef double w
    cdef double tail = ndtr(-sigma / sqrt(2.0))
    if xc == 0.0:
        return 2.0 * m * tail + (xc - x)
    w = (log(xc) - mu) / sigma
    return xc * (2.0 * ndtr(w) - 1.0) - 2.0 * m * (ndtr(w - sigma) - tail) + (xc - x)


ctypedef double (*family3)(double, double, double) noexcept nogil
ctypedef double (*family4)(double, double, double, double) noexcept nogil


cdef _apply3(family3 f, a, b, c):
    a, b, c = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64),
                                  np.asarray(c, dtype=np.float64))
    cdef const double[::1] av = np.ascontiguousarray(a).ravel()
    cdef const double[::1] bv = np.ascontiguousarray(b).ravel()
    cdef const double[::1] cv = np.ascontiguousarray(c).ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = f(av[i], bv[i], cv[i])
    return out


cdef _apply4(family4 f, a, b, c, d):
    a, b, c, d = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64),
                                     np.asarray(c, dtype=np.float64), np.asarray(d, dtype=np.float64))
    cdef const double[::1] av = np.ascontiguousarray(a).ravel()
    cdef const double[::1] bv = np.ascontiguousarray(b).ravel()
    cdef const double[::1] cv = np.ascontiguousarray(c).ravel()
    cdef const double[::1] dv = np.ascontiguousarray(d).ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = f(av[i], bv[i], cv[i], dv[i])
    return out


cdef double _h1_snap(double z, double xi) noexcept nogil:
    return _h1(z, _snap(xi))


cdef double _h2_snap(double y0, double xi) noexcept nogil:
    return _h2(y0, _snap(xi))


cdef double _neglog_snap(double x, double mu, double sigma, double xi) noexcept nogil:
    return _neglog_gev(x, mu, sigma, _snap(xi))


cdef double _h_snap(double s, double xi) noexcept nogil:
    return _h(s, _snap(xi))


cdef double _mean2(double a, double b, double c) noexcept nogil:
    return _tgev_mean(a, b, c)


def crps_tgev(mu, sigma, xi, x):
    return _apply4(_crps_tgev, mu, sigma, xi, x)


def crps_gev(mu, sigma, xi, x):
    return _apply4(_crps_gev, mu, sigma, xi, x)


def crps_tn(mu, sigma, x):
    return _apply3(_crps_tn, mu, sigma, x)


def crps_ln(mu, sigma, x):
    return _apply3(_crps_ln, mu, sigma, x)


def tgev_mean(mu, sigma, xi):
    return _apply3(_mean2, mu, sigma, xi)


def neglog_gev_cdf(x, mu, sigma, xi):
    return _apply4(_neglog_snap, x, mu, sigma, xi)


def tgev_h1(z, xi):
    return _apply3(_h1_pair, z, xi, 0.0)


def tgev_h2(y0, xi):
    return _apply3(_h2_pair, y0, xi, 0.0)


def shape_h(s, xi):
    return _apply3(_h_pair, s, xi, 0.0)


cdef double _h1_pair(double z, double xi, double unused) noexcept nogil:
    return _h1_snap(z, xi)


cdef double _h2_pair(double y0, double xi, double unused) noexcept nogil:
    return _h2_snap(y0, xi)


cdef double _h_pair(double s, double xi, double unused) noexcept nogil:
    return _h_snap(s, xi)


def crps_ensemble(members, x):
    """Empirical-distribution CRPS; ``members`` has shape (n_cases, n_members)."""
    cdef const double[:, ::1] f = np.ascontiguousarray(np.sort(np.asarray(members, dtype=np.float64), axis=1))
    cdef const double[::1] xv = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    cdef Py_ssize_t n = f.shape[0], m = f.shape[1], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double s1, s2, mm = <double>(m * m)
    with nogil:
        for i in range(n):
            s1 = 0.0
            s2 = 0.0
            for j in range(m):
                s1 += fabs(f[i, j] - xv[i])
                s2 += f[i, j] * (2.0 * (j + 1) - m - 1.0)
            ov[i] = s1 / m - s2 / mm
    return out


def mean_abs_difference(members):
    """``(1/M^2) sum_ij |f_i - f_j|`` per row."""
    cdef const double[:, ::1] f = np.ascontiguousarray(np.sort(np.asarray(members, dtype=np.float64), axis=1))
    cdef Py_ssize_t n = f.shape[0], m = f.shape[1], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double s2, mm = <double>(m * m)
    with nogil:
        for i in range(n):
            s2 = 0.0
            for j in range(m):
                s2 += f[i, j] * (2.0 * (j + 1) - m - 1.0)
            ov[i] = 2.0 * s2 / mm
    return out


def stationary_bootstrap_means(data, new_block, starts):
    """Replicate means of a stationary bootstrap; see the numpy fallback."""
    cdef const double[:, ::1] d = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    cdef const cnp.uint8_t[:, ::1] nb = np.ascontiguousarray(np.asarray(new_block, dtype=np.uint8))
    cdef const cnp.int64_t[:, ::1] st = np.ascontiguousarray(np.asarray(starts, dtype=np.int64))
    cdef Py_ssize_t n = d.shape[0], k = d.shape[1], reps = nb.shape[0]
    cdef Py_ssize_t r, t, c, pos
    out = np.zeros((reps, k), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for r in range(reps):
            pos = st[r, 0]
            for t in range(n):
                if t > 0:
                    if nb[r, t]:
                        pos = st[r, t]
                    else:
                        pos = pos + 1
                        if pos == n:
                            pos = 0
                for c in range(k):
                    ov[r, c] += d[pos, c]
            for c in range(k):
                ov[r, c] /= n
    return out
