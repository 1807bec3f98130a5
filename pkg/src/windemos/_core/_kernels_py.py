"""Pure numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``WINDEMOS_PURE_PYTHON=1`` is set.

All functions take 1-d float64 arrays of equal length (parameters broadcast
per case) and return a new float64 array.
"""
import numpy as np
from scipy import special as sc

EULER = float(np.euler_gamma)
LN2 = float(np.log(2.0))
SQRT_PI = float(np.sqrt(np.pi))
HALF_LOG_2PI = 0.5 * float(np.log(2.0 * np.pi))

#: |shape| below this is treated as exactly zero (Gumbel branch).
XI_ZERO = 1e-8
#: Shapes with XI_ZERO <= |shape| < XI_INTERP use quadratic interpolation in the shape.
XI_INTERP = 1e-4
#: Arguments at or below this use the cancellation-free power series.
Z_SERIES = 1.5
#: 1 - G(0) at or below this is a degenerate truncated law (all mass at zero).
DEGENERATE_MASS = 1e-12
N_SERIES = 48


def _arr(*xs):
    out = np.broadcast_arrays(*[np.asarray(x, dtype=float) for x in xs])
    return [np.array(o, dtype=float, ndmin=1) for o in out]


def snap_shape(xi):
    xi = np.asarray(xi, dtype=float)
    return np.where(np.abs(xi) < XI_ZERO, 0.0, xi)


def neglog_gev_cdf(x, mu, sigma, xi):
    """Return ``-log G(x)`` of the GEV law, in ``[0, inf]``."""
    x, mu, sigma, xi = _arr(x, mu, sigma, xi)
    xi = snap_shape(xi)
    z = (x - mu) / sigma
    out = np.empty_like(z)
    gum = xi == 0.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out[gum] = np.exp(-z[gum])
        ng = ~gum
        t = xi[ng] * z[ng]
        val = np.exp(-np.log1p(t) / xi[ng])
        val = np.where(1.0 + t > 0.0, val, np.where(xi[ng] > 0.0, np.inf, 0.0))
        out[ng] = val
    return out


def shape_h(s, xi):
    """``(s**-xi - 1) / xi``, with the ``-log s`` limit at zero shape."""
    s, xi = _arr(s, xi)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ls = np.log(s)
        safe = np.where(xi == 0.0, 1.0, xi)
        out = np.where(xi == 0.0, -ls, np.expm1(-xi * ls) / safe)
    return out


def _h1_series(z, xi):
    hz = shape_h(z, xi)
    total = np.zeros_like(z)
    term = z.copy()
    for n in range(N_SERIES):
        k = n + 1.0
        total += term * (k * hz + 1.0) / (k * (k - xi))
        term *= -z / k
    return np.where(z > 0.0, total, 0.0)


def _h2_series(y0, xi):
    hz = shape_h(y0, xi)
    e0 = np.exp(-y0)
    total = np.zeros_like(y0)
    term = y0.copy()
    pow2 = 1.0
    for n in range(N_SERIES):
        k = n + 1.0
        weight = -np.expm1(-y0) if n == 0 else pow2 - e0
        total += term * weight * (k * hz + 1.0) / (k * (k - xi))
        term *= -y0 / k
        pow2 *= 2.0
    return np.where(y0 > 0.0, total, 0.0)


def _h1_closed(z, xi):
    """Incomplete-gamma / exponential-integral form; ``xi`` is a scalar."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if xi == 0.0:
            fin = EULER + np.exp(-z) * np.log(z) - sc.expi(-z)
            return np.where(np.isinf(z), EULER, fin)
        a = 1.0 - xi
        g = sc.gamma(a)
        return (g * sc.gammainc(a, z) + np.expm1(-z)) / xi


def _h2_closed(y0, xi):
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        e1 = np.exp(-y0)
        if xi == 0.0:
            fin = (EULER * (0.5 - e1) + 0.5 * LN2 - 0.5 * e1 * e1 * np.log(y0)
                   - 0.5 * sc.expi(-2.0 * y0) + e1 * sc.expi(-y0))
            return np.where(np.isinf(y0), 0.5 * (EULER + LN2), fin)
        a = 1.0 - xi
        g = sc.gamma(a)
        first = (2.0 ** (xi - 1.0) * g * sc.gammainc(a, 2.0 * y0) + 0.5 * np.expm1(-2.0 * y0)) / xi
        return first - np.where(np.isinf(y0), 0.0, e1 * _h1_closed(y0, xi))


def _closed_with_interp(closed, z, xi):
    out = np.empty_like(z)
    for val in np.unique(xi):
        m = xi == val
        zz = z[m]
        if val == 0.0 or abs(val) >= XI_INTERP:
            out[m] = closed(zz, val)
        else:
            d = XI_INTERP
            f0, fp, fm = closed(zz, 0.0), closed(zz, d), closed(zz, -d)
            out[m] = f0 + val * (fp - fm) / (2 * d) + val * val * (fp - 2 * f0 + fm) / (2 * d * d)
    return out


def tgev_h1(z, xi):
    """``int_0^z h(s) exp(-s) ds`` with ``h`` from :func:`shape_h`; ``z`` may be inf."""
    z, xi = _arr(z, xi)
    xi = snap_shape(xi)
    out = np.empty_like(z)
    ser = z <= Z_SERIES
    out[ser] = _h1_series(z[ser], xi[ser])
    out[~ser] = _closed_with_interp(_h1_closed, z[~ser], xi[~ser])
    return out


def tgev_h2(y0, xi):
    """``int_0^y0 h(s) exp(-s) (exp(-s) - exp(-y0)) ds``; ``y0`` may be inf."""
    y0, xi = _arr(y0, xi)
    xi = snap_shape(xi)
    out = np.empty_like(y0)
    ser = y0 <= Z_SERIES
    out[ser] = _h2_series(y0[ser], xi[ser])
    out[~ser] = _closed_with_interp(_h2_closed, y0[~ser], xi[~ser])
    return out


def crps_tgev(mu, sigma, xi, x):
    mu, sigma, xi, x = _arr(mu, sigma, xi, x)
    xi = snap_shape(xi)
    y0 = neglog_gev_cdf(0.0, mu, sigma, xi)
    mass = -np.expm1(-y0)
    degenerate = mass <= DEGENERATE_MASS
    mass = np.where(degenerate, 1.0, mass)
    xc = np.maximum(x, 0.0)
    yx = np.minimum(neglog_gev_cdf(xc, mu, sigma, xi), y0)
    with np.errstate(invalid="ignore"):
        g0x = np.where(np.isinf(yx), 0.0, np.exp(-yx) * -np.expm1(yx - y0) / mass)
    crps = ((xc - mu) * (2.0 * g0x - 1.0)
            + 2.0 * sigma * (tgev_h1(yx, xi) / mass - tgev_h2(y0, xi) / (mass * mass))
            + np.maximum(-x, 0.0))
    return np.where(degenerate, np.abs(x), crps)


def tgev_mean(mu, sigma, xi):
    mu, sigma, xi = _arr(mu, sigma, xi)
    xi = snap_shape(xi)
    y0 = neglog_gev_cdf(0.0, mu, sigma, xi)
    mass = -np.expm1(-y0)
    degenerate = mass <= DEGENERATE_MASS
    untruncated = (xi > 0.0) & (xi * mu - sigma > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        full = mu + sigma * tgev_h1(np.full_like(mu, np.inf), xi)
        trunc = mu + sigma * tgev_h1(y0, xi) / np.where(degenerate, 1.0, mass)
    out = np.where(untruncated, full, trunc)
    out = np.where(degenerate, 0.0, out)
    return np.where(xi < 1.0, out, np.inf)


def _crps_gev_closed(mu, sigma, xi, x):
    """Closed form for one scalar (already snapped) shape ``xi``."""
    y = neglog_gev_cdf(x, mu, sigma, xi)
    g = np.exp(-y)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if xi == 0.0:
            ei = np.where(np.isinf(y), 0.0, sc.expi(-np.maximum(y, 1e-300)))
            val = mu - x + sigma * (EULER - LN2) - 2.0 * sigma * ei
            return np.where(y < 1e-300, x - mu - sigma * (EULER + LN2), val)
        a = 1.0 - xi
        gam = sc.gamma(a)
        low = gam * np.where(np.isinf(y), 1.0, sc.gammainc(a, np.where(np.isinf(y), 1.0, y)))
        return (mu - x - sigma / xi) * (1.0 - 2.0 * g) - sigma / xi * (2.0 ** xi * gam - 2.0 * low)


def crps_gev(mu, sigma, xi, x):
    mu, sigma, xi, x = _arr(mu, sigma, xi, x)
    xi = snap_shape(xi)
    out = np.full_like(x, np.nan)
    for val in np.unique(xi[xi < 1.0]):
        m = xi == val
        args = (mu[m], sigma[m])
        if val == 0.0 or abs(val) >= XI_INTERP:
            out[m] = _crps_gev_closed(*args, val, x[m])
        else:
            d = XI_INTERP
            f0 = _crps_gev_closed(*args, 0.0, x[m])
            fp = _crps_gev_closed(*args, d, x[m])
            fm = _crps_gev_closed(*args, -d, x[m])
            out[m] = f0 + val * (fp - fm) / (2 * d) + val * val * (fp - 2 * f0 + fm) / (2 * d * d)
    return out


def crps_tn(mu, sigma, x):
    mu, sigma, x = _arr(mu, sigma, x)
    xc = np.maximum(x, 0.0)
    s = mu / sigma
    z = (xc - mu) / sigma
    lp = sc.log_ndtr(s)
    r1 = np.exp(sc.log_ndtr(-z) - lp)
    r2 = np.exp(-0.5 * z * z - HALF_LOG_2PI - lp)
    r3 = np.exp(sc.log_ndtr(np.sqrt(2.0) * s) - 2.0 * lp)
    return sigma * (z * (1.0 - 2.0 * r1) + 2.0 * r2 - r3 / SQRT_PI) + np.maximum(-x, 0.0)


def crps_ln(mu, sigma, x):
    mu, sigma, x = _arr(mu, sigma, x)
    xc = np.maximum(x, 0.0)
    with np.errstate(divide="ignore"):
        w = (np.log(xc) - mu) / sigma
    m = np.exp(mu + 0.5 * sigma * sigma)
    crps = xc * (2.0 * sc.ndtr(w) - 1.0) - 2.0 * m * (sc.ndtr(w - sigma) - sc.ndtr(-sigma / np.sqrt(2.0)))
    return crps + np.maximum(-x, 0.0)


def crps_ensemble(members, x):
    """Empirical-distribution CRPS; ``members`` has shape (n_cases, n_members)."""
    f = np.sort(np.asarray(members, dtype=float), axis=1)
    x = np.asarray(x, dtype=float)
    m = f.shape[1]
    w = 2.0 * np.arange(1, m + 1) - m - 1.0
    return np.abs(f - x[:, None]).mean(axis=1) - (f @ w) / (m * m)


def mean_abs_difference(members):
    """``(1/M^2) sum_ij |f_i - f_j|`` per row."""
    f = np.sort(np.asarray(members, dtype=float), axis=1)
    m = f.shape[1]
    w = 2.0 * np.arange(1, m + 1) - m - 1.0
    return 2.0 * (f @ w) / (m * m)


def stationary_bootstrap_means(data, new_block, starts):
    """Replicate means of a stationary bootstrap.

    ``data`` is (n, k); ``new_block`` (R, n) bool says where a block restarts
    (column 0 is always a restart); ``starts`` (R, n) int gives the restart
    positions. Returns an (R, k) array of column means.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    reps = new_block.shape[0]
    t = np.arange(n)
    nb = new_block.copy()
    nb[:, 0] = True
    last = np.maximum.accumulate(np.where(nb, t, 0), axis=1)
    idx = (np.take_along_axis(starts, last, axis=1) + (t - last)) % n
    return data[idx.ravel()].reshape(reps, n, -1).mean(axis=1)
