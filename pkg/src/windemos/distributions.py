"""Predictive laws for wind speed: truncated normal, log-normal, GEV and
GEV truncated from below at zero, plus an empirical ensemble.

Parameter fields may be scalars or equal-shaped arrays; every method then
evaluates elementwise (one law per case), which is how calibrated forecasts
for many cases are carried around.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from . import _core
from .errors import DegenerateDistributionError, DomainError

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
#: Probability mass that must remain above zero for a truncated GEV law.
MIN_TRUNCATED_MASS = 1e-12


def _num(x):
    a = np.asarray(x, dtype=float)
    return a.item() if a.ndim == 0 else a


def _ret(x):
    return x.item() if np.ndim(x) == 0 else x


def _check_prob(y, allow_one=False):
    y = np.asarray(y, dtype=float)
    ok = (y > 0) & ((y <= 1) if allow_one else (y < 1))
    if np.any(~ok):
        raise DomainError("probability level must lie in ]0, 1[")
    return y


def _check_scale(sigma):
    s = np.asarray(sigma, dtype=float)
    if np.any(~(s > 0)) or np.any(~np.isfinite(s)):
        raise DomainError("scale must be positive and finite")


class _Law:
    """Shared helpers; subclasses implement cdf/pdf/logpdf/quantile/mean."""

    family = ""

    def median(self):
        return self.quantile(0.5)

    def sample(self, n, seed=None):
        return sample(self, seed, n)

    def interval(self, alpha):
        """Central ``(1 - alpha)`` prediction interval."""
        if not 0 < alpha < 1:
            raise DomainError("alpha must lie in ]0, 1[")
        return self.quantile(alpha / 2), self.quantile(1 - alpha / 2)


@dataclass(frozen=True)
class TruncNormalParams(_Law):
    """Normal law with location ``mu`` and scale ``sigma`` truncated from below at 0."""

    mu: float
    sigma: float
    family = "tn"

    def __post_init__(self):
        object.__setattr__(self, "mu", _num(self.mu))
        object.__setattr__(self, "sigma", _num(self.sigma))
        _check_scale(self.sigma)

    @property
    def _s(self):
        return np.asarray(self.mu) / np.asarray(self.sigma)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mu) / self.sigma
        val = -0.5 * z * z - HALF_LOG_2PI - np.log(self.sigma) - sc.log_ndtr(self._s)
        return _ret(np.where(x >= 0, val, -np.inf))

    def pdf(self, x):
        return _ret(np.exp(self.logpdf(x)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, 0.0)
        z = (xc - self.mu) / self.sigma
        s = self._s
        lower = (sc.ndtr(z) - sc.ndtr(-s)) / sc.ndtr(s)
        upper = -np.expm1(sc.log_ndtr(-z) - sc.log_ndtr(s))
        val = np.where(z < 0, lower, upper)
        return _ret(np.clip(np.where(x >= 0, val, 0.0), 0.0, 1.0))

    def quantile(self, y):
        y = _check_prob(y)
        s = self._s
        p = sc.ndtr(s)
        lo = sc.ndtri(sc.ndtr(-s) + y * p)
        hi = -sc.ndtri((1.0 - y) * p)
        z = np.where(sc.ndtr(-s) + y * p < 0.5, lo, hi)
        return _ret(np.maximum(self.mu + self.sigma * z, 0.0))

    def mean(self):
        s = self._s
        return _ret(self.mu + self.sigma * np.exp(-0.5 * s * s - HALF_LOG_2PI - sc.log_ndtr(s)))

    def support(self):
        return 0.0, np.inf

    def scalar_cdf(self):
        mu, sigma = float(self.mu), float(self.sigma)
        lp = float(sc.log_ndtr(mu / sigma))

        def cdf(x):
            if x < 0:
                return 0.0
            return -math.expm1(float(sc.log_ndtr((mu - x) / sigma)) - lp)
        return cdf


@dataclass(frozen=True)
class LogNormalParams(_Law):
    """Log-normal law; ``mu`` and ``sigma`` are the log-scale location and scale."""

    mu: float
    sigma: float
    family = "ln"

    def __post_init__(self):
        object.__setattr__(self, "mu", _num(self.mu))
        object.__setattr__(self, "sigma", _num(self.sigma))
        _check_scale(self.sigma)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(np.where(x > 0, x, 1.0))
            z = (lx - self.mu) / self.sigma
            val = -0.5 * z * z - HALF_LOG_2PI - np.log(self.sigma) - lx
        return _ret(np.where(x > 0, val, -np.inf))

    def pdf(self, x):
        return _ret(np.exp(self.logpdf(x)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.mu) / self.sigma
        return _ret(sc.ndtr(z))

    def quantile(self, y):
        y = _check_prob(y)
        return _ret(np.exp(self.mu + self.sigma * sc.ndtri(y)))

    def mean_var(self):
        s2 = np.asarray(self.sigma) ** 2
        m = np.exp(self.mu + 0.5 * s2)
        v = np.exp(2 * np.asarray(self.mu) + s2) * np.expm1(s2)
        return _ret(m), _ret(v)

    def mean(self):
        return self.mean_var()[0]

    def support(self):
        return 0.0, np.inf

    def scalar_cdf(self):
        mu, sigma = float(self.mu), float(self.sigma)
        return lambda x: float(sc.ndtr((math.log(x) - mu) / sigma)) if x > 0 else 0.0


def ln_params_from_moments(m, v):
    """Log-normal parameters with mean ``m`` and variance ``v``."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(~(m > 0)) or np.any(~(v > 0)):
        raise DomainError("log-normal moments must be positive")
    r = v / (m * m)
    sigma = np.sqrt(np.log1p(r))
    mu = np.log(m) - 0.5 * np.log1p(r)
    return LogNormalParams(mu, sigma)


@dataclass(frozen=True)
class GevParams(_Law):
    """Generalized extreme value law with location, scale and shape ``xi``."""

    mu: float
    sigma: float
    xi: float
    family = "gev"

    def __post_init__(self):
        for name in ("mu", "sigma", "xi"):
            object.__setattr__(self, name, _num(getattr(self, name)))
        _check_scale(self.sigma)

    def _neglog(self, x):
        return _core.neglog_gev_cdf(*np.broadcast_arrays(
            np.ravel(np.asarray(x, dtype=float)), np.ravel(self.mu), np.ravel(self.sigma), np.ravel(self.xi)
        )).reshape(np.broadcast_shapes(np.shape(x), np.shape(self.mu)))

    def cdf(self, x):
        return _ret(np.exp(-self._neglog(x)))

    def logpdf(self, x):
        y = self._neglog(x)
        xi = _core._kernels_py.snap_shape(self.xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -np.log(self.sigma) + (xi + 1.0) * np.log(y) - y
        ok = (y > 0) & np.isfinite(y)
        return _ret(np.where(ok, val, -np.inf))

    def pdf(self, x):
        return _ret(np.exp(self.logpdf(x)))

    def quantile(self, y):
        xi = np.asarray(self.xi)
        y = np.asarray(y, dtype=float)
        _check_prob(y, allow_one=bool(np.all(xi < 0)))
        s = -np.log(y)
        return _ret(self.mu + self.sigma * _h(s, xi))

    def mean(self):
        xi = np.asarray(self.xi, dtype=float)
        if np.any(xi >= 1):
            raise DomainError("GEV mean is infinite for shape >= 1")
        mu, sigma, xi = np.broadcast_arrays(np.asarray(self.mu, dtype=float), np.asarray(self.sigma, dtype=float), xi)
        inf = np.full(mu.shape, np.inf)
        return _ret((mu + sigma * _core.tgev_h1(inf.ravel(), xi.ravel()).reshape(mu.shape)))

    def support(self):
        xi = float(self.xi)
        end = self.mu - self.sigma / xi if abs(xi) >= 1e-8 else None
        if end is None:
            return -np.inf, np.inf
        return (end, np.inf) if xi > 0 else (-np.inf, end)

    def prob_negative(self):
        """Mass the law puts below zero, G(0)."""
        return self.cdf(0.0)

    def scalar_cdf(self):
        y = _scalar_neglog(float(self.mu), float(self.sigma), float(self.xi))
        return lambda x: math.exp(-y(x))


def _scalar_neglog(mu, sigma, xi):
    """Scalar ``-log G`` for scalar parameters, matching the kernel branches."""
    if abs(xi) < 1e-8:
        return lambda x: math.exp(min(-(x - mu) / sigma, 700.0))

    def y(x):
        t = 1.0 + xi * (x - mu) / sigma
        if t <= 0.0:
            return math.inf if xi > 0 else 0.0
        return math.exp(min(-math.log(t) / xi, 700.0))
    return y


def _h(s, xi):
    s, xi = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(xi, dtype=float))
    return _core.shape_h(s.ravel(), xi.ravel()).reshape(s.shape)


@dataclass(frozen=True)
class TgevParams(_Law):
    """GEV law truncated from below at zero.

    Construction rejects parameters leaving at most ``1e-12`` of the GEV mass
    above zero: such a law has no usable predictive content.
    """

    mu: float
    sigma: float
    xi: float
    family = "tgev"
    _y0: object = field(init=False, repr=False, compare=False)
    _mass: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("mu", "sigma", "xi"):
            object.__setattr__(self, name, _num(getattr(self, name)))
        _check_scale(self.sigma)
        y0 = self.gev._neglog(0.0)
        mass = -np.expm1(-y0)
        if np.any(mass <= MIN_TRUNCATED_MASS):
            raise DegenerateDistributionError("GEV law has no mass above zero; truncation is degenerate")
        object.__setattr__(self, "_y0", y0)
        object.__setattr__(self, "_mass", mass)

    @property
    def gev(self):
        return GevParams(self.mu, self.sigma, self.xi)

    def g0(self):
        """Untruncated GEV CDF at zero."""
        return _ret(np.exp(-self._y0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, 0.0)
        yx = np.minimum(self.gev._neglog(xc), self._y0)
        with np.errstate(invalid="ignore"):
            val = np.where(np.isinf(yx), 0.0, np.exp(-yx) * -np.expm1(yx - self._y0) / self._mass)
        return _ret(np.where(x >= 0, val, 0.0) + 0.0)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        val = np.asarray(self.gev.logpdf(x)) - np.log(self._mass)
        return _ret(np.where(x >= 0, val, -np.inf))

    def pdf(self, x):
        return _ret(np.exp(self.logpdf(x)))

    def quantile(self, y):
        xi = np.asarray(self.xi)
        y = np.asarray(y, dtype=float)
        _check_prob(y, allow_one=bool(np.all(xi < 0)))
        s = -np.log1p(-self._mass * (1.0 - y))
        return _ret(np.maximum(self.mu + self.sigma * _h(s, xi), 0.0))

    def mean(self):
        xi = np.asarray(self.xi, dtype=float)
        if np.any(xi >= 1):
            raise DomainError("truncated GEV mean is infinite for shape >= 1")
        mu, sigma, xi = np.broadcast_arrays(np.asarray(self.mu, dtype=float), np.asarray(self.sigma, dtype=float), xi)
        return _ret(_core.tgev_mean(mu.ravel(), sigma.ravel(), xi.ravel()).reshape(mu.shape))

    def support(self):
        xi = float(self.xi)
        upper = self.mu - self.sigma / xi if xi <= -1e-8 else np.inf
        return 0.0, upper

    def scalar_cdf(self):
        y = _scalar_neglog(float(self.mu), float(self.sigma), float(self.xi))
        y0 = float(self._y0)
        mass = float(self._mass)

        def cdf(x):
            if x < 0:
                return 0.0
            yx = min(y(x), y0)
            if math.isinf(yx):
                return 0.0
            return math.exp(-yx) * -math.expm1(yx - y0) / mass
        return cdf


@dataclass(frozen=True)
class EmpiricalEnsemble(_Law):
    """Equally weighted point masses at ``values`` (raw ensemble or climatology)."""

    values: np.ndarray
    family = "empirical"

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise DomainError("empirical ensemble needs at least one finite value")
        object.__setattr__(self, "values", v)

    def cdf(self, x):
        return _ret(np.searchsorted(self.values, np.asarray(x, dtype=float), side="right") / self.values.size)

    def cdf_left(self, x):
        """Left limit F(x-)."""
        return _ret(np.searchsorted(self.values, np.asarray(x, dtype=float), side="left") / self.values.size)

    def quantile(self, y):
        # plotting position p*(M+1): the 1/(M+1) and M/(M+1) levels hit the ensemble range
        y = _check_prob(y)
        return _ret(np.quantile(self.values, y, method="weibull"))

    def mean(self):
        return float(self.values.mean())

    def median(self):
        return float(np.median(self.values))

    def support(self):
        return float(self.values[0]), float(self.values[-1])


def sample(dist, seed, n):
    """Draw ``n`` values from ``dist`` by inverse-CDF transform.

    Empirical ensembles are resampled uniformly with replacement. ``seed`` is
    anything accepted by :func:`numpy.random.default_rng`.
    """
    if n < 1:
        raise DomainError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    if isinstance(dist, EmpiricalEnsemble):
        return dist.values[rng.integers(0, dist.values.size, size=n)]
    if np.ndim(dist.mu) != 0:
        raise DomainError("sampling needs scalar parameters")
    u = rng.random(n)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return np.asarray(dist.quantile(u), dtype=float)


def make_params(family, mu, sigma, xi=None):
    """Build the parameter object of ``family`` ('tn', 'ln', 'gev', 'tgev')."""
    if family == "tn":
        return TruncNormalParams(mu, sigma)
    if family == "ln":
        return LogNormalParams(mu, sigma)
    if family == "gev":
        return GevParams(mu, sigma, xi)
    if family == "tgev":
        return TgevParams(mu, sigma, xi)
    raise DomainError(f"unknown family {family!r}")


# Functional aliases ---------------------------------------------------------

def tn_pdf(p, x):
    return p.pdf(x)


def tn_cdf(p, x):
    return p.cdf(x)


def tn_quantile(p, y):
    return p.quantile(y)


def tn_mean(p):
    return p.mean()


def ln_pdf(p, x):
    return p.pdf(x)


def ln_cdf(p, x):
    return p.cdf(x)


def ln_quantile(p, y):
    return p.quantile(y)


def ln_mean_var(p):
    return p.mean_var()


def gev_cdf(p, x):
    return p.cdf(x)


def gev_pdf(p, x):
    return p.pdf(x)


def gev_quantile(p, y):
    return p.quantile(y)


def prob_negative(p):
    return GevParams(p.mu, p.sigma, p.xi).prob_negative()


def tgev_cdf(p, x):
    return p.cdf(x)


def tgev_pdf(p, x):
    return p.pdf(x)


def tgev_quantile(p, y):
    return p.quantile(y)


def tgev_mean(p):
    return p.mean()
