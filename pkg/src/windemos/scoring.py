"""Proper scoring rules and point-forecast errors.

All scores are negatively oriented: smaller is better. Closed-form CRPS
functions accept parameter objects from :mod:`windemos.distributions` whose
fields may be arrays; they then return one score per case.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _core
from .distributions import EmpiricalEnsemble, _Law
from .errors import DomainError, NumericalError

#: Threshold value meaning "no threshold": the weight is 1 everywhere.
NO_THRESHOLD = -math.inf
#: Log score assigned where the predictive density vanishes (about -log 1e-15).
LOG_SCORE_PENALTY = 35.0

SCORE_KINDS = ("crps", "twcrps", "logs", "abs_err", "sq_err")


@dataclass(frozen=True)
class ScoreSample:
    """One score value tagged with its kind."""

    value: float
    kind: str

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise DomainError(f"unknown score kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise DomainError("score must be finite")
        if self.kind != "logs" and self.value < 0:
            raise DomainError(f"{self.kind} must be nonnegative")


def _bcast(*xs):
    shape = np.broadcast_shapes(*(np.shape(x) for x in xs))
    arrs = [np.broadcast_to(np.asarray(x, dtype=float), shape).ravel() for x in xs]
    return shape, arrs


def _call(kernel, shape, arrs):
    out = kernel(*arrs).reshape(shape)
    return out.item() if out.ndim == 0 else out


def crps_tn(p, x):
    """CRPS of a truncated normal law."""
    shape, arrs = _bcast(p.mu, p.sigma, x)
    return _call(_core.crps_tn, shape, arrs)


def crps_ln(p, x):
    """CRPS of a log-normal law."""
    shape, arrs = _bcast(p.mu, p.sigma, x)
    return _call(_core.crps_ln, shape, arrs)


def _check_shape_lt1(xi):
    if np.any(np.asarray(xi) >= 1):
        raise DomainError("CRPS requires shape < 1 (finite mean)")


def crps_gev(p, x):
    """CRPS of a GEV law; the shape must be below one."""
    _check_shape_lt1(p.xi)
    shape, arrs = _bcast(p.mu, p.sigma, p.xi, x)
    return _call(_core.crps_gev, shape, arrs)


def crps_tgev(p, x):
    """Closed-form CRPS of a GEV law truncated from below at zero.

    Stable for any shape in ``]-inf, 1[``, including the Gumbel limit, and for
    laws whose untruncated CDF at zero is close to one.
    """
    _check_shape_lt1(p.xi)
    shape, arrs = _bcast(p.mu, p.sigma, p.xi, x)
    return _call(_core.crps_tgev, shape, arrs)


def crps_ensemble(members, x):
    """CRPS of the empirical distribution of ``members`` at ``x``.

    ``members`` is a 1-d sequence (one forecast) or a 2-d array with one
    forecast per row, in which case ``x`` holds one observation per row.
    """
    f = np.asarray(members, dtype=float)
    if f.size == 0:
        raise DomainError("ensemble must have at least one member")
    if f.ndim == 1:
        return float(_core.crps_ensemble(f[None, :], np.atleast_1d(float(x)))[0])
    x = np.broadcast_to(np.asarray(x, dtype=float), f.shape[:1])
    return _core.crps_ensemble(np.ascontiguousarray(f), np.ascontiguousarray(x))


def crps(dist, x):
    """Closed-form CRPS dispatched on the type of ``dist``."""
    fam = getattr(dist, "family", None)
    if fam == "tn":
        return crps_tn(dist, x)
    if fam == "ln":
        return crps_ln(dist, x)
    if fam == "gev":
        return crps_gev(dist, x)
    if fam == "tgev":
        return crps_tgev(dist, x)
    if isinstance(dist, EmpiricalEnsemble):
        return crps_ensemble(dist.values, x)
    raise DomainError(f"no closed-form CRPS for {type(dist).__name__}")


def default_domain(dist):
    """Integration interval covering all but about 1e-10 of the mass of ``dist``."""
    lo, hi = dist.support()
    if isinstance(dist, EmpiricalEnsemble):
        return lo, hi
    # a finite endpoint can still lie far out in the tail (GEV with small shape)
    lo = max(lo, float(dist.quantile(1e-12)))
    hi = min(hi, float(dist.quantile(1.0 - 1e-10)))
    return float(lo), float(hi)


def _default_breaks(dist):
    if isinstance(dist, EmpiricalEnsemble):
        return tuple(np.unique(dist.values))
    return tuple(float(dist.quantile(q)) for q in (1e-3, 0.1, 0.5, 0.9, 0.999, 1 - 1e-6))


def _squared_gap_integral(cdf, x, a, b, breakpoints, tol):
    """``int_a^b (F(y) - 1{y >= x})^2 dy`` split at ``x`` and ``breakpoints``."""
    if b <= a:
        return 0.0
    cuts = sorted({a, b, *(c for c in (x, *breakpoints) if a < c < b)})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        step = 0.0 if hi <= x else 1.0
        res = integrate.quad(lambda y: (float(cdf(y)) - step) ** 2, lo, hi,
                             epsabs=tol, epsrel=1e-12, limit=500, full_output=1)
        total += res[0]
        if len(res) > 3 and res[1] > 10 * tol:
            raise NumericalError(
                "CRPS quadrature did not converge",
                interval=(lo, hi), estimate=res[0], abserr=res[1], quad_message=res[3],
            )
    return total


def crps_numeric(cdf, x, domain, breakpoints=(), tol=1e-10):
    """CRPS by adaptive quadrature of the defining integral.

    Parameters
    ----------
    cdf : callable or distribution
        Predictive CDF. Distribution objects also supply ``domain`` and
        sensible breakpoints when those are omitted.
    x : float
        Observation.
    domain : (float, float) or None
        Interval outside which the CDF is taken as exactly 0 (below) or 1
        (above). Its tails should carry less than 1e-10 of the mass.
    breakpoints : sequence of float
        Extra split points, e.g. the jumps of a step CDF.
    tol : float
        Absolute quadrature tolerance per subinterval.

    Raises
    ------
    NumericalError
        If the quadrature reports non-convergence.
    """
    return twcrps(cdf, x, NO_THRESHOLD, domain=domain, breakpoints=breakpoints, tol=tol)


def twcrps(cdf, x, r=NO_THRESHOLD, domain=None, breakpoints=(), tol=1e-10):
    """Threshold-weighted CRPS with weight ``1{y >= r}``.

    With ``r = NO_THRESHOLD`` this is the ordinary CRPS. Arguments as in
    :func:`crps_numeric`.
    """
    if isinstance(cdf, EmpiricalEnsemble) and domain is None:
        return _twcrps_step(cdf.values, float(x), NO_THRESHOLD if r is None else float(r))
    if isinstance(cdf, (_Law, EmpiricalEnsemble)):
        dist = cdf
        if domain is None:
            domain = default_domain(dist)
        breakpoints = tuple(breakpoints) + _default_breaks(dist)
        cdf = dist.scalar_cdf() if np.ndim(dist.mu) == 0 else dist.cdf
    elif domain is None:
        raise DomainError("domain is required for a bare CDF callable")
    x = float(x)
    r = NO_THRESHOLD if r is None else float(r)
    lo, hi = map(float, domain)
    total = _squared_gap_integral(cdf, x, max(lo, r), hi, breakpoints, tol)
    # outside the domain F is exactly 0 (below) or 1 (above)
    total += max(0.0, lo - max(r, x))
    total += max(0.0, x - max(hi, r))
    return total


def _twcrps_step(values, x, r):
    """Exact integral for a step CDF: the integrand is constant between jumps."""
    v = np.sort(values)
    # x is a knot, so outside [first, last knot] the integrand vanishes
    knots = np.unique(np.concatenate([v, [x]]))
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        a = max(a, r)
        if b <= a:
            continue
        fval = np.searchsorted(v, a, side="right") / v.size
        total += (fval - (1.0 if a >= x else 0.0)) ** 2 * (b - a)
    return float(total)


def log_score(pdf, x):
    """Negative log predictive density at ``x``.

    ``pdf`` is a distribution object (its ``logpdf`` is used) or a callable
    density. The score is capped at :data:`LOG_SCORE_PENALTY`, which is also
    the value where the density is zero.
    """
    if hasattr(pdf, "logpdf"):
        val = -np.asarray(pdf.logpdf(x), dtype=float)
    else:
        with np.errstate(divide="ignore"):
            val = -np.log(np.asarray(pdf(x), dtype=float))
    val = np.where(np.isnan(val) | (val > LOG_SCORE_PENALTY), LOG_SCORE_PENALTY, val)
    return val.item() if val.ndim == 0 else val


def _pair(forecasts, observations):
    f = np.asarray(forecasts, dtype=float)
    o = np.asarray(observations, dtype=float)
    if f.shape != o.shape:
        raise DomainError(f"length mismatch: {f.shape} vs {o.shape}")
    if f.size == 0:
        raise DomainError("empty series")
    return f, o


def mae(point_forecasts, observations):
    """Mean absolute error."""
    f, o = _pair(point_forecasts, observations)
    return float(np.mean(np.abs(f - o)))


def rmse(point_forecasts, observations):
    """Root mean squared error."""
    f, o = _pair(point_forecasts, observations)
    return float(np.sqrt(np.mean((f - o) ** 2)))


def skill_score(mean_score, mean_score_ref):
    """``1 - score / reference``; positive means better than the reference."""
    if not mean_score_ref > 0:
        raise DomainError("reference score must be positive")
    return 1.0 - mean_score / mean_score_ref
