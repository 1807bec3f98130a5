"""Real special functions used by the closed-form means and scores.

Thin, domain-checked wrappers over :mod:`scipy.special`. All functions accept
scalars or array-likes and return the same shape.
"""
import numpy as np
from scipy import special as sc

from .errors import DomainError

EULER_GAMMA = float(np.euler_gamma)
#: Arguments of the exponential integral closer to zero than this are rejected.
EI_ZERO_TOL = 1e-300


def _out(x):
    return x.item() if np.ndim(x) == 0 else x


def gamma_fn(a):
    """Gamma function for ``a > 0``."""
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError("gamma_fn requires a > 0")
    return _out(sc.gamma(a))


def lower_inc_gamma(a, x):
    """Lower incomplete gamma function :math:`\\int_0^x t^{a-1} e^{-t} dt` (not regularized)."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(a > 0)) or np.any(~(x >= 0)):
        raise DomainError("lower_inc_gamma requires a > 0 and x >= 0")
    return _out(sc.gamma(a) * sc.gammainc(a, x))


def upper_inc_gamma(a, x):
    """Upper incomplete gamma function :math:`\\int_x^\\infty t^{a-1} e^{-t} dt` (not regularized)."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(a > 0)) or np.any(~(x >= 0)):
        raise DomainError("upper_inc_gamma requires a > 0 and x >= 0")
    return _out(sc.gamma(a) * sc.gammaincc(a, x))


def exp_integral_ei(x):
    """Exponential integral Ei(x), principal value for x > 0.

    Raises DomainError at the logarithmic singularity ``|x| < 1e-300``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(np.abs(x) >= EI_ZERO_TOL)):
        raise DomainError("exp_integral_ei is singular at x = 0")
    return _out(sc.expi(x))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi))


def std_normal_cdf(x):
    return _out(sc.ndtr(np.asarray(x, dtype=float)))


def std_normal_logcdf(x):
    return _out(sc.log_ndtr(np.asarray(x, dtype=float)))


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("std_normal_quantile requires 0 < p < 1")
    return _out(sc.ndtri(p))
