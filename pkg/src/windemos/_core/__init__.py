"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension ``_kernels`` is used when importable; set
``WINDEMOS_PURE_PYTHON=1`` to force the numpy implementation. ``BACKEND``
names the active one ("cython" or "python").
"""
import os

from . import _kernels_py

_NAMES = (
    "crps_tgev",
    "crps_gev",
    "crps_tn",
    "crps_ln",
    "tgev_mean",
    "neglog_gev_cdf",
    "tgev_h1",
    "tgev_h2",
    "shape_h",
    "crps_ensemble",
    "mean_abs_difference",
    "stationary_bootstrap_means",
)

_compiled = None
if not os.environ.get("WINDEMOS_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

crps_tgev = _impl.crps_tgev
crps_gev = _impl.crps_gev
crps_tn = _impl.crps_tn
crps_ln = _impl.crps_ln
tgev_mean = _impl.tgev_mean
neglog_gev_cdf = _impl.neglog_gev_cdf
tgev_h1 = _impl.tgev_h1
tgev_h2 = _impl.tgev_h2
shape_h = _impl.shape_h
crps_ensemble = _impl.crps_ensemble
mean_abs_difference = _impl.mean_abs_difference
stationary_bootstrap_means = _impl.stationary_bootstrap_means


def backends():
    """Return the available implementations as ``{name: module}``."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
