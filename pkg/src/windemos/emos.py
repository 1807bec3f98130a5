"""Ensemble model output statistics: link functions, training objective,
constrained fitting and the rolling-window calibration harness.

Coefficient layout
------------------
``loc`` holds the intercept followed by one weight per exchangeable group;
it drives the location (TN, GEV, TGEV) or the mean (LN). ``scale`` holds
``(c0, c1)`` of the scale link, which gives

============  ==========================
mean_linear   ``sigma = c0 + c1 * mean``
sd_linear     ``sigma = c0 + c1 * S``
var_linear    ``sigma**2 = c0 + c1 * S**2``
md_linear     ``sigma = c0 + c1 * MD``
============  ==========================

For LN the link output is the predictive standard deviation instead of
``sigma``. The link output is floored at :data:`SCALE_FLOOR`.
"""
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _core
from .dataio import GroupSpec
from .distributions import (
    EmpiricalEnsemble,
    GevParams,
    LogNormalParams,
    TgevParams,
    TruncNormalParams,
)
from .errors import ConfigError, DegenerateDistributionError, DomainError, FitError, NumericalError
from .scoring import LOG_SCORE_PENALTY

__all__ = [
    "GroupSpec", "EnsembleStats", "EmosCoefficients", "FitConfig", "TrainingWindow",
    "ensemble_stats", "build_params", "objective", "fit", "rolling_calibrate",
    "climatology_forecast", "climatology_members", "Calibration",
]

FAMILIES = ("tn", "ln", "gev", "tgev")
SCALE_LINKS = ("mean_linear", "sd_linear", "var_linear", "md_linear")
DEFAULT_SCALE_LINK = {"tn": "var_linear", "ln": "var_linear", "gev": "mean_linear", "tgev": "mean_linear"}
OBJECTIVES = ("mean_crps", "log_likelihood")
#: Open interval allowed for the GEV/TGEV shape.
SHAPE_BOUNDS = (-0.278, 1.0 / 3.0)
SCALE_FLOOR = 1e-4
#: Lower bound for the LN predictive mean, which has a free intercept.
MEAN_FLOOR = 1e-4
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EnsembleStats:
    """Summary statistics for ``n`` cases (all fields are arrays over cases).

    ``var`` is the unbiased sample variance (zero for one member) and ``md``
    the mean absolute difference ``(1/M^2) sum_ij |f_i - f_j|``.
    """

    group_means: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    md: np.ndarray

    def __len__(self):
        return len(self.mean)

    def take(self, idx):
        return EnsembleStats(self.group_means[idx], self.mean[idx], self.var[idx], self.md[idx])


def ensemble_stats(members, spec):
    """Group means, overall mean, variance and mean absolute difference.

    ``members`` is one forecast (1-d array or an object with ``.members``) or
    an ``(n, M)`` array. Members are sorted inside each group first, so any
    permutation within a group yields bit-identical statistics.
    """
    members = getattr(members, "members", members)
    f = np.asarray(members, dtype=float)
    if f.ndim == 1:
        f = f[None, :]
    if f.shape[1] != spec.n_members:
        raise DomainError(f"forecast has {f.shape[1]} members, group sizes need {spec.n_members}")
    f = np.concatenate([np.sort(f[:, s], axis=1) for s in spec.slices], axis=1)
    gmeans = np.stack([f[:, s].mean(axis=1) for s in spec.slices], axis=1)
    mean = f.mean(axis=1)
    m = f.shape[1]
    var = ((f - mean[:, None]) ** 2).sum(axis=1) / (m - 1) if m > 1 else np.zeros(len(f))
    md = _core.mean_abs_difference(np.ascontiguousarray(f))
    return EnsembleStats(gmeans, mean, var, np.maximum(md, 0.0))


@dataclass(frozen=True)
class EmosCoefficients:
    """Fitted link coefficients for one family and training window."""

    family: str
    loc: tuple
    scale: tuple
    xi: float | None = None
    scale_link: str = ""
    window: dict = field(default_factory=dict, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"family must be one of {FAMILIES}")
        link = self.scale_link or DEFAULT_SCALE_LINK[self.family]
        if link not in SCALE_LINKS:
            raise DomainError(f"scale link must be one of {SCALE_LINKS}")
        object.__setattr__(self, "scale_link", link)
        object.__setattr__(self, "loc", tuple(float(v) for v in self.loc))
        object.__setattr__(self, "scale", tuple(float(v) for v in self.scale))
        if len(self.loc) < 2 or len(self.scale) != 2:
            raise DomainError("need an intercept plus group weights, and two scale coefficients")
        if min(self.scale) < 0:
            raise DomainError("scale coefficients must be nonnegative")
        if self.family in ("tn", "ln") and min(self.loc[1:]) < 0:
            raise DomainError("group weights must be nonnegative")
        if self.family in ("gev", "tgev"):
            if self.xi is None or not SHAPE_BOUNDS[0] < self.xi < SHAPE_BOUNDS[1]:
                raise DomainError(f"shape must lie in ]{SHAPE_BOUNDS[0]}, {SHAPE_BOUNDS[1]:.6f}[")
            object.__setattr__(self, "xi", float(self.xi))
        elif self.xi is not None:
            raise DomainError(f"{self.family} has no shape parameter")

    @property
    def n_groups(self):
        return len(self.loc) - 1

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "family": self.family,
            "scale_link": self.scale_link,
            "loc": list(self.loc),
            "scale": list(self.scale),
            "xi": self.xi,
            "constraints": {
                "nonnegative": ["scale"] + (["loc[1:]"] if self.family in ("tn", "ln") else []),
                "shape_interval": list(SHAPE_BOUNDS) if self.xi is not None else None,
                "scale_floor": SCALE_FLOOR,
            },
            "window": dict(self.window),
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], tuple(d["loc"]), tuple(d["scale"]), d.get("xi"), d.get("scale_link", ""),
                   dict(d.get("window", {})), dict(d.get("diagnostics", {})))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    ``initial`` is ``"default"`` (regression start for TN/LN, fixed point for
    GEV/TGEV) or ``"previous"`` (warm start from the last successful fit of
    the same scope in :func:`rolling_calibrate`).
    """

    objective: str = "mean_crps"
    max_iterations: int = 200
    gtol: float = 1e-5
    scale_link: str = ""
    initial: str = "default"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if self.scale_link and self.scale_link not in SCALE_LINKS:
            raise ConfigError(f"scale link must be one of {SCALE_LINKS}")
        if self.initial not in ("default", "previous"):
            raise ConfigError("initial must be 'default' or 'previous'")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class TrainingWindow:
    """Forecast-observation pairs feeding one fit."""

    members: np.ndarray
    obs: np.ndarray
    group_spec: GroupSpec
    window_days: int = 0
    scope: str = "global"
    station: str | None = None
    lead_time_h: int | None = None
    first_date: str = ""
    last_date: str = ""
    _stats: EnsembleStats = field(init=False, repr=False)

    def __post_init__(self):
        obs = np.asarray(self.obs, dtype=float).ravel()
        mem = np.asarray(self.members, dtype=float).reshape(len(obs), -1)
        if len(obs) == 0:
            raise DomainError("training window is empty")
        if self.scope not in ("global", "local"):
            raise DomainError("scope must be 'global' or 'local'")
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "members", mem)
        object.__setattr__(self, "_stats", ensemble_stats(mem, self.group_spec))

    def __len__(self):
        return len(self.obs)

    @property
    def stats(self):
        return self._stats

    def descriptor(self):
        return {"n_cases": len(self), "window_days": self.window_days, "scope": self.scope,
                "station": self.station, "lead_time_h": self.lead_time_h,
                "first_date": self.first_date, "last_date": self.last_date}


# link functions --------------------------------------------------------------

def _spread(link, c0, c1, stats):
    if link == "mean_linear":
        q = c0 + c1 * stats.mean
    elif link == "sd_linear":
        q = c0 + c1 * np.sqrt(stats.var)
    elif link == "var_linear":
        return np.sqrt(np.maximum(c0 + c1 * stats.var, SCALE_FLOOR))
    else:
        q = c0 + c1 * stats.md
    return np.maximum(q, SCALE_FLOOR)


def _raw_params(family, link, loc, scale, xi, stats):
    """Location, scale and shape arrays; LN is returned on the log scale."""
    center = loc[0] + stats.group_means @ np.asarray(loc[1:])
    spread = _spread(link, scale[0], scale[1], stats)
    if family == "ln":
        m = np.maximum(center, MEAN_FLOOR)
        r = (spread / m) ** 2
        return np.log(m) - 0.5 * np.log1p(r), np.sqrt(np.log1p(r)), None
    return center, spread, xi


def build_params(coeffs, stats):
    """Predictive law for every case in ``stats``.

    Raises
    ------
    NumericalError
        If a parameter is not finite.
    DegenerateDistributionError
        If a TGEV law would put (almost) all GEV mass below zero.
    """
    mu, sigma, xi = _raw_params(coeffs.family, coeffs.scale_link, coeffs.loc, coeffs.scale, coeffs.xi, stats)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise NumericalError("non-finite predictive parameters", coefficients=coeffs.to_dict())
    if coeffs.family == "tn":
        return TruncNormalParams(mu, sigma)
    if coeffs.family == "ln":
        return LogNormalParams(mu, sigma)
    xi_arr = np.full(np.shape(mu), xi)
    if coeffs.family == "gev":
        return GevParams(mu, sigma, xi_arr)
    return TgevParams(mu, sigma, xi_arr)


def case_params(coeffs, stats):
    """``(mu, sigma, xi)`` arrays without building law objects; ``xi`` is NaN for TN/LN.

    Unlike :func:`build_params` this never raises for degenerate TGEV laws.
    """
    mu, sigma, xi = _raw_params(coeffs.family, coeffs.scale_link, coeffs.loc, coeffs.scale, coeffs.xi, stats)
    return mu, sigma, np.full(np.shape(mu), np.nan if xi is None else xi)


# objective -------------------------------------------------------------------

def _case_crps(family, mu, sigma, xi, x):
    if family == "tn":
        return _core.crps_tn(mu, sigma, x)
    if family == "ln":
        return _core.crps_ln(mu, sigma, x)
    xi = np.full(len(mu), xi)
    if family == "gev":
        return _core.crps_gev(mu, sigma, xi, x)
    return _core.crps_tgev(mu, sigma, xi, x)


def _case_logs(family, mu, sigma, xi, x):
    if family == "tn":
        val = -TruncNormalParams(mu, sigma).logpdf(x)
    elif family == "ln":
        val = -LogNormalParams(mu, sigma).logpdf(x)
    else:
        xi = np.full(len(mu), xi)
        val = -np.asarray(GevParams(mu, sigma, xi).logpdf(x))
        if family == "tgev":
            y0 = _core.neglog_gev_cdf(np.zeros_like(mu), mu, sigma, xi)
            mass = -np.expm1(-y0)
            with np.errstate(divide="ignore"):
                val = np.where(mass > 1e-12, val + np.log(mass), np.inf)
            val = np.where(x >= 0, val, np.inf)
    val = np.asarray(val, dtype=float)
    return np.where(np.isnan(val) | (val > LOG_SCORE_PENALTY), LOG_SCORE_PENALTY, val)


def case_scores(family, link, loc, scale, xi, stats, obs, kind="mean_crps"):
    """Per-case CRPS (``kind="mean_crps"``) or log score of the linked laws."""
    mu, sigma, xi = _raw_params(family, link, loc, scale, xi, stats)
    if kind == "mean_crps":
        return _case_crps(family, mu, sigma, xi, obs)
    return _case_logs(family, mu, sigma, xi, obs)


def objective(coeffs, window, config=FitConfig()):
    """Mean CRPS or mean log score of ``coeffs`` over ``window``.

    Raises
    ------
    NumericalError
        If a case score is not finite; ``diagnostics["case"]`` gives its index.
    """
    s = case_scores(coeffs.family, coeffs.scale_link, coeffs.loc, coeffs.scale, coeffs.xi,
                    window.stats, window.obs, config.objective)
    bad = ~np.isfinite(s)
    if np.any(bad):
        raise NumericalError("non-finite score", case=int(np.argmax(bad)))
    return float(np.mean(s))


# unconstrained parametrization ---------------------------------------------

def _logistic(t):
    lo, hi = SHAPE_BOUNDS
    return lo + (hi - lo) / (1.0 + math.exp(-t)) if t > -700 else lo


def _logit(xi):
    lo, hi = SHAPE_BOUNDS
    p = (xi - lo) / (hi - lo)
    return math.log(p / (1.0 - p))


def _decode(theta, family, k):
    theta = np.asarray(theta, dtype=float)
    loc = theta[: k + 1].copy()
    if family in ("tn", "ln"):
        loc[1:] = loc[1:] ** 2
    scale = theta[k + 1: k + 3] ** 2
    xi = _logistic(theta[k + 3]) if family in ("gev", "tgev") else None
    return loc, scale, xi


def _encode(coeffs):
    loc = np.array(coeffs.loc, dtype=float)
    if coeffs.family in ("tn", "ln"):
        loc[1:] = np.sqrt(loc[1:])
    theta = list(loc) + list(np.sqrt(coeffs.scale))
    if coeffs.xi is not None:
        theta.append(_logit(coeffs.xi))
    return np.array(theta)


def n_free(family, n_groups):
    return n_groups + 3 + (family in ("gev", "tgev"))


def initial_coefficients(window, family, scale_link=""):
    """Starting point: regression for TN/LN, a fixed point for GEV/TGEV."""
    k = window.group_spec.n_groups
    link = scale_link or DEFAULT_SCALE_LINK[family]
    if family in ("gev", "tgev"):
        return EmosCoefficients(family, (0.0,) + (1.0 / k,) * k, (0.5, 0.1), 0.1, link)
    design = np.column_stack([np.ones(len(window)), window.stats.group_means])
    beta, *_ = np.linalg.lstsq(design, window.obs, rcond=None)
    # a weight of exactly 0 is a stationary point of the squared parametrization
    beta[1:] = np.maximum(beta[1:], 1e-2)
    return EmosCoefficients(family, tuple(beta), (1.0, 0.5), None, link)


def _fd_gradient(fun, theta, f0=None):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        h = 1e-6 * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (fun(tp) - fun(tm)) / (2 * h)
    return g


def fit(window, family, config=FitConfig(), initial=None):
    """Estimate EMOS coefficients on ``window`` by BFGS in unconstrained space.

    Nonnegative coefficients are optimized as squares and the shape through a
    scaled logistic map, so every returned coefficient set satisfies the
    family constraints. The returned objective never exceeds the starting one.

    Raises
    ------
    FitError
        Too few cases, or a non-finite objective at the starting point or the
        solution. ``diagnostics`` holds the details.
    """
    if family not in FAMILIES:
        raise DomainError(f"family must be one of {FAMILIES}")
    k = window.group_spec.n_groups
    need = n_free(family, k) + 2
    if len(window) < need:
        raise FitError(f"training window has {len(window)} cases, need at least {need}",
                       n_cases=len(window), required=need)
    link = config.scale_link or DEFAULT_SCALE_LINK[family]
    start = initial if initial is not None else initial_coefficients(window, family, link)
    if start.family != family or start.scale_link != link:
        raise DomainError("initial coefficients do not match family and scale link")
    stats, obs, kind = window.stats, window.obs, config.objective

    def fun(theta):
        loc, scale, xi = _decode(theta, family, k)
        with np.errstate(all="ignore"):
            val = float(np.mean(case_scores(family, link, loc, scale, xi, stats, obs, kind)))
        return val if math.isfinite(val) else 1e300

    theta0 = _encode(start)
    f0 = fun(theta0)
    if f0 >= 1e300:
        raise FitError("objective is not finite at the starting point", start=start.to_dict())
    res = optimize.minimize(fun, theta0, jac=lambda t: _fd_gradient(fun, t), method="BFGS",
                            options={"maxiter": config.max_iterations, "gtol": config.gtol})
    theta, fval = (res.x, float(res.fun)) if res.fun <= f0 else (theta0, f0)
    if fval >= 1e300:
        raise FitError("objective is not finite at the solution", message=str(res.message))
    loc, scale, xi = _decode(theta, family, k)
    diagnostics = {"iterations": int(res.nit), "objective": fval, "initial_objective": f0,
                   "converged": bool(res.success), "message": str(res.message),
                   "function_evaluations": int(res.nfev), "objective_kind": kind}
    return EmosCoefficients(family, tuple(loc), tuple(scale), xi, link, window.descriptor(), diagnostics)


def climatology_forecast(window):
    """Training observations taken as an ensemble."""
    obs = window.obs if hasattr(window, "obs") else window
    return EmpiricalEnsemble(np.asarray(obs, dtype=float))


# rolling harness -------------------------------------------------------------

@dataclass
class Calibration:
    """Output of :func:`rolling_calibrate`.

    ``case_index`` lists the dataset rows that received a forecast; ``mu``,
    ``sigma``, ``xi`` and ``fit_id`` are aligned with it. ``coefficients``
    maps ``fit_id`` to the coefficients used, and ``skipped`` lists
    ``(case_index, reason)`` pairs.
    """

    family: str
    window_days: int
    scope: str
    case_index: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    fit_id: np.ndarray
    coefficients: dict
    skipped: list
    fallbacks: int = 0

    def params(self):
        """Predictive laws of all calibrated cases as one array-valued object."""
        if self.family == "tn":
            return TruncNormalParams(self.mu, self.sigma)
        if self.family == "ln":
            return LogNormalParams(self.mu, self.sigma)
        if self.family == "gev":
            return GevParams(self.mu, self.sigma, self.xi)
        return TgevParams(self.mu, self.sigma, self.xi)


def _day_str(d):
    return str(np.datetime64(d, "D"))


def rolling_calibrate(dataset, family, window_days, scope="global", config=FitConfig()):
    """Fit on the ``window_days`` calendar days before each verification day.

    Verification days are those with at least ``window_days`` days of data
    history for the lead time. With ``scope="local"`` every station gets its
    own fit on its own history. A failed fit reuses the latest successful
    coefficients of the same scope; without any, the cases are skipped.
    Degenerate TGEV predictions are skipped as well. Every skip is reported
    with its reason.
    """
    if family not in FAMILIES:
        raise DomainError(f"family must be one of {FAMILIES}")
    if window_days < 1:
        raise ConfigError("window_days must be at least 1")
    if scope not in ("global", "local"):
        raise ConfigError("scope must be 'global' or 'local'")
    dates = dataset.dates
    day_no = dates.astype(np.int64)
    all_stats = ensemble_stats(dataset.members, dataset.group_spec)
    out_idx, out_mu, out_sigma, out_xi, out_id = [], [], [], [], []
    coefficients, skipped = {}, []
    fallbacks = 0
    for lead in dataset.lead_times:
        on_lead = dataset.lead_time_h == lead
        first = day_no[on_lead].min()
        groups = [(None, on_lead)] if scope == "global" else [
            (s, on_lead & (dataset.station_id == s)) for s in dataset.stations]
        for station, sel in groups:
            last_good = None
            for day in np.unique(day_no[sel]):
                cases = np.flatnonzero(sel & (day_no == day))
                if day - window_days < first:
                    skipped.extend((int(i), "insufficient history") for i in cases)
                    continue
                train = np.flatnonzero(sel & (day_no >= day - window_days) & (day_no < day))
                if len(train) == 0:
                    skipped.extend((int(i), "empty training window") for i in cases)
                    continue
                day_label = _day_str(np.datetime64(int(day), "D"))
                window = TrainingWindow(
                    dataset.members[train], dataset.obs[train], dataset.group_spec, window_days, scope,
                    station, lead, _day_str(np.datetime64(int(day - window_days), "D")),
                    _day_str(np.datetime64(int(day - 1), "D")))
                fit_id = f"{lead}|{station or '*'}|{day_label}"
                init = last_good if (config.initial == "previous" and last_good is not None) else None
                try:
                    coeffs = fit(window, family, config, initial=init)
                    last_good = coeffs
                except (FitError, NumericalError) as exc:
                    if last_good is None:
                        skipped.extend((int(i), f"fit failed: {exc}") for i in cases)
                        continue
                    coeffs = dataclasses.replace(last_good, diagnostics={**last_good.diagnostics,
                                                                        "fallback_for": day_label})
                    fallbacks += 1
                coefficients[fit_id] = coeffs
                mu, sigma, xi = case_params(coeffs, all_stats.take(cases))
                for j, i in enumerate(cases):
                    if family == "tgev":
                        try:
                            TgevParams(mu[j], sigma[j], xi[j])
                        except DegenerateDistributionError:
                            skipped.append((int(i), "degenerate truncated law"))
                            continue
                    out_idx.append(int(i))
                    out_mu.append(mu[j])
                    out_sigma.append(sigma[j])
                    out_xi.append(xi[j])
                    out_id.append(fit_id)
    order = np.argsort(out_idx, kind="stable")
    arr = lambda v, dt=float: np.asarray(v, dtype=dt)[order] if v else np.empty(0, dtype=dt)  # noqa: E731
    return Calibration(family, window_days, scope, arr(out_idx, np.int64), arr(out_mu), arr(out_sigma),
                       arr(out_xi), arr(out_id, object), coefficients, sorted(skipped), fallbacks)


def climatology_members(dataset, case_index, window_days):
    """Training-window observations of the same station and lead time, per case."""
    day_no = dataset.dates.astype(np.int64)
    out = []
    for i in case_index:
        sel = ((dataset.station_id == dataset.station_id[i]) & (dataset.lead_time_h == dataset.lead_time_h[i])
               & (day_no >= day_no[i] - window_days) & (day_no < day_no[i]))
        out.append(dataset.obs[sel])
    return out
