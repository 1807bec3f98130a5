"""Calibration and sharpness diagnostics, bootstrap intervals and report assembly."""
import csv
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _core, scoring
from .distributions import EmpiricalEnsemble
from .errors import DomainError

SCHEMA_VERSION = 1
DEFAULT_REPLICATES = 2000


@dataclass(frozen=True)
class PitHistogram:
    bin_edges: tuple
    counts: tuple
    total: int


@dataclass(frozen=True)
class RankHistogram:
    counts: tuple
    ensemble_size: int

    @property
    def total(self):
        return int(sum(self.counts))


@dataclass(frozen=True)
class IntervalStats:
    nominal: float
    coverage: float
    width: float


@dataclass(frozen=True)
class BootstrapCi:
    point: float
    lower: float
    upper: float
    level: float
    replicates: int
    mean_block_length: float


# PIT and ranks ---------------------------------------------------------------

def pit(dist, obs, rng=None):
    """Predictive CDF at the observation.

    For an :class:`EmpiricalEnsemble` the value is drawn uniformly between the
    left and right limits of the step CDF (randomized PIT); pass ``rng`` (a
    generator or seed) to make it reproducible.
    """
    if isinstance(dist, EmpiricalEnsemble):
        lo = np.asarray(dist.cdf_left(obs), dtype=float)
        hi = np.asarray(dist.cdf(obs), dtype=float)
        u = np.random.default_rng(rng).random(lo.shape)
        out = lo + u * (hi - lo)
        return out.item() if out.ndim == 0 else out
    return dist.cdf(obs)


def pit_histogram(values, bins=10):
    """Counts of PIT values in ``bins`` equal bins on [0, 1]."""
    if bins < 1:
        raise DomainError("need at least one bin")
    edges = np.linspace(0.0, 1.0, bins + 1)
    v = np.clip(np.asarray(values, dtype=float).ravel(), 0.0, 1.0)
    counts, _ = np.histogram(v, bins=edges)
    return PitHistogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts), int(v.size))


def case_seed(root_seed, *key):
    """Stable per-case seed derived from the root seed and a case key."""
    digest = zlib.crc32("|".join(str(k) for k in key).encode())
    return np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, digest])


def verification_rank(members, obs, seed=None):
    """Rank of ``obs`` among the members, in ``1..K+1``; ties are broken at random."""
    f = np.asarray(members, dtype=float).ravel()
    if f.size == 0:
        raise DomainError("ensemble must have at least one member")
    below = int(np.sum(f < obs))
    ties = int(np.sum(f == obs))
    if ties:
        below += int(np.random.default_rng(seed).integers(0, ties + 1))
    return below + 1


def verification_ranks(members, obs, seeds):
    """Vectorized :func:`verification_rank`; ``seeds`` supplies one seed per case."""
    f = np.asarray(members, dtype=float)
    o = np.asarray(obs, dtype=float)
    below = (f < o[:, None]).sum(axis=1)
    ties = (f == o[:, None]).sum(axis=1)
    ranks = below + 1
    for i in np.flatnonzero(ties):
        ranks[i] += int(np.random.default_rng(seeds[i]).integers(0, ties[i] + 1))
    return ranks


def rank_histogram(ranks, ensemble_size):
    r = np.asarray(ranks, dtype=np.int64)
    if np.any((r < 1) | (r > ensemble_size + 1)):
        raise DomainError("rank outside 1..K+1")
    counts = np.bincount(r - 1, minlength=ensemble_size + 1)
    return RankHistogram(tuple(int(c) for c in counts), int(ensemble_size))


# intervals -----------------------------------------------------------------

def nominal_alpha(ensemble_size):
    """``alpha`` whose central interval matches the ensemble range, ``2/(K+1)``."""
    if ensemble_size < 2:
        raise DomainError("need at least two members")
    return 2.0 / (ensemble_size + 1)


def central_interval(dist, alpha):
    """``(q(alpha/2), q(1 - alpha/2))`` of ``dist``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in ]0, 1[")
    return dist.quantile(alpha / 2), dist.quantile(1 - alpha / 2)


def coverage_and_width(lower, upper, observations, nominal=float("nan")):
    """Percentage of observations inside ``[lower, upper]`` and mean width."""
    lo = np.asarray(lower, dtype=float).ravel()
    hi = np.asarray(upper, dtype=float).ravel()
    o = np.asarray(observations, dtype=float).ravel()
    if not (lo.shape == hi.shape == o.shape):
        raise DomainError("interval and observation lengths differ")
    if o.size == 0:
        raise DomainError("no cases")
    inside = (o >= lo) & (o <= hi)
    return IntervalStats(float(nominal), 100.0 * float(inside.mean()), float(np.mean(hi - lo)))


# bootstrap ------------------------------------------------------------------

def default_block_length(n):
    return float(math.ceil(n ** (1.0 / 3.0)))


def _bootstrap_means(data, replicates, block, rng, chunk=250):
    n = data.shape[0]
    p = 1.0 / block
    out = []
    done = 0
    while done < replicates:
        r = min(chunk, replicates - done)
        new_block = rng.random((r, n)) < p
        starts = rng.integers(0, n, size=(r, n))
        out.append(_core.stationary_bootstrap_means(np.ascontiguousarray(data), new_block, starts))
        done += r
    return np.concatenate(out, axis=0)


def _percentile_ci(point, reps, level, replicates, block):
    q = (1.0 - level) / 2.0
    lo, hi = np.quantile(reps, [q, 1.0 - q])
    return BootstrapCi(float(point), float(min(lo, point)), float(max(hi, point)), level, replicates, block)


def _check_series(x, level, replicates):
    if len(x) < 10:
        raise DomainError("bootstrap needs a series of length >= 10")
    if not 0 < level < 1:
        raise DomainError("level must lie in ]0, 1[")
    if replicates < 1:
        raise DomainError("need at least one replicate")


def stationary_bootstrap_ci(series, replicates=DEFAULT_REPLICATES, level=0.95, mean_block_length=None, seed=None):
    """Percentile confidence interval for the mean of a dependent series.

    Resamples with the stationary bootstrap: blocks start at uniform
    positions (wrapping around) and have geometric lengths with mean
    ``mean_block_length`` (default ``ceil(n**(1/3))``).
    """
    x = np.asarray(series, dtype=float).ravel()
    _check_series(x, level, replicates)
    block = float(mean_block_length or default_block_length(len(x)))
    if block < 1:
        raise DomainError("mean block length must be >= 1")
    point = float(np.mean(x))
    if np.ptp(x) == 0:
        # every resample is the same constant
        return BootstrapCi(point, point, point, level, replicates, block)
    reps = _bootstrap_means(x[:, None], replicates, block, np.random.default_rng(seed))[:, 0]
    return _percentile_ci(point, reps, level, replicates, block)


def stationary_bootstrap_skill_ci(scores, ref_scores, replicates=DEFAULT_REPLICATES, level=0.95,
                                  mean_block_length=None, seed=None):
    """Interval for ``1 - mean(scores) / mean(ref_scores)`` resampling both series jointly."""
    a = np.asarray(scores, dtype=float).ravel()
    b = np.asarray(ref_scores, dtype=float).ravel()
    if a.shape != b.shape:
        raise DomainError("score series lengths differ")
    _check_series(a, level, replicates)
    block = float(mean_block_length or default_block_length(len(a)))
    point = scoring.skill_score(a.mean(), b.mean())
    reps = _bootstrap_means(np.column_stack([a, b]), replicates, block, np.random.default_rng(seed))
    with np.errstate(divide="ignore", invalid="ignore"):
        skill = 1.0 - reps[:, 0] / reps[:, 1]
    return _percentile_ci(point, skill, level, replicates, block)


# stratification and thresholds -----------------------------------------------

STRATA = ("low", "medium", "high")


def stratified_scores(ensemble_means, scores, ref_scores=None, groups=None, cuts=(10, 90)):
    """Mean scores in low / medium / high ensemble-mean strata.

    Cut points are linear-interpolation percentiles of the ensemble means,
    computed separately inside each entry of ``groups`` (e.g. lead times).
    Low is strictly below the lower cut, high strictly above the upper cut.
    Strata with fewer than two cases are reported as empty.
    """
    m = np.asarray(ensemble_means, dtype=float).ravel()
    s = np.asarray(scores, dtype=float).ravel()
    if m.size == 0 or m.shape != s.shape:
        raise DomainError("need equally long nonempty means and scores")
    r = None if ref_scores is None else np.asarray(ref_scores, dtype=float).ravel()
    g = np.zeros(m.size, dtype=np.int64) if groups is None else np.unique(np.asarray(groups), return_inverse=True)[1]
    label = np.empty(m.size, dtype=object)
    for grp in np.unique(g):
        sel = g == grp
        lo, hi = np.percentile(m[sel], cuts)
        label[sel] = np.where(m[sel] < lo, "low", np.where(m[sel] > hi, "high", "medium"))
    rows = []
    for name in STRATA:
        sel = label == name
        n = int(sel.sum())
        row = {"stratum": name, "n": n, "mean_score": None, "mean_ref": None, "skill": None, "empty": n < 2}
        if n >= 2:
            row["mean_score"] = float(s[sel].mean())
            if r is not None:
                row["mean_ref"] = float(r[sel].mean())
                row["skill"] = scoring.skill_score(row["mean_score"], row["mean_ref"]) if row["mean_ref"] > 0 else None
        rows.append(row)
    return rows


def auto_thresholds(observations, percentiles=(90, 95, 98), groups=None):
    """Observation percentiles used as default twCRPS thresholds.

    Without ``groups`` the percentiles of all observations are returned as
    floats. Otherwise ``groups`` labels every case (lead time, or lead time
    and station) and each entry is an array holding, for every case, the
    percentile of the observations in its group; an entry that is the same
    for all cases collapses to a float.
    """
    o = np.asarray(observations, dtype=float)
    if groups is None:
        return [float(v) for v in np.percentile(o, percentiles)]
    _, inv = np.unique(np.asarray(groups), axis=0, return_inverse=True)
    inv = inv.ravel()
    per_group = np.array([np.percentile(o[inv == g], percentiles) for g in range(inv.max() + 1)])
    out = []
    for j in range(len(percentiles)):
        r = per_group[inv, j]
        out.append(float(r[0]) if np.all(r == r[0]) else r)
    return out


def _per_case(dist, i):
    if isinstance(dist, (list, tuple)):
        return dist[i]
    fields = {k: float(np.asarray(getattr(dist, k)).ravel()[i]) for k in ("mu", "sigma", "xi") if hasattr(dist, k)}
    return type(dist)(**fields)


def twcrps_cases(dists, observations, r):
    """twCRPS of every case. ``dists`` is an array-valued law or a list of laws.

    ``r`` is one threshold or an array with one threshold per case.
    """
    o = np.asarray(observations, dtype=float).ravel()
    rr = np.broadcast_to(np.asarray(r, dtype=float), o.shape)
    return np.array([scoring.twcrps(_per_case(dists, i), o[i], rr[i]) for i in range(o.size)])


def threshold_sweep(dists, observations, thresholds, ref_dists, ref_cache=None, labels=None):
    """Mean twCRPS of candidate and reference and the skill, for each threshold.

    Entries of ``thresholds`` are floats or per-case arrays. ``labels`` names
    each entry in the output rows and keys ``ref_cache``; it defaults to the
    threshold value.
    """
    if len(thresholds) == 0:
        raise DomainError("threshold grid is empty")
    if labels is None:
        labels = [float(r) if np.ndim(r) == 0 else f"t{j}" for j, r in enumerate(thresholds)]
    rows = []
    for r, label in zip(thresholds, labels):
        cand = twcrps_cases(dists, observations, r)
        if ref_cache is not None and label in ref_cache:
            ref = ref_cache[label]
        else:
            ref = twcrps_cases(ref_dists, observations, r)
            if ref_cache is not None:
                ref_cache[label] = ref
        mc, mr = float(cand.mean()), float(ref.mean())
        scalar = np.ndim(r) == 0
        rows.append({"label": label if isinstance(label, str) else f"{label:g}",
                     "threshold": float(r) if scalar else None,
                     "threshold_mean": float(np.mean(r)),
                     "twcrps": mc, "twcrps_ref": mr,
                     "skill": scoring.skill_score(mc, mr) if mr > 0 else None})
    return rows


# report -------------------------------------------------------------------

@dataclass
class ScoreReport:
    """Verification summary of one or more models against a common reference."""

    config: dict
    reference: dict
    models: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return {"schema_version": self.schema_version, "config": self.config,
                "reference": self.reference, "models": self.models}

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DomainError(f"unsupported report schema version {d.get('schema_version')!r}")
        for key in ("config", "reference", "models"):
            if key not in d:
                raise DomainError(f"report lacks {key!r}")
        return cls(d["config"], d["reference"], d["models"], d["schema_version"])

    def write_tables(self, directory):
        """One CSV per model and table kind, for external plotting."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, model in sorted(self.models.items()):
            hist = model.get("pit_histogram")
            if hist:
                e = hist["bin_edges"]
                rows = [{"bin_lower": e[i], "bin_upper": e[i + 1], "count": c} for i, c in enumerate(hist["counts"])]
                written.append(_write_csv(directory / f"{name}_pit.csv", rows))
            if model.get("rank_histogram"):
                rows = [{"rank": i + 1, "count": c} for i, c in enumerate(model["rank_histogram"]["counts"])]
                written.append(_write_csv(directory / f"{name}_rank.csv", rows))
            if model.get("thresholds"):
                written.append(_write_csv(directory / f"{name}_thresholds.csv", model["thresholds"]))
            if model.get("strata"):
                written.append(_write_csv(directory / f"{name}_strata.csv", model["strata"]))
        return written


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt_cell(v) for k, v in row.items()})
    return path


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def ci_dict(ci):
    return {"mean": ci.point, "lower": ci.lower, "upper": ci.upper}


def _laws_apply(dist, fn_param, fn_emp):
    if isinstance(dist, (list, tuple)):
        return np.array([fn_emp(d, i) for i, d in enumerate(dist)], dtype=float)
    return np.asarray(fn_param(dist), dtype=float)


def model_scores(dist, obs, *, ref_crps=None, ens_means=None, groups=None, thresholds=(), ref_dists=None,
                 alpha=None, replicates=DEFAULT_REPLICATES, block=None, seed=0, pit_bins=10,
                 members=None, case_keys=None, ref_cache=None, threshold_labels=None):
    """All verification numbers for one model.

    ``dist`` is an array-valued law (one entry per case) or a list of
    :class:`EmpiricalEnsemble`. ``members`` adds a rank histogram, ``ref_crps``
    skill scores and ``ref_dists`` the threshold-weighted skill. Randomness is
    derived from ``seed`` and, for per-case draws, ``case_keys``.
    """
    o = np.asarray(obs, dtype=float).ravel()
    n = o.size
    keys = case_keys if case_keys is not None else list(range(n))
    block = float(block or default_block_length(n))
    sub = lambda tag: case_seed(seed, tag)  # noqa: E731
    crps = _laws_apply(dist, lambda d: scoring.crps(d, o), lambda d, i: scoring.crps_ensemble(d.values, o[i]))
    median = _laws_apply(dist, lambda d: d.median(), lambda d, i: d.median())
    mean = _laws_apply(dist, lambda d: d.mean(), lambda d, i: d.mean())
    abs_err = np.abs(median - o)
    sq_err = (mean - o) ** 2
    out = {"n_cases": n}
    boot = dict(replicates=replicates, mean_block_length=block)
    out["crps"] = ci_dict(stationary_bootstrap_ci(crps, seed=sub("crps"), **boot))
    out["mae"] = ci_dict(stationary_bootstrap_ci(abs_err, seed=sub("mae"), **boot))
    mse = stationary_bootstrap_ci(sq_err, seed=sub("rmse"), **boot)
    out["rmse"] = {"mean": math.sqrt(mse.point), "lower": math.sqrt(mse.lower), "upper": math.sqrt(mse.upper)}
    if not isinstance(dist, (list, tuple)):
        out["logs"] = float(np.mean(scoring.log_score(dist, o)))
    if ref_crps is not None:
        out["crpss"] = ci_dict(stationary_bootstrap_skill_ci(crps, ref_crps, seed=sub("crpss"), **boot))
    if alpha is not None:
        lo = _laws_apply(dist, lambda d: d.quantile(alpha / 2), lambda d, i: d.quantile(alpha / 2))
        hi = _laws_apply(dist, lambda d: d.quantile(1 - alpha / 2), lambda d, i: d.quantile(1 - alpha / 2))
        out["interval"] = asdict(coverage_and_width(lo, hi, o, nominal=100.0 * (1.0 - alpha)))
    if isinstance(dist, (list, tuple)):
        pits = np.array([pit(d, o[i], case_seed(seed, "pit", *_key(keys[i]))) for i, d in enumerate(dist)])
    else:
        pits = np.asarray(pit(dist, o), dtype=float)
    out["pit_histogram"] = asdict(pit_histogram(pits, pit_bins))
    if members is not None:
        seeds = [case_seed(seed, "rank", *_key(k)) for k in keys]
        ranks = verification_ranks(members, o, seeds)
        out["rank_histogram"] = asdict(rank_histogram(ranks, np.shape(members)[1]))
    if ens_means is not None:
        out["strata"] = stratified_scores(ens_means, crps, ref_crps, groups)
    if len(thresholds) and ref_dists is not None:
        out["thresholds"] = threshold_sweep(dist, o, list(thresholds), ref_dists, ref_cache,
                                            labels=threshold_labels)
    if getattr(dist, "family", None) == "gev":
        g0 = np.asarray(dist.prob_negative(), dtype=float)
        out["prob_negative"] = {"mean": float(g0.mean()),
                                **{f"q{q}": float(v) for q, v in zip((90, 95, 99), np.percentile(g0, [90, 95, 99]))}}
    elif getattr(dist, "family", None) in ("tn", "ln", "tgev"):
        out["prob_negative"] = {"mean": 0.0, "q90": 0.0, "q95": 0.0, "q99": 0.0}
    return out, crps


def _key(k):
    return k if isinstance(k, tuple) else (k,)
