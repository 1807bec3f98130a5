"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps

from windemos import scoring
from windemos.cli import main
from windemos.dataio import SyntheticConfig, generate_synthetic, low_wind_config, standard_benchmark_config
from windemos.distributions import (
    GevParams,
    LogNormalParams,
    TgevParams,
    TruncNormalParams,
    ln_params_from_moments,
)
from windemos.emos import EmosCoefficients, FitConfig, TrainingWindow, build_params, climatology_members, fit
from windemos.emos import objective as emos_objective
from windemos.emos import rolling_calibrate
from windemos.errors import DegenerateDistributionError
from windemos.verification import (
    case_seed,
    central_interval,
    coverage_and_width,
    nominal_alpha,
    rank_histogram,
    stationary_bootstrap_ci,
    verification_ranks,
)

SHAPE_LO, SHAPE_HI = -0.278, 1.0 / 3.0
# shape strata covering ]-0.278, 1/3[ including the Gumbel limit and its neighbours
SHAPE_STRATA = [(-0.277, -0.15), (-0.15, -0.02), (-0.02, -1e-4), (-1e-7, -1e-7), (0.0, 0.0), (1e-7, 1e-7),
                (1e-4, 0.02), (0.02, 0.15), (0.15, 0.333)]


def tgev_tuples(seed, n_min=200):
    """Random (mu, sigma, xi, x) with mu in [-2, 10], sigma in [0.1, 5], x in [0, 30], xi stratified."""
    rng = np.random.default_rng(seed)
    out = []
    per = math.ceil(n_min / len(SHAPE_STRATA)) + 2
    for lo, hi in SHAPE_STRATA:
        got = 0
        while got < per:
            mu, sigma, x = rng.uniform(-2, 10), rng.uniform(0.1, 5), rng.uniform(0, 30)
            xi = lo if lo == hi else rng.uniform(lo, hi)
            try:
                TgevParams(mu, sigma, xi)
            except DegenerateDistributionError:
                continue
            out.append((mu, sigma, xi, x))
            got += 1
    return out


def x_g0_integral(p):
    """Quadrature of x g0(x) over the support of a TGEV law.

    Cuts reach far into the upper tail: with shape -1e-7 the finite upper
    endpoint lies near 1e7 scale units and a single last panel loses mass.
    An infinite last panel is mapped by x = a e^t, turning the power-law
    tail into an exponential one.
    """
    lo, hi = p.support()
    probs = (1e-6, 0.01, 0.5, 0.99, 1 - 1e-6, 1 - 1e-9, 1 - 1e-12, 1 - 1e-15)
    pts = sorted({float(p.quantile(q)) for q in probs})
    cuts = [lo] + [c for c in pts if lo < c < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if math.isinf(b):
            # beyond t = 300 the mapped integrand is below 1e-200
            f = lambda t, a=a: (a * math.exp(t)) ** 2 * p.pdf(a * math.exp(t))  # noqa: E731
            total += integrate.quad(f, 0, 300, epsabs=1e-14, epsrel=1e-12, limit=500)[0]
        else:
            total += integrate.quad(lambda x: x * p.pdf(x), a, b, epsabs=1e-14, epsrel=1e-12, limit=500)[0]
    return total


def test_c01_tgev_crps_vs_oracle(verdict):
    t0 = time.perf_counter()
    cases = tgev_tuples(101)
    errs = [abs(scoring.crps_tgev(TgevParams(m, s, k), x) - scoring.crps_numeric(TgevParams(m, s, k), x, None))
            for m, s, k, x in cases]
    dt = time.perf_counter() - t0
    worst = max(errs)
    n_zero = sum(1 for c in cases if c[2] == 0.0)
    n_tiny = sum(1 for c in cases if abs(c[2]) == 1e-7)
    ok = len(cases) >= 200 and worst <= 1e-6 and dt < 60 and n_zero and n_tiny
    verdict(1, ok, f"{len(cases)} tuples (xi=0: {n_zero}, |xi|=1e-7: {n_tiny}), max |err| {worst:.2e} "
                   f"(tol 1e-6), {dt:.1f} s (limit 60 s)")


def test_c02_tgev_mean_vs_quadrature(verdict):
    cases = tgev_tuples(202)
    rel, branches = [], {"positive_lower_endpoint": 0, "nonzero_shape": 0, "gumbel": 0}
    for mu, sigma, xi, _ in cases:
        p = TgevParams(mu, sigma, xi)
        if abs(xi) < 1e-8:
            branches["gumbel"] += 1
        elif xi > 0 and xi * mu - sigma > 0:
            branches["positive_lower_endpoint"] += 1
        else:
            branches["nonzero_shape"] += 1
        ref = x_g0_integral(p)
        rel.append(abs(p.mean() - ref) / abs(ref))
    # boundary xi*mu - sigma = 0 approached from both sides
    gaps = []
    for mu, xi in [(1.0, 0.1), (3.0, 0.25), (8.0, 0.3), (0.5, 0.05)]:
        s = xi * mu
        at = TgevParams(mu, s, xi).mean()
        gaps += [abs(TgevParams(mu, s * (1 + e), xi).mean() - at) for e in (1e-13, -1e-13, 1e-11, -1e-11)]
    ok = max(rel) <= 1e-7 and all(branches.values()) and max(gaps) <= 1e-9
    verdict(2, ok, f"max rel err {max(rel):.2e} (tol 1e-7) over {len(cases)} laws, branches {branches}, "
                   f"boundary gap {max(gaps):.1e} (tol 1e-9)")


def test_c03_gev_reduction(verdict):
    rng = np.random.default_rng(303)
    worst = 0.0
    n = 0
    while n < 200:
        xi = rng.uniform(1e-3, SHAPE_HI)
        sigma = rng.uniform(0.1, 5)
        mu = sigma / xi + rng.uniform(0, 10)  # lower endpoint above zero, so G(0) = 0
        g, t = GevParams(mu, sigma, xi), TgevParams(mu, sigma, xi)
        if g.prob_negative() != 0.0:
            continue
        n += 1
        x = rng.uniform(0, 40, 5)
        y = rng.uniform(0.001, 0.999, 5)
        diffs = [np.abs(t.cdf(x) - g.cdf(x)), np.abs(t.pdf(x) - g.pdf(x)),
                 np.abs(t.quantile(y) - g.quantile(y)) / np.maximum(1, np.abs(g.quantile(y))),
                 abs(t.mean() - g.mean()) / max(1, abs(g.mean())),
                 np.abs(scoring.crps_tgev(t, x) - scoring.crps_gev(g, x))]
        worst = max(worst, max(float(np.max(d)) for d in diffs))
    verdict(3, worst <= 1e-12, f"cdf/pdf/quantile/mean/crps max diff {worst:.1e} over {n} laws with G(0)=0 "
                               f"(tol 1e-12)")


def test_c04_tn_ln_gev_crps_vs_oracle(verdict):
    rng = np.random.default_rng(404)
    worst = {}
    for fam in ("tn", "ln", "gev"):
        errs = []
        for _ in range(200):
            if fam == "tn":
                p, x = TruncNormalParams(rng.uniform(-2, 10), rng.uniform(0.1, 5)), rng.uniform(0, 30)
            elif fam == "ln":
                p = ln_params_from_moments(rng.uniform(0.5, 12), rng.uniform(0.1, 5) ** 2)
                x = rng.uniform(0, 30)
            else:
                lo, hi = SHAPE_STRATA[rng.integers(len(SHAPE_STRATA))]
                xi = lo if lo == hi else rng.uniform(lo, hi)
                p, x = GevParams(rng.uniform(-2, 10), rng.uniform(0.1, 5), xi), rng.uniform(-5, 30)
            errs.append(abs(scoring.crps(p, x) - scoring.crps_numeric(p, x, None)))
        worst[fam] = max(errs)
    ok = max(worst.values()) <= 1e-6
    verdict(4, ok, "max |err| " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " on 200 tuples each "
                   "(tol 1e-6)")


def test_c05_tn_parameter_recovery(verdict):
    # ensemble statistics from the synthetic generator, observations from a known TN link
    cfg = SyntheticConfig(truth_family="tn", n_stations=10, n_days=1000, seed=505)
    ds = generate_synthetic(cfg)
    train = ds.valid_time < ds.valid_time[len(ds) // 2]
    truth = EmosCoefficients("tn", (0.4, 0.3, 0.7), (0.5, 0.4))

    def simulate(mask, seed):
        w = TrainingWindow(ds.members[mask], np.zeros(int(mask.sum())), ds.group_spec)
        p = build_params(truth, w.stats)
        obs = p.quantile(np.random.default_rng(seed).random(len(w)))
        return TrainingWindow(ds.members[mask], obs, ds.group_spec)

    w_train, w_test = simulate(train, 1), simulate(~train, 2)
    est = fit(w_train, "tn")
    loc_err = max(abs(a - b) for a, b in zip(est.loc, truth.loc))
    crps_fit, crps_true = emos_objective(est, w_test), emos_objective(truth, w_test)
    excess = crps_fit / crps_true - 1
    ok = len(w_train) == 5000 and loc_err <= 0.05 and excess <= 0.01
    verdict(5, ok, f"{len(w_train)} training cases, location coefs {tuple(round(v, 3) for v in est.loc)} vs "
                   f"{truth.loc} (max err {loc_err:.3f}, tol 0.05), out-of-sample CRPS {crps_fit:.4f} vs "
                   f"generator {crps_true:.4f} ({100 * excess:+.2f}%, tol 1%)")


@pytest.fixture(scope="module")
def benchmark():
    t0 = time.perf_counter()
    out = {}
    for truth in ("tgev", "tn", "ln"):
        ds = generate_synthetic(standard_benchmark_config(truth))
        fams = ("tn", "ln", "gev", "tgev") if truth == "tgev" else (truth,)
        cals = {f: rolling_calibrate(ds, f, 30) for f in fams}
        out[truth] = (ds, cals)
    return out, time.perf_counter() - t0


def test_c06_benchmark(benchmark, verdict):
    runs, dt = benchmark
    ds, cals = runs["tgev"]
    idx = cals["tgev"].case_index
    obs = ds.obs[idx]
    n_days = len(np.unique(ds.dates[idx]))
    raw = float(np.mean(scoring.crps_ensemble(ds.members[idx], obs)))
    clim = float(np.mean([scoring.crps_ensemble(c, o) for c, o in zip(climatology_members(ds, idx, 30), obs)]))
    means, msgs, ok = {}, [], True
    for fam, cal in cals.items():
        assert np.array_equal(cal.case_index, idx)
        means[fam] = float(np.mean(scoring.crps(cal.params(), obs)))
        ok &= means[fam] < raw and means[fam] < clim
    msgs.append("mean CRPS " + ", ".join(f"{k} {v:.4f}" for k, v in means.items())
                + f" vs raw {raw:.4f}, climatology {clim:.4f}")
    pvals = {}
    for truth, (tds, tcals) in runs.items():
        cal = tcals[truth]
        pvals[truth] = sps.kstest(cal.params().cdf(tds.obs[cal.case_index]), "uniform").pvalue
    ok &= min(pvals.values()) > 0.01
    msgs.append("matched-family PIT KS p " + ", ".join(f"{k} {v:.3f}" for k, v in pvals.items()))
    seeds = [case_seed(0, *ds.keys()[i]) for i in idx]
    h = rank_histogram(verification_ranks(ds.members[idx], obs, seeds), ds.group_spec.n_members)
    share = h.total / (h.ensemble_size + 1)
    ends = (h.counts[0] / share, h.counts[-1] / share)
    ok &= min(ends) > 2
    msgs.append(f"raw rank end bins {ends[0]:.2f}x / {ends[1]:.2f}x uniform share")
    ok &= n_days == 300 and len(ds.stations) == 10 and dt < 600
    msgs.append(f"{n_days} days x {len(ds.stations)} stations, {dt:.0f} s (limit 600 s)")
    verdict(6, ok, "; ".join(msgs))


def test_c07_coverage(verdict):
    rng = np.random.default_rng(707)
    n = 10000
    res = []
    for k, fam in ((8, "tn"), (11, "tgev"), (50, "ln")):
        w = rng.uniform(0.5, 10, n)
        if fam == "tn":
            p = TruncNormalParams(w, 0.6 + 0.2 * w)
        elif fam == "ln":
            p = ln_params_from_moments(w, (0.6 + 0.2 * w) ** 2)
        else:
            p = TgevParams(w, 0.6 + 0.15 * w, np.full(n, 0.1))
        obs = p.quantile(rng.random(n))
        alpha = nominal_alpha(k)
        lo, hi = central_interval(p, alpha)
        st = coverage_and_width(lo, hi, obs, 100 * (1 - alpha))
        res.append((k, fam, st.nominal, st.coverage))
    ok = all(abs(c - nom) <= 2 for *_, nom, c in res)
    verdict(7, ok, "; ".join(f"K={k} ({fam}) nominal {nom:.2f}% empirical {c:.2f}%" for k, fam, nom, c in res)
                   + f" over {n} cases each (tol 2 points)")


def test_c08_negative_mass_report(tmp_path, monkeypatch, verdict):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "cfg.json").write_text(json.dumps(low_wind_config().to_dict()))
    assert main(["simulate", "--config", "cfg.json", "--out", "calm.csv"]) == 0
    for fam in ("gev", "tgev"):
        assert main(["fit", "--data", "calm.csv", "--family", fam, "--window-days", "30", "--out", fam]) == 0
    assert main(["verify", "--data", "calm.csv", "--params", "gev.params.csv", "tgev.params.csv",
                 "--bootstrap", "200", "--out", "calm.json"]) == 0
    models = json.loads((tmp_path / "calm.json").read_text())["models"]
    gev, tgev = models["gev"]["prob_negative"], models["tgev"]["prob_negative"]
    rows = np.genfromtxt(tmp_path / "tgev.params.csv", delimiter=",", skip_header=1, usecols=(4, 5, 6))
    tgev_cdf0 = float(np.max(TgevParams(rows[:, 0], rows[:, 1], rows[:, 2]).cdf(0.0)))
    ok = gev["mean"] > 0 and tgev["mean"] == 0 and tgev_cdf0 == 0
    verdict(8, ok, f"GEV prob_negative mean {gev['mean']:.4f} (q90 {gev['q90']:.4f}, q99 {gev['q99']:.4f}); "
                   f"TGEV mean {tgev['mean']}, max TGEV CDF at 0 {tgev_cdf0}")


def test_c09_bootstrap(verdict):
    x = np.random.default_rng(909).normal(size=500)
    ci = stationary_bootstrap_ci(x, replicates=2000, seed=9)
    target = 1.96 / math.sqrt(500)
    lower_half, upper_half = ci.point - ci.lower, ci.upper - ci.point
    const = stationary_bootstrap_ci(np.full(500, 4.2), replicates=2000, seed=9)
    ok = (abs(lower_half / target - 1) <= 0.25 and abs(upper_half / target - 1) <= 0.25
          and const.upper - const.lower == 0)
    verdict(9, ok, f"half-widths {lower_half:.4f}/{upper_half:.4f} vs 1.96/sqrt(n) {target:.4f} (tol 25%); "
                   f"constant series width {const.upper - const.lower}")


def test_c10_twcrps_sentinel(verdict):
    rng = np.random.default_rng(1010)
    errs = []
    for i in range(50):
        kind = i % 4
        mu, sigma = rng.uniform(0, 8), rng.uniform(0.2, 3)
        if kind == 0:
            p = TruncNormalParams(mu, sigma)
        elif kind == 1:
            p = ln_params_from_moments(mu + 0.5, sigma ** 2)
        elif kind == 2:
            p = GevParams(mu, sigma, rng.uniform(-0.27, 0.33))
        else:
            p = TgevParams(mu, sigma, rng.uniform(-0.27, 0.33))
        x = rng.uniform(0, 20)
        errs.append(abs(scoring.twcrps(p, x, scoring.NO_THRESHOLD) - scoring.crps(p, x)))
    verdict(10, max(errs) <= 1e-8, f"max |twcrps(no threshold) - crps| {max(errs):.1e} over 50 cases (tol 1e-8)")


def _pipeline(directory, monkeypatch):
    monkeypatch.chdir(directory)
    cfg = SyntheticConfig(n_stations=3, n_days=45, seed=1111)
    (directory / "cfg.json").write_text(json.dumps(cfg.to_dict()))
    assert main(["simulate", "--config", "cfg.json", "--out", "data.csv"]) == 0
    assert main(["fit", "--data", "data.csv", "--family", "tgev", "--out", "tgev"]) == 0
    assert main(["verify", "--data", "data.csv", "--params", "tgev.params.csv", "--baselines",
                 "--bootstrap", "300", "--seed", "42", "--out", "report.json"]) == 0
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def _strip_timings(raw):
    d = json.loads(raw)
    d.pop("timings")
    return d


def test_c11_determinism(tmp_path, monkeypatch, verdict):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _pipeline(tmp_path / "a", monkeypatch)
    b = _pipeline(tmp_path / "b", monkeypatch)
    manifests = [k for k in a if k.endswith(".manifest.json")]
    outputs = [k for k in a if k not in manifests]
    same_outputs = set(a) == set(b) and all(a[k] == b[k] for k in outputs)
    same_manifests = all(_strip_timings(a[k]) == _strip_timings(b[k]) for k in manifests)
    ok = same_outputs and same_manifests and len(manifests) == 3
    verdict(11, ok, f"{len(outputs)} output files byte-identical across two runs: {same_outputs}; "
                    f"{len(manifests)} manifests identical apart from wall-clock timings: {same_manifests}")
