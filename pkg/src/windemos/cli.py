"""Command-line interface: ``windemos simulate|fit|verify|report``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error. Every command writes a ``*.manifest.json`` next to its
main output recording the command, configuration, input digests, seed,
software version and timings.
"""
import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _core, scoring
from .dataio import SyntheticConfig, generate_synthetic, load_dataset, save_dataset
from .distributions import EmpiricalEnsemble, make_params
from .emos import FitConfig, climatology_members, ensemble_stats, rolling_calibrate
from .errors import ConfigError, WindEmosError
from .verification import (
    DEFAULT_REPLICATES,
    ScoreReport,
    auto_thresholds,
    model_scores,
    nominal_alpha,
)

log = logging.getLogger("windemos")

PARAMS_HEADER = ["station_id", "valid_time", "lead_time_h", "family", "mu", "sigma", "xi", "window_days", "fit_id"]
OBJECTIVE_FLAGS = {"crps": "mean_crps", "logs": "log_likelihood"}


class UsageError(ConfigError):
    pass


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_path, command, config, inputs, seed, t0):
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "seed": seed,
        "software": {"windemos": __version__, "backend": _core.BACKEND},
        "timings": {"wall_seconds": round(time.perf_counter() - t0, 3)},
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def _fnum(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


# simulate --------------------------------------------------------------------

def cmd_simulate(args):
    t0 = time.perf_counter()
    cfg = SyntheticConfig.from_json(args.config)
    if args.seed is not None:
        cfg = SyntheticConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    ds = generate_synthetic(cfg)
    save_dataset(ds, args.out)
    _write_manifest(args.out, "simulate", cfg.to_dict(), {"config": _sha256(args.config)}, cfg.seed, t0)
    log.info("wrote %d cases to %s", len(ds), args.out)
    return 0


# fit ------------------------------------------------------------------------

def cmd_fit(args):
    t0 = time.perf_counter()
    config = FitConfig(objective=OBJECTIVE_FLAGS[args.objective], max_iterations=args.max_iterations,
                       scale_link=args.scale_link or "")
    ds = load_dataset(args.data, missing=args.missing)
    if ds.dropped:
        log.warning("dropped %d incomplete rows", ds.dropped)
    cal = rolling_calibrate(ds, args.family, args.window_days, args.scope, config)
    if cal.skipped:
        reasons = {}
        for _, why in cal.skipped:
            reasons[why] = reasons.get(why, 0) + 1
        for why, n in sorted(reasons.items()):
            log.warning("skipped %d cases: %s", n, why)
    if len(cal.case_index) == 0:
        log.error("no case could be calibrated")
        return 1
    prefix = Path(args.out)
    params_path = Path(str(prefix) + ".params.csv")
    keys = ds.keys()
    with open(params_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARAMS_HEADER)
        for j, i in enumerate(cal.case_index):
            s, t, h = keys[i]
            w.writerow([s, t, h, cal.family, _fnum(cal.mu[j]), _fnum(cal.sigma[j]), _fnum(cal.xi[j]),
                        cal.window_days, cal.fit_id[j]])
    coefs = {
        "schema_version": 1,
        "family": cal.family,
        "window_days": cal.window_days,
        "scope": cal.scope,
        "fit_config": config.to_dict(),
        "fits": {k: v.to_dict() for k, v in sorted(cal.coefficients.items())},
        "fallbacks": cal.fallbacks,
        "skipped": [{"case": list(keys[i]), "reason": why} for i, why in cal.skipped],
    }
    coef_path = Path(str(prefix) + ".coefs.json")
    coef_path.write_text(json.dumps(coefs, sort_keys=True, indent=2) + "\n")
    snapshot = {"family": args.family, "window_days": args.window_days, "scope": args.scope,
                "objective": args.objective, "scale_link": config.scale_link or None,
                "max_iterations": args.max_iterations, "missing": args.missing}
    _write_manifest(prefix, "fit", snapshot, {"data": ds.digest()}, args.seed, t0)
    log.info("calibrated %d cases, skipped %d", len(cal.case_index), len(cal.skipped))
    return 0


# verify ---------------------------------------------------------------------

def _read_params(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise WindEmosError(f"cannot open params file {path}: {exc}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != PARAMS_HEADER:
        raise WindEmosError(f"{path}: not a params file")
    out = {}
    families = set()
    windows = set()
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            key = (r[0], r[1], int(r[2]))
            families.add(r[3])
            windows.add(int(r[7]))
            out[key] = (float(r[4]), float(r[5]), float(r[6]) if r[6] else math.nan)
        except (ValueError, IndexError) as exc:
            raise WindEmosError(f"{path}:{lineno}: malformed row") from exc
    if len(families) != 1 or len(windows) != 1:
        raise WindEmosError(f"{path}: mixed families or window lengths")
    return families.pop(), windows.pop(), out


def _model_name(path):
    name = Path(path).name
    return name[: -len(".params.csv")] if name.endswith(".params.csv") else Path(path).stem


def _law(family, table, keys):
    arr = np.array([table[k] for k in keys])
    return make_params(family, arr[:, 0], arr[:, 1], arr[:, 2] if family in ("gev", "tgev") else None)


AUTO_PERCENTILES = (90, 95, 98)


def _parse_thresholds(text, obs, groups):
    """Thresholds and their labels; ``auto`` uses percentiles per ``groups``."""
    if text == "auto":
        return auto_thresholds(obs, AUTO_PERCENTILES, groups), [f"p{q}" for q in AUTO_PERCENTILES]
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --thresholds {text!r}") from exc
    if not vals:
        raise UsageError("--thresholds needs at least one value")
    return vals, None


def cmd_verify(args):
    t0 = time.perf_counter()
    ds = load_dataset(args.data, missing=args.missing)
    index = {k: i for i, k in enumerate(ds.keys())}
    loaded = [(p, *_read_params(p)) for p in args.params]
    key_set = set(loaded[0][3])
    for p, _, _, table in loaded[1:]:
        diff = sorted(key_set.symmetric_difference(table))
        if diff:
            raise WindEmosError(f"{p}: cases differ from {loaded[0][0]}: {diff[:10]}")
    missing = sorted(k for k in key_set if k not in index)
    if missing:
        raise WindEmosError(f"{len(missing)} params cases not in the dataset, e.g. {missing[:10]}")
    keys = sorted(key_set, key=lambda k: index[k])
    rows = np.array([index[k] for k in keys])
    obs = ds.obs[rows]
    members = ds.members[rows]
    window_days = loaded[0][2]

    raw = [EmpiricalEnsemble(m) for m in members]
    raw_crps = _core.crps_ensemble(np.ascontiguousarray(members), obs)
    ref_kind = args.reference
    if ref_kind == "raw":
        ref_dists, ref_crps = raw, raw_crps
    elif ref_kind == "climatology":
        clim = climatology_members(ds, rows, window_days)
        if any(len(c) == 0 for c in clim):
            raise WindEmosError("a case has no climatology in its training window")
        ref_dists = [EmpiricalEnsemble(c) for c in clim]
        ref_crps = np.array([scoring.crps_ensemble(c, o) for c, o in zip(clim, obs)])
    else:
        fam, _, table = _read_params(ref_kind)
        if set(table) != key_set:
            raise WindEmosError(f"reference {ref_kind} covers different cases")
        ref_dists = _law(fam, table, keys)
        ref_crps = np.asarray(scoring.crps(ref_dists, obs), dtype=float)

    k = ds.group_spec.n_members
    alpha = nominal_alpha(k) if args.alpha == "auto" else float(args.alpha)
    if not 0 < alpha < 1:
        raise UsageError("--alpha must lie in ]0, 1[")
    leads = ds.lead_time_h[rows]
    if args.threshold_pooling == "station":
        pool = np.stack([leads, np.unique(ds.station_id[rows], return_inverse=True)[1].ravel()], axis=1)
    else:
        pool = leads
    thresholds, labels = _parse_thresholds(args.thresholds, obs, pool)
    block = None if args.block_length == "auto" else float(args.block_length)
    stats = ensemble_stats(members, ds.group_spec)
    case_keys = [keys[i] for i in range(len(keys))]
    common = dict(ref_crps=ref_crps, ens_means=stats.mean, groups=leads, thresholds=thresholds,
                  ref_dists=ref_dists, alpha=alpha, replicates=args.bootstrap, block=block,
                  seed=args.seed, pit_bins=args.pit_bins, case_keys=case_keys, ref_cache={},
                  threshold_labels=labels)
    models = {}
    for p, fam, _, table in loaded:
        name = _model_name(p)
        res, _ = model_scores(_law(fam, table, keys), obs, **common)
        res["family"] = fam
        models[name] = res
    if args.baselines:
        res, _ = model_scores(raw, obs, members=members, **common)
        res["family"] = "raw"
        models["raw_ensemble"] = res
        clim = climatology_members(ds, rows, window_days)
        res, _ = model_scores([EmpiricalEnsemble(c) for c in clim], obs, **common)
        res["family"] = "climatology"
        models["climatology"] = res
    config = {"reference": ref_kind, "alpha": alpha, "nominal_coverage": 100.0 * (1 - alpha),
              "ensemble_size": k, "thresholds": args.thresholds, "threshold_pooling": args.threshold_pooling,
              "bootstrap_replicates": args.bootstrap,
              "mean_block_length": block or math.ceil(len(obs) ** (1 / 3)), "pit_bins": args.pit_bins,
              "seed": args.seed, "window_days": window_days, "n_cases": len(obs)}
    reference = {"kind": ref_kind, "mean_crps": float(np.mean(ref_crps)),
                 "raw_mean_crps": float(np.mean(raw_crps))}
    report = ScoreReport(config, reference, models)
    out = Path(args.out)
    out.write_text(report.to_json())
    report.write_tables(out.with_name(out.stem + "_tables"))
    inputs = {"data": ds.digest(), "params": {str(p): _sha256(p) for p in args.params}}
    _write_manifest(out, "verify", {**config, "params": [str(p) for p in args.params]}, inputs, args.seed, t0)
    return 0


# report ---------------------------------------------------------------------

REPORT_COLUMNS = ["model", "family", "n_cases", "crps", "crps_lower", "crps_upper", "mae", "rmse",
                  "logs", "crpss", "nominal_coverage", "coverage", "width", "prob_negative_mean"]


def report_rows(reports):
    rows = []
    for rep in reports:
        for name, m in sorted(rep.models.items()):
            iv = m.get("interval") or {}
            rows.append({
                "model": name, "family": m.get("family"), "n_cases": m["n_cases"],
                "crps": m["crps"]["mean"], "crps_lower": m["crps"]["lower"], "crps_upper": m["crps"]["upper"],
                "mae": m["mae"]["mean"], "rmse": m["rmse"]["mean"], "logs": m.get("logs"),
                "crpss": (m.get("crpss") or {}).get("mean"), "nominal_coverage": iv.get("nominal"),
                "coverage": iv.get("coverage"), "width": iv.get("width"),
                "prob_negative_mean": (m.get("prob_negative") or {}).get("mean"),
            })
    return rows


def cmd_report(args):
    t0 = time.perf_counter()
    reports = []
    for p in args.reports:
        try:
            data = json.loads(Path(p).read_text())
        except (OSError, ValueError) as exc:
            raise WindEmosError(f"cannot read report {p}: {exc}") from exc
        reports.append(ScoreReport.from_dict(data))
    rows = report_rows(reports)
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    out.with_suffix(".json").write_text(json.dumps({"schema_version": 1, "rows": rows}, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "report", {"reports": [str(p) for p in args.reports]},
                    {str(p): _sha256(p) for p in args.reports}, None, t0)
    return 0


# entry point --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="windemos", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"windemos {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", required=True, help="synthetic generator config (JSON)")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="rolling-window EMOS calibration")
    f.add_argument("--data", required=True)
    f.add_argument("--family", required=True, choices=["tn", "ln", "gev", "tgev"])
    f.add_argument("--window-days", type=int, default=30)
    f.add_argument("--scope", choices=["global", "local"], default="global")
    f.add_argument("--objective", choices=sorted(OBJECTIVE_FLAGS), default="crps")
    f.add_argument("--scale-link", choices=["mean_linear", "sd_linear", "var_linear", "md_linear"])
    f.add_argument("--max-iterations", type=int, default=200)
    f.add_argument("--missing", choices=["drop", "strict"], default="drop")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="output prefix")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("verify", help="score calibrated forecasts")
    v.add_argument("--data", required=True)
    v.add_argument("--params", required=True, nargs="+", help="params files written by 'fit'")
    v.add_argument("--reference", default="raw", help="raw, climatology or a params file")
    v.add_argument("--thresholds", default="auto", help="'auto' or comma-separated values")
    v.add_argument("--threshold-pooling", choices=["stations", "station"], default="stations",
                   help="auto thresholds per lead time over all stations, or per station")
    v.add_argument("--alpha", default="auto")
    v.add_argument("--bootstrap", type=int, default=DEFAULT_REPLICATES)
    v.add_argument("--block-length", default="auto")
    v.add_argument("--pit-bins", type=int, default=10)
    v.add_argument("--baselines", action="store_true", help="also score raw ensemble and climatology")
    v.add_argument("--missing", choices=["drop", "strict"], default="drop")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True, help="report JSON path")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="combine score reports into one table")
    r.add_argument("reports", nargs="+")
    r.add_argument("--out", required=True, help="table CSV path (a JSON copy is written alongside)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="windemos: %(levelname)s: %(message)s")
    try:
        if getattr(args, "bootstrap", 1) < 1 or getattr(args, "window_days", 1) < 1:
            raise UsageError("counts must be positive")
        return args.func(args)
    except ConfigError as exc:
        print(f"windemos: error: {exc}", file=sys.stderr)
        return 2
    except (WindEmosError, OSError) as exc:
        print(f"windemos: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
