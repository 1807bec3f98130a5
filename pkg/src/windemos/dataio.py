"""Forecast datasets: CSV ingestion, validation, writing, and synthetic data.

CSV layout
----------
Header ``station_id,valid_time,lead_time_h,obs,m_1,...,m_M``; ``valid_time``
is RFC-3339 UTC (``2020-01-31T00:00:00Z``) and numbers are written with six
decimals. Member columns are grouped positionally; the group sizes live in a
sidecar ``<stem>.groups.json`` holding ``{"group_sizes": [...]}``.
"""
import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import TgevParams, TruncNormalParams, ln_params_from_moments
from .errors import ConfigError, DataError

MISSING_TOKENS = frozenset({"", "na", "nan", "null"})
MISSING_POLICIES = ("drop", "strict")
TRUTH_FAMILIES = ("tn", "ln", "tgev")


@dataclass(frozen=True)
class GroupSpec:
    """Sizes of the exchangeable member groups, in column order."""

    group_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(m) for m in self.group_sizes)
        if not sizes or any(m < 1 for m in sizes):
            raise DataError("group sizes must be a nonempty list of positive counts")
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def n_members(self):
        return sum(self.group_sizes)

    @property
    def n_groups(self):
        return len(self.group_sizes)

    @property
    def slices(self):
        edges = np.cumsum((0,) + self.group_sizes)
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def to_json(self):
        return json.dumps({"group_sizes": list(self.group_sizes)})


@dataclass(frozen=True)
class EnsembleForecast:
    """One forecast case with its metadata."""

    station_id: str
    valid_time: np.datetime64
    lead_time_h: int
    members: np.ndarray


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Forecast cases with paired observations, stored column-wise.

    Rows are kept in canonical order (lead time, valid time, station) so that
    equal content always means equal arrays.
    """

    station_id: np.ndarray
    valid_time: np.ndarray
    lead_time_h: np.ndarray
    obs: np.ndarray
    members: np.ndarray
    group_spec: GroupSpec
    dropped: int = 0
    dropped_lines: tuple = field(default=(), repr=False)

    def __post_init__(self):
        sid = np.asarray(self.station_id, dtype=str)
        vt = np.asarray(self.valid_time, dtype="datetime64[s]")
        lt = np.asarray(self.lead_time_h, dtype=np.int64)
        obs = np.asarray(self.obs, dtype=float)
        mem = np.asarray(self.members, dtype=float).reshape(len(obs), -1)
        n = len(obs)
        if not (len(sid) == len(vt) == len(lt) == n):
            raise DataError("column lengths differ")
        if mem.shape[1] != self.group_spec.n_members:
            raise DataError(f"{mem.shape[1]} member columns but group sizes sum to {self.group_spec.n_members}")
        for name, arr in (("obs", obs), ("members", mem)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite {name} value")
            if np.any(arr < 0):
                raise DataError(f"negative wind speed in {name}")
        order = np.lexsort((sid, vt, lt))
        sid, vt, lt, obs, mem = sid[order], vt[order], lt[order], obs[order], mem[order]
        if n > 1:
            same = (sid[1:] == sid[:-1]) & (vt[1:] == vt[:-1]) & (lt[1:] == lt[:-1])
            if np.any(same):
                i = int(np.argmax(same))
                raise DataError(f"duplicate case ({sid[i]}, {vt[i]}, {lt[i]} h)")
        object.__setattr__(self, "station_id", _frozen(sid))
        object.__setattr__(self, "valid_time", _frozen(vt))
        object.__setattr__(self, "lead_time_h", _frozen(lt))
        object.__setattr__(self, "obs", _frozen(obs))
        object.__setattr__(self, "members", _frozen(mem))

    def __len__(self):
        return len(self.obs)

    def forecast(self, i):
        return EnsembleForecast(str(self.station_id[i]), self.valid_time[i],
                                int(self.lead_time_h[i]), self.members[i].copy())

    def __iter__(self):
        return (self.forecast(i) for i in range(len(self)))

    @property
    def dates(self):
        """Valid dates (day resolution) of every case."""
        return self.valid_time.astype("datetime64[D]")

    @property
    def stations(self):
        return tuple(np.unique(self.station_id).tolist())

    @property
    def lead_times(self):
        return tuple(int(v) for v in np.unique(self.lead_time_h))

    def subset(self, mask):
        m = np.asarray(mask)
        return Dataset(self.station_id[m], self.valid_time[m], self.lead_time_h[m],
                       self.obs[m], self.members[m], self.group_spec)

    def keys(self):
        """``(station, valid_time, lead)`` tuple per case."""
        return [(s, _fmt_time(t), int(h)) for s, t, h in zip(self.station_id, self.valid_time, self.lead_time_h)]

    def digest(self):
        """SHA-256 of the canonical CSV serialization."""
        h = hashlib.sha256()
        for line in _csv_lines(self):
            h.update(line.encode())
        h.update(self.group_spec.to_json().encode())
        return h.hexdigest()


def _fmt_time(t):
    return str(np.datetime_as_string(np.datetime64(t, "s"), unit="s")) + "Z"


def _fmt(v):
    return f"{v:.6f}"


def _csv_lines(ds):
    m = ds.group_spec.n_members
    yield ",".join(["station_id", "valid_time", "lead_time_h", "obs"] + [f"m_{i}" for i in range(1, m + 1)]) + "\n"
    for i in range(len(ds)):
        row = [str(ds.station_id[i]), _fmt_time(ds.valid_time[i]), str(int(ds.lead_time_h[i])), _fmt(ds.obs[i])]
        row += [_fmt(v) for v in ds.members[i]]
        yield ",".join(row) + "\n"


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".groups.json")


def save_dataset(ds, path):
    """Write ``ds`` as CSV plus the group-size sidecar next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.writelines(_csv_lines(ds))
    sidecar_path(path).write_text(ds.group_spec.to_json() + "\n")


def _parse_time(text):
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1]
    elif t.endswith("+00:00"):
        t = t[:-6]
    else:
        raise ValueError(f"valid_time {text!r} is not UTC")
    return np.datetime64(t, "s")


def load_group_spec(path):
    try:
        data = json.loads(Path(path).read_text())
        return GroupSpec(tuple(data["group_sizes"]))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read group sizes from {path}: {exc}") from exc


def load_dataset(path, group_spec=None, missing="drop"):
    """Read and validate a CSV dataset.

    Parameters
    ----------
    path : path-like
        CSV file in the layout described in the module docstring.
    group_spec : GroupSpec, optional
        Defaults to the sidecar file, or a single group if there is none.
    missing : {"drop", "strict"}
        Rows with an empty or ``NA`` observation or member are dropped and
        counted, or raise under ``"strict"``. Malformed rows always raise.

    Raises
    ------
    DataError
        Carrying the offending line numbers in ``.lines``.
    """
    if missing not in MISSING_POLICIES:
        raise ConfigError(f"missing-data policy must be one of {MISSING_POLICIES}")
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError("empty file: no header")
        header = [h.strip() for h in header]
        m = len(header) - 4
        expected = ["station_id", "valid_time", "lead_time_h", "obs"] + [f"m_{i}" for i in range(1, m + 1)]
        if m < 1 or header != expected:
            raise DataError(f"unexpected header; want {','.join(expected[:5])},...", lines=[1])
        rows, bad, gaps = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != len(header):
                bad.append(lineno)
                continue
            try:
                sid = rec[0].strip()
                if not sid:
                    raise ValueError("empty station id")
                vt = _parse_time(rec[1])
                lt = int(rec[2])
                vals = [math.nan if v.strip().lower() in MISSING_TOKENS else float(v) for v in rec[3:]]
            except ValueError:
                bad.append(lineno)
                continue
            if any(math.isnan(v) for v in vals):
                gaps.append(lineno)
                continue
            rows.append((sid, vt, lt, vals, lineno))
    if bad or (gaps and missing == "strict"):
        lines = sorted(bad + (gaps if missing == "strict" else []))
        raise DataError(f"{len(lines)} malformed or incomplete row(s) at line(s) {lines}", lines=lines)
    if not rows:
        raise DataError("dataset has no valid rows")
    for sid, vt, lt, vals, lineno in rows:
        if any(v < 0 or math.isinf(v) for v in vals):
            raise DataError(f"negative or infinite wind speed at line {lineno}", lines=[lineno])
    if group_spec is None:
        side = sidecar_path(path)
        group_spec = load_group_spec(side) if side.exists() else GroupSpec((m,))
    vals = np.array([r[3] for r in rows], dtype=float)
    return Dataset(
        np.array([r[0] for r in rows]),
        np.array([r[1] for r in rows], dtype="datetime64[s]"),
        np.array([r[2] for r in rows], dtype=np.int64),
        vals[:, 0],
        vals[:, 1:],
        group_spec,
        dropped=len(gaps),
        dropped_lines=tuple(gaps),
    )


@dataclass(frozen=True)
class SyntheticConfig:
    """Settings of the synthetic station-by-day generator.

    Each station has a mean wind level; a daily AR(1) anomaly is added to give
    the latent speed ``w``. The observation is drawn from ``truth_family`` with
    location (or mean) ``w`` and scale ``scale0 + scale1 * w``. Members are
    ``max(0, w + bias + station_bias + dispersion * (Z - w))`` with ``Z`` an
    independent draw from the same law, so ``dispersion=1, bias=0`` gives a
    calibrated ensemble.
    """

    truth_family: str = "tgev"
    scale0: float = 0.6
    scale1: float = 0.15
    shape: float = 0.1
    bias: float = 0.5
    dispersion: float = 0.4
    station_bias_sd: float = 0.0
    group_sizes: tuple = (1, 10)
    n_stations: int = 10
    n_days: int = 330
    level_low: float = 3.0
    level_high: float = 8.0
    anomaly_sd: float = 2.0
    ar_coef: float = 0.6
    min_latent: float = 0.1
    lead_time_h: int = 24
    start_date: str = "2020-01-01"
    seed: int = 20240101

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(g) for g in self.group_sizes))
        if self.truth_family not in TRUTH_FAMILIES:
            raise ConfigError(f"truth_family must be one of {TRUTH_FAMILIES}")
        if not self.dispersion > 0:
            raise ConfigError("dispersion factor must be positive")
        if not (self.scale0 > 0 and self.scale1 >= 0):
            raise ConfigError("scale0 must be positive and scale1 nonnegative")
        if self.truth_family == "tgev" and not -0.278 < self.shape < 1 / 3:
            raise ConfigError("shape must lie in ]-0.278, 1/3[")
        if self.n_stations < 1 or self.n_days < 1:
            raise ConfigError("need at least one station and one day")
        if not 0 <= self.ar_coef < 1 or self.anomaly_sd < 0 or self.station_bias_sd < 0:
            raise ConfigError("invalid anomaly settings")
        if not 0 < self.min_latent <= self.level_low <= self.level_high:
            raise ConfigError("need 0 < min_latent <= level_low <= level_high")
        try:
            GroupSpec(self.group_sizes)
            np.datetime64(self.start_date, "D")
        except (DataError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["group_sizes"] = list(self.group_sizes)
        return d

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("synthetic config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


def _truth_quantile(cfg, w, u):
    """Quantiles ``u`` (shape ``w.shape + (k,)``) of the truth law with latent ``w``."""
    wb = np.broadcast_to(w[..., None], u.shape).ravel()
    scale = cfg.scale0 + cfg.scale1 * wb
    if cfg.truth_family == "tn":
        law = TruncNormalParams(wb, scale)
    elif cfg.truth_family == "ln":
        law = ln_params_from_moments(wb, scale ** 2)
    else:
        law = TgevParams(wb, scale, np.full_like(wb, cfg.shape))
    return np.asarray(law.quantile(u.ravel())).reshape(u.shape)


def _uniforms(rng, shape):
    u = rng.random(shape)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return u


def generate_synthetic(config):
    """Simulate a dataset from ``config``; identical configs give identical data."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    spec = GroupSpec(cfg.group_sizes)
    ns, nd, m = cfg.n_stations, cfg.n_days, spec.n_members
    level = rng.uniform(cfg.level_low, cfg.level_high, size=ns)
    station_bias = rng.normal(0.0, cfg.station_bias_sd, size=ns) if cfg.station_bias_sd > 0 else np.zeros(ns)
    innov = rng.normal(size=(nd, ns))
    anom = np.empty((nd, ns))
    scale = cfg.anomaly_sd * math.sqrt(1 - cfg.ar_coef ** 2)
    anom[0] = cfg.anomaly_sd * innov[0]
    for d in range(1, nd):
        anom[d] = cfg.ar_coef * anom[d - 1] + scale * innov[d]
    w = np.maximum(level + anom, cfg.min_latent)
    draws = _truth_quantile(cfg, w, _uniforms(rng, (nd, ns, m + 1)))
    obs = draws[..., 0]
    z = draws[..., 1:]
    members = np.maximum(0.0, w[..., None] + cfg.bias + station_bias[None, :, None] + cfg.dispersion * (z - w[..., None]))
    days = np.datetime64(cfg.start_date, "D") + np.arange(nd)
    vt = days.astype("datetime64[s]")
    sid = np.array([f"S{j + 1:03d}" for j in range(ns)])
    return Dataset(
        np.tile(sid, nd),
        np.repeat(vt, ns),
        np.full(nd * ns, cfg.lead_time_h),
        np.round(obs.ravel(), 6),
        np.round(members.reshape(nd * ns, m), 6),
        spec,
    )


def standard_benchmark_config(truth_family="tgev", seed=20240101):
    """The reference benchmark: 10 stations, 30 + 300 days, 11 members in groups (1, 10),
    biased and underdispersed ensemble."""
    return SyntheticConfig(truth_family=truth_family, seed=seed)


def low_wind_config(seed=7):
    """Calm regime where the truth law has location close to zero."""
    return SyntheticConfig(truth_family="tgev", scale0=0.8, scale1=0.2, shape=0.05, bias=0.3,
                           dispersion=0.6, level_low=0.4, level_high=1.2, anomaly_sd=0.5,
                           min_latent=0.1, n_days=130, seed=seed)
