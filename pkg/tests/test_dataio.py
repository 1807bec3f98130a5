import json

import numpy as np
import pytest
from scipy import stats as sps

from windemos import scoring
from windemos.dataio import (
    Dataset,
    GroupSpec,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    low_wind_config,
    save_dataset,
    sidecar_path,
    standard_benchmark_config,
)
from windemos.errors import ConfigError, DataError
from windemos.verification import case_seed, rank_histogram, verification_ranks

HEADER = "station_id,valid_time,lead_time_h,obs,m_1,m_2,m_3\n"


def small_config(**kw):
    base = dict(n_stations=3, n_days=20, group_sizes=(1, 2), seed=5)
    base.update(kw)
    return SyntheticConfig(**base)


def write(tmp_path, body, name="d.csv"):
    p = tmp_path / name
    p.write_text(body)
    return p


def ranks_of(ds, seed=0):
    seeds = [case_seed(seed, *k) for k in ds.keys()]
    return rank_histogram(verification_ranks(ds.members, ds.obs, seeds), ds.group_spec.n_members)


class TestGroupSpec:
    def test_basic(self):
        g = GroupSpec((1, 10))
        assert g.n_members == 11 and g.n_groups == 2
        assert g.slices == [slice(0, 1), slice(1, 11)]
        assert json.loads(g.to_json()) == {"group_sizes": [1, 10]}

    @pytest.mark.parametrize("sizes", [(), (0,), (2, -1)])
    def test_invalid(self, sizes):
        with pytest.raises(DataError):
            GroupSpec(sizes)


class TestDataset:
    def test_canonical_order_and_immutability(self):
        ds = Dataset(["B", "A"], ["2020-01-01T00:00:00"] * 2, [24, 24], [1.0, 2.0], [[1.0], [2.0]], GroupSpec((1,)))
        assert list(ds.station_id) == ["A", "B"]
        with pytest.raises(ValueError):
            ds.obs[0] = 3.0

    def test_duplicates_rejected(self):
        with pytest.raises(DataError):
            Dataset(["A", "A"], ["2020-01-01T00:00:00"] * 2, [24, 24], [1.0, 2.0], [[1.0], [2.0]], GroupSpec((1,)))

    def test_negative_rejected(self):
        with pytest.raises(DataError):
            Dataset(["A"], ["2020-01-01T00:00:00"], [24], [-1.0], [[1.0]], GroupSpec((1,)))

    def test_member_count_must_match(self):
        with pytest.raises(DataError):
            Dataset(["A"], ["2020-01-01T00:00:00"], [24], [1.0], [[1.0, 2.0]], GroupSpec((1,)))


class TestCsv:
    def test_roundtrip_bit_exact(self, tmp_path):
        ds = generate_synthetic(small_config())
        p = tmp_path / "d.csv"
        save_dataset(ds, p)
        back = load_dataset(p)
        assert back.group_spec == ds.group_spec
        for name in ("station_id", "valid_time", "lead_time_h", "obs", "members"):
            np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
        q = tmp_path / "e.csv"
        save_dataset(back, q)
        assert p.read_bytes() == q.read_bytes()
        assert sidecar_path(q).read_text() == sidecar_path(p).read_text()

    def test_header_layout(self, tmp_path):
        ds = generate_synthetic(small_config())
        p = tmp_path / "d.csv"
        save_dataset(ds, p)
        first, second = p.read_text().splitlines()[:2]
        assert first == "station_id,valid_time,lead_time_h,obs,m_1,m_2,m_3"
        assert second.split(",")[1] == "2020-01-01T00:00:00Z"
        assert all(len(v.split(".")[1]) == 6 for v in second.split(",")[3:])

    def test_one_row(self, tmp_path):
        p = write(tmp_path, HEADER + "S1,2020-01-01T00:00:00Z,24,3.5,3.1,3.3,4.0\n")
        ds = load_dataset(p)
        assert len(ds) == 1 and ds.group_spec == GroupSpec((3,))

    def test_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(write(tmp_path, HEADER))
        with pytest.raises(DataError):
            load_dataset(write(tmp_path, "", "e.csv"))

    def test_bad_header(self, tmp_path):
        with pytest.raises(DataError) as info:
            load_dataset(write(tmp_path, "station,time,obs\n"))
        assert info.value.lines == [1]

    def _fixture(self, tmp_path):
        ds = generate_synthetic(small_config(n_stations=5, n_days=20))
        p = tmp_path / "d.csv"
        save_dataset(ds, p)
        lines = p.read_text().splitlines(keepends=True)
        assert len(lines) == 101
        return lines

    def test_malformed_rows_listed(self, tmp_path):
        lines = self._fixture(tmp_path)
        lines[10] = lines[10].replace(",", ";", 1)          # line 11: wrong field count
        lines[40] = lines[40].replace("Z,24,", "Z,abc,", 1)  # line 41: bad lead time
        lines[77] = lines[77].replace("Z,", "+02:00,", 1)    # line 78: not UTC
        p = write(tmp_path, "".join(lines), "bad.csv")
        for policy in ("strict", "drop"):
            with pytest.raises(DataError) as info:
                load_dataset(p, missing=policy)
            assert info.value.lines == [11, 41, 78]
            assert "11" in str(info.value)

    def test_missing_policy(self, tmp_path):
        lines = self._fixture(tmp_path)
        parts = lines[5].split(",")
        parts[3] = "NA"
        lines[5] = ",".join(parts)
        parts = lines[9].split(",")
        parts[5] = ""
        lines[9] = ",".join(parts)
        p = write(tmp_path, "".join(lines), "gaps.csv")
        with pytest.raises(DataError) as info:
            load_dataset(p, missing="strict")
        assert info.value.lines == [6, 10]
        ds = load_dataset(p, missing="drop")
        assert len(ds) == 98 and ds.dropped == 2 and ds.dropped_lines == (6, 10)

    def test_negative_value(self, tmp_path):
        p = write(tmp_path, HEADER + "S1,2020-01-01T00:00:00Z,24,3.5,-3.1,3.3,4.0\n")
        with pytest.raises(DataError) as info:
            load_dataset(p)
        assert info.value.lines == [2]

    def test_explicit_group_spec_overrides_sidecar(self, tmp_path):
        p = write(tmp_path, HEADER + "S1,2020-01-01T00:00:00Z,24,3.5,3.1,3.3,4.0\n")
        assert load_dataset(p, group_spec=GroupSpec((1, 2))).group_spec.group_sizes == (1, 2)


class TestGenerator:
    def test_deterministic(self, tmp_path):
        a, b = generate_synthetic(small_config()), generate_synthetic(small_config())
        assert a.digest() == b.digest()
        assert generate_synthetic(small_config(seed=6)).digest() != a.digest()

    def test_shape_and_validity(self):
        ds = generate_synthetic(small_config())
        assert len(ds) == 60 and ds.members.shape == (60, 3)
        assert np.all(ds.obs >= 0) and np.all(ds.members >= 0)
        assert np.all(np.isfinite(ds.members))

    @pytest.mark.parametrize("truth", ["tn", "ln", "tgev"])
    def test_truth_families(self, truth):
        ds = generate_synthetic(small_config(truth_family=truth))
        assert np.all(ds.obs >= 0)

    def test_calibrated_ensemble_has_flat_ranks(self):
        ds = generate_synthetic(small_config(n_stations=20, n_days=500, group_sizes=(1, 10), bias=0.0,
                                             dispersion=1.0, seed=11))
        h = ranks_of(ds)
        assert sps.chisquare(h.counts).pvalue > 0.01

    def test_underdispersion_gives_u_shape(self):
        ds = generate_synthetic(small_config(n_stations=20, n_days=500, group_sizes=(1, 10), bias=0.0,
                                             dispersion=0.4, seed=11))
        h = ranks_of(ds)
        share = h.total / (h.ensemble_size + 1)
        assert h.counts[0] > 2 * share and h.counts[-1] > 2 * share

    def test_bias_raises_mae(self):
        def raw_mae(bias):
            ds = generate_synthetic(small_config(n_stations=10, n_days=300, bias=bias, dispersion=1.0, seed=3))
            return scoring.mae(np.median(ds.members, axis=1), ds.obs)
        assert raw_mae(1.0) > raw_mae(0.0)

    def test_benchmark_presets(self):
        cfg = standard_benchmark_config()
        assert cfg.group_sizes == (1, 10) and cfg.n_stations == 10 and cfg.n_days == 330
        assert cfg.bias > 0 and cfg.dispersion < 1
        assert low_wind_config().level_high < 2


class TestConfig:
    def test_json_roundtrip(self, tmp_path):
        cfg = small_config()
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert SyntheticConfig.from_json(p) == cfg

    @pytest.mark.parametrize("bad", [{"dispersion": 0}, {"truth_family": "gev"}, {"shape": 0.5},
                                     {"group_sizes": [0]}, {"n_days": 0}, {"nonsense": 1}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            SyntheticConfig.from_dict({**small_config().to_dict(), **bad})

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            SyntheticConfig.from_json(write(tmp_path, "{not json", "c.json"))
