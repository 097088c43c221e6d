import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbeatsp.data import (SEASONALITY, Dataset, Frequency, TimeSeries, load_dataset, load_m4, save_metadata,
                          save_values, scale_windows, train_test_split, unscale_forecast)
from nbeatsp.exceptions import DataError


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def meta(tmp_path):
    return write(tmp_path / "meta.csv", "id,frequency,horizon,m\nY1,Yearly,6,1\nQ7,Quarterly,8,4\nH1,Hourly,48,\n")


class TestLoad:
    def test_basic_row(self, tmp_path, meta):
        ds = load_dataset(write(tmp_path / "v.csv", "Y1,5,6,7\n"), meta)
        s = ds.series[0]
        assert (s.id, s.frequency, s.horizon, s.m) == ("Y1", Frequency.YEARLY, 6, 1)
        np.testing.assert_array_equal(s.values, [5, 6, 7])

    def test_trailing_commas(self, tmp_path, meta):
        ds = load_dataset(write(tmp_path / "v.csv", "Q7,1,2,,\n"), meta)
        assert len(ds.series[0]) == 2

    def test_competition_header_and_quotes(self, tmp_path, meta):
        ds = load_dataset(write(tmp_path / "v.csv", '"V1","V2","V3"\n"Y1","1.5","2"\n'), meta)
        np.testing.assert_array_equal(ds.series[0].values, [1.5, 2])

    def test_hourly_period_enforced(self, tmp_path, meta):
        ds = load_dataset(write(tmp_path / "v.csv", "H1,1,2\n"), meta)
        assert ds.series[0].m == 24 == SEASONALITY[Frequency.HOURLY]
        bad = write(tmp_path / "bad.csv", "id,frequency,horizon,m\nH1,Hourly,48,12\n")
        with pytest.raises(DataError, match="m=24"):
            load_dataset(tmp_path / "v.csv", bad)

    @pytest.mark.parametrize("text,match", [("Y1,1,x\n", "non-numeric"), ("Y1,1\nY1,2\n", "duplicate"),
                                            ("Z9,1,2\n", "no metadata"), ("Y1,1,,2\n", "non-numeric"),
                                            ("Y1,1,nan\n", "non-finite")])
    def test_errors(self, tmp_path, meta, text, match):
        with pytest.raises(DataError, match=match):
            load_dataset(write(tmp_path / "v.csv", text), meta)

    def test_error_names_line(self, tmp_path, meta):
        with pytest.raises(DataError, match=r"v.csv:2"):
            load_dataset(write(tmp_path / "v.csv", "Y1,1\nQ7,1,oops\n"), meta)

    def test_unknown_frequency(self, tmp_path):
        m = write(tmp_path / "m.csv", "id,frequency,horizon,m\nA,Fortnightly,3,1\n")
        with pytest.raises(DataError, match="frequency"):
            load_dataset(write(tmp_path / "v.csv", "A,1\n"), m)

    def test_roundtrip_lossless(self, tmp_path, rng):
        series = [TimeSeries(f"S{i}", rng.normal(size=rng.integers(1, 30)) * 10.0 ** rng.integers(-5, 5),
                             Frequency.MONTHLY, 18, 12) for i in range(20)]
        save_values(series, tmp_path / "v.csv")
        save_metadata(series, tmp_path / "m.csv")
        ds = load_dataset(tmp_path / "v.csv", tmp_path / "m.csv")
        for a, b in zip(series, ds.series):
            assert a.id == b.id and np.array_equal(a.values, b.values) and a.m == b.m

    def test_load_m4_pair(self, tmp_path):
        write(tmp_path / "train.csv", '"V1","V2","V3","V4"\n"Y1",1,2,3\n"Y2",4,5,\n')
        write(tmp_path / "test.csv", '"V1","V2","V3"\n"Y1",4,5\n"Y2",6,7\n')
        ds = load_m4(tmp_path / "train.csv", tmp_path / "test.csv", "Yearly", limit=1)
        assert ds.ids == ["Y1"]
        np.testing.assert_array_equal(ds.train()[0], [1, 2, 3])
        np.testing.assert_array_equal(ds.test()[0], [4, 5])


def make_series(n, length, H=6):
    return [TimeSeries(f"S{i}", np.arange(1.0, length + 1), Frequency.YEARLY, H, 1) for i in range(n)]


class TestSplit:
    def test_holds_out_horizon(self):
        ds = train_test_split(Dataset(make_series(1, 20)))
        assert len(ds.train()[0]) == 14 and len(ds.test()[0]) == 6

    def test_too_short_excluded_with_warning(self):
        with pytest.warns(UserWarning, match="S0"):
            ds = train_test_split(Dataset(make_series(1, 6)))
        assert len(ds) == 0 and ds.excluded == ["S0"]

    def test_empty(self):
        ds = train_test_split(Dataset([]))
        assert len(ds) == 0 and ds.split == {}

    def test_test_segment_length(self, rng):
        series = [TimeSeries(f"S{i}", rng.normal(size=rng.integers(7, 30)), Frequency.YEARLY, 6, 1)
                  for i in range(10)]
        assert all(t.size == 6 for t in train_test_split(Dataset(series)).test())


class TestScaling:
    def test_per_window_example(self):
        x = np.array([2.0, 4.0, 8.0]).reshape(1, 3, 1)
        scaled, _, s = scale_windows(x, mode="per-window")
        np.testing.assert_array_equal(scaled.ravel(), [0.25, 0.5, 1.0])
        assert s[0, 0] == 8

    def test_per_union_shares_factor(self):
        x = np.zeros((1, 4, 2))
        x[0, 2:, 0] = [3.0, 2.0]
        x[0, :, 1] = [10.0, 1.0, 3.0, 2.0]
        _, _, s = scale_windows(x, mode="per-union")
        np.testing.assert_array_equal(s, [[10.0, 10.0]])
        _, _, s = scale_windows(x, mode="per-window")
        np.testing.assert_array_equal(s, [[3.0, 10.0]])

    def test_zero_window_guard(self):
        scaled, _, s = scale_windows(np.zeros((1, 3, 1)), mode="per-window")
        assert s[0, 0] == 1 and np.all(scaled == 0)

    def test_signed_values_use_absolute_max(self):
        _, _, s = scale_windows(np.array([-5.0, 2.0]).reshape(1, 2, 1))
        assert s[0, 0] == 5

    def test_targets_follow_inputs(self):
        x = np.array([2.0, 4.0]).reshape(1, 2, 1)
        _, t, _ = scale_windows(x, np.array([[8.0, 4.0]]))
        np.testing.assert_array_equal(t, [[2.0, 1.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 1e6), st.floats(-1e6, -1e-6)), min_size=1, max_size=10),
           st.sampled_from(["per-window", "per-union"]))
    def test_roundtrip(self, values, mode):
        x = np.array(values).reshape(1, -1, 1)
        scaled, _, s = scale_windows(x, mode=mode)
        back = unscale_forecast(scaled, s)
        np.testing.assert_allclose(back, x, rtol=4e-16, atol=0)
