import numpy as np
import pytest
from hypothesis import given, strategies as st

from facts import autodiff as ad
from facts.data import (
    denormalize,
    load_csv,
    make_windows,
    normalize,
    split_bounds,
    synthetic_ar_mixture,
    window_count,
    windowed_splits,
    write_csv,
)
from facts.errors import ConfigError, ParseError, SchemaError

from conftest import FIXTURES


def write(tmp_path, text):
    path = tmp_path / "d.csv"
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_two_rows(self, tmp_path):
        values, names = load_csv(write(tmp_path, "date,a,b\n2020,1,2\n2021,3,4"))
        assert names == ["a", "b"]
        np.testing.assert_array_equal(values, [[1, 2], [3, 4]])

    def test_run_precision(self, tmp_path):
        path = write(tmp_path, "date,a\n0,0.1\n")
        assert load_csv(path)[0].dtype == np.float32
        with ad.precision(64):
            assert load_csv(path)[0][0, 0] == 0.1

    def test_empty_data(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, "date,a,b\n"))
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, ""))

    def test_too_few_columns(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, "date\n2020\n"))

    def test_non_numeric_cell_reports_position(self, tmp_path):
        with pytest.raises(ParseError, match=r":3: column 3 \('b'\)"):
            load_csv(write(tmp_path, "date,a,b\n2020,1,2\n2021,3,x\n"))

    def test_missing_cell(self, tmp_path):
        with pytest.raises(ParseError, match=":2:"):
            load_csv(write(tmp_path, "date,a,b\n2020,1\n"))
        with pytest.raises(ParseError, match="column 2"):
            load_csv(write(tmp_path, "date,a,b\n2020,,1\n"))

    def test_etth1_format(self):
        values, names = load_csv(FIXTURES / "etth1_head.csv")
        assert values.shape == (100, 7)
        assert names == ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"]

    def test_round_trip(self, tmp_path, rng):
        x = rng.standard_normal((20, 3))
        write_csv(tmp_path / "x.csv", x, ["p", "q", "r"])
        with ad.precision(64):
            back, names = load_csv(tmp_path / "x.csv")
        np.testing.assert_array_equal(back, x)
        assert names == ["p", "q", "r"]


class TestNormalize:
    def test_known_values(self):
        z, stats = normalize(np.array([[1.0], [2.0], [3.0]]), "trainsplit")
        assert stats.mean.item() == 2.0
        assert stats.std.item() == pytest.approx(0.816497, abs=1e-6)
        np.testing.assert_allclose(z.ravel(), [-1.224745, 0.0, 1.224745], atol=1e-6)

    def test_constant_series(self):
        z, stats = normalize(np.full((5, 2), 3.0), "trainsplit")
        assert not z.any()
        np.testing.assert_array_equal(stats.std, 1.0)

    def test_train_rows_only(self):
        x = np.array([[1.0], [3.0], [100.0]])
        z, stats = normalize(x, "trainsplit", train_rows=2)
        assert stats.mean.item() == 2.0 and stats.std.item() == 1.0
        assert z[2, 0] == 98.0

    def test_window_mode(self, rng):
        x = rng.standard_normal((4, 10, 3)) * 5 + 2
        z, _ = normalize(x, "window")
        np.testing.assert_allclose(z.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=1), 1.0, atol=1e-12)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.sampled_from(["trainsplit", "window"]))
    def test_round_trip(self, values, mode):
        x = np.array(values).reshape(-1, 1)
        if mode == "window":
            x = x[None]
        z, stats = normalize(x, mode)
        np.testing.assert_allclose(denormalize(z, stats), x, atol=1e-6 * max(1.0, np.abs(x).max()))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            normalize(np.ones((3, 1)), "minmax")


class TestWindows:
    def test_count(self):
        inputs, targets = make_windows(np.arange(5.0).reshape(5, 1), 2, 1)
        assert len(inputs) == 3
        np.testing.assert_array_equal(inputs[:, :, 0], [[0, 1], [1, 2], [2, 3]])
        np.testing.assert_array_equal(targets[:, :, 0], [[2], [3], [4]])

    def test_too_short(self):
        with pytest.raises(ConfigError):
            make_windows(np.ones((3, 1)), 2, 2)

    def test_formula_matches_enumeration(self):
        x = np.arange(50.0).reshape(50, 1)
        for fractions in ([0.7, 0.1, 0.2], [0.5, 0.25, 0.25], [0.6, 0.2, 0.2]):
            for lookback, horizon in ((3, 2), (2, 1), (1, 4)):
                splits = windowed_splits(x, lookback, horizon, fractions)
                for (lo, hi), sw in zip(split_bounds(50, fractions), splits):
                    enumerated = sum(
                        1 for s in range(50) if s >= lo and s + lookback + horizon <= hi
                    )
                    assert len(sw) == enumerated == window_count(hi - lo, lookback, horizon)

    def test_no_window_crosses_a_split(self):
        x = np.arange(200.0).reshape(200, 1)
        train, val, test = windowed_splits(x, 10, 5)
        assert train.targets.max() < val.inputs.min()
        assert val.targets.max() < test.inputs.min()
        for sw in (train, val, test):
            lo, hi = sw.rows
            assert sw.inputs.min() >= lo and sw.targets.max() < hi

    def test_split_bounds(self):
        assert split_bounds(100, [0.7, 0.1, 0.2]) == [(0, 70), (70, 80), (80, 100)]
        with pytest.raises(ConfigError):
            split_bounds(100, [0.7, 0.2, 0.2])


class TestSynthetic:
    def test_seeded(self):
        a = synthetic_ar_mixture(300, 8, seed=42)
        assert a.shape == (300, 8)
        np.testing.assert_array_equal(a, synthetic_ar_mixture(300, 8, seed=42))
        assert not np.array_equal(a, synthetic_ar_mixture(300, 8, seed=43))
