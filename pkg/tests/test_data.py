import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colagnn.data import (AdjacencyMatrix, DataError, EpiDataset, dump_adjacency, dump_series, fit_normalizer,
                          load_adjacency, load_series, make_windows, n_windows, prepare, split_by_time)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def ds_of(values):
    values = np.asarray(values, dtype=float)
    return EpiDataset(tuple(f"L{i}" for i in range(values.shape[0])), values,
                      tuple(str(t) for t in range(values.shape[1])))


class TestLoadSeries:
    def test_shape_and_order(self, tmp_path):
        p = write(tmp_path, "s.csv", "week,b,a\n1,10,20\n2,11,21\n3,12,22\n")
        ds = load_series(p)
        assert ds.locations == ("b", "a")
        np.testing.assert_array_equal(ds.values, [[10, 11, 12], [20, 21, 22]])
        assert ds.weeks == ("1", "2", "3")

    def test_large_file(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = ds_of(rng.integers(0, 5000, (10, 785)))
        p = tmp_path / "big.csv"
        dump_series(ds, p)
        got = load_series(p)
        assert (got.n_locations, got.n_weeks) == (10, 785)
        np.testing.assert_array_equal(got.values, ds.values)

    @pytest.mark.parametrize("text,where", [
        ("week,a,b\n1,2\n", "row 2"),
        ("week,a,b\n1,2,x\n", "row 2, column 3"),
        ("week,a,a\n1,2,3\n", "column 3"),
        ("week,a,b\n1,2,3\n2,-1,3\n", "row 3, column 2"),
    ])
    def test_errors_carry_position(self, tmp_path, text, where):
        with pytest.raises(DataError, match=where):
            load_series(write(tmp_path, "bad.csv", text))

    def test_values_are_read_only(self, tmp_path):
        ds = load_series(write(tmp_path, "s.csv", "week,a\n1,1\n2,2\n"))
        with pytest.raises(ValueError):
            ds.values[0, 0] = 5


class TestAdjacency:
    def test_identity_normalizes_to_identity(self):
        adj = AdjacencyMatrix.identity(("a", "b", "c"))
        np.testing.assert_array_equal(adj.normalized, np.eye(3))

    def test_all_ones(self):
        np.testing.assert_allclose(AdjacencyMatrix(("a", "b"), np.ones((2, 2))).normalized, 0.5)

    def test_path_graph(self):
        raw = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]])
        adj = AdjacencyMatrix(("a", "b", "c"), raw)
        assert adj.normalized[0, 1] == pytest.approx(1 / math.sqrt(6))

    def test_asymmetric_rejected(self):
        with pytest.raises(DataError, match="symmetric"):
            AdjacencyMatrix(("a", "b"), np.array([[1, 1], [0, 1]]))

    def test_load_reorders_and_fills_diagonal(self, tmp_path):
        p = write(tmp_path, "adj.csv", ",x,y,z\nx,0,1,0\ny,1,0,0\nz,0,0,0\n")
        adj = load_adjacency(p, ("z", "x", "y"))
        np.testing.assert_array_equal(adj.raw, [[1, 0, 0], [0, 1, 1], [0, 1, 1]])

    def test_name_mismatch(self, tmp_path):
        p = write(tmp_path, "adj.csv", ",x,y\nx,1,0\ny,0,1\n")
        with pytest.raises(DataError, match="do not match"):
            load_adjacency(p, ("x", "q"))

    def test_roundtrip(self, tmp_path):
        adj = AdjacencyMatrix(("a", "b", "c"), np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]]))
        p = tmp_path / "adj.csv"
        dump_adjacency(adj, p)
        np.testing.assert_array_equal(load_adjacency(p, adj.locations).raw, adj.raw)


class TestSplits:
    @pytest.mark.parametrize("T,lens", [(360, (180, 72, 108)), (10, (5, 2, 3))])
    def test_lengths(self, T, lens):
        parts = split_by_time(ds_of(np.zeros((1, T))))
        assert tuple(p.n_weeks for p in parts) == lens

    def test_all_train(self):
        tr, va, te = split_by_time(ds_of(np.ones((2, 7))), (1, 0, 0))
        assert (tr.n_weeks, va.n_weeks, te.n_weeks) == (7, 0, 0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 2000))
    def test_contiguous_cover(self, T):
        parts = split_by_time(ds_of(np.arange(T)[None, :]))
        np.testing.assert_array_equal(np.concatenate([p.values[0] for p in parts]), np.arange(T))


class TestNormalizer:
    def test_rescale(self):
        norm = fit_normalizer(ds_of([[0, 5, 10]]))
        np.testing.assert_allclose(norm.apply(np.array([[0, 5, 10]])), [[0, 0.5, 1]])

    def test_constant_location(self):
        norm = fit_normalizer(ds_of([[7, 7, 7]]))
        np.testing.assert_array_equal(norm.apply(np.array([[7, 7, 7]])), [[0, 0, 0]])
        np.testing.assert_array_equal(norm.invert(np.zeros((1, 3))), [[7, 7, 7]])

    def test_no_clipping_above_max(self):
        norm = fit_normalizer(ds_of([[0, 10]]))
        assert norm.apply(np.array([[15.0]]))[0, 0] == 1.5

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1e5), min_size=2, max_size=30))
    def test_roundtrip(self, xs):
        v = np.array([xs, xs[::-1]])
        norm = fit_normalizer(ds_of(v))
        np.testing.assert_allclose(norm.invert(norm.apply(v)), v, atol=1e-9, rtol=1e-12)


class TestWindows:
    def test_count(self):
        assert len(make_windows(ds_of(np.zeros((2, 100))), 20, 5)) == 76 == n_windows(100, 20, 5)

    def test_boundary(self):
        assert len(make_windows(ds_of(np.zeros((1, 25))), 20, 5)) == 1

    def test_minimal(self):
        ws = make_windows(ds_of([[1.0, 2.0, 3.0]]), 1, 1)
        np.testing.assert_array_equal(ws.inputs[:, 0, 0], [1, 2])
        np.testing.assert_array_equal(ws.targets[:, 0], [2, 3])

    def test_too_short_names_split(self):
        with pytest.raises(DataError, match="validation"):
            make_windows(ds_of(np.zeros((1, 10))), 8, 3, split="validation")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 6), st.integers(0, 20))
    def test_target_alignment(self, W, h, extra):
        T = W + h + extra
        vals = np.arange(T, dtype=float)[None, :] * np.array([[1.0], [10.0]])
        ws = make_windows(ds_of(vals), W, h)
        s = np.arange(len(ws))
        np.testing.assert_array_equal(ws.targets[:, 0], s + W + h - 1)
        np.testing.assert_array_equal(ws.inputs[:, 1, -1], 10.0 * (s + W - 1))

    def test_prepare_uses_training_extrema_only(self):
        vals = np.concatenate([np.linspace(0, 10, 50), np.full(50, 100.0)])[None, :]
        data = prepare(ds_of(vals), 5, 1)
        assert data.normalizer.max[0] == 10.0
        assert data.test.targets.max() == pytest.approx(10.0)
        assert data.test.offset == 70
