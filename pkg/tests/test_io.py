import json

import numpy as np
import pytest

from tmfm import (
    DgpSpec,
    EstimationConfig,
    MatrixSeries,
    ThresholdSeries,
    fit,
    simulate_dataset,
)
from tmfm.errors import DuplicateCell, MissingCell, NonFiniteValue, SchemaError
from tmfm.io import (
    apply_transform,
    fitted_model_to_dict,
    read_dgp_spec,
    read_experiment_grid,
    read_matrix_series,
    read_threshold_series,
    read_truth,
    write_fitted_model,
    write_matrix_series,
    write_threshold_series,
    write_truth,
)


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    return simulate_dataset(DgpSpec(p1=5, p2=4, T=40, seed=17))


class TestMatrixSeriesRoundTrip:
    def test_csv_bit_identical(self, sim, tmp_path):
        path = tmp_path / "X.csv"
        write_matrix_series(path, sim.X, fmt="csv")
        back = read_matrix_series(path)
        assert np.array_equal(back.data, sim.X.data)

    def test_binary_bit_identical(self, sim, tmp_path):
        path = tmp_path / "X.bin"
        write_matrix_series(path, sim.X, fmt="binary")
        back = read_matrix_series(path)
        assert np.array_equal(back.data, sim.X.data)

    def test_minimal_csv(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("t,row,col,value\n1,1,1,3.5\n2,1,1,-1.0\n")
        series = read_matrix_series(path)
        assert series.data.shape == (2, 1, 1)
        assert series.data[0, 0, 0] == 3.5

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("time,row,col,value\n1,1,1,0\n")
        with pytest.raises(SchemaError) as exc:
            read_matrix_series(path)
        assert exc.value.line == 1

    def test_bad_field_count_reports_line(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("t,row,col,value\n1,1,1,0.0\n2,1,1\n")
        with pytest.raises(SchemaError) as exc:
            read_matrix_series(path)
        assert exc.value.line == 3

    def test_duplicate_cell(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("t,row,col,value\n1,1,1,1.0\n1,1,1,2.0\n")
        with pytest.raises(DuplicateCell) as exc:
            read_matrix_series(path)
        assert exc.value.line == 3

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("t,row,col,value\n1,1,1,1.0\n1,2,2,2.0\n")
        with pytest.raises(MissingCell):
            read_matrix_series(path)

    def test_truncated_binary(self, sim, tmp_path):
        path = tmp_path / "X.bin"
        write_matrix_series(path, sim.X, fmt="binary")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(SchemaError):
            read_matrix_series(path)


class TestThresholdSeriesRoundTrip:
    def test_round_trip(self, sim, tmp_path):
        path = tmp_path / "z.csv"
        write_threshold_series(path, sim.z)
        back = read_threshold_series(path)
        assert np.array_equal(back.z, sim.z.z)

    def test_noncontiguous_t(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("t,value\n1,0.5\n3,0.7\n")
        with pytest.raises(SchemaError) as exc:
            read_threshold_series(path)
        assert exc.value.line == 3


class TestTransforms:
    def test_diff(self):
        data = np.arange(24, dtype=float).reshape(4, 3, 2)
        out = apply_transform(MatrixSeries(data), "diff")
        assert out.data.shape == (3, 3, 2)
        assert np.allclose(out.data, 6.0)

    def test_logdiff_and_log2diff(self):
        t = np.arange(1, 6, dtype=float)
        data = np.exp(t)[:, None, None] * np.ones((5, 2, 2))
        ld = apply_transform(MatrixSeries(data), "logdiff")
        assert ld.data.shape == (4, 2, 2)
        assert np.allclose(ld.data, 1.0)
        l2 = apply_transform(MatrixSeries(data), "log2diff")
        assert l2.data.shape == (3, 2, 2)
        assert np.allclose(l2.data, 0.0)

    def test_log_requires_positive(self):
        data = np.ones((3, 2, 2))
        data[1, 0, 0] = -1.0
        with pytest.raises(NonFiniteValue) as exc:
            apply_transform(MatrixSeries(data), "logdiff")
        assert exc.value.index == (1, 0, 0)


class TestJsonArtifacts:
    def test_truth_round_trip(self, sim, tmp_path):
        path = tmp_path / "truth.json"
        write_truth(path, sim)
        truth = read_truth(path)
        assert np.array_equal(truth.R1, sim.truth.R1)
        assert np.array_equal(truth.F, sim.truth.F)
        assert truth.r0 == sim.truth.r0

    def test_fitted_model_serialization(self, tmp_path):
        ds = simulate_dataset(DgpSpec(p1=8, p2=6, T=300, seed=3))
        model = fit(ds.X, ds.z, EstimationConfig(k_override=(3, 3)))
        path = tmp_path / "model.json"
        write_fitted_model(path, model)
        doc = json.loads(path.read_text())
        assert doc["k_hat"] == [3, 3]
        assert doc["r_tilde"] == model.r_tilde  # json round-trips floats exactly
        Q = np.asarray(doc["loadings"]["row"]["1"])
        assert np.array_equal(Q, model.loadings[("row", 1)].Q)
        assert doc["factor_counts"] is None
        assert len(doc["ghat_curve"]["r"]) == model.threshold.grid.size

    def test_fitted_model_dict_includes_counts(self, strong_dataset):
        model = fit(strong_dataset.X, strong_dataset.z)
        doc = fitted_model_to_dict(model)
        assert doc["factor_counts"]["k_hat"] == [3, 3]
        assert "ratio_curves" in doc["factor_counts"]

    def test_dgp_spec_round_trip(self, tmp_path):
        spec = DgpSpec(p1=6, p2=5, T=100, delta=(0.5, 0, 0, 0), seed=9)
        path = tmp_path / "spec.json"
        from tmfm.io import _spec_to_dict

        path.write_text(json.dumps(_spec_to_dict(spec)))
        assert read_dgp_spec(path) == spec

    def test_dgp_spec_rejects_unknown_field(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"p1": 4, "p2": 4, "T": 50, "bogus": 1}))
        with pytest.raises(SchemaError):
            read_dgp_spec(path)

    def test_grid_parsing(self, tmp_path):
        doc = {
            "base": {"p1": 6, "p2": 5, "T": 120},
            "settings": [
                {"name": "a", "delta": [0.5, 0, 0, 0]},
                {"name": "b", "beta": [0.5, 1.0], "loading_mode": "coupled"},
            ],
            "n_reps": 2,
            "k_variants": ["estimated", [2, 2]],
            "master_seed": 42,
            "estimation": {"h0": 1},
        }
        path = tmp_path / "grid.json"
        path.write_text(json.dumps(doc))
        grid = read_experiment_grid(path)
        assert grid.n_reps == 2
        assert grid.k_variants == ("estimated", (2, 2))
        assert grid.config.h0 == 1
        settings = dict(grid.settings())
        assert settings["a"].delta == (0.5, 0, 0, 0)
        assert settings["b"].loading_mode == "coupled"

    def test_grid_rejects_duplicate_names(self, tmp_path):
        doc = {
            "base": {"p1": 6, "p2": 5, "T": 120},
            "settings": [{"name": "a"}, {"name": "a"}],
            "n_reps": 1,
            "master_seed": 0,
        }
        path = tmp_path / "grid.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            read_experiment_grid(path)


def test_seventeen_digit_formatting(tmp_path):
    value = 0.1234567890123456789
    series = ThresholdSeries(np.array([value, np.pi]))
    path = tmp_path / "z.csv"
    write_threshold_series(path, series)
    back = read_threshold_series(path)
    assert back.z[0] == series.z[0]
    assert back.z[1] == np.pi
