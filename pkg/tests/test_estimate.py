import numpy as np
import pytest

from tmfm import (
    DgpSpec,
    EstimationConfig,
    estimate_factor_counts,
    estimate_loadings,
    estimate_threshold,
    fit,
    g_hat,
    orthonormal_basis,
    quantile,
    residual_E,
    select_threshold_variable,
    simulate_dataset,
    space_distance,
)
from tmfm.errors import (
    DegenerateSpectrum,
    EmptyGrid,
    EmptyRegime,
    EstimationStageError,
    IndexOutOfRange,
    KOutOfRange,
    ShapeMismatch,
)
from tmfm.estimate import SPACE_KEYS

from conftest import truth_spans


class TestEstimateLoadings:
    def test_noiseless_recovers_truth(self, noiseless_dataset):
        ds = noiseless_dataset
        spans = truth_spans(ds)
        spaces = estimate_loadings(ds.X, ds.z, 0.0, 0.0, 3, 3, h0=2)
        for key in SPACE_KEYS:
            assert space_distance(spaces[key], spans[key]) <= 0.05

    def test_noiseless_strong_panel_at_true_threshold(self):
        ds = simulate_dataset(DgpSpec(p1=20, p2=20, T=800, seed=8, noise_scale=0.0))
        spaces = estimate_loadings(ds.X, ds.z, 0.0, 0.0, 3, 3, h0=2)
        spans = truth_spans(ds)
        assert space_distance(spaces[("row", 1)], spans[("row", 1)]) <= 0.05

    def test_noisy_close_to_truth(self, strong_dataset):
        ds = strong_dataset
        spans = truth_spans(ds)
        spaces = estimate_loadings(ds.X, ds.z, 0.0, 0.0, 3, 3, h0=2)
        for key in SPACE_KEYS:
            assert space_distance(spaces[key], spans[key]) <= 0.2

    def test_empty_regime(self, strong_dataset):
        ds = strong_dataset
        low = ds.z.z.min() - 1.0
        with pytest.raises(EmptyRegime) as exc:
            estimate_loadings(ds.X, ds.z, low, low, 3, 3)
        assert exc.value.regime == 1

    def test_scale_invariance(self, strong_dataset):
        ds = strong_dataset
        a = estimate_loadings(ds.X, ds.z, 0.0, 0.0, 3, 3)
        b = estimate_loadings(5.0 * ds.X.data, ds.z, 0.0, 0.0, 3, 3)
        for key in SPACE_KEYS:
            assert space_distance(a[key], b[key]) <= 1e-9

    def test_k_out_of_range(self, strong_dataset):
        ds = strong_dataset
        with pytest.raises(KOutOfRange):
            estimate_loadings(ds.X, ds.z, 0.0, 0.0, ds.X.p1 + 1, 3)


class TestEstimateFactorCounts:
    def test_noiseless_rank_two(self):
        ds = simulate_dataset(
            DgpSpec(p1=10, p2=8, T=600, k1=2, k2=2, seed=31, noise_scale=0.0,
                    ar_diag=(0.8, -0.7, 0.9, 0.6))
        )
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        counts = estimate_factor_counts(ds.X, ds.z, e1, e2)
        assert counts.k_hat == (2, 2)

    def test_strong_dataset_counts(self, strong_dataset):
        ds = strong_dataset
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        counts = estimate_factor_counts(ds.X, ds.z, e1, e2)
        assert counts.k_hat == (3, 3)
        for key in SPACE_KEYS:
            p = ds.X.p1 if key[0] == "row" else ds.X.p2
            assert counts.ratio_curves[key].shape == (p // 2,)
            assert counts.kernel_norms[key] > 0
        assert counts.chosen_regime[0] in (1, 2)

    def test_ratio_curves_positive(self, strong_dataset):
        ds = strong_dataset
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        counts = estimate_factor_counts(ds.X, ds.z, e1, e2)
        for curve in counts.ratio_curves.values():
            assert np.all(curve > 0)

    def test_degenerate_spectrum_reported(self):
        X = np.zeros((40, 6, 6))
        z = np.linspace(-1, 1, 40)
        with pytest.warns(DegenerateSpectrum):
            counts = estimate_factor_counts(X, z, -0.5, 0.5)
        assert counts.k_hat == (1, 1)  # all-inf ratios fall back to smallest k

    def test_eta_order(self, strong_dataset):
        ds = strong_dataset
        with pytest.raises(ValueError):
            estimate_factor_counts(ds.X, ds.z, 0.5, -0.5)

    def test_empty_tail(self, strong_dataset):
        ds = strong_dataset
        with pytest.raises(EmptyRegime):
            estimate_factor_counts(ds.X, ds.z, ds.z.z.min() - 1, 0.0)


class TestGHat:
    def test_proposition_noiseless_minimum_at_r0(self):
        ds = simulate_dataset(DgpSpec(p1=12, p2=10, T=1500, seed=9, noise_scale=0.0))
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        B = {
            key: np.asarray(space.Q)
            for key, space in estimate_loadings(ds.X, ds.z, e1, e2, 3, 3).items()
        }
        # complements of the estimated spaces
        from tmfm import complement
        from tmfm.lagcov import m_hat_all

        kernels = m_hat_all(ds.X, ds.z, e1, e2, 2)
        comp = {key: complement(kernels[key], 3) for key in SPACE_KEYS}
        at_r0 = g_hat(ds.X, ds.z, comp, 0.0)
        away = min(
            g_hat(ds.X, ds.z, comp, r) for r in (-0.6, -0.45, 0.45, 0.6)
        )
        assert at_r0 <= 1e-6 * away

    def test_projection_annihilates_aligned_rank_one(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal(4)
        f = np.cumsum(rng.standard_normal(200)) * 0.1
        X = f[:, None, None] * np.outer(a, a)[None]
        z = rng.standard_normal(200)
        # complements orthogonal to the kept direction a annihilate every kernel
        full = np.linalg.qr(np.column_stack([orthonormal_basis(a), np.eye(4)]))[0]
        comp = {key: full[:, 1:] for key in SPACE_KEYS}
        assert g_hat(X, z, comp, 0.0) <= 1e-8

    def test_homogeneity_degree_four(self, strong_dataset):
        ds = strong_dataset
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        from tmfm import complement
        from tmfm.lagcov import m_hat_all

        kernels = m_hat_all(ds.X, ds.z, e1, e2, 2)
        comp = {key: complement(kernels[key], 3) for key in SPACE_KEYS}
        v1 = g_hat(ds.X, ds.z, comp, 0.1)
        v2 = g_hat(2.0 * ds.X.data, ds.z, comp, 0.1)
        assert v2 == pytest.approx(16.0 * v1, rel=1e-9)

    def test_shape_mismatch(self, strong_dataset):
        ds = strong_dataset
        bad = {key: np.eye(3)[:, :2] for key in SPACE_KEYS}
        with pytest.raises(ShapeMismatch):
            g_hat(ds.X, ds.z, bad, 0.0)


class TestEstimateThreshold:
    def test_finds_threshold_on_strong_data(self, strong_dataset):
        ds = strong_dataset
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        est = estimate_threshold(ds.X, ds.z, e1, e2, 3, 3)
        assert e1 < est.r_hat < e2
        assert abs(est.r_hat) <= 0.15
        assert est.values.min() == est.values[np.searchsorted(est.grid, est.r_hat)]
        assert np.all(est.values >= 0)

    def test_curve_scale_invariant_argmin(self, strong_dataset):
        ds = strong_dataset
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        a = estimate_threshold(ds.X, ds.z, e1, e2, 3, 3)
        b = estimate_threshold(5.0 * ds.X.data, ds.z, e1, e2, 3, 3)
        assert a.r_hat == b.r_hat
        assert np.allclose(b.values, 625.0 * a.values, rtol=1e-9)

    def test_singleton_grid(self, strong_dataset):
        ds = strong_dataset
        zv = np.sort(np.unique(ds.z.z))
        # choose eta just around one candidate
        idx = len(zv) // 2
        e1, e2 = zv[idx] - 1e-9, zv[idx] + 1e-9
        est = estimate_threshold(ds.X, ds.z, float(e1), float(e2), 3, 3)
        assert est.grid.size == 1
        assert est.r_hat == zv[idx]

    def test_empty_grid(self, strong_dataset):
        ds = strong_dataset
        zv = np.sort(np.unique(ds.z.z))
        mid = 0.5 * (zv[10] + zv[11])
        with pytest.raises(EmptyGrid):
            estimate_threshold(ds.X, ds.z, mid, mid + 1e-12, 3, 3)

    def test_grid_stride(self, strong_dataset):
        ds = strong_dataset
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        full = estimate_threshold(ds.X, ds.z, e1, e2, 3, 3)
        strided = estimate_threshold(ds.X, ds.z, e1, e2, 3, 3, grid_stride=5)
        assert strided.grid.size == int(np.ceil(full.grid.size / 5))


class TestFit:
    def test_override_bypasses_counts_and_matches_estimate_threshold(self, strong_dataset):
        ds = strong_dataset
        cfg = EstimationConfig(k_override=(3, 3))
        model = fit(ds.X, ds.z, cfg)
        assert model.factor_counts is None
        e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
        est = estimate_threshold(ds.X, ds.z, e1, e2, 3, 3)
        assert model.r_tilde == est.r_hat
        assert np.array_equal(model.threshold.values, est.values)

    def test_estimated_counts_used(self, strong_dataset):
        model = fit(strong_dataset.X, strong_dataset.z)
        assert model.k_hat == (3, 3)
        assert model.factor_counts is not None
        for key in SPACE_KEYS:
            assert model.loadings[key].k == 3
            vecs = model.eigenvectors[key]
            assert np.abs(vecs.T @ vecs - np.eye(vecs.shape[0])).max() <= 1e-10

    def test_row_permutation_equivariance(self, strong_dataset):
        ds = strong_dataset
        cfg = EstimationConfig(k_override=(3, 3))
        base = fit(ds.X, ds.z, cfg)
        perm = np.random.default_rng(0).permutation(ds.X.p1)
        permuted = fit(ds.X.data[:, perm, :], ds.z, cfg)
        assert permuted.r_tilde == base.r_tilde
        for i in (1, 2):
            assert space_distance(
                permuted.loadings[("row", i)].Q, base.loadings[("row", i)].Q[perm]
            ) <= 1e-9
            assert space_distance(
                permuted.loadings[("column", i)], base.loadings[("column", i)]
            ) <= 1e-9

    def test_repeat_runs_identical(self, strong_dataset):
        a = fit(strong_dataset.X, strong_dataset.z)
        b = fit(strong_dataset.X, strong_dataset.z)
        assert a.r_tilde == b.r_tilde
        for key in SPACE_KEYS:
            assert space_distance(a.loadings[key], b.loadings[key]) <= 1e-12

    def test_stage_tagging(self):
        ds = simulate_dataset(DgpSpec(p1=6, p2=5, T=40, seed=0))
        cfg = EstimationConfig(h0=39)  # forces LagTooLarge inside the pipeline
        with pytest.raises(EstimationStageError) as exc:
            fit(ds.X, ds.z, cfg)
        assert exc.value.stage in ("factor_counts", "threshold")


class TestResidualE:
    def test_perfect_projection_zero(self, noiseless_dataset):
        ds = noiseless_dataset
        model = fit(ds.X, ds.z, EstimationConfig(k_override=(3, 3)))
        E = residual_E(ds.X, ds.z, model, t0=450)
        total = float((ds.X.data[450:] ** 2).sum())
        assert E <= 1e-12 * total

    def test_quadratic_in_noise(self):
        # pure-noise tail with zero signal in the complement: doubling noise -> 4x
        rng = np.random.default_rng(4)
        base = simulate_dataset(DgpSpec(p1=8, p2=6, T=400, seed=21, noise_scale=0.0))
        model = fit(base.X, base.z, EstimationConfig(k_override=(3, 3)))
        noise = rng.standard_normal((100, 8, 6))
        X1 = base.X.data.copy()
        X2 = base.X.data.copy()
        X1[300:] += noise[:, :, :] * 1.0
        X2[300:] += noise[:, :, :] * 2.0
        E1 = residual_E(X1, base.z, model, 300)
        E2 = residual_E(X2, base.z, model, 300)
        signal_leak = residual_E(base.X, base.z, model, 300)  # ~0
        assert E2 == pytest.approx(4.0 * E1, rel=1e-6, abs=4 * signal_leak + 1e-9)

    def test_matches_naive_loop(self, strong_dataset):
        ds = strong_dataset
        model = fit(ds.X, ds.z, EstimationConfig(k_override=(3, 3)))
        t0 = 420
        E = residual_E(ds.X, ds.z, model, t0)
        total = 0.0
        for t in range(t0, ds.X.T):
            i = 1 if ds.z.z[t] < model.r_tilde else 2
            B1 = model.complement_basis(("row", i))
            B2 = model.complement_basis(("column", i))
            for l in range(ds.X.p2):
                v = B1.T @ ds.X.data[t, :, l]
                total += float(v @ v)
            for l in range(ds.X.p1):
                v = B2.T @ ds.X.data[t, l, :]
                total += float(v @ v)
        assert E == pytest.approx(total, rel=1e-10)

    def test_t0_bounds(self, strong_dataset):
        ds = strong_dataset
        model = fit(ds.X, ds.z, EstimationConfig(k_override=(3, 3)))
        for bad in (0, ds.X.T, ds.X.T + 5):
            with pytest.raises(IndexOutOfRange):
                residual_E(ds.X, ds.z, model, bad)


class TestSelectThresholdVariable:
    def test_true_variable_wins(self):
        wins = 0
        for rep in range(6):
            ds = simulate_dataset(DgpSpec(p1=10, p2=8, T=500, seed=100 + rep))
            noise = np.random.default_rng(500 + rep).standard_normal(500)
            scores = select_threshold_variable(
                ds.X,
                {"true": ds.z, "noise": noise},
                EstimationConfig(k_override=(3, 3)),
            )
            if scores[0].name == "true":
                wins += 1
        assert wins >= 5

    def test_estimated_counts_shared_across_candidates(self):
        # a mixed-regime (wrong) candidate inflates its own count estimate,
        # which would shrink its E mechanically; the common-k rule prevents it
        wins = 0
        for rep in range(3):
            ds = simulate_dataset(DgpSpec(p1=16, p2=12, T=800, seed=300 + rep))
            noise = np.random.default_rng(900 + rep).standard_normal(800)
            scores = select_threshold_variable(
                ds.X, {"true": ds.z, "noise": noise}, EstimationConfig()
            )
            wins += scores[0].name == "true"
        assert wins == 3

    def test_single_candidate(self, strong_dataset):
        ds = strong_dataset
        scores = select_threshold_variable(ds.X, {"only": ds.z},
                                           EstimationConfig(k_override=(3, 3)))
        assert len(scores) == 1
        assert scores[0].name == "only"
        assert np.isfinite(scores[0].E)

    def test_failing_candidate_ranked_last(self, strong_dataset):
        ds = strong_dataset
        bad = np.full(ds.X.T, 0.0)
        bad[0] = np.nan
        scores = select_threshold_variable(
            ds.X,
            {"bad": bad, "good": ds.z},
            EstimationConfig(k_override=(3, 3)),
        )
        assert [s.name for s in scores] == ["good", "bad"]
        assert scores[1].error is not None
        assert not np.isfinite(scores[1].E)
