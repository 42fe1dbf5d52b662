import numpy as np
import pytest

from tmfm import (
    DgpSpec,
    gen_factors_var1,
    gen_loading,
    gen_loading_pair,
    gen_noise_kronecker,
    make_rng,
    orthonormal_basis,
    simulate_dataset,
    space_distance,
    stream_seed,
)
from tmfm.errors import NonStationaryAR, NotPositiveDefinite


class TestGenLoading:
    def test_strong_interval(self):
        rng = make_rng(0)
        L = gen_loading(100, 100, 0.0, rng)
        assert np.all(np.abs(L) <= 1.0)
        assert np.abs(L).max() > 0.9  # 10k draws essentially guarantee this

    def test_weak_interval(self):
        L = gen_loading(100, 3, 1.0, make_rng(1))
        assert np.all(np.abs(L) <= 0.1 + 1e-15)

    def test_norm_growth_rate(self):
        # ||L||_2^2 / p^(1-delta) stays within [0.05, 3] across seeded draws
        for delta in (0.0, 0.5, 1.0):
            for seed in range(100):
                L = gen_loading(200, 3, delta, make_rng(seed))
                ratio = np.linalg.norm(L, 2) ** 2 / 200 ** (1.0 - delta)
                assert 0.05 <= ratio <= 3.0, (delta, seed, ratio)


class TestGenLoadingPair:
    def test_full_resampling_separates_spans(self):
        ds = [
            space_distance(
                orthonormal_basis(L1), orthonormal_basis(L2)
            )
            for seed in range(100)
            for L1, L2 in [gen_loading_pair(40, 3, 0.0, 0.0, 1.0, make_rng(seed))]
        ]
        assert np.mean(ds) > 0.3

    def test_beta_zero_keeps_spans_close(self):
        med = {}
        for p in (20, 40, 80):
            ds = [
                space_distance(orthonormal_basis(L1), orthonormal_basis(L2))
                for seed in range(60)
                for L1, L2 in [gen_loading_pair(p, 3, 0.0, 0.0, 0.0, make_rng(seed))]
            ]
            med[p] = np.median(ds)
        assert med[80] < med[40] < med[20]  # distance shrinks as p grows
        assert med[20] < 0.3

    def test_beta_one_matches_fresh_distribution(self):
        # with beta=1 every entry is resampled, so L2 is distributed like a
        # fresh gen_loading draw; two-sample KS on pooled entries
        from scipy.stats import ks_2samp

        pooled_pair, pooled_fresh = [], []
        for seed in range(60):
            _, L2 = gen_loading_pair(20, 3, 0.3, 0.3, 1.0, make_rng(seed))
            pooled_pair.append(L2.ravel())
            pooled_fresh.append(gen_loading(20, 3, 0.3, make_rng(10_000 + seed)).ravel())
        stat = ks_2samp(np.concatenate(pooled_pair), np.concatenate(pooled_fresh))
        assert stat.pvalue > 0.01

    def test_resample_count_rounding(self):
        # beta=0 resamples round(k * p^0) = k entries
        L1, L2 = gen_loading_pair(50, 4, 0.0, 0.0, 0.0, make_rng(3))
        assert (L1 != L2).sum() == 4


class TestGenFactorsVar1:
    def test_white_noise_case(self):
        F = gen_factors_var1(20_000, 1, 2, (0.0, 0.0), make_rng(8))
        flat = F.reshape(20_000, 2)
        for d in range(2):
            x = flat[:, d]
            rho = np.corrcoef(x[:-1], x[1:])[0, 1]
            assert abs(rho) <= 0.05

    def test_ar_autocorrelation(self):
        F = gen_factors_var1(50_000, 1, 1, (0.8,), make_rng(9))
        x = F[:, 0, 0]
        rho = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert abs(rho - 0.8) <= 0.03

    def test_stationary_variance(self):
        a = 0.7
        F = gen_factors_var1(50_000, 1, 1, (a,), make_rng(10))
        var = F[:, 0, 0].var()
        target = 1.0 / (1.0 - a * a)
        assert abs(var - target) <= 0.05 * target

    def test_vec_is_column_stacked(self):
        # entry d of the state vector lands at F[d % k1, d // k1]
        F = gen_factors_var1(5, 2, 3, (0.0,) * 6, make_rng(11))
        assert F.shape == (5, 2, 3)

    def test_nonstationary_rejected(self):
        with pytest.raises(NonStationaryAR):
            gen_factors_var1(10, 1, 1, (1.0,), make_rng(0))


class TestGenNoiseKronecker:
    def test_identity_covariance(self):
        E = gen_noise_kronecker(20_000, 3, 3, 0.0, make_rng(12))
        vecs = E.reshape(20_000, 9)
        cov = np.cov(vecs.T)
        assert np.abs(cov - np.eye(9)).max() <= 0.05

    def test_kronecker_covariance(self):
        E = gen_noise_kronecker(50_000, 2, 2, 0.2, make_rng(13))
        vecs = E.transpose(0, 2, 1).reshape(50_000, 4)  # vec stacks columns
        cov = np.cov(vecs.T)
        g = np.array([[1.0, 0.2], [0.2, 1.0]])
        assert np.abs(cov - np.kron(g, g)).max() <= 0.05

    def test_temporal_independence(self):
        E = gen_noise_kronecker(20_000, 2, 2, 0.3, make_rng(14))
        flat = E.reshape(20_000, 4)
        cross = flat[:-1].T @ flat[1:] / (20_000 - 1)
        assert np.abs(cross).max() <= 0.05

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            gen_noise_kronecker(5, 4, 4, -0.5, make_rng(0))


class TestSimulateDataset:
    def test_noiseless_low_rank(self):
        ds = simulate_dataset(DgpSpec(p1=10, p2=9, T=50, seed=1, noise_scale=0.0))
        for t in range(50):
            assert np.linalg.matrix_rank(ds.X.data[t], tol=1e-10) <= 3

    def test_regime_proportions(self):
        ds = simulate_dataset(DgpSpec(p1=4, p2=4, T=2400, seed=2))
        frac = float((ds.z.z < 0).mean())
        assert abs(frac - 0.5) <= 0.03

    def test_seed_determinism(self):
        a = simulate_dataset(DgpSpec(p1=5, p2=4, T=60, seed=7))
        b = simulate_dataset(DgpSpec(p1=5, p2=4, T=60, seed=7))
        assert np.array_equal(a.X.data, b.X.data)
        assert np.array_equal(a.z.z, b.z.z)
        assert np.array_equal(a.truth.F, b.truth.F)
        c = simulate_dataset(DgpSpec(p1=5, p2=4, T=60, seed=8))
        assert a.X.data[0, 0, 0] != c.X.data[0, 0, 0]

    def test_truth_reconstructs_signal(self):
        noisy = simulate_dataset(DgpSpec(p1=6, p2=5, T=80, seed=3))
        clean = simulate_dataset(DgpSpec(p1=6, p2=5, T=80, seed=3, noise_scale=0.0))
        # same seed consumes the same draws, so signal() is the shared component
        assert np.allclose(noisy.signal(), clean.X.data)
        mask1 = noisy.z.z < 0
        manual = np.einsum("ak,tkl,bl->tab", noisy.truth.R1, noisy.truth.F[mask1], noisy.truth.C1)
        assert np.allclose(noisy.signal()[mask1], manual)

    def test_strength_calibration_slope(self):
        # ||R||_2^2 across p in {20, 40, 80} follows p^(1-delta) on log-log axes
        for delta in (0.0, 0.5):
            slopes = []
            for seed in range(40):
                norms = []
                for p in (20, 40, 80):
                    L = gen_loading(p, 3, delta, make_rng(1000 * seed + p))
                    norms.append(np.linalg.norm(L, 2) ** 2)
                slope = np.polyfit(np.log([20, 40, 80]), np.log(norms), 1)[0]
                slopes.append(slope)
            assert abs(np.mean(slopes) - (1.0 - delta)) <= 0.15

    def test_coupled_mode_uses_beta(self):
        close = simulate_dataset(
            DgpSpec(p1=30, p2=30, T=20, seed=4, loading_mode="coupled", beta=(0.0, 0.0))
        )
        far = simulate_dataset(
            DgpSpec(p1=30, p2=30, T=20, seed=4, loading_mode="coupled", beta=(1.0, 1.0))
        )
        d_close = space_distance(
            orthonormal_basis(close.truth.R1), orthonormal_basis(close.truth.R2)
        )
        d_far = space_distance(
            orthonormal_basis(far.truth.R1), orthonormal_basis(far.truth.R2)
        )
        assert d_close < d_far

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            DgpSpec(p1=5, p2=5, T=10, ar_diag=(0.5,))  # wrong length
        with pytest.raises(NonStationaryAR):
            DgpSpec(p1=5, p2=5, T=10, ar_diag=(1.2,) + (0.0,) * 8)
        with pytest.raises(ValueError):
            DgpSpec(p1=5, p2=5, T=10, delta=(0.0, 0.0, 0.0, 2.0))
        with pytest.raises(NotPositiveDefinite):
            DgpSpec(p1=5, p2=5, T=10, noise_offdiag=-0.5)


def test_stream_seed_distinct_and_stable():
    seeds = {stream_seed(123, r) for r in range(200)}
    assert len(seeds) == 200
    assert stream_seed(123, 7) == stream_seed(123, 7)
