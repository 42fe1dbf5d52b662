"""Estimators: loading spaces, factor counts, threshold value, full pipeline.

Pipeline for one dataset (X_t, z_t):

1. Pick the known interval (eta1, eta2) that contains the threshold, by
   default the 25th/75th percentiles of z.
2. Estimate the factor counts (k1, k2) from eigenvalue-ratio curves of the
   two-sided kernels M_{s,i}(eta1, eta2), choosing per direction the regime
   whose kernel has the larger spectral norm.
3. Fix the complement bases B_{s,i} from those same two-sided kernels, and
   minimize G(r) = sum_{s,i} ||B_{s,i}' M_{s,i}(r) B_{s,i}||_2 over the
   candidate grid {z_t} inside (eta1, eta2).
4. Re-estimate all four loading spaces at the minimizer.

Out-of-sample residual scoring of alternative threshold series reuses the
fitted complements: a candidate whose regimes truly drive the loadings
leaves only noise outside the estimated spaces.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import EstimationConfig, MatrixSeries, ThresholdSeries, quantile
from .errors import (
    DegenerateSpectrum,
    DimensionMismatch,
    EmptyGrid,
    EmptyRegime,
    EstimationStageError,
    IndexOutOfRange,
    KOutOfRange,
    ShapeMismatch,
    TmfmError,
)
from .lagcov import m_hat_all, sweep_kernel_stacks
from .spectral import EigenDecomposition, LoadingSpace, sym_eigen, top_k

__all__ = [
    "FactorCountEstimate",
    "ThresholdEstimate",
    "FittedModel",
    "CandidateScore",
    "SpaceKey",
    "SPACE_KEYS",
    "estimate_loadings",
    "estimate_factor_counts",
    "g_hat",
    "estimate_threshold",
    "fit",
    "residual_E",
    "select_threshold_variable",
]

SpaceKey = Tuple[str, int]

#: the four (orientation, regime) combinations, in canonical order
SPACE_KEYS: Tuple[SpaceKey, ...] = (("row", 1), ("row", 2), ("column", 1), ("column", 2))

#: eigenvalues at or below this are numerical zero for ratio purposes
EIG_FLOOR = 1e-300


@dataclass(frozen=True)
class FactorCountEstimate:
    """Ratio-based factor counts and their diagnostics.

    ``ratio_curves[(s, i)][k-1]`` is lambda_{k+1}/lambda_k of the two-sided
    kernel for that space, k = 1..floor(p_s/2); ``k_hat`` takes each
    direction's count from the regime with the larger kernel spectral norm.
    """

    k_hat: Tuple[int, int]
    chosen_regime: Tuple[int, int]
    k_by_space: Dict[SpaceKey, int]
    ratio_curves: Dict[SpaceKey, np.ndarray]
    kernel_norms: Dict[SpaceKey, float]
    eigenvalues: Dict[SpaceKey, np.ndarray]
    eta: Tuple[float, float]


@dataclass(frozen=True)
class ThresholdEstimate:
    """Minimizer of the projected-kernel objective over the candidate grid."""

    r_hat: float
    grid: np.ndarray
    values: np.ndarray
    eta: Tuple[float, float]

    @property
    def curve(self) -> np.ndarray:
        """(G, 2) array of (r, G(r)) pairs."""
        return np.column_stack([self.grid, self.values])


@dataclass(frozen=True)
class FittedModel:
    """Everything the pipeline estimates, plus diagnostics.

    ``eigenvectors[key]`` holds the full p x p eigenvector basis of the
    final kernel at the fitted threshold; the loading space is its first
    k columns and the complement the rest.
    """

    k_hat: Tuple[int, int]
    r_tilde: float
    eta: Tuple[float, float]
    loadings: Dict[SpaceKey, LoadingSpace]
    eigenvalues: Dict[SpaceKey, np.ndarray]
    eigenvectors: Dict[SpaceKey, np.ndarray]
    threshold: ThresholdEstimate
    factor_counts: Optional[FactorCountEstimate]
    config: EstimationConfig

    def complement_basis(self, key: SpaceKey) -> np.ndarray:
        k = self.k_hat[0] if key[0] == "row" else self.k_hat[1]
        return self.eigenvectors[key][:, k:]


@dataclass(frozen=True)
class CandidateScore:
    """Out-of-sample residual score of one threshold-variable candidate."""

    name: str
    E: float
    error: Optional[str] = None


def _as_arrays(X, z) -> Tuple[np.ndarray, np.ndarray]:
    Xd = X.data if isinstance(X, MatrixSeries) else np.asarray(X, dtype=np.float64)
    zv = z.z if isinstance(z, ThresholdSeries) else np.asarray(z, dtype=np.float64)
    if Xd.shape[0] != zv.shape[0]:
        raise DimensionMismatch(
            f"threshold series has length {zv.shape[0]} but matrix series has T={Xd.shape[0]}"
        )
    return Xd, zv


def _check_regime_sizes(zv: np.ndarray, r1: float, r2: float, h0: int) -> None:
    n1 = int((zv < r1).sum())
    n2 = int((zv >= r2).sum())
    for regime, n in ((1, n1), (2, n2)):
        if n < h0 + 1:
            raise EmptyRegime(
                f"regime {regime} selects only {n} time points (need >= h0+1 = {h0 + 1})",
                regime=regime,
            )


def _norm2_psd(vals: np.ndarray) -> float:
    return float(np.abs(vals).max())


def estimate_loadings(
    X, z, r1: float, r2: float, k1: int, k2: int, h0: int = 2
) -> Dict[SpaceKey, LoadingSpace]:
    """Loading spaces for both regimes given a threshold partition.

    Row spaces are the top-k1 eigenvectors of the row kernels at (r1, r2),
    column spaces the top-k2 eigenvectors of the column kernels.

    Raises
    ------
    EmptyRegime
        If a regime selects fewer than h0 + 1 time points.
    KOutOfRange
        If k1 > p1 or k2 > p2.
    """
    Xd, zv = _as_arrays(X, z)
    if r1 > r2:
        raise ValueError(f"need r1 <= r2, got ({r1}, {r2})")
    _check_regime_sizes(zv, r1, r2, h0)
    kernels = m_hat_all(Xd, zv, r1, r2, h0)
    out: Dict[SpaceKey, LoadingSpace] = {}
    for key in SPACE_KEYS:
        k = k1 if key[0] == "row" else k2
        out[key] = top_k(kernels[key], k)
    return out


def _ratio_curve(vals: np.ndarray, R: int, label: str) -> Tuple[np.ndarray, int]:
    """Consecutive-eigenvalue ratios for k = 1..R, with a zero-eigenvalue guard."""
    ratios = np.empty(R)
    degenerate_from = None
    for k in range(1, R + 1):
        lam_k, lam_k1 = vals[k - 1], vals[k]
        if lam_k <= EIG_FLOOR or degenerate_from is not None:
            if degenerate_from is None:
                degenerate_from = k
            ratios[k - 1] = np.inf
        else:
            ratios[k - 1] = lam_k1 / lam_k
    if degenerate_from is not None:
        warnings.warn(
            f"{label}: eigenvalue {degenerate_from} is numerically zero; "
            f"ratios past k={degenerate_from} treated as +inf",
            DegenerateSpectrum,
        )
    k_hat = int(np.argmin(ratios)) + 1  # first minimum => smallest k on ties
    return ratios, k_hat


def _factor_counts_from_decomps(
    decomps: Mapping[SpaceKey, EigenDecomposition],
    eta: Tuple[float, float],
) -> FactorCountEstimate:
    ratio_curves: Dict[SpaceKey, np.ndarray] = {}
    kernel_norms: Dict[SpaceKey, float] = {}
    eigenvalues: Dict[SpaceKey, np.ndarray] = {}
    k_by_space: Dict[SpaceKey, int] = {}
    for key in SPACE_KEYS:
        vals = decomps[key].values
        p = vals.shape[0]
        R = p // 2
        if R < 1:
            raise KOutOfRange(
                f"dimension {p} too small for the ratio estimator (need p >= 2)"
            )
        curve, k_hat = _ratio_curve(vals, R, f"kernel {key}")
        ratio_curves[key] = curve
        eigenvalues[key] = vals.copy()
        kernel_norms[key] = _norm2_psd(vals)
        k_by_space[key] = k_hat
    chosen = []
    k_final = []
    for orientation in ("row", "column"):
        n1 = kernel_norms[(orientation, 1)]
        n2 = kernel_norms[(orientation, 2)]
        q = 1 if n1 >= n2 else 2  # ties go to regime 1
        chosen.append(q)
        k_final.append(k_by_space[(orientation, q)])
    return FactorCountEstimate(
        k_hat=(k_final[0], k_final[1]),
        chosen_regime=(chosen[0], chosen[1]),
        k_by_space=k_by_space,
        ratio_curves=ratio_curves,
        kernel_norms=kernel_norms,
        eigenvalues=eigenvalues,
        eta=eta,
    )


def estimate_factor_counts(
    X, z, eta1: float, eta2: float, h0: int = 2
) -> FactorCountEstimate:
    """Ratio-based factor counts from the two-sided tail partition.

    For each orientation s and regime i, the eigenvalue ladder of the kernel
    M_{s,i}(eta1, eta2) gives ratio curves lambda_{k+1}/lambda_k over
    k = 1..floor(p_s/2); the count for direction s comes from the regime
    with the larger kernel spectral norm.  Ties in the argmin pick the
    smallest k; ties in the norm comparison pick regime 1.

    Raises
    ------
    EmptyRegime
        If either tail partition has fewer than h0 + 1 points.
    """
    Xd, zv = _as_arrays(X, z)
    if not eta1 < eta2:
        raise ValueError(f"need eta1 < eta2, got ({eta1}, {eta2})")
    _check_regime_sizes(zv, eta1, eta2, h0)
    kernels = m_hat_all(Xd, zv, eta1, eta2, h0)
    decomps = {key: sym_eigen(kernels[key].M, check=False) for key in SPACE_KEYS}
    return _factor_counts_from_decomps(decomps, (float(eta1), float(eta2)))


def _check_complements(B: Mapping[SpaceKey, Union[LoadingSpace, np.ndarray]], p1: int, p2: int):
    mats: Dict[SpaceKey, np.ndarray] = {}
    for key in SPACE_KEYS:
        if key not in B:
            raise ShapeMismatch(f"missing complement basis for {key}")
        Q = B[key].Q if isinstance(B[key], LoadingSpace) else np.asarray(B[key])
        p = p1 if key[0] == "row" else p2
        if Q.ndim != 2 or Q.shape[0] != p or not (1 <= Q.shape[1] < p):
            raise ShapeMismatch(
                f"complement for {key} must be {p} x (1..{p - 1}), got {Q.shape}"
            )
        mats[key] = Q
    return mats


def g_hat(X, z, B: Mapping[SpaceKey, Union[LoadingSpace, np.ndarray]], r: float, h0: int = 2) -> float:
    """Objective G(r): summed spectral norms of the four projected kernels.

    ``B`` maps each (orientation, regime) to the complement basis of that
    loading space (p_s x (p_s - k_s)); the kernels are evaluated at the
    single threshold r.
    """
    Xd, zv = _as_arrays(X, z)
    mats = _check_complements(B, Xd.shape[1], Xd.shape[2])
    kernels = m_hat_all(Xd, zv, float(r), float(r), h0)
    total = 0.0
    for key in SPACE_KEYS:
        Bk = mats[key]
        proj = Bk.T @ kernels[key].M @ Bk
        total += _norm2_psd(np.linalg.eigvalsh(0.5 * (proj + proj.T)))
    return float(total)


@dataclass(frozen=True)
class _ThresholdScan:
    """Shared intermediate: two-sided kernels plus kernel stacks over the grid."""

    eta: Tuple[float, float]
    decomps_eta: Dict[SpaceKey, EigenDecomposition]
    grid: np.ndarray
    stacks: Dict[SpaceKey, np.ndarray]
    h0: int


def _threshold_scan(Xd, zv, eta1, eta2, h0, grid_stride: int = 1) -> _ThresholdScan:
    _check_regime_sizes(zv, eta1, eta2, h0)
    kernels_eta = m_hat_all(Xd, zv, eta1, eta2, h0)
    decomps = {key: sym_eigen(kernels_eta[key].M, check=False) for key in SPACE_KEYS}
    candidates = np.unique(zv)
    candidates = candidates[(candidates > eta1) & (candidates < eta2)]
    if grid_stride > 1:
        candidates = candidates[::grid_stride]
    if candidates.size == 0:
        raise EmptyGrid(f"no candidate thresholds strictly inside ({eta1}, {eta2})")
    stacks = sweep_kernel_stacks(Xd, zv, candidates, h0)
    return _ThresholdScan(
        eta=(float(eta1), float(eta2)),
        decomps_eta=decomps,
        grid=candidates,
        stacks=stacks,
        h0=h0,
    )


def _ghat_curve(scan: _ThresholdScan, k1: int, k2: int) -> Tuple[np.ndarray, int]:
    total = np.zeros(scan.grid.size)
    for key in SPACE_KEYS:
        vectors = scan.decomps_eta[key].vectors
        p = vectors.shape[0]
        k = k1 if key[0] == "row" else k2
        if not (1 <= k < p):
            raise KOutOfRange(f"k for {key} must satisfy 1 <= k < {p}, got {k}")
        B = vectors[:, k:]
        proj = B.T @ scan.stacks[key] @ B
        proj = 0.5 * (proj + proj.transpose(0, 2, 1))
        total += np.abs(np.linalg.eigvalsh(proj)).max(axis=1)
    return total, int(np.argmin(total))  # first minimum => smallest r on ties


def estimate_threshold(
    X, z, eta1: float, eta2: float, k1: int, k2: int, h0: int = 2, grid_stride: int = 1
) -> ThresholdEstimate:
    """Threshold estimate: argmin of G over the candidate grid.

    The complement bases are estimated once from the two-sided partition at
    (eta1, eta2) and reused across the entire grid, which is the sorted set
    of observed z values strictly inside (eta1, eta2).  Ties in the argmin
    return the smallest candidate.  ``grid_stride`` subsamples the grid for
    exploratory runs; the default evaluates every candidate.

    Raises
    ------
    EmptyGrid
        If no observed z value falls strictly inside (eta1, eta2).
    EmptyRegime
        If a tail partition is too small to estimate the complements.
    """
    Xd, zv = _as_arrays(X, z)
    if not eta1 < eta2:
        raise ValueError(f"need eta1 < eta2, got ({eta1}, {eta2})")
    scan = _threshold_scan(Xd, zv, float(eta1), float(eta2), h0, grid_stride)
    values, idx = _ghat_curve(scan, k1, k2)
    return ThresholdEstimate(
        r_hat=float(scan.grid[idx]), grid=scan.grid, values=values, eta=scan.eta
    )


def _finalize_fit(
    scan: _ThresholdScan,
    k1: int,
    k2: int,
    counts: Optional[FactorCountEstimate],
    config: EstimationConfig,
) -> FittedModel:
    values, idx = _ghat_curve(scan, k1, k2)
    estimate = ThresholdEstimate(
        r_hat=float(scan.grid[idx]), grid=scan.grid, values=values, eta=scan.eta
    )
    loadings: Dict[SpaceKey, LoadingSpace] = {}
    eigenvalues: Dict[SpaceKey, np.ndarray] = {}
    eigenvectors: Dict[SpaceKey, np.ndarray] = {}
    for key in SPACE_KEYS:
        ridge = config.ridge_tol
        M = scan.stacks[key][idx]
        if ridge > 0.0:
            M = M + ridge * np.linalg.norm(M, "fro") * np.eye(M.shape[0])
        dec = sym_eigen(M, check=False)
        k = k1 if key[0] == "row" else k2
        loadings[key] = LoadingSpace(
            Q=dec.vectors[:, :k], orientation=key[0], regime=key[1]
        )
        eigenvalues[key] = dec.values
        eigenvectors[key] = dec.vectors
    return FittedModel(
        k_hat=(k1, k2),
        r_tilde=estimate.r_hat,
        eta=scan.eta,
        loadings=loadings,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        threshold=estimate,
        factor_counts=counts,
        config=config,
    )


def fit(X, z, config: Optional[EstimationConfig] = None) -> FittedModel:
    """Full pipeline: quantile interval, factor counts, threshold, loadings.

    Failures inside a stage are re-raised as EstimationStageError tagged with
    the stage name ("quantiles", "factor_counts", "threshold", "loadings"),
    with the original exception as ``cause``.
    """
    config = config or EstimationConfig()
    Xd, zv = _as_arrays(X, z)

    def stage(name, fn):
        try:
            return fn()
        except TmfmError as exc:
            raise EstimationStageError(name, exc) from exc

    eta1, eta2 = stage(
        "quantiles",
        lambda: (quantile(zv, config.eta_quantiles[0]), quantile(zv, config.eta_quantiles[1])),
    )
    if config.k_override is not None:
        counts = None
        k1, k2 = config.k_override
    else:
        counts = stage(
            "factor_counts", lambda: estimate_factor_counts(Xd, zv, eta1, eta2, config.h0)
        )
        k1, k2 = counts.k_hat
    scan = stage(
        "threshold", lambda: _threshold_scan(Xd, zv, eta1, eta2, config.h0)
    )
    return stage("loadings", lambda: _finalize_fit(scan, k1, k2, counts, config))


def residual_E(X, z, model: FittedModel, t0: int) -> float:
    """Out-of-sample residual sum of squares after removing the fitted spaces.

    For every t > t0 the observation is projected onto the complements of
    the fitted row and column spaces for its regime (by z_t versus the
    fitted threshold) and the squared norms are summed:

        E = sum_{t>t0} ||B_{1,i(t)}' X_t||_F^2 + ||B_{2,i(t)}' X_t'||_F^2.

    ``t0`` counts observations reserved for fitting (1 <= t0 < T); the model
    is expected to have been fitted on X_1..X_t0.
    """
    Xd, zv = _as_arrays(X, z)
    T = Xd.shape[0]
    if not (1 <= t0 < T):
        raise IndexOutOfRange(f"t0 must satisfy 1 <= t0 < T={T}, got {t0}")
    B = {key: model.complement_basis(key) for key in SPACE_KEYS}
    for key, mat in B.items():
        p = Xd.shape[1] if key[0] == "row" else Xd.shape[2]
        if mat.shape[0] != p:
            raise ShapeMismatch(
                f"model complement for {key} has ambient dim {mat.shape[0]}, data has {p}"
            )
    tail_X = Xd[t0:]
    tail_mask1 = zv[t0:] < model.r_tilde
    total = 0.0
    for i, mask in ((1, tail_mask1), (2, ~tail_mask1)):
        if not mask.any():
            continue
        Xi = tail_X[mask]
        proj_rows = np.matmul(B[("row", i)].T, Xi)
        proj_cols = np.matmul(Xi, B[("column", i)])
        total += float((proj_rows * proj_rows).sum() + (proj_cols * proj_cols).sum())
    return total


def select_threshold_variable(
    X,
    candidates: Mapping[str, Union[ThresholdSeries, np.ndarray, Sequence[float]]],
    config: Optional[EstimationConfig] = None,
) -> List[CandidateScore]:
    """Rank candidate threshold series by out-of-sample residual.

    Each candidate gets its own loading-space and threshold fit on the
    first ceil(t0_fraction * T) observations and is scored by
    :func:`residual_E` on the remainder; candidates rank ascending by E.

    All candidates are compared at a common factor-count pair: E shrinks
    mechanically as the removed dimension grows, and a wrong candidate
    mixes the regimes inside its kernels, which inflates its own count
    estimate and would hand it an unearned advantage.  The common pair is
    ``config.k_override`` when set, otherwise the elementwise minimum of
    the per-candidate ratio estimates on the training window.

    A candidate whose fit fails is reported with its error and ranked last
    (failures keep their input order).
    """
    config = config or EstimationConfig()
    Xd = X.data if isinstance(X, MatrixSeries) else np.asarray(X, dtype=np.float64)
    if not candidates:
        raise ValueError("need at least one candidate threshold series")
    T = Xd.shape[0]
    t0 = int(math.ceil(config.t0_fraction * T))
    if not (2 <= t0 < T):
        raise IndexOutOfRange(
            f"t0_fraction {config.t0_fraction} leaves no usable split for T={T}"
        )

    series: Dict[str, np.ndarray] = {}
    failures: Dict[str, str] = {}
    for name, cand in candidates.items():
        try:
            zv = cand.z if isinstance(cand, ThresholdSeries) else np.asarray(cand, dtype=np.float64)
            if zv.shape != (T,):
                raise DimensionMismatch(
                    f"candidate {name!r} has shape {zv.shape}, expected ({T},)"
                )
            ThresholdSeries(zv)  # finiteness check up front
            series[name] = zv
        except TmfmError as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"

    if config.k_override is not None:
        common_k = config.k_override
    else:
        per_candidate: Dict[str, Tuple[int, int]] = {}
        for name, zv in list(series.items()):
            try:
                ztrain = zv[:t0]
                eta1 = quantile(ztrain, config.eta_quantiles[0])
                eta2 = quantile(ztrain, config.eta_quantiles[1])
                counts = estimate_factor_counts(Xd[:t0], ztrain, eta1, eta2, config.h0)
                per_candidate[name] = counts.k_hat
            except TmfmError as exc:
                failures[name] = f"{type(exc).__name__}: {exc}"
                del series[name]
        if not per_candidate:
            return [
                CandidateScore(name=n, E=math.inf, error=failures[n]) for n in candidates
                if n in failures
            ]
        common_k = (
            min(k[0] for k in per_candidate.values()),
            min(k[1] for k in per_candidate.values()),
        )

    fit_config = replace(config, k_override=common_k)
    scored: List[CandidateScore] = []
    for name, zv in series.items():
        try:
            model = fit(MatrixSeries(Xd[:t0]), ThresholdSeries(zv[:t0]), fit_config)
            scored.append(CandidateScore(name=name, E=residual_E(Xd, zv, model, t0)))
        except TmfmError as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
    scored.sort(key=lambda s: s.E)
    failed = [
        CandidateScore(name=name, E=math.inf, error=failures[name])
        for name in candidates
        if name in failures
    ]
    return scored + failed
