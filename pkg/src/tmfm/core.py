"""Domain types, dataset validation, regime masks, and quantile utilities.

The observed data is a matrix-valued time series ``X_t`` (``T`` matrices of
shape ``p1 x p2``) paired with a scalar threshold series ``z_t`` of the same
length.  A threshold value ``r`` splits time into regime 1 (``z_t < r``) and
regime 2 (``z_t >= r``); that strict/weak boundary convention is fixed
throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidQuantile,
    NonFiniteValue,
)

__all__ = [
    "MatrixSeries",
    "ThresholdSeries",
    "RegimeMask",
    "EstimationConfig",
    "build_dataset",
    "regime_mask",
    "quantile",
]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out is arr:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MatrixSeries:
    """A length-T sequence of p1 x p2 real matrices.

    Parameters
    ----------
    data : (T, p1, p2) ndarray
        The observed matrices, stacked along the first axis.
    t_index : sequence of str, optional
        Labels for the time axis, carried for reporting only.
    """

    data: np.ndarray
    t_index: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        data = _readonly(np.asarray(self.data))
        if data.ndim != 3:
            raise DimensionMismatch(
                f"matrix series must be a T x p1 x p2 tensor, got shape {data.shape}"
            )
        T, p1, p2 = data.shape
        if T < 2 or p1 < 1 or p2 < 1:
            raise DimensionMismatch(
                f"need T >= 2, p1 >= 1, p2 >= 1, got (T, p1, p2) = {(T, p1, p2)}"
            )
        bad = ~np.isfinite(data)
        if bad.any():
            t, r, c = (int(i) for i in np.argwhere(bad)[0])
            raise NonFiniteValue(
                f"non-finite value at (t={t}, row={r}, col={c})", index=(t, r, c)
            )
        object.__setattr__(self, "data", data)
        if self.t_index is not None:
            labels = tuple(str(s) for s in self.t_index)
            if len(labels) != T:
                raise DimensionMismatch(
                    f"t_index has {len(labels)} labels for T={T} observations"
                )
            object.__setattr__(self, "t_index", labels)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def p1(self) -> int:
        return self.data.shape[1]

    @property
    def p2(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ThresholdSeries:
    """A length-T scalar threshold variable aligned with a MatrixSeries."""

    z: np.ndarray

    def __post_init__(self):
        z = _readonly(np.asarray(self.z))
        if z.ndim != 1 or z.shape[0] < 1:
            raise DimensionMismatch(
                f"threshold series must be a nonempty vector, got shape {z.shape}"
            )
        bad = ~np.isfinite(z)
        if bad.any():
            t = int(np.argwhere(bad)[0][0])
            raise NonFiniteValue(f"non-finite threshold value at t={t}", index=t)
        object.__setattr__(self, "z", z)

    @property
    def T(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class RegimeMask:
    """Boolean membership of each time point in one regime at threshold r.

    Regime 1 holds where ``z_t < r``; regime 2 where ``z_t >= r``.
    """

    mask: np.ndarray
    regime: int
    threshold: float

    def __post_init__(self):
        if self.regime not in (1, 2):
            raise ValueError(f"regime must be 1 or 2, got {self.regime}")
        mask = np.asarray(self.mask, dtype=bool).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "threshold", float(self.threshold))

    def count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class EstimationConfig:
    """Knobs for the estimation pipeline.

    Attributes
    ----------
    h0 : int
        Lag horizon for the covariance kernels.  Autocorrelation is usually
        strongest at small lags, so the default is small.
    eta_quantiles : (float, float)
        Quantile levels of z defining the known interval (eta1, eta2) that
        contains the threshold; defaults to the 25th/75th percentiles.
    k_override : (int, int), optional
        Skip factor-count estimation and use these (k1, k2) directly.
    t0_fraction : float
        Fraction of the sample used for fitting when scoring threshold-
        variable candidates; the remainder is scored out of sample.
    ridge_tol : float
        Optional nonnegative diagonal ridge (relative to the kernel's
        Frobenius norm) added before eigendecomposition; 0 disables it.
    seed : int
        Seed recorded with results for provenance; the estimators themselves
        are deterministic.
    """

    h0: int = 2
    eta_quantiles: Tuple[float, float] = (0.25, 0.75)
    k_override: Optional[Tuple[int, int]] = None
    t0_fraction: float = 0.75
    ridge_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.h0 < 1:
            raise ValueError(f"h0 must be a positive integer, got {self.h0}")
        q_lo, q_hi = self.eta_quantiles
        if not (0.0 < q_lo < q_hi < 1.0):
            raise ValueError(
                f"eta_quantiles must satisfy 0 < q_lo < q_hi < 1, got {self.eta_quantiles}"
            )
        if self.k_override is not None:
            k1, k2 = self.k_override
            if k1 < 1 or k2 < 1:
                raise ValueError(f"k_override entries must be >= 1, got {self.k_override}")
            object.__setattr__(self, "k_override", (int(k1), int(k2)))
        if not (0.0 < self.t0_fraction < 1.0):
            raise ValueError(f"t0_fraction must lie in (0, 1), got {self.t0_fraction}")
        if self.ridge_tol < 0.0:
            raise ValueError(f"ridge_tol must be nonnegative, got {self.ridge_tol}")


def build_dataset(
    X: Union[np.ndarray, Sequence],
    z: Union[np.ndarray, Sequence],
    t_index: Optional[Sequence[str]] = None,
) -> Tuple[MatrixSeries, ThresholdSeries]:
    """Validate and pair a raw tensor with its threshold series.

    Parameters
    ----------
    X : array-like, shape (T, p1, p2)
        Observed matrices.
    z : array-like, shape (T,)
        Threshold variable, one value per time point.
    t_index : sequence of str, optional
        Time labels, reporting only.

    Returns
    -------
    (MatrixSeries, ThresholdSeries)
        Immutable, validated dataset.

    Raises
    ------
    DimensionMismatch
        If ``len(z)`` differs from T or shapes are otherwise inconsistent.
    NonFiniteValue
        If any entry is NaN or infinite (the offending index is reported).
    """
    series = MatrixSeries(np.asarray(X, dtype=np.float64), t_index=t_index)
    thresh = ThresholdSeries(np.asarray(z, dtype=np.float64))
    if thresh.T != series.T:
        raise DimensionMismatch(
            f"threshold series has length {thresh.T} but matrix series has T={series.T}"
        )
    return series, thresh


def regime_mask(
    z: Union[ThresholdSeries, np.ndarray], r: float, regime: int
) -> RegimeMask:
    """Indicator of regime membership at threshold r.

    Regime 1 is ``z_t < r`` (strict) and regime 2 is ``z_t >= r``, so for any
    r the two masks partition every time point.
    """
    if regime not in (1, 2):
        raise ValueError(f"regime must be 1 or 2, got {regime}")
    zv = z.z if isinstance(z, ThresholdSeries) else np.asarray(z, dtype=np.float64)
    r = float(r)
    mask = zv < r if regime == 1 else zv >= r
    return RegimeMask(mask=mask, regime=regime, threshold=r)


def quantile(z: Union[ThresholdSeries, np.ndarray], q: float) -> float:
    """Order-statistic quantile with linear interpolation.

    Uses the common linear-interpolation rule on sorted order statistics
    (numpy's default), which is deterministic and permutation invariant.

    Raises
    ------
    InvalidQuantile
        If q is outside the open interval (0, 1).
    """
    if not (0.0 < q < 1.0):
        raise InvalidQuantile(f"quantile level must lie in (0, 1), got {q}")
    zv = z.z if isinstance(z, ThresholdSeries) else np.asarray(z, dtype=np.float64)
    return float(np.quantile(zv, q, method="linear"))
