"""Deterministic generation of two-regime matrix factor data.

The generating model is

    X_t = R_1 F_t C_1' + E_t   if z_t <  r0,
    X_t = R_2 F_t C_2' + E_t   if z_t >= r0,

with vec(F_t) a diagonal VAR(1), z_t iid standard normal, and E_t Gaussian
with Kronecker covariance Gamma_2 (x) Gamma_1.  Loading matrices are drawn
with a prescribed factor strength delta (entry scale p^(-delta/2)) and,
in coupled mode, a prescribed threshold strength beta controlling how many
entries differ between the two regimes.

Randomness contract: all draws come from one numpy ``Generator`` backed by
``PCG64`` seeded with ``SeedSequence(seed)`` (per-replicate streams use
``SeedSequence(master_seed, stream_id)``), consumed in the documented order
loadings, factors, threshold series, noise.  Gaussians use numpy's ziggurat
sampler, so byte-level reproducibility is guaranteed for this implementation
(same numpy generator family) rather than across unrelated implementations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .core import MatrixSeries, ThresholdSeries
from .errors import NonStationaryAR, NotPositiveDefinite
from .spectral import sym_eigen

__all__ = [
    "DgpSpec",
    "DgpTruth",
    "SimulatedDataset",
    "gen_loading",
    "gen_loading_pair",
    "gen_factors_var1",
    "gen_noise_kronecker",
    "simulate_dataset",
    "make_rng",
    "stream_seed",
]

#: VAR(1) burn-in; |a| <= 0.9 gives 0.9**200 ~ 7e-10 initialization decay
BURN_IN = 200

_DEFAULT_AR = (-0.8, 0.8, 0.9, -0.7, -0.9, 0.8, 0.7, 0.8, 0.7)


def make_rng(seed: int) -> np.random.Generator:
    """The package-wide RNG: PCG64 seeded through SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def stream_seed(master_seed: int, stream_id: int) -> int:
    """Derived 64-bit seed for an independent per-replicate stream."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DgpSpec:
    """Full description of one simulated data-generating process.

    ``delta`` is (delta_11, delta_12, delta_21, delta_22): first index is the
    direction (1 = row, 2 = column), second the regime.  ``beta`` is
    (beta_1, beta_2) for the row and column directions; it only matters in
    ``loading_mode="coupled"``, where regime 2's loadings are regime 1's with
    round(k * p**beta) entries resampled.  ``loading_mode="independent"``
    draws the two regimes' loadings independently.
    """

    p1: int
    p2: int
    T: int
    k1: int = 3
    k2: int = 3
    r0: float = 0.0
    ar_diag: Tuple[float, ...] = _DEFAULT_AR
    noise_offdiag: float = 0.2
    delta: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    beta: Tuple[float, float] = (1.0, 1.0)
    noise_scale: float = 1.0
    loading_mode: str = "independent"
    z_law: str = "gaussian-iid"
    seed: int = 0

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 1 or self.T < 2:
            raise ValueError(f"need p1, p2 >= 1 and T >= 2, got {(self.p1, self.p2, self.T)}")
        if not (1 <= self.k1 <= self.p1 and 1 <= self.k2 <= self.p2):
            raise ValueError(f"need 1 <= k_s <= p_s, got k={(self.k1, self.k2)}, p={(self.p1, self.p2)}")
        ar = tuple(float(a) for a in self.ar_diag)
        if len(ar) != self.k1 * self.k2:
            raise ValueError(
                f"ar_diag needs k1*k2={self.k1 * self.k2} entries, got {len(ar)}"
            )
        if any(abs(a) >= 1.0 for a in ar):
            raise NonStationaryAR(f"ar_diag entries must have modulus < 1, got {ar}")
        object.__setattr__(self, "ar_diag", ar)
        d = tuple(float(x) for x in self.delta)
        if len(d) != 4 or any(not (0.0 <= x <= 1.0) for x in d):
            raise ValueError(f"delta must be four values in [0, 1], got {self.delta}")
        object.__setattr__(self, "delta", d)
        b = tuple(float(x) for x in self.beta)
        if len(b) != 2 or any(not (0.0 <= x <= 1.0) for x in b):
            raise ValueError(f"beta must be two values in [0, 1], got {self.beta}")
        object.__setattr__(self, "beta", b)
        if self.loading_mode not in ("independent", "coupled"):
            raise ValueError(
                f"loading_mode must be 'independent' or 'coupled', got {self.loading_mode!r}"
            )
        if self.z_law != "gaussian-iid":
            raise ValueError(f"only z_law='gaussian-iid' is supported, got {self.z_law!r}")
        if self.noise_scale < 0.0:
            raise ValueError(f"noise_scale must be nonnegative, got {self.noise_scale}")
        for p in (self.p1, self.p2):
            _check_equicorrelation(p, self.noise_offdiag)

    def with_seed(self, seed: int) -> "DgpSpec":
        return replace(self, seed=int(seed))


def _check_equicorrelation(p: int, offdiag: float) -> None:
    # eigenvalues of (1-o)I + o*11' are 1-o (x p-1) and 1+(p-1)o
    if p > 1 and not (-1.0 / (p - 1) < offdiag < 1.0):
        raise NotPositiveDefinite(
            f"equicorrelation {offdiag} is not positive definite at dimension {p}"
        )


@dataclass(frozen=True)
class DgpTruth:
    """Generator matrices and latent paths stored alongside simulated data."""

    R1: np.ndarray
    R2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    F: np.ndarray
    r0: float


@dataclass(frozen=True)
class SimulatedDataset:
    X: MatrixSeries
    z: ThresholdSeries
    truth: DgpTruth
    spec: DgpSpec

    def signal(self) -> np.ndarray:
        """Noise-free common component R_i F_t C_i' for every t."""
        t = self.truth
        mask1 = self.z.z < t.r0
        out = np.empty_like(self.X.data)
        out[mask1] = np.einsum("ak,tkl,bl->tab", t.R1, t.F[mask1], t.C1)
        out[~mask1] = np.einsum("ak,tkl,bl->tab", t.R2, t.F[~mask1], t.C2)
        return out


def gen_loading(p: int, k: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Loading matrix with iid Uniform[-p^(-delta/2), p^(-delta/2)] entries."""
    if not (p >= k >= 1):
        raise ValueError(f"need p >= k >= 1, got (p, k) = {(p, k)}")
    bound = float(p) ** (-delta / 2.0)
    return rng.uniform(-bound, bound, size=(p, k))


def gen_loading_pair(
    p: int,
    k: int,
    delta1: float,
    delta2: float,
    beta: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Loading matrices for two regimes with controlled separation.

    A base matrix B has iid Uniform[-1, 1] entries; regime 1 gets
    p^(-delta1/2) * B.  Then round(k * p**beta) distinct entries of B
    (positions uniform without replacement, row-major order) are replaced
    with fresh Uniform[-1, 1] draws and regime 2 gets p^(-delta2/2) times
    the modified matrix.  beta = 1 resamples every entry; beta = 0 resamples
    k entries.
    """
    if not (p >= k >= 1):
        raise ValueError(f"need p >= k >= 1, got (p, k) = {(p, k)}")
    base = rng.uniform(-1.0, 1.0, size=(p, k))
    n_new = int(np.rint(k * float(p) ** beta))
    n_new = min(max(n_new, 0), p * k)
    modified = base.copy()
    if n_new > 0:
        positions = rng.choice(p * k, size=n_new, replace=False)
        modified.reshape(-1)[positions] = rng.uniform(-1.0, 1.0, size=n_new)
    L1 = float(p) ** (-delta1 / 2.0) * base
    L2 = float(p) ** (-delta2 / 2.0) * modified
    return L1, L2


def gen_factors_var1(
    T: int,
    k1: int,
    k2: int,
    ar_diag,
    rng: np.random.Generator,
) -> np.ndarray:
    """Factor path from vec(F_t) = A vec(F_{t-1}) + eps_t with diagonal A.

    The innovations are iid standard normal.  The initial state is drawn at
    the stationary scale 1/sqrt(1 - a^2) and a burn-in of ``BURN_IN`` steps
    is discarded.  vec stacks columns, so entry d of the state is
    F[d % k1, d // k1].

    Raises
    ------
    NonStationaryAR
        If any coefficient has modulus >= 1.
    """
    a = np.asarray(ar_diag, dtype=np.float64)
    d = k1 * k2
    if a.shape != (d,):
        raise ValueError(f"ar_diag must have k1*k2={d} entries, got shape {a.shape}")
    if np.any(np.abs(a) >= 1.0):
        raise NonStationaryAR(f"ar_diag entries must have modulus < 1, got {a}")
    state = rng.standard_normal(d) / np.sqrt(1.0 - a * a)
    eps = rng.standard_normal((BURN_IN + T, d))
    for t in range(BURN_IN):
        state = a * state + eps[t]
    out = np.empty((T, d))
    for t in range(T):
        state = a * state + eps[BURN_IN + t]
        out[t] = state
    return out.reshape(T, k2, k1).transpose(0, 2, 1)


def _equicorrelation_sqrt(p: int, offdiag: float) -> np.ndarray:
    _check_equicorrelation(p, offdiag)
    gamma = (1.0 - offdiag) * np.eye(p) + offdiag * np.ones((p, p))
    dec = sym_eigen(gamma, check=False)
    return (dec.vectors * np.sqrt(np.maximum(dec.values, 0.0))) @ dec.vectors.T


def gen_noise_kronecker(
    T: int,
    p1: int,
    p2: int,
    offdiag: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """White noise with Cov(vec(E_t)) = Gamma_2 (x) Gamma_1.

    Gamma_s is the p_s-dimensional equicorrelation matrix with unit diagonal
    and the given off-diagonal value; E_t = Gamma_1^(1/2) Z_t Gamma_2^(1/2)
    with Z_t iid standard normal (matrix square roots are symmetric, taken
    spectrally).

    Raises
    ------
    NotPositiveDefinite
        If the equicorrelation matrix is not positive definite.
    """
    g1h = _equicorrelation_sqrt(p1, offdiag)
    g2h = _equicorrelation_sqrt(p2, offdiag)
    Z = rng.standard_normal((T, p1, p2))
    return np.matmul(np.matmul(g1h, Z), g2h)


def simulate_dataset(spec: DgpSpec) -> SimulatedDataset:
    """Generate one dataset according to the spec, bit-reproducible from its seed."""
    rng = make_rng(spec.seed)
    d11, d12, d21, d22 = spec.delta
    if spec.loading_mode == "independent":
        R1 = gen_loading(spec.p1, spec.k1, d11, rng)
        R2 = gen_loading(spec.p1, spec.k1, d12, rng)
        C1 = gen_loading(spec.p2, spec.k2, d21, rng)
        C2 = gen_loading(spec.p2, spec.k2, d22, rng)
    else:
        R1, R2 = gen_loading_pair(spec.p1, spec.k1, d11, d12, spec.beta[0], rng)
        C1, C2 = gen_loading_pair(spec.p2, spec.k2, d21, d22, spec.beta[1], rng)
    F = gen_factors_var1(spec.T, spec.k1, spec.k2, spec.ar_diag, rng)
    z = rng.standard_normal(spec.T)
    E = gen_noise_kronecker(spec.T, spec.p1, spec.p2, spec.noise_offdiag, rng)

    mask1 = z < spec.r0
    X = np.empty((spec.T, spec.p1, spec.p2))
    X[mask1] = np.einsum("ak,tkl,bl->tab", R1, F[mask1], C1)
    X[~mask1] = np.einsum("ak,tkl,bl->tab", R2, F[~mask1], C2)
    if spec.noise_scale != 0.0:
        X += spec.noise_scale * E

    for arr in (R1, R2, C1, C2, F):
        arr.setflags(write=False)
    truth = DgpTruth(R1=R1, R2=R2, C1=C1, C2=C2, F=F, r0=float(spec.r0))
    return SimulatedDataset(
        X=MatrixSeries(X), z=ThresholdSeries(z), truth=truth, spec=spec
    )
