"""Symmetric eigendecomposition, loading-space extraction, and space distance."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .errors import (
    AmbientDimMismatch,
    KOutOfRange,
    NoConvergence,
    NotSymmetric,
)

__all__ = [
    "EigenDecomposition",
    "LoadingSpace",
    "sym_eigen",
    "top_k",
    "complement",
    "space_distance",
    "orthonormal_basis",
]

#: symmetry precondition: ||M - M'||_max <= SYM_RTOL * ||M||_F
SYM_RTOL = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    """Full symmetric eigendecomposition, eigenvalues sorted descending.

    ``vectors[:, k]`` is the unit eigenvector for ``values[k]``; each
    eigenvector's sign is fixed by making its largest-magnitude entry
    positive (ties broken by lowest index) so output is reproducible.
    """

    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class LoadingSpace:
    """A p x k column-orthonormal representative of an estimated loading space.

    ``orientation`` is ``"row"`` for row loading spaces (acting on matrix
    columns) and ``"column"`` for column loading spaces.
    """

    Q: np.ndarray
    orientation: str = "row"
    regime: int = 1

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.ndim != 2 or not (1 <= Q.shape[1] <= Q.shape[0]):
            raise KOutOfRange(f"loading space needs p x k with 1 <= k <= p, got {Q.shape}")
        if self.orientation not in ("row", "column"):
            raise ValueError(f"orientation must be 'row' or 'column', got {self.orientation!r}")
        if self.regime not in (1, 2):
            raise ValueError(f"regime must be 1 or 2, got {self.regime}")
        gram_err = np.abs(Q.T @ Q - np.eye(Q.shape[1])).max()
        if gram_err > 1e-10:
            raise ValueError(f"columns not orthonormal: max |Q'Q - I| = {gram_err:.3e}")
        Q = Q.copy()
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def k(self) -> int:
        return self.Q.shape[1]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column made positive; argmax takes the
    # lowest index on ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(M: np.ndarray, check: bool = True) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, deterministic output.

    Eigenvalues are returned in non-increasing order with a stable order
    among numerically tied values, and each eigenvector's sign follows the
    largest-magnitude-entry-positive rule.

    Parameters
    ----------
    M : (p, p) ndarray
        Symmetric input (checked against ``SYM_RTOL`` unless ``check=False``).

    Raises
    ------
    NotSymmetric
        If the symmetry check fails.
    NoConvergence
        If the underlying LAPACK iteration fails to converge.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    if check:
        fro = np.linalg.norm(M, "fro")
        asym = np.abs(M - M.T).max()
        if asym > SYM_RTOL * max(fro, 1e-300):
            raise NotSymmetric(
                f"max |M - M'| = {asym:.3e} exceeds {SYM_RTOL:.0e} * ||M||_F = {SYM_RTOL * fro:.3e}"
            )
    Ms = 0.5 * (M + M.T)
    try:
        vals, vecs = np.linalg.eigh(Ms)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NoConvergence(f"symmetric eigensolver failed: {exc}") from exc
    # eigh returns ascending; stable argsort keeps tied values in eigh's order
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order])
    return EigenDecomposition(values=vals, vectors=vecs)


def _kernel_matrix(M) -> tuple[np.ndarray, str, int]:
    """Accept a LagCovKernel or a plain symmetric ndarray."""
    if hasattr(M, "M") and hasattr(M, "orientation"):
        return np.asarray(M.M), M.orientation, M.regime
    return np.asarray(M, dtype=np.float64), "row", 1


def top_k(M, k: int) -> LoadingSpace:
    """First k eigenvectors of a kernel, by descending eigenvalue.

    Parameters
    ----------
    M : LagCovKernel or (p, p) ndarray
        Symmetric nonnegative-definite kernel.
    k : int
        Number of leading eigenvectors, 1 <= k <= p.
    """
    mat, orientation, regime = _kernel_matrix(M)
    p = mat.shape[0]
    if not (1 <= k <= p):
        raise KOutOfRange(f"k must satisfy 1 <= k <= {p}, got {k}")
    dec = sym_eigen(mat)
    return LoadingSpace(Q=dec.vectors[:, :k], orientation=orientation, regime=regime)


def complement(M, k: int) -> LoadingSpace:
    """Eigenvectors k+1..p of a kernel: the orthogonal complement basis."""
    mat, orientation, regime = _kernel_matrix(M)
    p = mat.shape[0]
    if not (1 <= k < p):
        raise KOutOfRange(f"k must satisfy 1 <= k < {p}, got {k}")
    dec = sym_eigen(mat)
    return LoadingSpace(Q=dec.vectors[:, k:], orientation=orientation, regime=regime)


def orthonormal_basis(A: np.ndarray) -> np.ndarray:
    """Column-orthonormal representative of span(A) (A must have full column rank)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    q, r = np.linalg.qr(A)
    if np.abs(np.diag(r)).min() <= 1e-12 * max(1.0, np.abs(np.diag(r)).max()):
        raise ValueError("matrix does not have full column rank")
    return q


def _as_basis(S) -> np.ndarray:
    if isinstance(S, LoadingSpace):
        return S.Q
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    return S


def space_distance(S1, S2) -> float:
    """Distance between the spans of two column-orthonormal matrices.

    For orthonormal representatives O1 (p x q1) and O2 (p x q2),

        D = sqrt(1 - tr(O1 O1' O2 O2') / min(q1, q2)),

    a value in [0, 1]: 0 iff one span contains the other, 1 iff the spans are
    orthogonal.  Tiny negative radicands from floating-point noise are
    clamped to 0.

    Parameters
    ----------
    S1, S2 : LoadingSpace or ndarray
        Column-orthonormal representatives; both must share the ambient
        dimension p.
    """
    O1, O2 = _as_basis(S1), _as_basis(S2)
    if O1.shape[0] != O2.shape[0]:
        raise AmbientDimMismatch(
            f"ambient dimensions differ: {O1.shape[0]} vs {O2.shape[0]}"
        )
    # With A the smaller basis, 1 - tr(O1 O1' O2 O2')/min(q1, q2) equals
    # ||A - B (B'A)||_F^2 / q_A, which avoids the catastrophic cancellation of
    # the literal trace formula when the spans (nearly) coincide.
    A, B = (O1, O2) if O1.shape[1] <= O2.shape[1] else (O2, O1)
    resid = A - B @ (B.T @ A)
    radicand = (resid * resid).sum() / A.shape[1]
    if radicand < 0.0:
        radicand = 0.0
    return float(np.sqrt(min(radicand, 1.0)))
