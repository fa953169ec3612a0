"""
Dense float64 linear algebra and seeded randomness shared by every module.
"""
from enum import IntEnum

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist

from app.model.error import NotPositiveDefiniteError, NumericError, ShapeError

DenseMatrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]
Rng = np.random.Generator


class RngStream(IntEnum):
    """Independent random streams derived from a single seed."""
    CENTERS = 1
    PROJECTION = 2
    SEMANTIC_NOISE = 3
    IMAGE_NOISE = 4
    SPLIT = 5
    INIT = 6
    MINING = 7


def make_rng(seed: int, stream: int = 0) -> Rng:
    """PCG64 generator keyed by (seed, stream); identical draws on every platform."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def as_matrix(x, name: str = "matrix") -> DenseMatrix:
    """Coerce to a 2-D, C-contiguous float64 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D", shape=list(arr.shape))
    return arr


def _check_finite(result: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(result)):
        raise NumericError(f"{op} produced non-finite values")
    return result


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}",
            left=list(a.shape), right=list(b.shape)
        )
    return _check_finite(a @ b, "matmul")


def solve_spd(a: DenseMatrix, b: np.ndarray) -> np.ndarray:
    """Solve a·X = b for symmetric positive definite a via Cholesky.

    Args:
        a: Square SPD matrix (n x n)
        b: Right-hand side, vector (n,) or matrix (n x k)

    Returns:
        X with the same shape as b
    """
    a = as_matrix(a, "a")
    b = np.asarray(b, dtype=np.float64)

    # --- Guard Clauses ---
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"solve_spd needs a square matrix, got {a.shape}", shape=list(a.shape))
    if b.ndim not in (1, 2) or b.shape[0] != a.shape[0]:
        raise ShapeError(
            f"solve_spd right-hand side {b.shape} does not match {a.shape}",
            left=list(a.shape), right=list(b.shape)
        )
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise NumericError("solve_spd received non-finite input")
    scale = max(float(np.max(np.abs(a))), 1.0)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise NotPositiveDefiniteError("solve_spd matrix is not symmetric")

    try:
        factor = cho_factor(a, lower=True, check_finite=False)
    except LinAlgError as e:
        raise NotPositiveDefiniteError(f"non-positive pivot in Cholesky factorization: {e}") from e

    return _check_finite(cho_solve(factor, b, check_finite=False), "solve_spd")


def l2_normalize(v: Vector, eps: float) -> Vector:
    """Return v / max(||v||, eps); the zero vector stays zero."""
    v = np.asarray(v, dtype=np.float64)
    return v / max(float(np.linalg.norm(v)), eps)


def l2_normalize_rows(m: DenseMatrix, eps: float) -> DenseMatrix:
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.maximum(norms, eps)


def pairwise_sq_dist(rows_a: DenseMatrix, rows_b: DenseMatrix) -> DenseMatrix:
    """Squared Euclidean distances between every row of a and every row of b."""
    rows_a = as_matrix(rows_a, "rows_a")
    rows_b = as_matrix(rows_b, "rows_b")
    if rows_a.shape[1] != rows_b.shape[1]:
        raise ShapeError(
            f"pairwise_sq_dist column mismatch: {rows_a.shape[1]} vs {rows_b.shape[1]}",
            left=list(rows_a.shape), right=list(rows_b.shape)
        )
    # cdist evaluates each pair directly: exact zeros on the diagonal, exact symmetry
    dist = cdist(rows_a, rows_b, metric="sqeuclidean")
    np.maximum(dist, 0.0, out=dist)
    return _check_finite(dist, "pairwise_sq_dist")
