"""
Mapping network f(s): two ReLU hidden layers and an L2-normalized output,
with the triplet hinge loss and its analytic gradient.
"""
from dataclasses import dataclass

import numpy as np

from app.engine.numerics import DenseMatrix, Rng, Vector, as_matrix
from app.model import ClassEmbeddingTable, MlpParams, ShapeError


@dataclass(frozen=True)
class ForwardCache:
    """Activations of a batch of inputs (one row per input)."""
    s: DenseMatrix
    z1: DenseMatrix
    h1: DenseMatrix
    z2: DenseMatrix
    h2: DenseMatrix
    z3: DenseMatrix
    norm: np.ndarray
    y: DenseMatrix
    eps: float


def init_params(in_dim: int, hidden: tuple[int, int], out_dim: int, rng: Rng) -> MlpParams:
    """Uniform weights with variance 2/fan_in (ReLU gain), zero biases."""
    sizes = (in_dim, hidden[0], hidden[1], out_dim)
    arrays = {}
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        bound = np.sqrt(6.0 / fan_in)
        arrays[f"w{layer}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        arrays[f"b{layer}"] = np.zeros(fan_out, dtype=np.float64)
    return MlpParams.from_arrays(arrays)


def forward_batch(params: MlpParams, s: DenseMatrix, eps: float) -> ForwardCache:
    s = as_matrix(s, "s")
    if s.shape[1] != params.in_dim:
        raise ShapeError(
            f"input dim {s.shape[1]} does not match network input {params.in_dim}",
            expected=params.in_dim, got=s.shape[1]
        )
    z1 = s @ params.w1.T + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.w2.T + params.b2
    h2 = np.maximum(z2, 0.0)
    z3 = h2 @ params.w3.T + params.b3
    norm = np.linalg.norm(z3, axis=1)
    y = z3 / np.maximum(norm, eps)[:, None]
    return ForwardCache(s=s, z1=z1, h1=h1, z2=z2, h2=h2, z3=z3, norm=norm, y=y, eps=eps)


def forward(params: MlpParams, s: Vector, eps: float) -> tuple[Vector, ForwardCache]:
    """Map one embedding; returns the unit-norm output and the cache for backward."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ShapeError(f"forward expects a vector, got shape {s.shape}")
    cache = forward_batch(params, s[None, :], eps)
    return cache.y[0], cache


def triplet_loss(ya: np.ndarray, yp: np.ndarray, yn: np.ndarray, alpha: float) -> np.ndarray | float:
    """max(0, ||ya-yp||² - ||ya-yn||² + alpha); row-wise for 2-D inputs."""
    ya, yp, yn = (np.asarray(v, dtype=np.float64) for v in (ya, yp, yn))
    arg = np.sum((ya - yp) ** 2, axis=-1) - np.sum((ya - yn) ** 2, axis=-1) + alpha
    loss = np.maximum(arg, 0.0)
    return float(loss) if loss.ndim == 0 else loss


def _branch_grads(params: MlpParams, cache: ForwardCache, dy: DenseMatrix) -> dict[str, np.ndarray]:
    """Chain rule from dL/dy back to every weight, summed over the batch rows."""
    # y = z / max(||z||, eps): Jacobian (I - yyᵀ)/||z|| above eps, I/eps below
    above = cache.norm >= cache.eps
    denom = np.where(above, cache.norm, cache.eps)[:, None]
    radial = np.where(above[:, None], cache.y * np.sum(cache.y * dy, axis=1, keepdims=True), 0.0)
    dz3 = (dy - radial) / denom

    dz2 = (dz3 @ params.w3) * (cache.z2 > 0)
    dz1 = (dz2 @ params.w2) * (cache.z1 > 0)
    return {
        "w3": dz3.T @ cache.h2, "b3": dz3.sum(axis=0),
        "w2": dz2.T @ cache.h1, "b2": dz2.sum(axis=0),
        "w1": dz1.T @ cache.s, "b1": dz1.sum(axis=0),
    }


def backward(
    params: MlpParams,
    cache_a: ForwardCache,
    cache_p: ForwardCache,
    cache_n: ForwardCache,
    alpha: float,
    lam: float,
) -> MlpParams:
    """Gradient of mean_b[triplet_loss_b] + lam·||Θ||² w.r.t. every weight and bias.

    The three caches hold the anchor, positive and negative branches of the
    same B triplets. The hinge is inactive (zero gradient) when its argument
    is <= 0. Branch contributions are accumulated in a fixed order
    (anchor, positive, negative).
    """
    ya, yp, yn = cache_a.y, cache_p.y, cache_n.y
    batch = ya.shape[0]
    arg = np.sum((ya - yp) ** 2, axis=1) - np.sum((ya - yn) ** 2, axis=1) + alpha
    active = (arg > 0.0)[:, None] / batch

    dya = 2.0 * (yn - yp) * active
    dyp = -2.0 * (ya - yp) * active
    dyn = 2.0 * (ya - yn) * active

    grads = {name: 2.0 * lam * a for name, a in params.arrays()}
    for cache, dy in ((cache_a, dya), (cache_p, dyp), (cache_n, dyn)):
        for name, g in _branch_grads(params, cache, dy).items():
            grads[name] = grads[name] + g
    return MlpParams.from_arrays(grads)


def objective(
    params: MlpParams,
    s_a: DenseMatrix,
    s_p: DenseMatrix,
    s_n: DenseMatrix,
    alpha: float,
    lam: float,
    eps: float,
) -> float:
    """mean triplet hinge loss over the rows + lam·||Θ||²"""
    ya = forward_batch(params, s_a, eps).y
    yp = forward_batch(params, s_p, eps).y
    yn = forward_batch(params, s_n, eps).y
    return float(np.mean(triplet_loss(ya, yp, yn, alpha))) + lam * params.sq_norm()


def map_embeddings(params: MlpParams, table: ClassEmbeddingTable, eps: float) -> ClassEmbeddingTable:
    """Apply the network row-wise; class order is preserved."""
    if table.dim != params.in_dim:
        raise ShapeError(
            f"embedding dim {table.dim} does not match network input {params.in_dim}",
            expected=params.in_dim, got=table.dim
        )
    return ClassEmbeddingTable(
        class_names=table.class_names,
        vectors=forward_batch(params, table.vectors, eps).y,
    )
