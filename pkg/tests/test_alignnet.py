import numpy as np
import pytest

from app.engine.alignnet import (
    backward,
    forward,
    forward_batch,
    init_params,
    map_embeddings,
    objective,
    triplet_loss,
)
from app.model import ClassEmbeddingTable, MlpParams, ShapeError
from tests.oracles import central_differences

EPS = 1e-12


def _draw(rng, in_dim=4, hidden=(5, 5), out_dim=3, batch=1):
    params = init_params(in_dim, hidden, out_dim, rng)
    s_a, s_p, s_n = (rng.standard_normal((batch, in_dim)) for _ in range(3))
    return params, s_a, s_p, s_n


def _safe(params, rows, alpha) -> bool:
    """No pre-activation near a ReLU kink, no hinge near zero, norms away from eps."""
    caches = [forward_batch(params, s, EPS) for s in rows]
    for c in caches:
        if np.min(np.abs(c.z1)) < 1e-3 or np.min(np.abs(c.z2)) < 1e-3 or np.min(c.norm) < 1e-3:
            return False
    ya, yp, yn = (c.y for c in caches)
    arg = np.sum((ya - yp) ** 2, axis=1) - np.sum((ya - yn) ** 2, axis=1) + alpha
    return bool(np.all(arg > 1e-3))


# ========== Forward ==========

def test_zero_network_maps_to_zero():
    params = MlpParams.from_arrays({
        "w1": np.zeros((3, 2)), "b1": np.zeros(3),
        "w2": np.zeros((3, 3)), "b2": np.zeros(3),
        "w3": np.zeros((2, 3)), "b3": np.zeros(2),
    })
    y, _ = forward(params, np.array([1.0, -2.0]), EPS)
    assert np.array_equal(y, np.zeros(2))


def test_identity_network_normalizes_non_negative_input():
    eye = np.eye(3)
    params = MlpParams.from_arrays({
        "w1": eye, "b1": np.zeros(3), "w2": eye, "b2": np.zeros(3), "w3": eye, "b3": np.zeros(3),
    })
    s = np.array([3.0, 0.0, 4.0])
    y, _ = forward(params, s, EPS)
    np.testing.assert_allclose(y, s / 5.0, atol=1e-15)


def test_outputs_are_unit_norm(rng):
    params, s, _, _ = _draw(rng, batch=50)
    y = forward_batch(params, s, EPS).y
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)


def test_forward_rejects_wrong_dim(rng):
    params, _, _, _ = _draw(rng)
    with pytest.raises(ShapeError):
        forward(params, np.ones(7), EPS)


def test_output_invariant_to_rescaling_last_layer(rng):
    params, s, _, _ = _draw(rng, batch=10)
    arrays = dict(params.arrays())
    arrays["w3"] = 3.7 * arrays["w3"]
    arrays["b3"] = 3.7 * arrays["b3"]
    scaled = MlpParams.from_arrays(arrays)
    np.testing.assert_allclose(forward_batch(scaled, s, EPS).y, forward_batch(params, s, EPS).y, atol=1e-12)


# ========== Loss ==========

def test_triplet_loss_hand_values():
    ya = np.array([1.0, 0.0])
    # ya == yp, ||ya - yn||² = 1: boundary exactly at zero
    assert triplet_loss(ya, ya, np.array([1.0, 1.0]), 1.0) == 0.0
    # ||ya - yp||² = 0.5, ||ya - yn||² = 0.25
    yp = np.array([1.5, 0.5])
    yn = np.array([1.5, 0.0])
    assert triplet_loss(ya, yp, yn, 1.0) == pytest.approx(1.25)
    assert triplet_loss(ya, yp, yp, 0.7) == pytest.approx(0.7)


# ========== Backward ==========

def test_gradient_matches_finite_differences(rng):
    checked = 0
    while checked < 20:
        params, s_a, s_p, s_n = _draw(rng, batch=int(rng.integers(1, 4)))
        alpha = 1.0
        lam = float(rng.choice([0.0, 1e-3, 0.1]))
        if not _safe(params, (s_a, s_p, s_n), alpha):
            continue

        caches = [forward_batch(params, s, EPS) for s in (s_a, s_p, s_n)]
        analytic = backward(params, *caches, alpha, lam).flat()
        numeric = central_differences(
            lambda flat: objective(params.with_flat(flat), s_a, s_p, s_n, alpha, lam, EPS),
            params.flat(),
        )
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-6
        checked += 1


def test_dead_hinge_leaves_only_weight_decay(rng):
    params, s_a, _, s_n = _draw(rng)
    alpha, lam = 1e-6, 0.05
    caches = [forward_batch(params, s, EPS) for s in (s_a, s_a, s_n)]
    assert triplet_loss(caches[0].y, caches[1].y, caches[2].y, alpha)[0] == 0.0

    grad = backward(params, *caches, alpha, lam)
    np.testing.assert_allclose(grad.flat(), 2.0 * lam * params.flat(), rtol=0, atol=0)


def test_gradient_matches_torch_autograd(rng):
    torch = pytest.importorskip("torch")
    params, s_a, s_p, s_n = _draw(rng, in_dim=6, hidden=(7, 8), out_dim=4, batch=5)
    alpha, lam = 1.0, 1e-3

    weights = {n: torch.tensor(a, dtype=torch.float64, requires_grad=True) for n, a in params.arrays()}

    def f(s):
        h = torch.relu(torch.as_tensor(s) @ weights["w1"].T + weights["b1"])
        h = torch.relu(h @ weights["w2"].T + weights["b2"])
        z = h @ weights["w3"].T + weights["b3"]
        return z / torch.clamp(torch.linalg.norm(z, dim=1, keepdim=True), min=EPS)

    ya, yp, yn = f(s_a), f(s_p), f(s_n)
    hinge = torch.clamp(((ya - yp) ** 2).sum(1) - ((ya - yn) ** 2).sum(1) + alpha, min=0.0)
    loss = hinge.mean() + lam * sum((w ** 2).sum() for w in weights.values())
    loss.backward()

    caches = [forward_batch(params, s, EPS) for s in (s_a, s_p, s_n)]
    grad = backward(params, *caches, alpha, lam)
    for name, g in grad.arrays():
        np.testing.assert_allclose(g, weights[name].grad.numpy(), rtol=1e-9, atol=1e-12)


def test_small_gradient_step_decreases_objective(rng):
    params, s_a, s_p, s_n = _draw(rng, batch=8)
    alpha, lam = 1.0, 1e-3
    caches = [forward_batch(params, s, EPS) for s in (s_a, s_p, s_n)]
    grad = backward(params, *caches, alpha, lam)

    before = objective(params, s_a, s_p, s_n, alpha, lam, EPS)
    after = objective(params.add_scaled(grad, -1e-5), s_a, s_p, s_n, alpha, lam, EPS)
    assert after < before


# ========== Mapping ==========

def test_map_embeddings_preserves_order_and_norm(rng):
    params = init_params(4, (6, 6), 3, rng)
    table = ClassEmbeddingTable(class_names=["x", "y", "z"], vectors=rng.standard_normal((3, 4)))
    mapped = map_embeddings(params, table, EPS)
    assert mapped.class_names == table.class_names
    assert mapped.dim == 3
    np.testing.assert_allclose(np.linalg.norm(mapped.vectors, axis=1), 1.0, atol=1e-12)

    permuted = table.subset(["z", "x", "y"])
    np.testing.assert_allclose(map_embeddings(params, permuted, EPS).vectors, mapped.vectors[[2, 0, 1]], atol=1e-14)


def test_map_embeddings_dim_mismatch(rng):
    params = init_params(4, (6, 6), 3, rng)
    table = ClassEmbeddingTable(class_names=["x"], vectors=np.ones((1, 5)))
    with pytest.raises(ShapeError):
        map_embeddings(params, table, EPS)
