import numpy as np
import pytest

from app.model import (
    ClassEmbeddingTable,
    ConfigError,
    LabeledFeatureSet,
    MissingClassError,
    NeighborLists,
    ShapeError,
)
from app.service.neighborhood import (
    class_distance_matrix,
    consistency,
    detect_hubs,
    hub_counts,
    neighbors_of,
    top_k_neighbors,
    visual_signatures,
)
from tests.oracles import naive_distances, sorted_neighbors


def _table(rows: np.ndarray) -> ClassEmbeddingTable:
    return ClassEmbeddingTable(class_names=[f"c{i}" for i in range(len(rows))], vectors=rows)


# ========== Signatures & Distances ==========

def test_visual_signatures_are_class_means():
    features = LabeledFeatureSet(
        class_labels=["b", "a", "b", "a", "b"],
        features=[[1.0, 0.0], [2.0, 2.0], [3.0, 0.0], [4.0, 4.0], [5.0, 3.0]],
    )
    sig = visual_signatures(features, ["a", "b"])
    assert sig.class_names == ("a", "b")
    np.testing.assert_allclose(sig.signatures, [[3.0, 3.0], [3.0, 1.0]])


def test_visual_signatures_missing_class():
    features = LabeledFeatureSet(class_labels=["a"], features=[[1.0]])
    with pytest.raises(MissingClassError):
        visual_signatures(features, ["a", "b"])


def test_distance_matrix_matches_oracle(rng):
    rows = rng.standard_normal((9, 4))
    dist = class_distance_matrix(rows)
    np.testing.assert_allclose(dist, naive_distances(rows), rtol=1e-10, atol=1e-12)
    assert np.array_equal(dist, dist.T)

    with pytest.raises(ShapeError):
        class_distance_matrix(rows[:1])


# ========== Top-K ==========

def test_top_k_matches_full_sort(rng):
    rows = rng.standard_normal((12, 3))
    dist = class_distance_matrix(rows)
    lists = top_k_neighbors(dist, 4)
    assert [list(r) for r in lists.lists] == sorted_neighbors(dist, 4)


def test_top_k_ties_go_to_lower_index():
    # class 0 sits halfway between 1 and 2
    rows = np.array([[0.0], [-1.0], [1.0]])
    lists = top_k_neighbors(class_distance_matrix(rows), 1)
    assert lists.lists[0] == (1,)


def test_top_k_rejects_bad_k(rng):
    dist = class_distance_matrix(rng.standard_normal((5, 2)))
    for k in (0, 5):
        with pytest.raises(ConfigError):
            top_k_neighbors(dist, k)


def test_neighbor_lists_prefix():
    lists = NeighborLists(k=2, lists=[[1, 2], [0, 2], [1, 0]])
    assert lists.prefix(1).lists == ((1,), (0,), (1,))
    with pytest.raises(ConfigError):
        lists.prefix(3)


# ========== Consistency ==========

def test_identical_spaces_score_exactly_k(rng):
    signatures = rng.standard_normal((20, 5))
    nv = neighbors_of(signatures, 10)
    assert consistency(nv, neighbors_of(signatures.copy(), 10)) == 10.0


def test_disjoint_neighborhoods_score_zero():
    # visual pairs {0,1}, {2,3}; semantic pairs {0,2}, {1,3}
    visual = np.array([[0.0], [1.0], [10.0], [11.0]])
    semantic = np.array([[0.0], [10.0], [1.0], [11.0]])
    assert consistency(neighbors_of(visual, 1), neighbors_of(semantic, 1)) == 0.0


def test_consistency_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        consistency(neighbors_of(rng.standard_normal((6, 2)), 2), neighbors_of(rng.standard_normal((6, 2)), 3))


# ========== Hubs ==========

def _star() -> np.ndarray:
    """Center (class 0) nearest to five outer classes with uneven angular gaps."""
    angles = np.deg2rad([0.0, 64.0, 132.0, 204.0, 280.0])
    outer = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    offset = 0.03 * np.array([np.cos(np.deg2rad(242.0)), np.sin(np.deg2rad(242.0))])
    return np.vstack([offset, outer])


def test_star_center_is_the_only_hub():
    hubs = detect_hubs(_table(_star()), k1=2)
    assert hubs.members == frozenset({0})
    assert hubs.counts[0] == 5
    assert sum(hubs.counts) == 6 * 2


def test_hub_counts_sum_to_c_times_k(rng):
    for _ in range(20):
        c = int(rng.integers(4, 15))
        k = int(rng.integers(1, c))
        lists = neighbors_of(rng.standard_normal((c, 3)), k)
        assert int(hub_counts(lists).sum()) == c * k


def test_detect_hubs_rejects_bad_k(rng):
    with pytest.raises(ConfigError):
        detect_hubs(_table(rng.standard_normal((4, 2))), k1=4)
