"""
Class-level neighborhood structure: visual signatures, distance matrices,
top-K neighbor lists, the neighborhood-consistency metric and hub detection.
"""
from typing import Sequence

import numpy as np

from app.engine.numerics import DenseMatrix, as_matrix, pairwise_sq_dist
from app.model import (
    ClassEmbeddingTable,
    ConfigError,
    HubSet,
    LabeledFeatureSet,
    MissingClassError,
    NeighborLists,
    ShapeError,
    VisualSignatureTable,
)
from app.utils.logger import logger


def visual_signatures(features: LabeledFeatureSet, class_order: Sequence[str]) -> VisualSignatureTable:
    """Per-class mean feature vector, rows in `class_order`."""
    class_order = tuple(class_order)
    index = {name: i for i, name in enumerate(class_order)}
    sums = np.zeros((len(class_order), features.dim), dtype=np.float64)
    counts = np.zeros(len(class_order), dtype=np.int64)

    for label, row in zip(features.class_labels, features.features):
        i = index.get(label)
        if i is None:
            continue
        sums[i] += row
        counts[i] += 1

    empty = [name for name, c in zip(class_order, counts) if c == 0]
    if empty:
        raise MissingClassError(f"no feature rows for classes {empty}", classes=empty)

    return VisualSignatureTable(class_names=class_order, signatures=sums / counts[:, None])


def class_distance_matrix(rows: DenseMatrix) -> DenseMatrix:
    """Euclidean (not squared) distances between class vectors."""
    rows = as_matrix(rows, "rows")
    if rows.shape[0] < 2:
        raise ShapeError(f"need at least 2 classes, got {rows.shape[0]}")
    return np.sqrt(pairwise_sq_dist(rows, rows))


def top_k_neighbors(dist: DenseMatrix, k: int) -> NeighborLists:
    """The k nearest other classes per row; ties go to the lower class index."""
    dist = as_matrix(dist, "dist")
    n = dist.shape[0]
    if dist.shape[1] != n:
        raise ShapeError(f"distance matrix must be square, got {dist.shape}")
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k={k} out of range [1, {n - 1}]", k=k, classes=n)

    lists = []
    for i in range(n):
        others = np.delete(np.arange(n), i)
        # stable sort keeps ascending index order among equal distances
        order = np.argsort(dist[i, others], kind="stable")
        lists.append(others[order[:k]])
    return NeighborLists(k=k, lists=lists)


def neighbors_of(rows: DenseMatrix, k: int) -> NeighborLists:
    return top_k_neighbors(class_distance_matrix(rows), k)


def consistency(nv: NeighborLists, ns: NeighborLists) -> float:
    """Average number of shared neighbors between two structures, in [0, k]."""
    if nv.num_classes != ns.num_classes or nv.k != ns.k:
        raise ShapeError(
            f"neighbor structures differ: {nv.num_classes} classes / k={nv.k} "
            f"vs {ns.num_classes} classes / k={ns.k}"
        )
    shared = sum(len(a & b) for a, b in zip(nv.as_sets(), ns.as_sets()))
    return shared / nv.num_classes


def hub_counts(lists: NeighborLists) -> np.ndarray:
    """Number of lists each class appears in."""
    counts = np.zeros(lists.num_classes, dtype=np.int64)
    for row in lists.lists:
        counts[list(row)] += 1
    return counts


def detect_hubs(mapped: ClassEmbeddingTable, k1: int, epoch: int = 0) -> HubSet:
    """Classes appearing in more than k1 top-k1 lists of the mapped space."""
    n = mapped.num_classes
    if not 1 <= k1 <= n - 1:
        raise ConfigError(f"k1={k1} out of range [1, {n - 1}]", k=k1, classes=n)

    counts = hub_counts(neighbors_of(mapped.vectors, k1))
    members = frozenset(int(j) for j in np.flatnonzero(counts > k1))
    logger.debug(f"Epoch {epoch}: {len(members)} hubs (max count {int(counts.max())})")
    return HubSet(members=members, epoch=epoch, counts=tuple(int(c) for c in counts))
