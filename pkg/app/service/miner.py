"""
Per-epoch triplet selection from visual/semantic neighborhood disagreement.
"""
from app.engine.numerics import Rng
from app.model import ConfigError, HubSet, NeighborLists, ShapeError, Triplet, TripletBatch
from app.utils.logger import logger


def _check_structures(nv_k1: NeighborLists, nv_k2: NeighborLists,
                      ns_k1: NeighborLists, ns_k2: NeighborLists):
    # --- Guard Clauses ---
    if nv_k1.k != ns_k1.k or nv_k2.k != ns_k2.k:
        raise ConfigError("visual and semantic lists must use the same K1 and K2")
    if nv_k2.k <= nv_k1.k:
        raise ConfigError(f"K2 must be > K1 (K1={nv_k1.k}, K2={nv_k2.k})", k1=nv_k1.k, k2=nv_k2.k)
    sizes = {s.num_classes for s in (nv_k1, nv_k2, ns_k1, ns_k2)}
    if len(sizes) != 1:
        raise ShapeError(f"neighbor structures cover different class counts: {sorted(sizes)}")


def mine_triplets(
    nv_k1: NeighborLists,
    nv_k2: NeighborLists,
    ns_k1: NeighborLists,
    ns_k2: NeighborLists,
    hubs: HubSet,
    rng: Rng,
    epoch: int = 0,
) -> TripletBatch:
    """Select (anchor, positive, negative) triplets for one epoch.

    For every anchor a, hubs are first removed from its visual lists. Negatives
    are semantic top-K1 neighbors missing from the filtered visual top-K2;
    positives are filtered visual top-K1 neighbors missing from the semantic
    top-K2. All (p, n) pairs are emitted, then the batch is shuffled.

    Args:
        nv_k1, nv_k2: Visual neighbor lists at K1 and K2
        ns_k1, ns_k2: Semantic neighbor lists at K1 and K2
        hubs: Hub set of the previous epoch (removed from positive candidates)
        rng: Generator used for the final shuffle
        epoch: Epoch the batch is mined for

    Returns:
        TripletBatch in shuffled order (possibly empty)
    """
    _check_structures(nv_k1, nv_k2, ns_k1, ns_k2)

    triplets: list[Triplet] = []
    for a in range(nv_k1.num_classes):
        nv_hat_k1 = [v for v in nv_k1.lists[a] if v not in hubs.members]
        nv_hat_k2 = {v for v in nv_k2.lists[a] if v not in hubs.members}
        ns_k2_set = set(ns_k2.lists[a])

        for s in ns_k1.lists[a]:
            if s in nv_hat_k2:
                continue
            for v in nv_hat_k1:
                if v not in ns_k2_set:
                    triplets.append(Triplet(a=a, p=v, n=s))

    order = rng.permutation(len(triplets))
    logger.debug(f"Epoch {epoch}: mined {len(triplets)} triplets ({len(hubs.members)} hubs removed)")
    return TripletBatch(epoch=epoch, triplets=[triplets[i] for i in order])
