from typing import Optional

import numpy as np

from app.engine.alignnet import backward, forward_batch, init_params, triplet_loss
from app.engine.numerics import RngStream, make_rng
from app.model import (
    ClassEmbeddingTable,
    DivergenceError,
    EpochRecord,
    HubSet,
    MlpParams,
    NeighborLists,
    ProtocolError,
    StopReason,
    TrainConfig,
    TrainReport,
    TripletBatch,
    VisualSignatureTable,
)
from app.service.miner import mine_triplets
from app.service.neighborhood import consistency, detect_hubs, neighbors_of
from app.utils.logger import logger


class AlignTrainer:
    """Trains the mapping network on seen classes.

    Each epoch: map the seen embeddings, refresh the hub set, mine triplets
    against the fixed visual/semantic neighborhoods, then run mini-batch SGD
    over the shuffled triplets.
    """

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.last_params: Optional[MlpParams] = None

    def train(
        self,
        semantic: ClassEmbeddingTable,
        signatures: VisualSignatureTable,
    ) -> tuple[MlpParams, TrainReport]:
        """Fit the network; returns the parameters with the best mean epoch loss.

        Args:
            semantic: Word embeddings of the seen classes only
            signatures: Visual signatures of the same classes, same order

        Returns:
            (best params, report). `last_params` holds the final-epoch params.
        """
        # --- Guard Clauses ---
        if semantic.class_names != signatures.class_names:
            raise ProtocolError("semantic and visual tables must list the same classes in the same order")

        cfg = self.cfg.resolved(semantic.num_classes, semantic.dim)
        k1, k2 = cfg.k1, cfg.k2
        s = semantic.vectors

        nv_k1, nv_k2, ns_k1, ns_k2 = initial_structures(semantic, signatures, k1, k2)

        params = init_params(s.shape[1], cfg.hidden, cfg.out_dim, make_rng(cfg.seed, RngStream.INIT))
        mine_rng = make_rng(cfg.seed, RngStream.MINING)
        velocity = params.zeros_like()

        report = TrainReport(config=cfg, initial_consistency=consistency(nv_k1, ns_k1))
        best_params, best_loss = params, np.inf
        stale = 0

        logger.info(
            f"🚀 Training on {semantic.num_classes} seen classes | k1={k1} k2={k2} "
            f"hidden={cfg.hidden} out_dim={cfg.out_dim} | initial consistency {report.initial_consistency:.3f}"
        )

        for epoch in range(1, cfg.max_epochs + 1):
            mapped = _mapped_rows(params, s, cfg.norm_eps, epoch)
            if cfg.recompute_ns_per_epoch:
                ns_k2 = neighbors_of(mapped, k2)
                ns_k1 = ns_k2.prefix(k1)

            hubs, batch = self.select_triplets(
                ClassEmbeddingTable(class_names=semantic.class_names, vectors=mapped),
                (nv_k1, nv_k2, ns_k1, ns_k2), mine_rng, epoch
            )
            if batch.is_empty:
                report.stop_reason = StopReason.STRUCTURE_CONVERGED
                report.stopped_at_epoch = epoch
                logger.info(f"✅ Epoch {epoch}: no disagreement triplets left, structure converged")
                break

            params, velocity, mean_loss = self._sgd_epoch(params, velocity, s, batch, cfg, epoch)

            mapped = _mapped_rows(params, s, cfg.norm_eps, epoch)
            improved = loss_improved(mean_loss, best_loss, cfg.min_delta)
            if improved:
                best_loss, best_params, stale = mean_loss, params, 0
                report.best_epoch, report.best_loss = epoch, mean_loss

            record = EpochRecord(
                epoch=epoch,
                triplet_count=len(batch),
                mean_loss=mean_loss,
                hub_count=len(hubs.members),
                consistency=consistency(nv_k1, neighbors_of(mapped, k1)),
                best_loss=best_loss,
            )
            report.epochs.append(record)
            report.last_epoch = epoch
            logger.info(
                f"Epoch {epoch}: triplets={record.triplet_count} loss={record.mean_loss:.6f} "
                f"hubs={record.hub_count} consistency={record.consistency:.3f}"
            )

            if not improved:
                stale += 1
                if stale >= cfg.patience:
                    report.stop_reason = StopReason.LOSS_PLATEAU
                    report.stopped_at_epoch = epoch
                    logger.info(f"Epoch {epoch}: loss stopped decreasing for {cfg.patience} epochs")
                    break
        else:
            report.stop_reason = StopReason.MAX_EPOCHS
            report.stopped_at_epoch = cfg.max_epochs

        self.last_params = params
        return best_params, report

    def select_triplets(
        self,
        mapped: ClassEmbeddingTable,
        structures: tuple[NeighborLists, NeighborLists, NeighborLists, NeighborLists],
        rng: np.random.Generator,
        epoch: int,
    ) -> tuple[HubSet, TripletBatch]:
        """Hubs of the mapped space and the triplets mined for this epoch.

        With hub_correction off the hubs are still detected (and reported) but
        mining sees an empty hub set.
        """
        nv_k1, nv_k2, ns_k1, ns_k2 = structures
        hubs = detect_hubs(mapped, nv_k1.k, epoch=epoch)
        active = hubs if self.cfg.hub_correction else HubSet.empty(epoch)
        return hubs, mine_triplets(nv_k1, nv_k2, ns_k1, ns_k2, active, rng, epoch=epoch)

    @staticmethod
    def _sgd_epoch(
        params: MlpParams,
        velocity: MlpParams,
        s: np.ndarray,
        batch: TripletBatch,
        cfg: TrainConfig,
        epoch: int,
    ) -> tuple[MlpParams, MlpParams, float]:
        """One pass over the mined triplets in mini-batches; returns the mean hinge loss."""
        idx = np.array(batch.as_tuples(), dtype=np.int64)
        total = 0.0
        for start in range(0, len(idx), cfg.batch_size):
            chunk = idx[start:start + cfg.batch_size]
            cache_a = forward_batch(params, s[chunk[:, 0]], cfg.norm_eps)
            cache_p = forward_batch(params, s[chunk[:, 1]], cfg.norm_eps)
            cache_n = forward_batch(params, s[chunk[:, 2]], cfg.norm_eps)
            total += float(np.sum(triplet_loss(cache_a.y, cache_p.y, cache_n.y, cfg.alpha)))
            if not np.isfinite(total):
                raise DivergenceError(epoch, total)

            grad = backward(params, cache_a, cache_p, cache_n, cfg.alpha, cfg.lam)
            step = dict(grad.arrays())
            if cfg.momentum > 0.0:
                step = _finite_or_diverge(
                    {n: cfg.momentum * v + step[n] for n, v in velocity.arrays()}, epoch, total
                )
                velocity = MlpParams.from_arrays(step)
            params = MlpParams.from_arrays(
                _finite_or_diverge({n: a - cfg.lr * step[n] for n, a in params.arrays()}, epoch, total)
            )
        return params, velocity, total / len(idx)


def train(
    semantic: ClassEmbeddingTable,
    signatures: VisualSignatureTable,
    cfg: TrainConfig,
) -> tuple[MlpParams, TrainReport]:
    return AlignTrainer(cfg).train(semantic, signatures)


def initial_structures(
    semantic: ClassEmbeddingTable,
    signatures: VisualSignatureTable,
    k1: int,
    k2: int,
) -> tuple[NeighborLists, NeighborLists, NeighborLists, NeighborLists]:
    """(nv_k1, nv_k2, ns_k1, ns_k2) from the original spaces."""
    nv_k2 = neighbors_of(signatures.signatures, k2)
    ns_k2 = neighbors_of(semantic.vectors, k2)
    return nv_k2.prefix(k1), nv_k2, ns_k2.prefix(k1), ns_k2


def loss_improved(mean_loss: float, best_loss: float, min_delta: float) -> bool:
    """An epoch counts as an improvement when it lowers the best loss by at least min_delta."""
    return mean_loss <= best_loss - min_delta


def _finite_or_diverge(arrays: dict[str, np.ndarray], epoch: int, loss: float) -> dict[str, np.ndarray]:
    if not all(np.all(np.isfinite(a)) for a in arrays.values()):
        raise DivergenceError(epoch, loss)
    return arrays


def _mapped_rows(params: MlpParams, s: np.ndarray, eps: float, epoch: int) -> np.ndarray:
    """Network outputs for every seen class; non-finite outputs mean training diverged."""
    mapped = forward_batch(params, s, eps).y
    if not np.all(np.isfinite(mapped)):
        raise DivergenceError(epoch, float("nan"))
    return mapped
