import numpy as np
import pytest

from app.engine.alignnet import init_params
from app.engine.numerics import RngStream, make_rng
from app.model import (
    ClassEmbeddingTable,
    ConfigError,
    DivergenceError,
    ErrorCode,
    HubSet,
    ProtocolError,
    RunConfig,
    StopReason,
    SynthConfig,
    TrainConfig,
)
from app.service import dataio
from app.service.miner import mine_triplets
from app.service.neighborhood import visual_signatures
from app.service.pipeline_service import PipelineService
from app.service.trainer import AlignTrainer, loss_improved, train
from tests.test_miner import NS_K2, NV_K2, _lists


def _seen_tables(cfg: SynthConfig):
    features, embeddings, _ = dataio.generate_synthetic(cfg)
    seen, _ = dataio.synthetic_split(cfg).ordered(embeddings.class_names)
    return embeddings.subset(seen), visual_signatures(features, seen)


def test_aligned_input_converges_at_epoch_one(aligned_cfg):
    semantic, signatures = _seen_tables(aligned_cfg)
    cfg = TrainConfig(k1=2, k2=4, out_dim=4, hidden=(6, 6), seed=aligned_cfg.seed)

    params, report = train(semantic, signatures, cfg)

    assert report.stop_reason == StopReason.STRUCTURE_CONVERGED
    assert report.stopped_at_epoch == 1
    assert report.epochs == []
    assert report.initial_consistency == 2.0
    expected = init_params(semantic.dim, (6, 6), 4, make_rng(cfg.seed, RngStream.INIT))
    assert np.array_equal(params.flat(), expected.flat())


def test_same_seed_gives_identical_runs(small_cfg):
    semantic, signatures = _seen_tables(small_cfg)
    cfg = TrainConfig(k1=2, out_dim=4, max_epochs=4, batch_size=8, seed=small_cfg.seed)

    params_a, report_a = train(semantic, signatures, cfg)
    params_b, report_b = train(semantic, signatures, cfg)

    assert report_a.to_jsonl() == report_b.to_jsonl()
    assert np.array_equal(params_a.flat(), params_b.flat())


def test_report_rows_and_best_params(small_cfg):
    semantic, signatures = _seen_tables(small_cfg)
    cfg = TrainConfig(k1=2, out_dim=4, max_epochs=6, batch_size=8, min_delta=0.0, seed=small_cfg.seed)

    trainer = AlignTrainer(cfg)
    params, report = trainer.train(semantic, signatures)

    # small_cfg disagrees at epoch 1, so at least one epoch ran
    assert report.epochs
    assert [r.epoch for r in report.epochs] == list(range(1, len(report.epochs) + 1))
    assert report.last_epoch == len(report.epochs)
    assert report.config.k2 == 5
    assert report.config.hidden == (16, 16)
    losses = [r.mean_loss for r in report.epochs]
    assert report.best_loss == min(losses)
    assert report.epochs[report.best_epoch - 1].mean_loss == report.best_loss
    assert [r.best_loss for r in report.epochs] == list(np.minimum.accumulate(losses))
    for row in report.epochs:
        assert row.triplet_count > 0
        assert 0.0 <= row.consistency <= 2.0
    assert trainer.last_params is not None
    if report.best_epoch == report.last_epoch:
        assert np.array_equal(params.flat(), trainer.last_params.flat())


def test_hub_correction_off_mines_as_if_there_were_no_hubs():
    # k1=1, k2=2; anchor 0 disagrees and its only positive is class 2
    structures = (_lists(NV_K2, 1), _lists(NV_K2, 2), _lists(NS_K2, 1), _lists(NS_K2, 2))
    # on a line, classes 0 and 2 each land in two top-1 lists
    mapped = ClassEmbeddingTable(
        class_names=[f"c{i}" for i in range(5)],
        vectors=[[-1.0, 0.0], [1.05, 0.0], [0.0, 0.0], [3.0, 0.0], [-3.0, 0.0]],
    )
    corrected = AlignTrainer(TrainConfig(k1=1, hub_correction=True))
    plain = AlignTrainer(TrainConfig(k1=1, hub_correction=False))

    hubs_on, batch_on = corrected.select_triplets(mapped, structures, make_rng(5), epoch=3)
    hubs_off, batch_off = plain.select_triplets(mapped, structures, make_rng(5), epoch=3)

    assert hubs_on.members == hubs_off.members == frozenset({0, 2})
    unfiltered = mine_triplets(*structures, HubSet.empty(3), make_rng(5), epoch=3)
    assert batch_off.as_tuples() == unfiltered.as_tuples() == [(0, 2, 1)]
    filtered = mine_triplets(*structures, hubs_on, make_rng(5), epoch=3)
    assert batch_on.as_tuples() == filtered.as_tuples()
    assert (0, 2, 1) not in batch_on.as_tuples()


def test_huge_learning_rate_reports_divergence(small_cfg):
    semantic, signatures = _seen_tables(small_cfg)
    cfg = TrainConfig(k1=2, out_dim=4, lr=1e308, max_epochs=5, seed=small_cfg.seed)

    with np.errstate(all="ignore"), pytest.raises(DivergenceError) as exc_info:
        train(semantic, signatures, cfg)

    assert exc_info.value.code == ErrorCode.DIVERGENCE
    assert 1 <= exc_info.value.epoch <= 5


def test_improvement_of_exactly_min_delta_counts():
    assert loss_improved(0.25, 0.5, 0.25)
    assert not loss_improved(0.3, 0.5, 0.25)
    assert loss_improved(1.0, np.inf, 1e-6)
    assert loss_improved(0.5, 0.5, 0.0)



def test_rejects_mismatched_tables(small_cfg):
    semantic, signatures = _seen_tables(small_cfg)
    shuffled = semantic.subset(reversed(semantic.class_names))
    with pytest.raises(ProtocolError):
        train(shuffled, signatures, TrainConfig(k1=2))


def test_rejects_bad_neighborhood_sizes(small_cfg):
    semantic, signatures = _seen_tables(small_cfg)
    with pytest.raises(ConfigError):
        TrainConfig(k1=3, k2=3)
    with pytest.raises(ConfigError):
        # 10 seen classes cannot supply k2 + 1 = 12
        train(semantic, signatures, TrainConfig(k1=2, k2=11))


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_desk_scale_pipeline_improves_seen_class_consistency(tmp_path, seed):
    # default synthetic geometry: 40 classes, 10 unseen, 32-d visual, 24-d semantic, 25 images each
    cfg = RunConfig(
        seed=seed,
        workdir=str(tmp_path),
        synth=SynthConfig(seed=seed),
        target_consistency=(2.5, 3.5),
        consistency_k=10,
        train=TrainConfig(seed=seed),
    )

    report = PipelineService(cfg).run()

    assert report.consistency.vawe_seen > report.consistency.raw_seen
