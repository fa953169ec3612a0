"""
End-to-end run: data -> raw consistency -> train -> map -> VAWE consistency
-> ZSL evaluation with raw and mapped embeddings.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from app.engine.alignnet import map_embeddings
from app.model import (
    ClassEmbeddingTable,
    ConsistencyRow,
    LabeledFeatureSet,
    PipelineReport,
    ProtocolError,
    RunConfig,
    SynthConfig,
    VisualSignatureTable,
    ZslSplit,
)
from app.model.response import ConsistencySummary, MethodComparison
from app.service import dataio
from app.service.neighborhood import consistency, neighbors_of, visual_signatures
from app.service.trainer import AlignTrainer
from app.service.zsl_service import run_zsl
from app.utils.logger import logger


@dataclass(frozen=True)
class Dataset:
    embeddings: ClassEmbeddingTable
    features: LabeledFeatureSet
    split: ZslSplit
    rho: Optional[float] = None
    # ground-truth class centers, synthetic data only
    centers: Optional[VisualSignatureTable] = None


@dataclass(frozen=True)
class WorkdirLayout:
    root: Path

    @property
    def features(self) -> Path:
        return self.root / "features.txt"

    @property
    def embeddings(self) -> Path:
        return self.root / "embeddings.txt"

    @property
    def signatures(self) -> Path:
        return self.root / "signatures.txt"

    @property
    def split(self) -> Path:
        return self.root / "split.txt"

    @property
    def checkpoint(self) -> Path:
        return self.root / "checkpoint.bin"

    @property
    def checkpoint_last(self) -> Path:
        return self.root / "checkpoint_last.bin"

    @property
    def train_report(self) -> Path:
        return self.root / "train_report.jsonl"

    @property
    def vawe_embeddings(self) -> Path:
        return self.root / "vawe_embeddings.txt"

    @property
    def report(self) -> Path:
        return self.root / "pipeline_report.json"


def align_to(embeddings: ClassEmbeddingTable, class_order: tuple[str, ...]) -> ClassEmbeddingTable:
    """Reorder embeddings to `class_order`; both must cover the same classes."""
    if set(embeddings.class_names) != set(class_order):
        missing = sorted(set(class_order) - set(embeddings.class_names))
        extra = sorted(set(embeddings.class_names) - set(class_order))
        raise ProtocolError(
            "class sets differ between files", missing=missing or None, extra=extra or None
        )
    return embeddings.subset(class_order)


def table_consistency(embeddings: ClassEmbeddingTable, signatures: VisualSignatureTable, k: int) -> float:
    embeddings = align_to(embeddings, signatures.class_names)
    return consistency(neighbors_of(signatures.signatures, k), neighbors_of(embeddings.vectors, k))


def write_synthetic(cfg: SynthConfig, out_dir: Path, rho: Optional[float] = None) -> Dataset:
    """Generate a synthetic dataset and write its four files."""
    if rho is not None:
        cfg = cfg.model_copy(update={"discrepancy_rho": rho})
    features, embeddings, centers = dataio.generate_synthetic(cfg)
    split = dataio.synthetic_split(cfg)

    layout = WorkdirLayout(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.save_features(features, layout.features)
    dataio.save_embeddings(embeddings, layout.embeddings)
    dataio.save_signatures(centers, layout.signatures)
    dataio.save_split(split, layout.split, embeddings.class_names)
    return Dataset(
        embeddings=embeddings, features=features, split=split, rho=cfg.discrepancy_rho, centers=centers
    )


class PipelineService:
    """Runs every stage, storing intermediates in the workdir."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.layout = WorkdirLayout(Path(cfg.workdir))

    def _dataset(self) -> Dataset:
        cfg = self.cfg
        if not cfg.is_synthetic:
            logger.info(f"Loading inputs: {cfg.embeddings}, {cfg.features}, {cfg.split}")
            return Dataset(
                embeddings=dataio.load_embeddings(cfg.embeddings),
                features=dataio.load_features(cfg.features),
                split=dataio.load_split(cfg.split),
            )

        rho = None
        if cfg.target_consistency is not None:
            rho = dataio.calibrate_rho(cfg.synth, cfg.consistency_k, cfg.target_consistency)
        logger.info(f"Generating synthetic data into {self.layout.root}")
        return write_synthetic(cfg.synth, self.layout.root, rho)

    def run(self) -> PipelineReport:
        cfg = self.cfg
        k = cfg.consistency_k
        self.layout.root.mkdir(parents=True, exist_ok=True)

        data = self._dataset()
        seen, unseen = data.split.ordered(data.embeddings.class_names)
        all_classes = seen + unseen
        signatures = visual_signatures(data.features, all_classes)
        seen_signatures = signatures.subset(seen)
        reference = data.centers if data.centers is not None else signatures

        raw = data.embeddings
        raw_seen = table_consistency(raw.subset(seen), seen_signatures, k)
        raw_all = table_consistency(raw, reference, k)
        logger.info(f"Raw consistency at k={k}: seen {raw_seen:.3f}, all {raw_all:.3f}")

        trainer = AlignTrainer(cfg.train)
        params, train_report = trainer.train(raw.subset(seen), seen_signatures)
        dataio.save_checkpoint(params, train_report.config, self.layout.checkpoint)
        dataio.save_checkpoint(trainer.last_params, train_report.config, self.layout.checkpoint_last)
        self.layout.train_report.write_text(train_report.to_jsonl(), encoding="utf-8")

        vawe = map_embeddings(params, raw, cfg.train.norm_eps)
        dataio.save_embeddings(vawe, self.layout.vawe_embeddings)
        vawe_seen = table_consistency(vawe.subset(seen), seen_signatures, k)
        vawe_all = table_consistency(vawe, reference, k)
        logger.info(f"VAWE consistency at k={k}: seen {vawe_seen:.3f}, all {vawe_all:.3f}")

        methods = {}
        for method in cfg.methods:
            raw_eval = run_zsl(method, raw, data.features, data.split, cfg.eszsl, cfg.conse)
            vawe_eval = run_zsl(method, vawe, data.features, data.split, cfg.eszsl, cfg.conse)
            methods[method] = MethodComparison(
                raw=raw_eval,
                vawe=vawe_eval,
                delta_mean_per_class=vawe_eval.mean_per_class_accuracy - raw_eval.mean_per_class_accuracy,
            )

        report = PipelineReport(
            run_config=cfg,
            discrepancy_rho=data.rho,
            consistency=ConsistencySummary(
                k=k, raw_seen=raw_seen, vawe_seen=vawe_seen, raw_all=raw_all, vawe_all=vawe_all
            ),
            training=train_report.summary(),
            methods=methods,
        )
        self.layout.report.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"✅ Pipeline finished, report at {self.layout.report}")
        return report


def consistency_rows(
    sources: list[tuple[str, ClassEmbeddingTable]],
    signatures: VisualSignatureTable,
    ks: list[int],
) -> list[ConsistencyRow]:
    """One row per (embedding source, k) against the same visual signatures."""
    return [
        ConsistencyRow(source=name, k=k, consistency=table_consistency(table, signatures, k))
        for name, table in sources
        for k in ks
    ]
