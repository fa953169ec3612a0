import numpy as np

from app.model import (
    ClassEmbeddingTable,
    ConfigError,
    ConseConfig,
    EszslConfig,
    EvalReport,
    LabeledFeatureSet,
    ProtocolError,
    ZslSplit,
)
from app.scorer import ConseScorer, EszslScorer, ZslScorer
from app.utils.logger import logger


def build_scorer(method: str, eszsl_cfg: EszslConfig, conse_cfg: ConseConfig) -> ZslScorer:
    """Route a method name to its scorer."""
    if method == "eszsl":
        return EszslScorer(eszsl_cfg)
    if method == "conse":
        return ConseScorer(conse_cfg)
    raise ConfigError(f"unknown ZSL method '{method}' (expected eszsl or conse)", method=method)


def evaluate(
    scorer: ZslScorer,
    features_unseen: LabeledFeatureSet,
    emb_unseen: ClassEmbeddingTable,
) -> EvalReport:
    """Top-1 accuracy of a fitted scorer over unseen classes only.

    The headline metric is the unweighted mean of per-class accuracies; the
    per-sample (overall) accuracy is reported alongside.
    """
    unknown = sorted(set(features_unseen.class_labels) - set(emb_unseen.class_names))
    if unknown:
        raise ProtocolError(f"test rows labeled outside the unseen set: {unknown}", classes=unknown)
    if features_unseen.num_rows == 0:
        raise ProtocolError("no unseen test rows")

    predicted = scorer.predict(features_unseen.features, emb_unseen)
    truth = np.array([emb_unseen.index_of(label) for label in features_unseen.class_labels])
    correct = predicted == truth

    per_class: dict[str, float] = {}
    for j, name in enumerate(emb_unseen.class_names):
        mask = truth == j
        if not mask.any():
            logger.warning(f"Unseen class '{name}' has no test rows; left out of the mean")
            continue
        per_class[name] = float(correct[mask].mean())

    return EvalReport(
        method=scorer.name,
        per_class_accuracy=per_class,
        mean_per_class_accuracy=float(np.mean(list(per_class.values()))),
        overall_accuracy=float(correct.mean()),
        num_test_rows=features_unseen.num_rows,
        config=scorer.config_echo(),
    )


def run_zsl(
    method: str,
    embeddings: ClassEmbeddingTable,
    features: LabeledFeatureSet,
    split: ZslSplit,
    eszsl_cfg: EszslConfig,
    conse_cfg: ConseConfig,
) -> EvalReport:
    """Fit on seen classes, evaluate on unseen classes."""
    seen, unseen = split.ordered(embeddings.class_names)
    scorer = build_scorer(method, eszsl_cfg, conse_cfg)
    scorer.fit(features.restrict(seen), embeddings.subset(seen))
    report = evaluate(scorer, features.restrict(unseen), embeddings.subset(unseen))
    logger.info(
        f"{method}: mean per-class accuracy {report.mean_per_class_accuracy:.4f} "
        f"over {len(unseen)} unseen classes"
    )
    return report
