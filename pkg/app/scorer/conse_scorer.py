import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.config.settings import settings
from app.engine.numerics import DenseMatrix, Vector, as_matrix, l2_normalize_rows, pairwise_sq_dist
from app.model import (
    ClassEmbeddingTable,
    ConfigError,
    ConseConfig,
    LabeledFeatureSet,
    NumericError,
    ShapeError,
    VisualSignatureTable,
)
from app.scorer.base_scorer import ZslScorer
from app.service.neighborhood import visual_signatures


class ConseModel(BaseModel):
    """Seen-class posteriors from a distance softmax over visual signatures."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    signatures: VisualSignatureTable
    seen_embeddings: ClassEmbeddingTable
    t_top: int
    temperature: float

    @model_validator(mode="after")
    def _valid(self) -> "ConseModel":
        if self.signatures.class_names != self.seen_embeddings.class_names:
            raise ShapeError("signatures and seen embeddings must list the same classes in order")
        if not 1 <= self.t_top <= self.signatures.num_classes:
            raise ConfigError(f"t_top={self.t_top} must be in [1, {self.signatures.num_classes}]")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        return self


def seen_posteriors(x: DenseMatrix, model: ConseModel) -> DenseMatrix:
    """softmax over -||x - v_y||² / temperature, one row per feature."""
    logits = -pairwise_sq_dist(x, model.signatures.signatures) / model.temperature
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def conse_embed_batch(x: DenseMatrix, model: ConseModel) -> DenseMatrix:
    """Normalized convex combination of the t_top most probable seen embeddings."""
    x = as_matrix(x, "x")
    if x.shape[1] != model.signatures.dim:
        raise ShapeError(f"feature dim {x.shape[1]} does not match signature dim {model.signatures.dim}")
    probs = seen_posteriors(x, model)
    # descending probability, ascending class index among ties
    top = np.argsort(-probs, axis=1, kind="stable")[:, :model.t_top]
    weights = np.take_along_axis(probs, top, axis=1)
    weights /= weights.sum(axis=1, keepdims=True)
    mixed = np.einsum("rt,rtd->rd", weights, model.seen_embeddings.vectors[top])
    return l2_normalize_rows(mixed, settings.NORM_EPS)


def conse_embed(x: Vector, model: ConseModel) -> Vector:
    return conse_embed_batch(np.atleast_2d(x), model)[0]


def cosine_matrix(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    return l2_normalize_rows(a, settings.NORM_EPS) @ l2_normalize_rows(b, settings.NORM_EPS).T


def conse_predict(x: Vector, model: ConseModel, unseen_emb: ClassEmbeddingTable) -> int:
    """Unseen class with the highest cosine to the ConSE embedding of x."""
    sims = cosine_matrix(np.atleast_2d(conse_embed(x, model)), unseen_emb.vectors)
    return int(np.argmax(sims[0]))


class ConseScorer(ZslScorer):
    """Convex combination of semantic embeddings, scored by cosine."""

    name = "conse"

    def __init__(self, cfg: ConseConfig):
        self.cfg = cfg
        self.model: ConseModel | None = None

    def fit(self, x_seen: LabeledFeatureSet, emb_seen: ClassEmbeddingTable) -> "ConseScorer":
        signatures = visual_signatures(x_seen, emb_seen.class_names)
        self.model = ConseModel(
            signatures=signatures,
            seen_embeddings=emb_seen,
            t_top=self.cfg.resolved_t_top(emb_seen.num_classes),
            temperature=self.cfg.temperature,
        )
        return self

    def config_echo(self) -> ConseConfig:
        if self.model is None:
            return self.cfg
        return self.cfg.model_copy(update={"t_top": self.model.t_top})

    def score_matrix(self, x: DenseMatrix, embeddings: DenseMatrix) -> DenseMatrix:
        if self.model is None:
            raise NumericError("ConSE scorer used before fit()")
        embeddings = as_matrix(embeddings, "embeddings")
        if embeddings.shape[1] != self.model.seen_embeddings.dim:
            raise ShapeError(
                f"embedding dim {embeddings.shape[1]} does not match {self.model.seen_embeddings.dim}"
            )
        return cosine_matrix(conse_embed_batch(x, self.model), embeddings)
