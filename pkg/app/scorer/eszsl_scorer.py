import numpy as np
from pydantic import BaseModel, ConfigDict

from app.engine.numerics import DenseMatrix, as_matrix, solve_spd
from app.model import (
    ClassEmbeddingTable,
    EszslConfig,
    LabeledFeatureSet,
    NumericError,
    ShapeError,
)
from app.scorer.base_scorer import ZslScorer


class EszslModel(BaseModel):
    """Bilinear compatibility matrix V (d_v x d_emb): score(x, s) = xᵀ·V·s."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    v: np.ndarray
    gamma: float
    lam: float


def label_matrix(labels: tuple[str, ...], classes: tuple[str, ...], encoding: str) -> DenseMatrix:
    """Y (m x z): +1 for the true class; -1 (pm1) or 0 (binary) elsewhere."""
    off = -1.0 if encoding == "pm1" else 0.0
    index = {c: j for j, c in enumerate(classes)}
    y = np.full((len(labels), len(classes)), off, dtype=np.float64)
    for i, label in enumerate(labels):
        y[i, index[label]] = 1.0
    return y


def eszsl_fit(
    x_seen: LabeledFeatureSet,
    emb_seen: ClassEmbeddingTable,
    gamma: float,
    lam: float,
    encoding: str = "pm1",
) -> EszslModel:
    """Closed form V = (XXᵀ + γI)⁻¹ · X·Y·Sᵀ · (SSᵀ + λI)⁻¹.

    X is d_v x m (feature columns), S is d_emb x z (one column per seen class).
    """
    if gamma <= 0 or lam <= 0:
        raise NumericError(f"gamma and lam must be > 0, got {gamma}, {lam}")
    unknown = set(x_seen.class_labels) - set(emb_seen.class_names)
    if unknown:
        raise ShapeError(f"feature labels without embeddings: {sorted(unknown)}")

    x = x_seen.features.T
    s = emb_seen.vectors.T
    y = label_matrix(x_seen.class_labels, emb_seen.class_names, encoding)

    a = x @ x.T + gamma * np.eye(x.shape[0])
    b = s @ s.T + lam * np.eye(s.shape[0])
    left = solve_spd(a, x @ y @ s.T)
    v = solve_spd(b, left.T).T
    if not np.all(np.isfinite(v)):
        raise NumericError("ESZSL solution is not finite")
    return EszslModel(v=v, gamma=gamma, lam=lam)


def eszsl_objective_gradient(
    model: EszslModel,
    x_seen: LabeledFeatureSet,
    emb_seen: ClassEmbeddingTable,
    encoding: str = "pm1",
) -> DenseMatrix:
    """Gradient of ||XᵀVS - Y||² + γ||VS||² + λ||XᵀV||² + γλ||V||² at the fitted V."""
    x = x_seen.features.T
    s = emb_seen.vectors.T
    y = label_matrix(x_seen.class_labels, emb_seen.class_names, encoding)
    v, gamma, lam = model.v, model.gamma, model.lam
    a = x @ x.T + gamma * np.eye(x.shape[0])
    b = s @ s.T + lam * np.eye(s.shape[0])
    return 2.0 * (a @ v @ b - x @ y @ s.T)


class EszslScorer(ZslScorer):
    """Embarrassingly simple ZSL: closed-form bilinear scorer."""

    name = "eszsl"

    def __init__(self, cfg: EszslConfig):
        self.cfg = cfg
        self.model: EszslModel | None = None

    def fit(self, x_seen: LabeledFeatureSet, emb_seen: ClassEmbeddingTable) -> "EszslScorer":
        self.model = eszsl_fit(x_seen, emb_seen, self.cfg.gamma, self.cfg.lam, self.cfg.encoding)
        return self

    def config_echo(self) -> EszslConfig:
        return self.cfg

    def score_matrix(self, x: DenseMatrix, embeddings: DenseMatrix) -> DenseMatrix:
        if self.model is None:
            raise NumericError("ESZSL scorer used before fit()")
        x = as_matrix(x, "x")
        embeddings = as_matrix(embeddings, "embeddings")
        v = self.model.v
        if x.shape[1] != v.shape[0] or embeddings.shape[1] != v.shape[1]:
            raise ShapeError(
                f"ESZSL expects features of dim {v.shape[0]} and embeddings of dim {v.shape[1]}"
            )
        return x @ v @ embeddings.T
