from abc import ABC, abstractmethod

import numpy as np
from pydantic import BaseModel

from app.engine.numerics import DenseMatrix, Vector, as_matrix
from app.model import ClassEmbeddingTable, LabeledFeatureSet, ShapeError


class ZslScorer(ABC):
    """Compatibility F(x, s) between a visual feature and a class embedding.

    Prediction is the argmax of F over candidate classes; ties go to the
    lowest class index. Fitting only ever sees seen-class data.
    """

    name: str = "base"

    @abstractmethod
    def fit(self, x_seen: LabeledFeatureSet, emb_seen: ClassEmbeddingTable) -> "ZslScorer":
        """Fit on seen-class features and embeddings - implemented by subclasses."""

    @abstractmethod
    def config_echo(self) -> BaseModel:
        """Hyperparameters as used, for the report."""

    @abstractmethod
    def score_matrix(self, x: DenseMatrix, embeddings: DenseMatrix) -> DenseMatrix:
        """Scores for every (feature row, class embedding row) pair."""

    def score(self, x: Vector, class_embedding: Vector) -> float:
        return float(self.score_matrix(np.atleast_2d(x), np.atleast_2d(class_embedding))[0, 0])

    def predict(self, x: DenseMatrix, candidates: ClassEmbeddingTable) -> np.ndarray:
        """Index into `candidates` of the best-scoring class for each row of x."""
        x = as_matrix(x, "x")
        scores = self.score_matrix(x, candidates.vectors)
        if scores.shape != (x.shape[0], candidates.num_classes):
            raise ShapeError(f"score matrix has shape {scores.shape}")
        # np.argmax returns the first maximum: ascending-index tie-break
        return np.argmax(scores, axis=1)
