from app.scorer.base_scorer import ZslScorer
from app.scorer.conse_scorer import ConseScorer
from app.scorer.eszsl_scorer import EszslScorer

__all__ = ["ZslScorer", "EszslScorer", "ConseScorer"]
