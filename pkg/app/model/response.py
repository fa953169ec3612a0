from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

from app.config.settings import settings
from app.model.request import ConseConfig, EszslConfig, RunConfig, TrainConfig


class StopReason(str, Enum):
    STRUCTURE_CONVERGED = "structure converged"
    LOSS_PLATEAU = "loss plateau"
    MAX_EPOCHS = "max epochs"


class EpochRecord(BaseModel):
    """One row of the training report (one JSON line per completed epoch)."""
    epoch: int
    triplet_count: int
    mean_loss: float
    hub_count: int
    consistency: float = Field(description="Mapped seen-class consistency against visual neighborhoods at k1")
    best_loss: float = Field(description="Best mean loss so far; gains below min_delta do not count")


class TrainReport(BaseModel):
    config: TrainConfig
    epochs: list[EpochRecord] = Field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    stopped_at_epoch: int = 0
    best_epoch: int = 0
    best_loss: Optional[float] = None
    last_epoch: int = 0
    initial_consistency: float = 0.0

    def to_jsonl(self) -> str:
        return "".join(row.model_dump_json() + "\n" for row in self.epochs)

    def summary(self) -> dict:
        return self.model_dump(mode="json", exclude={"epochs"})


class EvalReport(BaseModel):
    schema_version: int = settings.REPORT_SCHEMA_VERSION
    method: str
    per_class_accuracy: dict[str, float]
    mean_per_class_accuracy: float
    overall_accuracy: float
    num_test_rows: int
    config: EszslConfig | ConseConfig


class ConsistencyRow(BaseModel):
    source: str
    k: int
    consistency: float


class ConsistencyReport(BaseModel):
    schema_version: int = settings.REPORT_SCHEMA_VERSION
    num_classes: int
    rows: list[ConsistencyRow]


class ConsistencySummary(BaseModel):
    k: int
    raw_seen: float
    vawe_seen: float
    raw_all: float
    vawe_all: float


class MethodComparison(BaseModel):
    raw: EvalReport
    vawe: EvalReport
    delta_mean_per_class: float


class PipelineReport(BaseModel):
    schema_version: int = settings.REPORT_SCHEMA_VERSION
    run_config: RunConfig
    discrepancy_rho: Optional[float] = None
    consistency: ConsistencySummary
    training: dict
    methods: dict[str, MethodComparison]
