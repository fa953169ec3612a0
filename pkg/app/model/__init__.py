from .error import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    ErrorCode,
    ErrorContract,
    MissingClassError,
    NotPositiveDefiniteError,
    NumericError,
    ParseError,
    ProtocolError,
    ShapeError,
    VaweError,
)
from .tables import ClassEmbeddingTable, LabeledFeatureSet, VisualSignatureTable, ZslSplit
from .structure import HubSet, NeighborLists, Triplet, TripletBatch
from .params import MlpParams
from .request import ConseConfig, EszslConfig, RunConfig, SynthConfig, TrainConfig
from .response import (
    ConsistencyReport,
    ConsistencyRow,
    EpochRecord,
    EvalReport,
    PipelineReport,
    StopReason,
    TrainReport,
)

__all__ = [
    "ErrorCode",
    "ErrorContract",
    "VaweError",
    "ConfigError",
    "ParseError",
    "CheckpointError",
    "ShapeError",
    "MissingClassError",
    "ProtocolError",
    "NumericError",
    "NotPositiveDefiniteError",
    "DivergenceError",
    "ClassEmbeddingTable",
    "VisualSignatureTable",
    "LabeledFeatureSet",
    "ZslSplit",
    "NeighborLists",
    "HubSet",
    "Triplet",
    "TripletBatch",
    "MlpParams",
    "SynthConfig",
    "TrainConfig",
    "EszslConfig",
    "ConseConfig",
    "RunConfig",
    "EpochRecord",
    "TrainReport",
    "StopReason",
    "EvalReport",
    "ConsistencyRow",
    "ConsistencyReport",
    "PipelineReport",
]
