from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.config.settings import settings
from app.model.error import ConfigError


class _Config(BaseModel):
    """Frozen configuration; every invalid value surfaces as ConfigError."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    def __init__(self, **data: Any):
        try:
            super().__init__(**data)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(p) for p in first.get("loc", ()))
            raise ConfigError(
                f"invalid {type(self).__name__}: {field or 'value'}: {first.get('msg')}",
                field=field or None
            ) from e

    @classmethod
    def parse(cls, data: dict):
        return cls(**data)


class SynthConfig(_Config):
    """Synthetic dataset with a controllable visual-semantic discrepancy."""
    num_classes: int = 40
    images_per_class: int = Field(default=25, ge=1)
    visual_dim: int = 32
    semantic_dim: int = 24
    noise_sigma: float = Field(default=0.5, ge=0.0)
    discrepancy_rho: float = Field(default=1.0, ge=0.0)
    num_unseen: Optional[int] = Field(default=None, description="Defaults to num_classes // 4")
    seed: int = settings.SEED

    @model_validator(mode="after")
    def _ranges(self) -> "SynthConfig":
        if self.num_classes < 4:
            raise ConfigError(f"num_classes must be >= 4, got {self.num_classes}", field="num_classes")
        if self.visual_dim < 2 or self.semantic_dim < 2:
            raise ConfigError("visual_dim and semantic_dim must be >= 2")
        if self.num_unseen is not None and not 1 <= self.num_unseen <= self.num_classes - 2:
            raise ConfigError(
                f"num_unseen must be in [1, {self.num_classes - 2}], got {self.num_unseen}",
                field="num_unseen"
            )
        return self

    @property
    def resolved_num_unseen(self) -> int:
        return self.num_unseen if self.num_unseen is not None else max(1, self.num_classes // 4)


class TrainConfig(_Config):
    """Hyperparameters of the mapping network and its training loop."""
    k1: int = Field(default=settings.K1, ge=1)
    k2: Optional[int] = Field(default=None, description="Defaults to floor(num_seen/2), capped at num_seen-1")
    alpha: float = settings.ALPHA
    lam: float = Field(default=settings.LAMBDA, ge=0.0)
    out_dim: int = settings.OUT_DIM
    hidden: Optional[tuple[int, int]] = Field(default=None, description="Defaults to (2*d_s, 2*d_s)")
    lr: float = settings.LR
    momentum: float = Field(default=settings.MOMENTUM, ge=0.0, lt=1.0)
    batch_size: int = Field(default=settings.BATCH_SIZE, ge=1)
    max_epochs: int = Field(default=settings.MAX_EPOCHS, ge=1)
    patience: int = Field(default=settings.PATIENCE, ge=1)
    min_delta: float = Field(default=settings.MIN_DELTA, ge=0.0)
    norm_eps: float = Field(default=settings.NORM_EPS, gt=0.0)
    seed: int = settings.SEED
    recompute_ns_per_epoch: bool = False
    hub_correction: bool = settings.HUB_CORRECTION

    @model_validator(mode="after")
    def _ranges(self) -> "TrainConfig":
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}", field="alpha")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}", field="lr")
        if self.out_dim < 2:
            raise ConfigError(f"out_dim must be >= 2, got {self.out_dim}", field="out_dim")
        if self.k2 is not None and self.k2 <= self.k1:
            raise ConfigError(f"k2 must be > k1 (k1={self.k1}, k2={self.k2})", field="k2")
        if self.hidden is not None and min(self.hidden) < 1:
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden}", field="hidden")
        return self

    def resolved(self, num_seen: int, semantic_dim: int) -> "TrainConfig":
        """Fill k2 and hidden from the data and check the neighborhood sizes fit."""
        k2 = self.k2 if self.k2 is not None else min(num_seen // 2, num_seen - 1)
        hidden = self.hidden if self.hidden is not None else (2 * semantic_dim, 2 * semantic_dim)
        if k2 <= self.k1:
            raise ConfigError(
                f"k2 must be > k1 (k1={self.k1}, k2={k2}) for {num_seen} seen classes", field="k2"
            )
        if num_seen < k2 + 1:
            raise ConfigError(
                f"need at least k2+1={k2 + 1} seen classes, got {num_seen}", field="k2"
            )
        return self.model_copy(update={"k2": k2, "hidden": hidden})


class EszslConfig(_Config):
    gamma: float = Field(default=settings.ESZSL_GAMMA, gt=0.0)
    lam: float = Field(default=settings.ESZSL_LAM, gt=0.0)
    encoding: Literal["pm1", "binary"] = "pm1"


class ConseConfig(_Config):
    t_top: Optional[int] = Field(default=None, ge=1, description="Defaults to min(CONSE_T_TOP, #seen)")
    temperature: float = Field(default=settings.CONSE_TEMPERATURE, gt=0.0)

    def resolved_t_top(self, num_seen: int) -> int:
        t_top = self.t_top if self.t_top is not None else min(settings.CONSE_T_TOP, num_seen)
        if t_top > num_seen:
            raise ConfigError(f"t_top={t_top} exceeds {num_seen} seen classes", field="t_top")
        return t_top


ZslMethod = Literal["eszsl", "conse"]


class RunConfig(_Config):
    """Everything needed to reproduce a pipeline run from its report alone."""
    seed: int = settings.SEED
    workdir: str = settings.WORKDIR
    embeddings: Optional[str] = None
    features: Optional[str] = None
    split: Optional[str] = None
    synth: Optional[SynthConfig] = None
    target_consistency: Optional[tuple[float, float]] = None
    consistency_k: int = Field(default=settings.K1, ge=1)
    methods: tuple[ZslMethod, ...] = ("eszsl", "conse")
    train: TrainConfig = TrainConfig()
    eszsl: EszslConfig = EszslConfig()
    conse: ConseConfig = ConseConfig()

    @model_validator(mode="after")
    def _sources(self) -> "RunConfig":
        files = (self.embeddings, self.features, self.split)
        if any(files) and not all(files):
            raise ConfigError("embeddings, features and split must be given together")
        if not any(files) and self.synth is None:
            raise ConfigError("either input files or a synth config is required")
        if self.synth is not None and self.synth.seed != self.seed:
            raise ConfigError("synth seed differs from the run seed", field="synth.seed")
        if self.train.seed != self.seed:
            raise ConfigError("train seed differs from the run seed", field="train.seed")
        if self.target_consistency is not None:
            lo, hi = self.target_consistency
            if not 0 <= lo < hi:
                raise ConfigError(f"target consistency band must satisfy 0 <= lo < hi, got {lo}, {hi}")
        if not self.methods:
            raise ConfigError("at least one ZSL method is required", field="methods")
        return self

    @property
    def is_synthetic(self) -> bool:
        return self.embeddings is None
