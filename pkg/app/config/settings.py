from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # App
    APP_NAME: str = "VAWE - Visually Aligned Word Embeddings"
    WORKDIR: str = "runs"
    REPORT_SCHEMA_VERSION: int = 1
    CHECKPOINT_VERSION: int = 1

    # Logging
    LOG_LEVEL: str = "WARNING"
    LOG_FILE: Optional[str] = None

    # Reproducibility
    SEED: int = 0

    # Triplet mining / hubness
    K1: int = 10
    HUB_CORRECTION: bool = True

    # Mapping network
    ALPHA: float = 1.0
    LAMBDA: float = 1e-4
    OUT_DIM: int = 128
    NORM_EPS: float = 1e-12

    # SGD
    LR: float = 0.01
    MOMENTUM: float = 0.0
    BATCH_SIZE: int = 64
    MAX_EPOCHS: int = 300
    PATIENCE: int = 10
    MIN_DELTA: float = 1e-6

    # ZSL evaluators
    ESZSL_GAMMA: float = 1.0
    ESZSL_LAM: float = 1.0
    CONSE_T_TOP: int = 10
    CONSE_TEMPERATURE: float = 1.0

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="VAWE_",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
