from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    # App Configuration
    APP_NAME: str = "HDG Multilevel Helmholtz Solver"
    VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # Multilevel cycle defaults
    DEFAULT_ALPHA: float = 0.5
    DEFAULT_MU: float = 0.5
    DEFAULT_OMEGA: float = 0.6
    DEFAULT_SMOOTHING_STEPS: int = 2

    # Outer PGMRES iteration
    PGMRES_TOL: float = 1e-6
    PGMRES_MAX_ITER: int = 200

    # Local Fourier analysis
    LFA_SAMPLES: int = 1024
    RESONANCE_TOL: float = 1e-10
    STENCIL_MISMATCH_TOL: float = 1e-8

    # Reproducibility and parallelism
    RANDOM_SEED: int = 20240101
    THREADS: int = 1

    model_config = SettingsConfigDict(
        env_prefix="HDGML_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
