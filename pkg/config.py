from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    # Optimisation Config
    FOCUS_ITERATIONS: int = 1000
    ADAM_B1: float = 0.9
    ADAM_B2: float = 0.999
    ADAM_EPS: float = 1e-8
    DISTANCE_SMOOTH_EPS: float = 1e-10
    CLAMP_TO_UNIT_BOX: bool = False

    # Data Config
    COVARIANCE_RIDGE: float = 1e-6
    TRAIN_FRACTION: float = 0.7
    MIN_SPLIT_ROWS: int = 10

    # Model File Config
    MODEL_FORMAT_VERSION: int = 1
    LEAF_SUM_TOLERANCE: float = 1e-9

    # Execution Config
    DEFAULT_JOBS: int = 1
    DEFAULT_SEED: int = 0

    # Metrics Config
    ENABLE_METRICS: bool = True
    METRICS_FILE: str = ""  # empty: no textfile snapshot

    # Logging Config
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "json"
    LOG_DIR: str = "logs"
    LOG_TO_FILE: bool = True
    LOG_MAX_SIZE_MB: int = 10
    LOG_BACKUP_COUNT: int = 10

    class Config:
        env_file = ".env"
        extra = "allow"
        env_file_encoding = "utf-8"

settings = Settings()
