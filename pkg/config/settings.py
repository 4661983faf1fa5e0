# -*- coding: utf-8 -*-
from pydantic import Field

try:
    from pydantic_settings import BaseSettings
except (
    ImportError
):  # pragma: no cover - fallback for environments without pydantic_settings
    from pydantic import BaseSettings
try:
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover - fallback if python-dotenv is missing

    def load_dotenv(*args, **kwargs):
        return False


load_dotenv()


class Settings(BaseSettings):
    """Configuración de proceso: logging, rutas por defecto y umbrales de latencia"""

    # Logging
    log_level: str = Field(default="INFO", env="LOG_LEVEL")
    log_dir: str = Field(default="./logs", env="LOG_DIR")
    log_to_file: bool = Field(default=True, env="LOG_TO_FILE")

    # Paths
    runs_path: str = Field(default="./runs", env="RUNS_PATH")

    # Reproducibilidad
    default_seed: int = Field(default=13, env="DEFAULT_SEED")

    # Búsqueda exacta por bloques (filas del índice procesadas por bloque)
    search_block_size: int = Field(default=4096, env="SEARCH_BLOCK_SIZE")

    # Observability & SLA
    search_sla_ms: int = Field(default=50, env="SEARCH_SLA_MS")
    epoch_sla_ms: int = Field(default=600_000, env="EPOCH_SLA_MS")

    class Config:
        env_file = ".env"
        case_sensitive = False
        extra = "ignore"


# Instancia global de configuración
settings = Settings()
