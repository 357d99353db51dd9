from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache

class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="CHAINCOORD_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    mongodb_url: str = "mongodb://localhost:27017"
    database_name: str = "chaincoord"
    report_format: str = "table"
    monte_carlo_partitions: int = 8  # fixed partitioning keeps results independent of worker count
    monte_carlo_workers: int = 1
    max_deficit: int = 50
    retained_states: int = 512  # post-states kept per chain for reorgs and views

@lru_cache()
def get_settings():
    return Settings()
