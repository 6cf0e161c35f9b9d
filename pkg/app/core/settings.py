from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    eps_floor: float = 1e-9
    oracle_guard: int = 10_000_000  # joint-space entries
    normalization_tol: float = 1e-12
    log_level: str = "INFO"
    output_dir: str = "runs"

    class Config:
        env_file = ".env"
        env_prefix = "PD_"


settings = Settings()
