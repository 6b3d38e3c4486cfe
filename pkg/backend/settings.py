"""
PM-Lab Runtime Settings
Defaults for solvers, diagnostics and output, overridable via PMLAB_* env vars or .env
"""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide knobs; experiment configs override per run"""

    model_config = SettingsConfigDict(env_prefix="PMLAB_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    output_dir: str = "runs"
    seed: int = 20240101

    # statics
    perturbation_count: int = Field(10_000, ge=0)
    perturbation_magnitude: float = Field(1e-4, gt=0)
    stationarity_tol: float = 1e-10
    degeneracy_band: float = 1e-9

    # dynamics; solver_tol bounds the sup-norm of the prox residual scaled by tau/eps,
    # the unscaled stationarity residual is held to solver_tol * eps/tau plus round-off
    solver_tol: float = Field(1e-12, gt=0)
    max_newton_iters: int = Field(50, ge=1)
    fallback_iters: int = 500
    jump_floor: float = Field(0.1, gt=0)
    flux_stride: int = Field(100, ge=1)
    max_recorded_states: int = Field(500, ge=3)

    # oracles
    heat_grid: int = Field(2048, ge=16)
    heat_time_steps: int = Field(4096, ge=1)
    singularity_guard: float = 1e-4


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Get or create global settings instance"""
    return Settings()
