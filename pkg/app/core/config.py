from functools import lru_cache
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Solver configuration loaded from environment variables (prefix QCQP_)."""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="QCQP_", extra="ignore", env_file_encoding="utf-8")

    app_name: str = "GenTri QCQP"
    log_level: str = Field("INFO", description="Root logging level for CLI and API entry points")

    # Branch-and-bound
    eps_rel: float = Field(1e-4, description="Relative optimality gap for pruning and termination")
    time_limit: float = Field(600.0, description="Wall-clock limit of one solve, seconds")
    node_limit: int = Field(100000, description="Maximum number of processed nodes")
    use_triangles: bool = Field(True, description="Generate General Triangle cuts at every node")
    refresh_depth: int = Field(5, description="Depth period at which the convexified objective is re-derived")
    cut_rounds: int = Field(4, description="Separation rounds per node relaxation")
    node_cut_cap: int = Field(60, description="Triangle cuts added per separation round at a node")
    local_search_period: int = Field(10, description="Run the local search every N processed nodes")
    branch_clamp: float = Field(0.2, description="Branch point clamp fraction of the box width")
    progress_interval: float = Field(5.0, description="Seconds between two B&B progress lines")
    threads: int = Field(1, description="Worker threads of the B&B frontier driver")

    # Dual heuristic
    p_fraction: float = Field(0.04, description="Default cut cap as a fraction of |C u G|")
    dual_max_iter: int = Field(500, description="Subgradient iterations at the root")
    dual_refresh_iter: int = Field(100, description="Subgradient iterations when refreshing at depth")
    dual_time_limit: float = Field(60.0, description="Wall-clock limit of one dual run, seconds")
    sep_period: int = Field(10, description="Iterations between two separation rounds")
    drop_threshold: float = Field(1e-8, description="Multipliers below this leave the working set")
    step_a: float = Field(1.0, description="Numerator of the diminishing step a/(k+b)")
    step_b: float = Field(10.0, description="Offset of the diminishing step a/(k+b)")
    agility_patience: int = Field(20, description="Non-improving iterations before the Polyak factor is halved")

    # Frank-Wolfe
    fw_tol: float = Field(1e-6, description="Frank-Wolfe duality gap tolerance")
    fw_max_iter: int = Field(200, description="Frank-Wolfe iteration cap")

    # Simplex
    lp_max_iter: int = Field(50000, description="Simplex iteration cap before reporting stalled")
    lp_bland_after: int = Field(1000, description="Degenerate pivots before switching to Bland's rule")
    lp_refactor_period: int = Field(64, description="Pivots between two basis re-inversions")

    # Local search
    ls_starts: int = Field(4, description="Seeded perturbations added to the relaxation start")
    ls_perturbation: float = Field(0.1, description="Perturbation scale as a fraction of the box width")
    ls_max_iter: int = Field(400, description="Projected-gradient iterations per penalty level")
    ls_seed: int = Field(12345, description="Seed of the perturbation generator")

    # Oracle
    oracle_steps: int = Field(101, description="Default grid steps per dimension")


@lru_cache
def get_settings() -> Settings:
    return Settings()
