"""Run configuration and API request/response models."""

import math
from enum import Enum
from typing import Any, Optional, Union

from pydantic import BaseModel, Field, field_validator

from app.models.instance import InstanceDocument
from app.services.bnb import BnbConfig
from app.services.dual import default_p


class Command(str, Enum):
    """CLI subcommands."""
    SOLVE = "solve"
    BOUND = "bound"
    CUTS = "cuts"
    GEN = "gen"
    BENCH = "bench"


def finite_or_none(value: Optional[float]) -> Optional[float]:
    """JSON has no infinities; report them as null."""
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def check_p(v: Optional[Union[int, float]]) -> Optional[Union[int, float]]:
    """Integers are absolute caps, floats fractions of |C u G|."""
    if v is None:
        return v
    if isinstance(v, float):
        if not 0.0 < v <= 1.0:
            raise ValueError(f"fractional p must lie in (0, 1], got {v}")
    elif v < 0:
        raise ValueError(f"p must be nonnegative, got {v}")
    return v


# ========== Solver Options ==========

class SolveOptions(BaseModel):
    """Per-run overrides of the settings defaults."""
    eps_rel: Optional[float] = Field(None, gt=0, lt=1, description="Relative optimality gap")
    time_limit: Optional[float] = Field(None, gt=0, description="Wall-clock limit in seconds")
    node_limit: Optional[int] = Field(None, ge=1, description="Maximum processed nodes")
    p: Optional[Union[int, float]] = Field(
        None,
        description="Dual working-set cap: an absolute count (integer) or a fraction of |C u G| in (0, 1]",
    )
    use_triangles: bool = Field(True, description="Generate General Triangle cuts")
    threads: int = Field(1, ge=1, le=64, description="Worker threads of the frontier driver")

    @field_validator("p")
    @classmethod
    def validate_p(cls, v):
        return check_p(v)

    def resolve_p(self, n: int) -> Optional[int]:
        if self.p is None:
            return None
        if isinstance(self.p, float):
            return default_p(n, self.p)
        return int(self.p)

    def bnb_config(self, n: int) -> BnbConfig:
        return BnbConfig.from_settings(
            eps_rel=self.eps_rel,
            time_limit=self.time_limit,
            node_limit=self.node_limit,
            use_triangles=self.use_triangles,
            p=self.resolve_p(n),
            threads=self.threads,
        )


class RunConfig(SolveOptions):
    """One CLI invocation."""
    command: Command
    instances: list[str] = Field(default_factory=list, description="Instance paths")
    seed: int = Field(0, ge=0, description="Generator / suite seed")
    output: Optional[str] = Field(None, description="Output path (gen) or JSON report path")
    json_output: bool = Field(False, description="Also print the result as JSON")
    verbose: bool = Field(False, description="DEBUG logging")


# ========== Solve / Bound ==========

class SolveRequest(BaseModel):
    """Request model for a global solve."""
    instance: InstanceDocument
    options: SolveOptions = Field(default_factory=SolveOptions)


class SolveResponse(BaseModel):
    """Result block of a global solve."""
    success: bool = True
    name: str
    status: str
    value: Optional[float] = Field(None, description="Incumbent objective, null when none was found")
    best_bound: Optional[float]
    gap: Optional[float]
    nodes: int
    root_bound: Optional[float]
    root_gap: Optional[float]
    elapsed: float
    incumbent: Optional[list[float]] = None


class BoundRequest(BaseModel):
    """Request model for the dual heuristic alone."""
    instance: InstanceDocument
    p: Optional[Union[int, float]] = Field(None, description="Working-set cap, count or fraction")
    max_iter: Optional[int] = Field(None, ge=1, description="Subgradient iterations")
    use_triangles: bool = True

    @field_validator("p")
    @classmethod
    def validate_p(cls, v):
        return check_p(v)


class BoundResponse(BaseModel):
    """Root dual bound and its gap to the local-search incumbent."""
    success: bool = True
    name: str
    bound: float
    incumbent_value: Optional[float] = None
    gap: Optional[float] = None
    iterations: int
    working_set: int
    p: int


# ========== Generation / Audit ==========

class GenerateRequest(BaseModel):
    """Request model for a seeded unitbox instance."""
    n: int = Field(..., ge=2, le=200, description="Variable count")
    m: int = Field(..., ge=0, le=1000, description="Constraint count")
    density: float = Field(0.25, gt=0, le=1, description="Share of nonzero matrix entries")
    seed: int = Field(0, ge=0, description="Generator seed")
    diagonal: bool = Field(True, description="Also draw squared terms at the same density")


class AuditRowModel(BaseModel):
    t: int
    family: int
    variant: int
    pattern: str
    cutting: bool
    redundant_boxes: int
    max_violation: float
    kind: str
    triangle: Optional[int] = None
    witness_violation: Optional[float] = None


class AuditResponse(BaseModel):
    """Cut selection sweep summary."""
    success: bool = True
    boxes: int
    seed: int
    summary: str
    cutting: int
    redundant: int
    witness_error: float
    padberg_ok: bool
    rows: list[AuditRowModel] = Field(default_factory=list)


# ========== Errors ==========

class ErrorDetail(BaseModel):
    code: str
    message: str
    details: Optional[dict[str, Any]] = None


class ErrorResponse(BaseModel):
    success: bool = False
    error: ErrorDetail
