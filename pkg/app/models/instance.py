"""JSON instance document schema."""

from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator


# ========== Quadratic Blocks ==========

class QuadraticBlock(BaseModel):
    """One quadratic function: upper-triangle triplets plus a linear part."""
    Q: list[tuple[int, int, float]] = Field(
        default_factory=list,
        description="Triplets [i, j, v] with i <= j; v is the coefficient of x_i x_j (i<j) or x_i^2 (i=j)",
    )
    c: list[float] = Field(..., description="Linear coefficients, one per variable")

    @field_validator("Q")
    @classmethod
    def validate_triplets(cls, v: list[tuple[int, int, float]]) -> list[tuple[int, int, float]]:
        for pos, (i, j, _) in enumerate(v):
            if i < 0 or j < 0:
                raise ValueError(f"negative index in triplet {pos}")
            if i > j:
                raise ValueError(f"triplet {pos} is below the diagonal (i={i} > j={j})")
        return v


class ConstraintBlock(QuadraticBlock):
    """Quadratic constraint f(x) <= b."""
    b: float = Field(..., description="Right-hand side")


# ========== Instance Document ==========

class InstanceDocument(BaseModel):
    """Serialized QCQP: min f_0(x) s.t. f_r(x) <= b_r, l <= x <= u."""
    n: int = Field(..., ge=1, description="Variable count")
    m: int = Field(..., ge=0, description="Constraint count")
    l: list[float] = Field(..., description="Lower bounds (>= 0)")
    u: list[float] = Field(..., description="Upper bounds (> l)")
    objective: QuadraticBlock
    constraints: list[ConstraintBlock] = Field(default_factory=list)
    meta: dict[str, Any] = Field(default_factory=dict, description="Free-form metadata (name, seed, feasible_point)")

    @model_validator(mode="after")
    def check_dimensions(self) -> "InstanceDocument":
        if len(self.l) != self.n:
            raise ValueError(f"l has {len(self.l)} entries, expected n={self.n}")
        if len(self.u) != self.n:
            raise ValueError(f"u has {len(self.u)} entries, expected n={self.n}")
        if len(self.constraints) != self.m:
            raise ValueError(f"{len(self.constraints)} constraints given, expected m={self.m}")
        blocks = [("objective", self.objective)] + [
            (f"constraints[{r}]", block) for r, block in enumerate(self.constraints)
        ]
        for name, block in blocks:
            if len(block.c) != self.n:
                raise ValueError(f"{name}.c has {len(block.c)} entries, expected n={self.n}")
            for pos, (_, j, _) in enumerate(block.Q):
                if j >= self.n:
                    raise ValueError(f"{name}.Q[{pos}] index {j} out of range for n={self.n}")
        return self
