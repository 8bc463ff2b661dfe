"""Pydantic models package."""

from .instance import (
    ConstraintBlock,
    InstanceDocument,
    QuadraticBlock
)

__all__ = [
    "ConstraintBlock",
    "InstanceDocument",
    "QuadraticBlock"
]
