"""
Cut selection sweep.

Derives all 48 triple-product candidates on a set of seeded random boxes and
classifies each one with the redundancy LP, checks the witness point of every
retained triangle, and compares the unit-box triangles with the classical 0-1
forms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.core.constants import REDUNDANCY_TOL, VALIDITY_TOL
from app.services.cuts import (
    FAMILY_PATTERNS,
    TRIANGLE_VARIANTS,
    CutKind,
    all_mccormick_cuts,
    candidate_cut,
    is_cutting_variant,
    padberg_form,
    triangle_cut,
    violation,
    witness_point,
)
from app.services.oracle import max_cut_violation

logger = logging.getLogger(__name__)

# Classical 0-1 form reached by each triangle at l = 0, u = 1
EXPECTED_PADBERG = {
    1: "0", 2: "0", 3: "0",
    4: "k", 5: "k",
    6: "j", 7: "j",
    8: "i", 9: "i", 10: "i",
    11: "j", 12: "k",
}


@dataclass
class AuditRow:
    t: int
    family: int
    variant: int
    pattern: str
    cutting: bool
    redundant_boxes: int
    max_violation: float
    kind: str = CutKind.CANDIDATE.value
    triangle: Optional[int] = None
    witness_violation: Optional[float] = None

    @property
    def key_t(self) -> int:
        """Index in the cut key: the triangle number for retained rows, the candidate number otherwise."""
        return self.triangle if self.triangle is not None else self.t

    @property
    def consistent(self) -> bool:
        """Retained candidates cut on every box, discarded ones on none."""
        if self.cutting:
            return self.redundant_boxes == 0
        return self.max_violation <= REDUNDANCY_TOL


@dataclass
class AuditReport:
    boxes: int
    seed: int
    rows: list[AuditRow] = field(default_factory=list)
    witness_error: float = 0.0
    witness_mccormick: float = 0.0
    padberg: dict[int, str] = field(default_factory=dict)

    @property
    def cutting(self) -> int:
        return sum(1 for row in self.rows if row.cutting and row.redundant_boxes == 0)

    @property
    def redundant(self) -> int:
        return sum(1 for row in self.rows if row.redundant_boxes == self.boxes)

    @property
    def padberg_ok(self) -> bool:
        return self.padberg == EXPECTED_PADBERG

    @property
    def ok(self) -> bool:
        return (
            all(row.consistent for row in self.rows)
            and self.witness_error <= VALIDITY_TOL
            and self.witness_mccormick <= VALIDITY_TOL
            and self.padberg_ok
        )

    @property
    def summary(self) -> str:
        return f"{len(self.rows)} candidates: {self.cutting} cutting, {self.redundant} redundant"


def random_boxes(count: int, seed: int, top: float = 10.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded triple boxes with 0 <= l < u <= top and widths of at least 1% of top."""
    rng = np.random.Generator(np.random.PCG64(seed))
    boxes = []
    for _ in range(count):
        lower = rng.uniform(0.0, 0.99 * top, 3)
        upper = rng.uniform(lower + 0.01 * top, top)
        boxes.append((lower, upper))
    return boxes


def _witness_errors(boxes) -> tuple[float, float]:
    """Largest |violation - w_i w_j w_k / 2| and largest McCormick violation at the witnesses."""
    worst_gap, worst_mc = 0.0, 0.0
    for lower, upper in boxes:
        half_volume = float(np.prod(upper - lower)) / 2.0
        envelopes = all_mccormick_cuts(lower, upper)
        for t in range(1, 13):
            point = witness_point(lower, upper, 0, 1, 2, t)
            cut = triangle_cut(lower, upper, 0, 1, 2, t)
            worst_gap = max(worst_gap, abs(violation(cut, point) - half_volume))
            worst_mc = max(worst_mc, max(violation(env, point) for env in envelopes))
    return worst_gap, worst_mc


def _weakest_witness(boxes, t: int) -> float:
    """Smallest violation of triangle t at its witness point over the boxes."""
    return min(
        violation(triangle_cut(lower, upper, 0, 1, 2, t), witness_point(lower, upper, 0, 1, 2, t))
        for lower, upper in boxes
    )


def run_audit(boxes: int = 100, seed: int = 0) -> AuditReport:
    """
    Classify the 48 candidates over `boxes` random boxes.

    A candidate counts as cutting when the redundancy LP finds a violated
    point of the McCormick polytope on every box, and as redundant when it
    finds none on any box.
    """
    sample = random_boxes(boxes, seed)
    report = AuditReport(boxes=boxes, seed=seed)

    for family in range(1, 9):
        for variant in range(1, 7):
            worst = -np.inf
            redundant = 0
            for lower, upper in sample:
                cut = candidate_cut(lower, upper, 0, 1, 2, family, variant)
                value = max_cut_violation(lower, upper, cut)
                worst = max(worst, value)
                redundant += value <= REDUNDANCY_TOL
            row = AuditRow(
                t=6 * (family - 1) + variant,
                family=family,
                variant=variant,
                pattern=FAMILY_PATTERNS[family - 1],
                cutting=is_cutting_variant(family, variant),
                redundant_boxes=redundant,
                max_violation=float(worst),
            )
            if row.cutting:
                row.kind = CutKind.TRIANGLE.value
                row.triangle = TRIANGLE_VARIANTS.index((family, variant)) + 1
                row.witness_violation = _weakest_witness(sample, row.triangle)
            report.rows.append(row)
        logger.debug(f"Family {family} ({FAMILY_PATTERNS[family - 1]}) classified")

    report.witness_error, report.witness_mccormick = _witness_errors(sample)

    unit_lower, unit_upper = np.zeros(3), np.ones(3)
    report.padberg = {
        t: padberg_form(triangle_cut(unit_lower, unit_upper, 0, 1, 2, t)) for t in range(1, 13)
    }

    logger.info(f"Cut audit over {boxes} boxes: {report.summary}")
    return report
