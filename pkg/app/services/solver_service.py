"""Request-level facade over the engines, shared by the CLI and the HTTP routes."""

from __future__ import annotations

import logging
from typing import Optional

from app.core.config import get_settings
from app.models.instance import InstanceDocument
from app.models.solver import (
    AuditResponse,
    AuditRowModel,
    BoundResponse,
    GenerateRequest,
    SolveOptions,
    SolveResponse,
    finite_or_none,
)
from app.services.audit import run_audit
from app.services.bnb import local_search, relative_gap, solve
from app.services.dual import DualConfig, default_p, run_heuristic
from app.services.qcqp import QcqpInstance, evaluate_objective, from_document, gen_unitbox, to_document

logger = logging.getLogger(__name__)


class SolverService:
    """Turns documents and options into engine calls and result models."""

    def __init__(self):
        self.settings = get_settings()

    def solve(self, inst: QcqpInstance, options: Optional[SolveOptions] = None) -> SolveResponse:
        options = options or SolveOptions()
        result = solve(inst, options.bnb_config(inst.n))
        return SolveResponse(
            name=inst.name,
            status=result.status.value,
            value=finite_or_none(result.value),
            best_bound=finite_or_none(result.best_bound),
            gap=finite_or_none(result.gap),
            nodes=result.nodes,
            root_bound=finite_or_none(result.root_bound),
            root_gap=finite_or_none(result.root_gap),
            elapsed=result.elapsed,
            incumbent=None if result.incumbent is None else [float(v) for v in result.incumbent],
        )

    def solve_document(self, doc: InstanceDocument, options: Optional[SolveOptions] = None) -> SolveResponse:
        return self.solve(from_document(doc), options)

    def bound(
        self,
        inst: QcqpInstance,
        p: Optional[int | float] = None,
        max_iter: Optional[int] = None,
        use_triangles: bool = True,
    ) -> BoundResponse:
        """Root dual bound, with the gap to a local-search incumbent when one is found."""
        cap = SolveOptions(p=p).resolve_p(inst.n)
        cap = default_p(inst.n) if cap is None else cap
        incumbent = local_search(inst, (inst.lower + inst.upper) / 2.0)
        value = evaluate_objective(inst, incumbent) if incumbent is not None else None
        state = run_heuristic(
            inst,
            config=DualConfig.from_settings(p=cap, max_iter=max_iter, triangles=use_triangles),
            incumbent=value,
        )
        return BoundResponse(
            name=inst.name,
            bound=state.best_bound,
            incumbent_value=value,
            gap=None if value is None else finite_or_none(relative_gap(value, state.best_bound)),
            iterations=state.iterations,
            working_set=len(state.working_set),
            p=cap,
        )

    def generate(self, request: GenerateRequest) -> InstanceDocument:
        return to_document(gen_unitbox(request.n, request.m, request.density, request.seed, request.diagonal))

    def audit(self, boxes: int = 100, seed: int = 0) -> AuditResponse:
        report = run_audit(boxes, seed)
        return AuditResponse(
            boxes=report.boxes,
            seed=report.seed,
            summary=report.summary,
            cutting=report.cutting,
            redundant=report.redundant,
            witness_error=report.witness_error,
            padberg_ok=report.padberg_ok,
            rows=[AuditRowModel(**row.__dict__) for row in report.rows],
        )
