import logging

from fastapi import APIRouter, Depends, HTTPException, Query, Request
from starlette.concurrency import run_in_threadpool

from app.core.constants import ERROR_CODES
from app.models.instance import InstanceDocument
from app.models.solver import (
    AuditResponse,
    BoundRequest,
    BoundResponse,
    GenerateRequest,
    SolveRequest,
    SolveResponse,
)
from app.services.qcqp import InstanceError, InstanceValueError, from_document
from app.services.solver_service import SolverService

logger = logging.getLogger(__name__)

router = APIRouter()


def get_service(request: Request) -> SolverService:
    return request.app.state.solver_service


def _error(status_code: int, code: str, message: str, **details) -> HTTPException:
    return HTTPException(
        status_code=status_code,
        detail={
            "success": False,
            "error": {"code": code, "message": message, "details": details or None},
        },
    )


def _instance_error(exc: InstanceError) -> HTTPException:
    code = "INSTANCE_VALUE" if isinstance(exc, InstanceValueError) else "INSTANCE_FORMAT"
    return _error(422, code, f"{ERROR_CODES[code]}: {exc.message}", path=exc.path)


@router.post("/solve", response_model=SolveResponse, summary="Solve an instance to global optimality")
async def solve(payload: SolveRequest, service: SolverService = Depends(get_service)) -> SolveResponse:
    try:
        inst = from_document(payload.instance)
    except InstanceError as exc:
        raise _instance_error(exc)
    logger.info(f"POST /solve {inst!r}")
    return await run_in_threadpool(service.solve, inst, payload.options)


@router.post("/bound", response_model=BoundResponse, summary="Root bound from the dual heuristic")
async def bound(payload: BoundRequest, service: SolverService = Depends(get_service)) -> BoundResponse:
    try:
        inst = from_document(payload.instance)
    except InstanceError as exc:
        raise _instance_error(exc)
    return await run_in_threadpool(service.bound, inst, payload.p, payload.max_iter, payload.use_triangles)


@router.post("/instances/generate", response_model=InstanceDocument, summary="Seeded unitbox instance")
async def generate(payload: GenerateRequest, service: SolverService = Depends(get_service)) -> InstanceDocument:
    try:
        return await run_in_threadpool(service.generate, payload)
    except InstanceError as exc:
        raise _error(400, "INSTANCE_VALUE", exc.message, path=exc.path)


@router.get("/cuts/audit", response_model=AuditResponse, summary="Classify the 48 triple-product candidates")
async def audit(
    boxes: int = Query(100, ge=1, le=1000, description="Random boxes"),
    seed: int = Query(0, ge=0, description="Box generator seed"),
    service: SolverService = Depends(get_service),
) -> AuditResponse:
    return await run_in_threadpool(service.audit, boxes, seed)


@router.get("/health", include_in_schema=False)
async def healthcheck():
    return {"status": "ok"}
