from __future__ import annotations

import logging

from fastapi import FastAPI

from app.core.config import get_settings

settings = get_settings()

logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(levelname)s: %(name)s - %(message)s",
)
logger = logging.getLogger(__name__)

from app.api.routes import router
from app.services.solver_service import SolverService

app = FastAPI(title=settings.app_name)

app.include_router(router)


@app.on_event("startup")
async def startup_event() -> None:
    app.state.solver_service = SolverService()
    logger.info(f"{settings.app_name} ready (eps_rel={settings.eps_rel}, threads={settings.threads})")
