import logging
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI

from api.audit import router as audit_router
from api.curves import router as curves_router
from api.runs import router as runs_router
from config import APP_VERSION, setup_logging
from db.connection import init_db

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    init_db()
    logger.info("Run registry ready")
    yield


app = FastAPI(title="Streaming DMT API", version=APP_VERSION, lifespan=lifespan)

app.include_router(curves_router)
app.include_router(audit_router)
app.include_router(runs_router)


if __name__ == "__main__":
    setup_logging()
    uvicorn.run("main:app", host="0.0.0.0", port=8000)
