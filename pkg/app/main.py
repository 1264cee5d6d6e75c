from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from contextlib import asynccontextmanager

from app.config import settings, configure_logging
from app.errors import AtmError
from app.routers import monoid
from app.models.schemas import HealthResponse


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan handler."""
    configure_logging()
    # Startup: ensure the report directory exists
    settings.REPORTS_PATH.mkdir(parents=True, exist_ok=True)

    # Create database tables
    from app.db.database import init_db
    init_db()

    yield


app = FastAPI(
    title="Artin-Tits measures API",
    description="Garside normal forms, Möbius inversion, boundary measures and limit-law experiments for Artin-Tits monoids",
    version="1.0.0",
    lifespan=lifespan
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(AtmError)
async def atm_error_handler(request: Request, exc: AtmError):
    """Typed toolkit errors become JSON bodies with the error's HTTP status."""
    return JSONResponse(
        status_code=exc.status_code,
        content={"error": type(exc).__name__, "detail": exc.message},
    )


# Include routers
app.include_router(monoid.router)


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint."""
    from sqlalchemy import text
    from app.db.database import SessionLocal

    # Check database
    db_status = "ok"
    try:
        db = SessionLocal()
        db.execute(text("SELECT 1"))
        db.close()
    except Exception as e:
        db_status = f"error: {str(e)}"

    # Check storage
    storage_status = "ok"
    if not settings.REPORTS_PATH.exists():
        storage_status = "error: reports path not found"

    return HealthResponse(
        status="healthy" if db_status == "ok" and storage_status == "ok" else "unhealthy",
        database=db_status,
        storage=storage_status
    )


@app.get("/api/info")
async def api_info():
    """Numerical defaults applied when a request does not override them."""
    return {
        "tol": settings.TOL,
        "max_iter": settings.MAX_ITER,
        "garside_cap": settings.GARSIDE_CAP,
        "class_length_cap": settings.CLASS_LENGTH_CAP,
        "exact_max_length": settings.EXACT_MAX_LENGTH,
        "seed": settings.SEED,
        "threads": settings.worker_count(),
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "app.main:app",
        host=settings.API_HOST,
        port=settings.API_PORT,
        reload=True
    )
