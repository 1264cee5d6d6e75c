from fastapi import APIRouter, Depends, HTTPException, UploadFile, File
from fastapi.concurrency import run_in_threadpool
from pathlib import Path
from sqlalchemy.orm import Session

from app.config import settings
from app.db.database import get_db
from app.errors import AtmError
from app.models.db_models import ExperimentRun
from app.models.schemas import (
    AnalysisReport,
    GarsideDump,
    MeasureRequest,
    MobiusReport,
    MobiusRequest,
    MonoidRequest,
    MeasureSample,
    NormalFormRequest,
    NormalFormResponse,
    RunResponse,
    RunStatus,
    StatsRequest,
    StatsResponse,
)
from app.services.analysis import MonoidAnalysis, resolve_presentation
from app.services.storage import StorageService

router = APIRouter(prefix="/api/monoid", tags=["monoid"])


@router.post("/analyze", response_model=AnalysisReport)
def analyze(request: MonoidRequest):
    """Simples, sphericity, FC, irreducibility, Möbius polynomial, p₀, λ, κ and the axiom checks."""
    return MonoidAnalysis.from_request(request).analyze()


@router.post("/normal-form", response_model=NormalFormResponse)
def normal_form(request: NormalFormRequest):
    return MonoidAnalysis.from_request(request).normal_form(request.word)


@router.post("/garside", response_model=GarsideDump)
def garside(request: MonoidRequest):
    return MonoidAnalysis.from_request(request).garside_dump()


@router.post("/mobius", response_model=MobiusReport)
def mobius(request: MobiusRequest):
    return MonoidAnalysis.from_request(request).mobius_report(request.valuation, request.k_max)


@router.post("/measure", response_model=MeasureSample)
def measure(request: MeasureRequest):
    """Sample boundary prefixes (uniform measure unless a valuation is given)."""
    return MonoidAnalysis.from_request(request).measure(
        request.valuation, request.prefix, request.count, request.seed
    )


@router.post("/stats", response_model=StatsResponse)
async def stats(request: StatsRequest, db: Session = Depends(get_db)):
    """
    Run a concentration experiment and record it.

    Failed runs are recorded too, with their error message, before the error is returned.
    """
    seed = settings.SEED if request.seed is None else request.seed
    run = ExperimentRun(
        monoid=request.family or "spec",
        statistic=request.stat,
        k=request.length,
        count=request.count,
        seed=seed,
    )
    try:
        analysis = MonoidAnalysis.from_request(request)
        run.monoid = analysis.label
        experiment, report, delta = await run_in_threadpool(
            analysis.experiment,
            request.length,
            request.count,
            request.stat,
            request.valuation,
            seed,
            request.threads,
        )
    except AtmError as exc:
        run.status = RunStatus.FAILED.value
        run.error_message = exc.message
        db.add(run)
        db.commit()
        raise

    run.status = RunStatus.COMPLETED.value
    run.report_json = report.model_dump_json()
    db.add(run)
    db.commit()
    db.refresh(run)

    storage = StorageService()
    config = request.model_dump() | {"seed": seed}
    run.csv_path = await storage.save_experiment(
        run.id, experiment, config, report.model_dump(exclude={"runtime_seconds"})
    )
    db.commit()

    return StatsResponse(run_id=run.id, report=report, delta_method=delta, csv_path=run.csv_path)


@router.post("/upload", response_model=AnalysisReport)
async def upload_spec(file: UploadFile = File(...)):
    """Analyze an uploaded monoid spec file."""
    storage = StorageService()
    path = await storage.save_upload(file)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="spec file must be UTF-8 text")
    name = Path(file.filename or "monoid").stem
    presentation = resolve_presentation(spec=text, name=name)
    return await run_in_threadpool(MonoidAnalysis(presentation).analyze)


@router.get("/runs/{run_id}", response_model=RunResponse)
def get_run(run_id: str, db: Session = Depends(get_db)):
    """Get a recorded experiment run by its ID."""
    run = db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()

    if not run:
        raise HTTPException(status_code=404, detail="Run not found")

    return run
