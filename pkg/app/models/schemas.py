from pydantic import BaseModel, Field
from typing import Optional
from datetime import datetime
from enum import Enum


class RunStatus(str, Enum):
    COMPLETED = "completed"
    FAILED = "failed"


class MonoidRequest(BaseModel):
    """A monoid named by spec text or by a family string such as ``braid:4``."""

    spec: Optional[str] = None
    family: Optional[str] = None
    class_length_cap: Optional[int] = None
    garside_cap: Optional[int] = None


class NormalFormRequest(MonoidRequest):
    word: str


class MobiusRequest(MonoidRequest):
    valuation: Optional[str] = None
    k_max: int = Field(default=10, ge=0, le=200)


class MeasureRequest(MonoidRequest):
    valuation: Optional[str] = None
    prefix: int = Field(default=3, ge=1)
    count: int = Field(default=10, ge=1)
    seed: Optional[int] = None


class StatsRequest(MonoidRequest):
    length: int = Field(ge=1)
    count: int = Field(ge=1)
    stat: str = "height"
    valuation: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = None


class AxiomCheck(BaseModel):
    name: str
    passed: bool
    detail: str

    class Config:
        from_attributes = True


class AxiomReport(BaseModel):
    passed: bool
    checks: list[AxiomCheck]
    notes: list[str] = []

    class Config:
        from_attributes = True


class AnalysisReport(BaseModel):
    monoid: str
    generators: list[str]
    simples: int
    spherical: bool
    delta: Optional[str] = None
    fc: bool
    irreducible: bool
    components: list[list[str]]
    charney_strongly_connected: Optional[bool] = None
    mobius_polynomial: str
    p0: Optional[float] = None
    lam: Optional[float] = None
    perron_case: Optional[str] = None
    K: Optional[int] = None
    kappa: Optional[float] = None
    axioms: AxiomReport
    notes: list[str] = []


class NormalFormResponse(BaseModel):
    word: str
    blocks: list[str]
    normal_form: str
    height: int
    length: int


class SimpleInfo(BaseModel):
    index: int
    word: str
    length: int
    left: list[str]
    right: list[str]
    letters: list[str]
    d_set: list[str]


class GarsideDump(BaseModel):
    monoid: str
    simples: list[SimpleInfo]
    delta: Optional[str] = None
    fc: bool
    arrows: list[list[int]]
    charney_strongly_connected: Optional[bool] = None


class MobiusReport(BaseModel):
    monoid: str
    valuation: Optional[str] = None
    polynomial: str
    coefficients: list[str]
    polynomial_over_simples: str
    p0: Optional[float] = None
    growth: list[str]


class MeasureSample(BaseModel):
    monoid: str
    valuation: str
    kappa: float
    seed: int
    prefixes: list[str]


class ExperimentReport(BaseModel):
    monoid: str
    statistic: str
    k: int
    count: int
    seed: int
    mean_ratio: float
    gamma: float
    finite_mean_ratio: float
    variance: float
    s2: float
    kappa: float
    ks_statistic: Optional[float] = None
    ks_pvalue: Optional[float] = None
    degenerate: bool
    caveats: list[str] = []
    runtime_seconds: float = 0.0

    class Config:
        from_attributes = True


class DeltaMethodReport(BaseModel):
    k: int
    count: int
    kappa: float
    mean: float
    variance: float
    target_variance: float
    degenerate: bool

    class Config:
        from_attributes = True


class StatsResponse(BaseModel):
    run_id: Optional[str] = None
    report: ExperimentReport
    delta_method: Optional[DeltaMethodReport] = None
    csv_path: Optional[str] = None


class CliConfig(BaseModel):
    """Resolved configuration of one ``atm`` run, echoed to stderr."""

    subcommand: str
    spec_source: str
    valuation: Optional[str] = None
    k: Optional[int] = None
    count: Optional[int] = None
    seed: int
    threads: int
    tol: float
    max_iter: int
    cap: int
    out: Optional[str] = None


class RunResponse(BaseModel):
    id: str
    monoid: str
    statistic: str
    k: int
    count: int
    seed: int
    status: RunStatus
    report_json: Optional[str]
    csv_path: Optional[str]
    error_message: Optional[str]
    created_at: datetime

    class Config:
        from_attributes = True


class HealthResponse(BaseModel):
    status: str
    database: str
    storage: str
