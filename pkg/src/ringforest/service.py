"""HTTP facade over the simulation harness.

Every capability of the library is reachable through a JSON endpoint, and
the CLI is a thin client of this app.  Requests and responses are pydantic
models; package errors map onto HTTP status codes by type, as promised in
the errors module.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import (
    AlreadyExistsError,
    AuthorityError,
    BootstrapError,
    ConditioningError,
    ConfigError,
    InvariantViolation,
    MembershipError,
    OracleUnavailableError,
    RangeError,
    RingForestError,
    UnrecoverableStateError,
    UnsupportedSizeError,
)
from .harness import (
    MetricsBundle,
    Scenario,
    check_overlay_dump,
    evaluate_history,
    replay_manifest,
    run_scenario,
    run_sweep,
    scenario_digest,
    summarize,
)

_STATUS_BY_TYPE: list[tuple[type, int]] = [
    (InvariantViolation, 500),
    (UnrecoverableStateError, 409),
    (AlreadyExistsError, 409),
    (BootstrapError, 409),
    (AuthorityError, 403),
    (MembershipError, 404),
    (UnsupportedSizeError, 422),
    (ConditioningError, 422),
    (OracleUnavailableError, 422),
    (ConfigError, 422),
    (RangeError, 422),
]


class RunRequest(BaseModel):
    scenario: Scenario
    policy: Optional[str] = None
    trace: bool = False


class RunResponse(BaseModel):
    name: str
    policy: str
    digest: str
    valid: bool
    validity: dict[str, bool]
    notes: list[str]
    files: dict[str, str]
    summary: dict


class SweepRequest(BaseModel):
    scenario: Scenario
    vary: dict[str, list] = Field(default_factory=dict)
    policy: Optional[str] = None
    workers: int = Field(default=1, ge=1, le=16)


class SweepResponse(BaseModel):
    table: str
    combos: list[dict]
    runs: list[RunResponse]


class ValidateResponse(BaseModel):
    valid: bool
    digest: str
    scenario: Scenario


class OverlayCheckRequest(BaseModel):
    dump: dict


class OverlayCheckResponse(BaseModel):
    ok: bool
    problems: list[str]


class RegretEvalRequest(BaseModel):
    history_csv: str
    scenario: Scenario


class RegretEvalResponse(BaseModel):
    header: list[str]
    rows: list[list[float]]


class ReplayRequest(BaseModel):
    manifest: dict
    trace: bool = False


class ReplayResponse(BaseModel):
    identical: bool
    diffs: list[str]
    run: RunResponse


def _run_response(bundle: MetricsBundle) -> RunResponse:
    return RunResponse(
        name=bundle.scenario.name,
        policy=bundle.policy,
        digest=scenario_digest(bundle.scenario),
        valid=bundle.valid,
        validity=dict(bundle.validity),
        notes=list(bundle.notes),
        files=dict(bundle.files),
        summary=summarize(bundle),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="ringforest", version=__version__)

    @app.exception_handler(RingForestError)
    async def _package_error(request: Request, exc: RingForestError) -> JSONResponse:
        for kind, status in _STATUS_BY_TYPE:
            if isinstance(exc, kind):
                return JSONResponse(
                    status_code=status,
                    content={"error": type(exc).__name__, "detail": str(exc)},
                )
        return JSONResponse(
            status_code=500, content={"error": type(exc).__name__, "detail": str(exc)}
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/scenarios/validate", response_model=ValidateResponse)
    def validate(scenario: Scenario) -> ValidateResponse:
        return ValidateResponse(
            valid=True, digest=scenario_digest(scenario), scenario=scenario
        )

    @app.post("/runs", response_model=RunResponse)
    def runs(req: RunRequest) -> RunResponse:
        bundle = run_scenario(req.scenario, policy=req.policy, trace=req.trace)
        return _run_response(bundle)

    @app.post("/sweeps", response_model=SweepResponse)
    def sweeps(req: SweepRequest) -> SweepResponse:
        result = run_sweep(req.scenario, req.vary, policy=req.policy, workers=req.workers)
        return SweepResponse(
            table=result.table,
            combos=result.combos,
            runs=[_run_response(b) for b in result.bundles],
        )

    @app.post("/overlay/check", response_model=OverlayCheckResponse)
    def overlay_check(req: OverlayCheckRequest) -> OverlayCheckResponse:
        problems = check_overlay_dump(req.dump)
        return OverlayCheckResponse(ok=not problems, problems=problems)

    @app.post("/regret/eval", response_model=RegretEvalResponse)
    def regret_eval(req: RegretEvalRequest) -> RegretEvalResponse:
        rows = evaluate_history(req.history_csv, req.scenario)
        return RegretEvalResponse(
            header=["episode", "gap", "cum_gap", "rounds", "packets", "gap_per_round"],
            rows=[[float(x) for x in row] for row in rows],
        )

    @app.post("/replays", response_model=ReplayResponse)
    def replays(req: ReplayRequest) -> ReplayResponse:
        bundle, diffs = replay_manifest(req.manifest, trace=req.trace)
        return ReplayResponse(
            identical=not diffs, diffs=diffs, run=_run_response(bundle)
        )

    return app


app = create_app()
