"""HTTP service exposing pipeline runs for the UI and other clients.

The service is a thin projection over persisted run records: every response
body derives from files under the runs directory, so a restarted instance
answers identically. Run execution is asynchronous; clients poll run status.
"""

from __future__ import annotations

import csv
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from filelock import FileLock, Timeout

from .. import pipeline
from ..catalog import Profile, load_profile
from ..jsonutil import digest_obj, read_json, write_canonical
from ..pipeline import (
    INPUT_SCRIPT,
    INPUT_TEXT,
    MODE_NL_SCALA,
    MODE_PYTHON_SCALA,
    MODES,
    InvalidModeInput,
    NotResumable,
    PipelineConfig,
    RunRecord,
    TaskInput,
    UnknownRun,
    load_binding,
    load_record,
    run_dir_for,
    validate_mode_input,
)
from ..scaffold import SECTION_ORDER
from .schemas import (
    BaselineFile,
    DatasetInfo,
    DatasetsResponse,
    HealthResponse,
    ModesResponse,
    OutputFile,
    OutputsResponse,
    ProgramResponse,
    RepairRequest,
    RunListEntry,
    RunListResponse,
    RunSummary,
    SectionsResponse,
    SectionView,
    SubmitRunRequest,
    SubmitRunResponse,
)

logger = logging.getLogger(__name__)

API_PREFIX = "/api/v1"
PROFILE_ENV_VAR = "GRAIL_PROFILE"

STATUS_RUNNING = "Running"
STATUS_ERROR = "Error"

_CONTENT_TYPES = {
    ".csv": "text/csv",
    ".tif": "image/tiff",
    ".tiff": "image/tiff",
    ".txt": "text/plain",
    ".json": "application/json",
}


@dataclass
class ServiceConfig:
    runs_dir: str = "runs"
    profile_path: str | None = None
    provider: Mapping = field(default_factory=lambda: {"kind": "scripted", "rules": []})
    toolchain: Mapping = field(default_factory=lambda: {"kind": "stub"})
    datasets: Mapping[str, Mapping] = field(default_factory=dict)
    baselines: Mapping[str, str] = field(default_factory=dict)
    host: str = "127.0.0.1"
    port: int = 8733
    max_rounds: int = 5
    run_sync: bool = False  # execute runs inline; useful under test

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        path = Path(path)
        data = read_json(path)
        base = path.parent

        def _resolve(p: str | None) -> str | None:
            if p is None:
                return None
            candidate = Path(p)
            return str(candidate if candidate.is_absolute() else base / candidate)

        listen = data.get("listen", "127.0.0.1:8733")
        host, _, port = listen.partition(":")
        provider = dict(data.get("provider", {"kind": "scripted", "rules": []}))
        if "rules_file" in provider:
            provider["rules_file"] = _resolve(provider["rules_file"])
        baselines = {k: _resolve(v) for k, v in data.get("baselines", {}).items()}
        datasets = {}
        for name, info in data.get("datasets", {}).items():
            info = dict(info)
            if "uri" in info:
                info["uri"] = _resolve(info["uri"])
            datasets[name] = info
        return cls(
            runs_dir=_resolve(data.get("runs_dir", "runs")),
            profile_path=_resolve(data.get("profile")) or os.environ.get(PROFILE_ENV_VAR),
            provider=provider,
            toolchain=data.get("toolchain", {"kind": "stub"}),
            datasets=datasets,
            baselines=baselines,
            host=host or "127.0.0.1",
            port=int(port or 8733),
            max_rounds=int(data.get("max_rounds", 5)),
            run_sync=bool(data.get("run_sync", False)),
        )

    def validate_paths(self) -> None:
        Path(self.runs_dir).mkdir(parents=True, exist_ok=True)
        if self.profile_path and not Path(self.profile_path).exists():
            raise FileNotFoundError(f"profile not found: {self.profile_path}")
        for name, p in self.baselines.items():
            if p and not Path(p).exists():
                raise FileNotFoundError(f"baseline {name!r} not found: {p}")


def _pending_path(runs_dir: str, run_id: str) -> Path:
    return run_dir_for(runs_dir, run_id) / "pending.json"


def _error_path(runs_dir: str, run_id: str) -> Path:
    return run_dir_for(runs_dir, run_id) / "error.json"


def _csv_rows(path: Path) -> list[list[str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        return [list(row) for row in csv.reader(fh)]


def create_app(config: ServiceConfig) -> FastAPI:
    config.validate_paths()
    profile: Profile = load_profile(config.profile_path)
    app = FastAPI(title="grail translation service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    alloc_lock = threading.Lock()

    def pipeline_config(bindings: tuple) -> PipelineConfig:
        # mode is substituted per request before use
        return PipelineConfig(
            mode=MODE_NL_SCALA,
            max_rounds=config.max_rounds,
            provider=config.provider,
            profile_path=config.profile_path,
            toolchain=config.toolchain,
            dataset_bindings=bindings,
            runs_dir=config.runs_dir,
        )

    def load_or_none(run_id: str) -> RunRecord | None:
        try:
            return load_record(config.runs_dir, run_id)
        except UnknownRun:
            return None

    def run_exists(run_id: str) -> bool:
        return run_dir_for(config.runs_dir, run_id).exists()

    def status_of(run_id: str) -> tuple[str, RunRecord | None, dict | None]:
        if not run_exists(run_id):
            raise HTTPException(404, f"unknown run {run_id}")
        pending = _pending_path(config.runs_dir, run_id)
        record = load_or_none(run_id)
        if pending.exists():
            return STATUS_RUNNING, record, read_json(pending)
        error = _error_path(config.runs_dir, run_id)
        if record is None:
            if error.exists():
                return STATUS_ERROR, None, read_json(error)
            return STATUS_RUNNING, None, None
        return record.status, record, None

    def execute(task: TaskInput, cfg: PipelineConfig, run_id: str) -> None:
        try:
            pipeline.run(task, cfg, run_id=run_id)
        except Exception as exc:  # infrastructure failure, not a run status
            logger.exception("run %s crashed", run_id)
            write_canonical(_error_path(config.runs_dir, run_id), {"detail": str(exc)})
        finally:
            _pending_path(config.runs_dir, run_id).unlink(missing_ok=True)

    def execute_repair(run_id: str, body: RepairRequest, cfg: PipelineConfig) -> None:
        lock = FileLock(str(run_dir_for(config.runs_dir, run_id) / ".lock"))
        try:
            with lock:
                pipeline.resume_repair(
                    run_id,
                    body.edited_fragment,
                    config=cfg,
                    section=body.section,
                )
        except Exception as exc:
            logger.exception("repair of %s crashed", run_id)
            write_canonical(_error_path(config.runs_dir, run_id), {"detail": str(exc)})
        finally:
            _pending_path(config.runs_dir, run_id).unlink(missing_ok=True)

    def spawn(target, *args) -> None:
        if config.run_sync:
            target(*args)
        else:
            threading.Thread(target=target, args=args, daemon=True).start()

    # -- meta endpoints

    @app.get(f"{API_PREFIX}/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", profile=profile.name, version=app.version)

    @app.get(f"{API_PREFIX}/modes", response_model=ModesResponse)
    def modes() -> ModesResponse:
        return ModesResponse(
            modes=list(MODES),
            default_text_mode=MODE_NL_SCALA,
            default_script_mode=MODE_PYTHON_SCALA,
        )

    @app.get(f"{API_PREFIX}/datasets", response_model=DatasetsResponse)
    def datasets() -> DatasetsResponse:
        out = []
        for name in sorted(config.datasets):
            info = config.datasets[name]
            out.append(
                DatasetInfo(
                    name=name,
                    uri=str(info.get("uri", "")),
                    role=info.get("role"),
                    pixel_type=info.get("pixel_type"),
                    crs=info.get("crs"),
                )
            )
        return DatasetsResponse(datasets=out, baselines=sorted(config.baselines))

    # -- run lifecycle

    @app.post(f"{API_PREFIX}/runs", response_model=SubmitRunResponse, status_code=202)
    def submit_run(body: SubmitRunRequest) -> SubmitRunResponse:
        if not body.input or not body.input.strip():
            raise HTTPException(400, "input is required")
        form = body.input_form or INPUT_TEXT
        mode = body.mode or (MODE_PYTHON_SCALA if form == INPUT_SCRIPT else MODE_NL_SCALA)
        if mode not in MODES:
            raise HTTPException(400, f"unknown mode {mode!r}")
        try:
            validate_mode_input(mode, form)
        except InvalidModeInput as exc:
            raise HTTPException(400, str(exc)) from exc
        if not os.access(config.runs_dir, os.W_OK):
            raise HTTPException(409, "runs directory is read-only")

        bindings = []
        for name in body.datasets:
            info = config.datasets.get(name)
            if info is None:
                raise HTTPException(400, f"unknown dataset {name!r}")
            bindings.append(load_binding({"name": name, **info}))
        for raw in body.dataset_bindings:
            bindings.append(load_binding(raw))
        if body.baseline is not None and body.baseline not in config.baselines:
            raise HTTPException(400, f"unknown baseline {body.baseline!r}")

        cfg = pipeline_config(tuple(bindings))
        cfg = PipelineConfig(
            mode=mode,
            max_rounds=cfg.max_rounds,
            provider=cfg.provider,
            profile_path=cfg.profile_path,
            toolchain=cfg.toolchain,
            dataset_bindings=cfg.dataset_bindings,
            runs_dir=cfg.runs_dir,
        )
        task = TaskInput(form, body.input)
        with alloc_lock:
            base = "run-" + digest_obj({"task": task.to_dict(), "mode": mode})[:16]
            run_id = base
            n = 2
            while run_exists(run_id):
                run_id = f"{base}-{n}"
                n += 1
            marker = {"mode": mode, "baseline": body.baseline}
            write_canonical(_pending_path(config.runs_dir, run_id), marker)
            write_canonical(run_dir_for(config.runs_dir, run_id) / "submit.json", marker)
        spawn(execute, task, cfg, run_id)
        return SubmitRunResponse(run_id=run_id)

    @app.get(f"{API_PREFIX}/runs", response_model=RunListResponse)
    def list_runs() -> RunListResponse:
        entries = []
        root = Path(config.runs_dir)
        for child in sorted(root.iterdir() if root.exists() else []):
            if not child.is_dir():
                continue
            try:
                status, record, _ = status_of(child.name)
            except HTTPException:
                continue
            entries.append(
                RunListEntry(
                    run_id=child.name,
                    status=status,
                    mode=record.mode if record else None,
                )
            )
        return RunListResponse(runs=entries)

    @app.get(f"{API_PREFIX}/runs/{{run_id}}", response_model=RunSummary)
    def run_summary(run_id: str) -> RunSummary:
        status, record, extra = status_of(run_id)
        if record is None:
            detail = (extra or {}).get("detail")
            return RunSummary(run_id=run_id, status=status, error=detail)
        return RunSummary(
            run_id=run_id,
            status=status,
            mode=record.mode,
            fix_iterations=record.fix_iterations,
            total_attempts=record.total_attempts,
            failed_section=record.failed_section,
            error=record.error,
            warnings=record.warnings,
            intermediate_script=record.intermediate_script,
            analysis=record.analysis,
            input_form=record.task_input.get("form"),
            input_content=record.task_input.get("content"),
            resume_count=record.resume_count,
        )

    @app.get(f"{API_PREFIX}/runs/{{run_id}}/sections", response_model=SectionsResponse)
    def run_sections(run_id: str) -> SectionsResponse:
        status, record, _ = status_of(run_id)
        if record is None:
            return SectionsResponse(run_id=run_id, status=status, sections=[])
        views: list[SectionView] = []
        plan = record.plan or {}
        by_section = {c["section"]: c for c in plan.get("sections", [])}
        pruned = {p["section"]: p["reason"] for p in plan.get("pruned", [])}
        recorded = {r.section.value: r for r in record.sections}
        for section in SECTION_ORDER:
            name = section.value
            if name in pruned:
                views.append(SectionView(section=name, pruned=True, reason=pruned[name]))
                continue
            if name not in by_section:
                continue  # no plan yet (analysis failed)
            rec = recorded.get(name)
            views.append(
                SectionView(
                    section=name,
                    pruned=False,
                    contract=by_section[name],
                    attempts=[a.to_dict() for a in rec.attempts] if rec else [],
                    accepted_fragment=rec.accepted_fragment if rec else None,
                    failing=(record.failed_section == name),
                )
            )
        return SectionsResponse(
            run_id=run_id,
            status=status,
            sections=views,
            failed_section=record.failed_section,
        )

    @app.get(f"{API_PREFIX}/runs/{{run_id}}/program", response_model=ProgramResponse)
    def run_program(run_id: str) -> ProgramResponse:
        status, record, _ = status_of(run_id)
        return ProgramResponse(
            run_id=run_id,
            status=status,
            program=record.final_program if record else None,
        )

    def _baseline_for(run_id: str) -> BaselineFile | None:
        pending = _pending_path(config.runs_dir, run_id)
        name = None
        if pending.exists():
            name = read_json(pending).get("baseline")
        marker = run_dir_for(config.runs_dir, run_id) / "submit.json"
        if name is None and marker.exists():
            name = read_json(marker).get("baseline")
        if name is None:
            return None
        path = Path(config.baselines[name])
        content_type = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        rows = _csv_rows(path) if content_type == "text/csv" else None
        return BaselineFile(
            name=name,
            content_type=content_type,
            rows=rows,
            href=f"{API_PREFIX}/runs/{run_id}/baseline",
        )

    @app.get(f"{API_PREFIX}/runs/{{run_id}}/outputs", response_model=OutputsResponse)
    def run_outputs(run_id: str) -> OutputsResponse:
        status, record, _ = status_of(run_id)
        outputs: list[OutputFile] = []
        if record is not None:
            run_dir = run_dir_for(config.runs_dir, run_id)
            for rel in record.outputs:
                path = run_dir / rel
                if not path.exists():
                    continue
                content_type = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
                outputs.append(
                    OutputFile(
                        name=rel,
                        content_type=content_type,
                        rows=_csv_rows(path) if content_type == "text/csv" else None,
                        href=f"{API_PREFIX}/runs/{run_id}/outputs/{rel}",
                    )
                )
        return OutputsResponse(
            run_id=run_id, status=status, outputs=outputs, baseline=_baseline_for(run_id)
        )

    @app.get(API_PREFIX + "/runs/{run_id}/baseline")
    def run_baseline_file(run_id: str):
        status_of(run_id)
        baseline = _baseline_for(run_id)
        if baseline is None:
            raise HTTPException(404, "no baseline bound to this run")
        path = Path(config.baselines[baseline.name])
        return FileResponse(path, media_type=baseline.content_type)

    @app.get(API_PREFIX + "/runs/{run_id}/outputs/{name:path}")
    def run_output_file(run_id: str, name: str):
        status_of(run_id)  # 404 on unknown run
        run_dir = run_dir_for(config.runs_dir, run_id).resolve()
        path = (run_dir / name).resolve()
        if run_dir not in path.parents or not path.exists():
            raise HTTPException(404, f"no output {name!r}")
        content_type = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        return FileResponse(path, media_type=content_type)

    @app.post(
        f"{API_PREFIX}/runs/{{run_id}}/repair",
        response_model=SubmitRunResponse,
        status_code=202,
    )
    def repair_run(run_id: str, body: RepairRequest) -> SubmitRunResponse:
        if body.section is not None and body.section not in {s.value for s in SECTION_ORDER}:
            raise HTTPException(400, f"unknown section {body.section!r}")
        status, record, _ = status_of(run_id)
        if status == STATUS_RUNNING:
            raise HTTPException(409, "run is still in progress")
        if record is None or record.status not in pipeline.RESUMABLE_STATUSES:
            raise HTTPException(409, f"run {run_id} is not resumable (status {status})")
        lock = FileLock(str(run_dir_for(config.runs_dir, run_id) / ".lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout as exc:
            raise HTTPException(409, "a repair is already in progress") from exc
        lock.release()
        bindings = tuple(
            load_binding(d) for d in record.config.get("datasets", [])
        )
        cfg = PipelineConfig(
            mode=record.mode,
            max_rounds=config.max_rounds,
            provider=config.provider,
            profile_path=config.profile_path,
            toolchain=config.toolchain,
            dataset_bindings=bindings,
            runs_dir=config.runs_dir,
        )
        write_canonical(
            _pending_path(config.runs_dir, run_id),
            {"mode": record.mode, "baseline": _baseline_name(run_id)},
        )
        spawn(execute_repair, run_id, body, cfg)
        return SubmitRunResponse(run_id=run_id)

    def _baseline_name(run_id: str) -> str | None:
        marker = run_dir_for(config.runs_dir, run_id) / "submit.json"
        if marker.exists():
            return read_json(marker).get("baseline")
        return None

    @app.exception_handler(UnknownRun)
    def unknown_run_handler(_, exc: UnknownRun):  # pragma: no cover - fastapi glue
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(NotResumable)
    def not_resumable_handler(_, exc: NotResumable):  # pragma: no cover
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    return app
