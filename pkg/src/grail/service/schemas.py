"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class SubmitRunRequest(BaseModel):
    input: Optional[str] = Field(None, description="Task description or source script")
    input_form: str = Field("text", description="'text' or 'script'")
    mode: Optional[str] = Field(
        None, description="NlScala | PythonNlScala | PythonScala; defaults by input form"
    )
    datasets: list[str] = Field(
        default_factory=list, description="Registry names of datasets to bind"
    )
    dataset_bindings: list[dict] = Field(
        default_factory=list, description="Explicit bindings: {name, uri, role?, ...}"
    )
    baseline: Optional[str] = Field(
        None, description="Registry name of a reference output for comparison"
    )


class SubmitRunResponse(BaseModel):
    run_id: str


class RunSummary(BaseModel):
    run_id: str
    status: str
    mode: Optional[str] = None
    fix_iterations: int = 0
    total_attempts: int = 0
    failed_section: Optional[str] = None
    error: Optional[str] = None
    warnings: list[dict] = Field(default_factory=list)
    intermediate_script: Optional[str] = None
    analysis: Optional[dict] = None
    input_form: Optional[str] = None
    input_content: Optional[str] = None
    resume_count: int = 0


class SectionView(BaseModel):
    section: str
    pruned: bool
    reason: Optional[str] = None
    contract: Optional[dict] = None
    attempts: list[dict] = Field(default_factory=list)
    accepted_fragment: Optional[str] = None
    failing: bool = False


class SectionsResponse(BaseModel):
    run_id: str
    status: str
    sections: list[SectionView]
    failed_section: Optional[str] = None


class ProgramResponse(BaseModel):
    run_id: str
    status: str
    program: Optional[str] = None


class OutputFile(BaseModel):
    name: str
    content_type: str
    rows: Optional[list[list[str]]] = None
    href: str


class BaselineFile(BaseModel):
    name: str
    content_type: str
    rows: Optional[list[list[str]]] = None
    href: Optional[str] = None


class OutputsResponse(BaseModel):
    run_id: str
    status: str
    outputs: list[OutputFile] = Field(default_factory=list)
    baseline: Optional[BaselineFile] = None


class RepairRequest(BaseModel):
    edited_fragment: Optional[str] = None
    section: Optional[str] = None


class DatasetInfo(BaseModel):
    name: str
    uri: str
    role: Optional[str] = None
    pixel_type: Optional[str] = None
    crs: Optional[str] = None


class DatasetsResponse(BaseModel):
    datasets: list[DatasetInfo]
    baselines: list[str] = Field(default_factory=list)


class ModesResponse(BaseModel):
    modes: list[str]
    default_text_mode: str
    default_script_mode: str


class RunListEntry(BaseModel):
    run_id: str
    status: str
    mode: Optional[str] = None


class RunListResponse(BaseModel):
    runs: list[RunListEntry]


class ErrorResponse(BaseModel):
    detail: str


class HealthResponse(BaseModel):
    status: str
    profile: str
    version: Any = None
