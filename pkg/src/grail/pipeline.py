"""Graph-driven translation loop with bounded, targeted repair.

One run walks: mode preprocessing -> task analysis -> section planning -> per
section generate/validate/repair (at most ``max_rounds`` attempts per section,
regenerating only the failing section) -> assembly -> whole-program review ->
toolchain build and run. Every step lands in an append-only RunRecord that is
byte-reproducible for scripted providers and the stub toolchain.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import task_model
from .catalog import Profile, fixed_fragment_dump, load_profile, render_fragments_block, retrieve_fragments
from .jsonutil import canonical_dumps, digest_obj, read_json, sha256_text
from .llm_gateway import (
    BLOCK_API_FRAGMENTS,
    BLOCK_REPAIR_CONTEXT,
    BLOCK_SCAFFOLD_STATE,
    BLOCK_SECTION_CONTRACT,
    BLOCK_SOURCE_SCRIPT,
    BLOCK_TASK_SPEC,
    REQUEST_GENERATE,
    REQUEST_REFERENCE_SCRIPT,
    CompletionProvider,
    ContextBlock,
    PromptBundle,
    ProviderError,
    build_provider,
    render_prompt,
)
from .scaffold import (
    PlanningError,
    ScaffoldPlan,
    ScaffoldState,
    SectionContract,
    SectionId,
    VarSummary,
    apply_fragment,
    assemble_partial,
    assemble_program,
    empty_state,
    plan_sections,
    render_contract_block,
    render_state_block,
)
from .task_model import AnalysisFailure, TaskSpec, serialize_taskspec, taskspec_from_dict
from .toolchain import ToolchainAdapter, build_toolchain, enrich
from .validators import (
    LAYER_COMPILE_RUN,
    COMPILE_ERROR,
    PROVIDER_FAILURE,
    REVIEW_SKIPPED,
    Issue,
    RepairContext,
    ValidationVerdict,
    assemble_repair,
    check_contract,
    check_scope,
    render_repair_block,
    review_semantics,
    review_whole_program,
)

logger = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1

MODE_NL_SCALA = "NlScala"
MODE_PYTHON_NL_SCALA = "PythonNlScala"
MODE_PYTHON_SCALA = "PythonScala"
MODES = (MODE_NL_SCALA, MODE_PYTHON_NL_SCALA, MODE_PYTHON_SCALA)

MODE_DISPLAY = {
    MODE_NL_SCALA: "NL-Scala",
    MODE_PYTHON_NL_SCALA: "Python-NL-Scala",
    MODE_PYTHON_SCALA: "Python-Scala",
}

STATUS_SUCCEEDED = "Succeeded"
STATUS_SECTION_EXHAUSTED = "SectionExhausted"
STATUS_WHOLE_PROGRAM_FAILED = "WholeProgramFailed"
STATUS_TOOLCHAIN_FAILED = "ToolchainFailed"
STATUS_ANALYSIS_FAILED = "AnalysisFailed"

RESUMABLE_STATUSES = (STATUS_SECTION_EXHAUSTED, STATUS_WHOLE_PROGRAM_FAILED)

INPUT_TEXT = "text"
INPUT_SCRIPT = "script"


class UnknownRun(Exception):
    pass


class NotResumable(Exception):
    pass


class InvalidModeInput(ValueError):
    """The input form cannot drive the requested mode."""


@dataclass(frozen=True)
class TaskInput:
    form: str  # text | script
    content: str

    def to_dict(self) -> dict:
        return {"form": self.form, "content": self.content}


@dataclass(frozen=True)
class DatasetBinding:
    name: str
    uri: str
    role: str | None = None
    pixel_type: str | None = None
    crs: str | None = None
    extent: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "uri": self.uri}
        for key in ("role", "pixel_type", "crs", "extent"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def load_binding(raw: Mapping) -> DatasetBinding:
    """Build a binding, sampling the dataset's sidecar metadata file if present."""
    merged = dict(raw)
    sidecar = Path(str(raw.get("uri", "")) + ".meta.json")
    if sidecar.exists():
        meta = read_json(sidecar)
        for key in ("role", "pixel_type", "crs", "extent"):
            merged.setdefault(key, meta.get(key))
    return DatasetBinding(
        name=merged["name"],
        uri=merged["uri"],
        role=merged.get("role"),
        pixel_type=merged.get("pixel_type"),
        crs=merged.get("crs"),
        extent=merged.get("extent"),
    )


@dataclass(frozen=True)
class PipelineConfig:
    mode: str
    max_rounds: int = 5
    provider: Mapping = field(default_factory=lambda: {"kind": "scripted", "rules": []})
    profile_path: str | None = None
    toolchain: Mapping = field(default_factory=lambda: {"kind": "stub"})
    dataset_bindings: tuple[DatasetBinding, ...] = ()
    fragments_k: int = 3
    fixed_dump_k: int | None = None
    runs_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


def validate_mode_input(mode: str, form: str) -> None:
    if form not in (INPUT_TEXT, INPUT_SCRIPT):
        raise InvalidModeInput(f"unknown input form {form!r}")
    if mode in (MODE_NL_SCALA, MODE_PYTHON_NL_SCALA) and form != INPUT_TEXT:
        raise InvalidModeInput(f"mode {mode} takes a plain-text description, not a script")


# ---------------------------------------------------------------------------
# Records


@dataclass
class AttemptRecord:
    epoch: int
    attempt: int
    prompt_digest: str
    reply_digest: str
    block_labels: tuple[str, ...]
    verdicts: list[dict] = field(default_factory=list)
    accepted: bool = False
    review_skipped: bool = False
    provider_error: str | None = None
    repair: dict | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "attempt": self.attempt,
            "prompt_digest": self.prompt_digest,
            "reply_digest": self.reply_digest,
            "block_labels": list(self.block_labels),
            "verdicts": self.verdicts,
            "accepted": self.accepted,
            "review_skipped": self.review_skipped,
            "provider_error": self.provider_error,
            "repair": self.repair,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AttemptRecord":
        return cls(
            epoch=data["epoch"],
            attempt=data["attempt"],
            prompt_digest=data["prompt_digest"],
            reply_digest=data["reply_digest"],
            block_labels=tuple(data["block_labels"]),
            verdicts=list(data["verdicts"]),
            accepted=data["accepted"],
            review_skipped=data["review_skipped"],
            provider_error=data.get("provider_error"),
            repair=data.get("repair"),
        )


@dataclass
class SectionRecord:
    section: SectionId
    attempts: list[AttemptRecord] = field(default_factory=list)
    accepted_fragment: str | None = None
    accepted_vars: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "section": self.section.value,
            "attempts": [a.to_dict() for a in self.attempts],
            "accepted_fragment": self.accepted_fragment,
            "accepted_vars": self.accepted_vars,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SectionRecord":
        return cls(
            section=SectionId.parse(data["section"]),
            attempts=[AttemptRecord.from_dict(a) for a in data["attempts"]],
            accepted_fragment=data.get("accepted_fragment"),
            accepted_vars=list(data.get("accepted_vars", [])),
        )


@dataclass
class RunRecord:
    run_id: str
    config: dict
    mode: str
    task_input: dict
    status: str = STATUS_ANALYSIS_FAILED
    intermediate_script: str | None = None
    analysis: dict | None = None
    error: str | None = None
    plan: dict | None = None
    sections: list[SectionRecord] = field(default_factory=list)
    fix_iterations: int = 0
    total_attempts: int = 0
    final_program: str | None = None
    whole_program_review: dict | None = None
    toolchain: dict | None = None
    outputs: list[str] = field(default_factory=list)
    warnings: list[dict] = field(default_factory=list)
    failed_section: str | None = None
    resume_count: int = 0

    def section_record(self, section: SectionId) -> SectionRecord | None:
        for rec in self.sections:
            if rec.section == section:
                return rec
        return None

    def recompute_counters(self) -> None:
        total = 0
        retries = 0
        for rec in self.sections:
            if not rec.attempts:
                continue
            total += len(rec.attempts)
            epochs = len({a.epoch for a in rec.attempts})
            retries += len(rec.attempts) - epochs
        self.total_attempts = total
        self.fix_iterations = retries

    def to_dict(self) -> dict:
        return {
            "schema_version": RECORD_SCHEMA_VERSION,
            "run_id": self.run_id,
            "config": self.config,
            "mode": self.mode,
            "task_input": self.task_input,
            "status": self.status,
            "intermediate_script": self.intermediate_script,
            "analysis": self.analysis,
            "error": self.error,
            "plan": self.plan,
            "sections": [s.to_dict() for s in self.sections],
            "fix_iterations": self.fix_iterations,
            "total_attempts": self.total_attempts,
            "final_program": self.final_program,
            "whole_program_review": self.whole_program_review,
            "toolchain": self.toolchain,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "failed_section": self.failed_section,
            "resume_count": self.resume_count,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunRecord":
        rec = cls(
            run_id=data["run_id"],
            config=dict(data["config"]),
            mode=data["mode"],
            task_input=dict(data["task_input"]),
            status=data["status"],
            intermediate_script=data.get("intermediate_script"),
            analysis=data.get("analysis"),
            error=data.get("error"),
            plan=data.get("plan"),
            sections=[SectionRecord.from_dict(s) for s in data.get("sections", [])],
            fix_iterations=data.get("fix_iterations", 0),
            total_attempts=data.get("total_attempts", 0),
            final_program=data.get("final_program"),
            whole_program_review=data.get("whole_program_review"),
            toolchain=data.get("toolchain"),
            outputs=list(data.get("outputs", [])),
            warnings=list(data.get("warnings", [])),
            failed_section=data.get("failed_section"),
            resume_count=data.get("resume_count", 0),
        )
        return rec

    def serialize(self) -> str:
        return canonical_dumps(self.to_dict())


def run_dir_for(runs_dir: str | Path, run_id: str) -> Path:
    return Path(runs_dir) / run_id


def save_record(record: RunRecord, runs_dir: str | Path) -> Path:
    path = run_dir_for(runs_dir, record.run_id) / "record.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.serialize(), encoding="utf-8")
    return path


def load_record(runs_dir: str | Path, run_id: str) -> RunRecord:
    path = run_dir_for(runs_dir, run_id) / "record.json"
    if not path.exists():
        raise UnknownRun(run_id)
    return RunRecord.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Mode preprocessing

_REFERENCE_SCRIPT_SYSTEM = (
    "You write small, single-purpose Python reference scripts for geospatial "
    "tasks using rasterio and geopandas. Reply with only the script."
)

_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```\s*$", re.DOTALL)


def strip_code_fences(reply: str) -> str:
    m = _FENCE.match(reply.strip())
    return m.group(1) if m else reply


_VECTOR_SIGNALS = (
    "shapefile",
    "geopandas",
    "gpd.",
    "read_file",
    "polygon",
    "neighborhood",
    "boundar",
    "county",
    "counties",
    "tract",
    "zone",
    "vector",
    "per feature",
)


def fallback_analysis(script: str) -> dict:
    """Coarse keyword heuristics only: guess whether a vector overlay participates."""
    lowered = script.lower()
    signals = sorted({s for s in _VECTOR_SIGNALS if s in lowered})
    kind = "RasterVector" if signals else "RasterOnly"
    return {"kind": "fallback", "task_kind": kind, "signals": signals}


def _synthesize_driver_spec(fallback: dict, bindings: Sequence[DatasetBinding]) -> TaskSpec:
    """Internal plan-driver for the coarse mode; never serialized or prompted."""
    kind = fallback["task_kind"]
    datasets = []
    for b in bindings:
        role = b.role or ("Vector" if b.name.lower().startswith(("zone", "vector")) else "Raster")
        datasets.append(
            task_model.DatasetRef(
                name=b.name,
                role=role,
                uri=b.uri,
                pixel_type=b.pixel_type if role == "Raster" else None,
                crs=b.crs,
            )
        )
    if not any(d.role == "Raster" for d in datasets):
        datasets.append(task_model.DatasetRef("raster_input", "Raster", "input.tif"))
    if kind == "RasterVector" and not any(d.role == "Vector" for d in datasets):
        datasets.append(task_model.DatasetRef("vector_zones", "Vector", "zones.shp"))
    operations = [task_model.GeoOperation("Load", {}, "raster")]
    if kind == "RasterVector":
        operations.append(task_model.GeoOperation("Join", {}, "joined"))
    operations.append(task_model.GeoOperation("ClassCount", {}, "counts"))
    operations.append(task_model.GeoOperation("WriteOutput", {}, ""))
    return TaskSpec(
        task_kind=kind,
        operations=tuple(operations),
        datasets=tuple(datasets),
        outputs=(task_model.OutputSpec("CSV", "summary table"),),
        source_form="Script",
    )


def merge_bindings(spec: TaskSpec, bindings: Sequence[DatasetBinding]) -> TaskSpec:
    """Backfill analyzed datasets with sampled metadata, matched by name."""
    by_name = {b.name: b for b in bindings}
    if not by_name:
        return spec
    datasets = []
    for d in spec.datasets:
        binding = by_name.get(d.name)
        if binding is None:
            datasets.append(d)
            continue
        datasets.append(
            task_model.DatasetRef(
                name=d.name,
                role=d.role,
                uri=binding.uri or d.uri,
                pixel_type=(d.pixel_type or binding.pixel_type) if d.role == "Raster" else None,
                crs=d.crs or binding.crs,
            )
        )
    return replace(spec, datasets=tuple(datasets))


@dataclass
class Preprocessed:
    analysis: dict
    driver_spec: TaskSpec
    spec: TaskSpec | None
    intermediate_script: str | None
    task_block: ContextBlock


def _generate_reference_script(description: str, llm: CompletionProvider) -> str:
    bundle = PromptBundle(
        system_text=_REFERENCE_SCRIPT_SYSTEM,
        context_blocks=(),
        request_text=(
            REQUEST_REFERENCE_SCRIPT
            + " implementing the task below. Reply with only Python code.\n---\n"
            + description.strip()
        ),
    )
    return strip_code_fences(llm.complete(bundle))


def preprocess_mode(
    task: TaskInput,
    config: PipelineConfig,
    llm: CompletionProvider,
    profile: Profile,
) -> Preprocessed:
    validate_mode_input(config.mode, task.form)
    bindings = config.dataset_bindings
    if config.mode == MODE_NL_SCALA:
        spec = merge_bindings(task_model.analyze_text(task.content, llm, profile.catalog), bindings)
        return Preprocessed(
            analysis={"kind": "taskspec", "taskspec": spec.to_dict()},
            driver_spec=spec,
            spec=spec,
            intermediate_script=None,
            task_block=ContextBlock(BLOCK_TASK_SPEC, serialize_taskspec(spec)),
        )
    if config.mode == MODE_PYTHON_NL_SCALA:
        script = _generate_reference_script(task.content, llm)
        spec = merge_bindings(task_model.analyze_script(script, llm, profile.catalog), bindings)
        return Preprocessed(
            analysis={"kind": "taskspec", "taskspec": spec.to_dict()},
            driver_spec=spec,
            spec=spec,
            intermediate_script=script,
            task_block=ContextBlock(BLOCK_TASK_SPEC, serialize_taskspec(spec)),
        )
    # PythonScala: raw translation with coarse fallback analysis only
    if task.form == INPUT_SCRIPT:
        script = task.content
        intermediate = None
    else:
        script = _generate_reference_script(task.content, llm)
        intermediate = script
    if not script.strip():
        raise AnalysisFailure("source script is empty")
    fallback = fallback_analysis(script)
    return Preprocessed(
        analysis=fallback,
        driver_spec=_synthesize_driver_spec(fallback, bindings),
        spec=None,
        intermediate_script=intermediate,
        task_block=ContextBlock(BLOCK_SOURCE_SCRIPT, script),
    )


# ---------------------------------------------------------------------------
# The run loop


def _config_snapshot(
    config: PipelineConfig,
    profile: Profile,
    provider: CompletionProvider,
    toolchain: ToolchainAdapter,
) -> dict:
    return {
        "mode": config.mode,
        "max_rounds": config.max_rounds,
        "fragments_k": config.fragments_k,
        "fixed_dump_k": config.fixed_dump_k or profile.fixed_dump_k,
        "profile": {"name": profile.name, "digest": profile.source_digest},
        "provider": provider.describe(),
        "toolchain": toolchain.describe(),
        "datasets": [b.to_dict() for b in sorted(config.dataset_bindings, key=lambda b: b.name)],
    }


def _default_run_id(task: TaskInput, snapshot: dict) -> str:
    return "run-" + digest_obj({"task": task.to_dict(), "config": snapshot})[:16]


def _summary_for(var, contract: SectionContract) -> str:
    return var.summary_template or f"`{var.name}`: {var.semantic_type}"


def _new_vars_for(contract: SectionContract) -> list[VarSummary]:
    return [
        VarSummary(
            name=v.name,
            semantic_type=v.semantic_type,
            producing_section=contract.section,
            one_line_summary=_summary_for(v, contract),
        )
        for v in contract.output_vars
    ]


class _Runner:
    """State shared across one pipeline execution."""

    def __init__(
        self,
        task: TaskInput,
        config: PipelineConfig,
        provider: CompletionProvider,
        toolchain: ToolchainAdapter,
        profile: Profile,
        record: RunRecord,
    ):
        self.task = task
        self.config = config
        self.provider = provider
        self.toolchain = toolchain
        self.profile = profile
        self.record = record
        self.run_dir = run_dir_for(config.runs_dir, record.run_id)
        self.pre: Preprocessed | None = None

    # -- prompt plumbing

    def _fragments_for(self, section: SectionId) -> list:
        if self.config.mode == MODE_PYTHON_SCALA or self.pre.spec is None:
            k = self.config.fixed_dump_k or self.profile.fixed_dump_k
            return fixed_fragment_dump(self.profile.catalog, k)
        return retrieve_fragments(self.profile.catalog, section, self.pre.spec, self.config.fragments_k)

    def _generation_bundle(
        self,
        contract: SectionContract,
        state: ScaffoldState,
        repair: RepairContext | None,
    ) -> PromptBundle:
        blocks = [self.pre.task_block]
        blocks.append(
            ContextBlock(BLOCK_API_FRAGMENTS, render_fragments_block(self._fragments_for(contract.section)))
        )
        blocks.append(ContextBlock(BLOCK_SECTION_CONTRACT, render_contract_block(contract)))
        blocks.append(ContextBlock(BLOCK_SCAFFOLD_STATE, render_state_block(state)))
        if repair is not None:
            blocks.append(ContextBlock(BLOCK_REPAIR_CONTEXT, render_repair_block(repair)))
        if self.config.mode == MODE_PYTHON_SCALA:
            request = (
                f"{REQUEST_GENERATE} for {contract.section.value}. Translate the relevant "
                f"part of the source script directly into {self.profile.language} using the "
                "documented API; do not re-plan the task. Emit only the section body."
            )
        else:
            request = (
                f"{REQUEST_GENERATE} for {contract.section.value}. Emit only "
                f"{self.profile.language} code for this section's body; the scaffold "
                "provides imports and the entry point."
            )
        return PromptBundle(
            system_text=self.profile.system_prompt,
            context_blocks=tuple(blocks),
            request_text=request,
        )

    def _save_attempt_texts(self, section: SectionId, epoch: int, attempt: int, prompt: str, reply: str) -> None:
        attempts_dir = self.run_dir / "attempts"
        attempts_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{section.value}-e{epoch}-a{attempt}"
        (attempts_dir / f"{stem}.prompt.txt").write_text(prompt, encoding="utf-8")
        (attempts_dir / f"{stem}.reply.txt").write_text(reply, encoding="utf-8")

    def _warn(self, code: str, message: str, section: SectionId | None, attempt: int | None) -> None:
        self.record.warnings.append(
            {
                "code": code,
                "message": message,
                "section": section.value if section else None,
                "attempt": attempt,
            }
        )

    def _relpath(self, path: str | None) -> str | None:
        if path is None:
            return None
        try:
            return str(Path(path).relative_to(self.run_dir))
        except ValueError:
            return str(path)

    # -- validation stack for one candidate

    def _validate_candidate(
        self,
        code: str,
        contract: SectionContract,
        state: ScaffoldState,
        attempt_rec: AttemptRecord,
        epoch: int,
        attempt: int,
    ) -> ValidationVerdict | None:
        """Run the four layers in order; returns the failing verdict or None."""
        scope = check_scope(code, contract, state, self.profile)
        attempt_rec.verdicts.append(scope.to_dict())
        if not scope.passed:
            return scope

        contract_verdict = check_contract(code, contract)
        attempt_rec.verdicts.append(contract_verdict.to_dict())
        if not contract_verdict.passed:
            return contract_verdict

        try:
            review = review_semantics(code, contract, None, self.provider, task_block=self.pre.task_block)
            attempt_rec.verdicts.append(review.to_dict())
            for warning in review.warnings:
                self._warn(warning.code, warning.message, contract.section, attempt)
            if not review.passed:
                return review
        except ProviderError as exc:
            attempt_rec.review_skipped = True
            self._warn(REVIEW_SKIPPED, str(exc), contract.section, attempt)

        partial = assemble_partial(state, self.profile, contract.section, code)
        workdir = self.run_dir / "work" / "sections" / f"{contract.section.value}-e{epoch}-a{attempt}"
        build = self.toolchain.build(partial, workdir)
        if build.success:
            compile_verdict = ValidationVerdict(LAYER_COMPILE_RUN, True)
        else:
            enriched = enrich(build.diagnostics, self.profile.catalog)
            issues = tuple(
                Issue(COMPILE_ERROR, d.message, locus=f"line {d.locus.line}" if d.locus else None)
                for d in enriched
                if d.severity == "Error"
            )
            compile_verdict = ValidationVerdict(LAYER_COMPILE_RUN, False, issues)
        attempt_rec.verdicts.append(compile_verdict.to_dict())
        if not compile_verdict.passed:
            return compile_verdict
        return None

    # -- section loop

    def generate_section(
        self,
        contract: SectionContract,
        state: ScaffoldState,
        section_rec: SectionRecord,
        epoch: int,
        start_attempt: int = 1,
        initial_repair: RepairContext | None = None,
    ) -> ScaffoldState | None:
        """Attempt a section up to the round budget; None means exhausted."""
        repair = initial_repair
        for attempt in range(start_attempt, self.config.max_rounds + 1):
            bundle = self._generation_bundle(contract, state, repair)
            prompt_text = render_prompt(bundle)
            attempt_rec = AttemptRecord(
                epoch=epoch,
                attempt=attempt,
                prompt_digest=sha256_text(prompt_text),
                reply_digest="",
                block_labels=bundle.labels,
            )
            section_rec.attempts.append(attempt_rec)
            try:
                reply = self.provider.complete(bundle)
            except ProviderError as exc:
                attempt_rec.provider_error = str(exc)
                self._save_attempt_texts(contract.section, epoch, attempt, prompt_text, "")
                repair = RepairContext(
                    section=contract.section,
                    attempt=attempt,
                    failed_layer="Provider",
                    issues=(Issue(PROVIDER_FAILURE, str(exc)),),
                )
                attempt_rec.repair = repair.to_dict()
                continue
            attempt_rec.reply_digest = sha256_text(reply)
            self._save_attempt_texts(contract.section, epoch, attempt, prompt_text, reply)
            code = strip_code_fences(reply)

            failing = self._validate_candidate(code, contract, state, attempt_rec, epoch, attempt)
            if failing is None:
                attempt_rec.accepted = True
                new_vars = _new_vars_for(contract)
                section_rec.accepted_fragment = code
                section_rec.accepted_vars = [v.to_dict() for v in new_vars]
                return apply_fragment(state, contract.section, code, new_vars)

            repair = assemble_repair(
                failing,
                contract,
                self.profile.catalog,
                attempt,
                spec=self.pre.spec,
                k=self.config.fragments_k,
                fixed_dump=(
                    tuple(self._fragments_for(contract.section))
                    if self.pre.spec is None
                    else None
                ),
                max_rounds=self.config.max_rounds,
            )
            attempt_rec.repair = repair.to_dict()
        return None

    def validate_operator_fragment(
        self,
        code: str,
        contract: SectionContract,
        state: ScaffoldState,
        section_rec: SectionRecord,
        epoch: int,
    ) -> ScaffoldState | None:
        """Validate an operator-edited fragment as attempt 1 of the section."""
        attempt_rec = AttemptRecord(
            epoch=epoch,
            attempt=1,
            prompt_digest=sha256_text("operator-edit"),
            reply_digest=sha256_text(code),
            block_labels=(),
        )
        section_rec.attempts.append(attempt_rec)
        self._save_attempt_texts(contract.section, epoch, 1, "(operator edit)", code)
        failing = self._validate_candidate(code, contract, state, attempt_rec, epoch, 1)
        if failing is None:
            attempt_rec.accepted = True
            new_vars = _new_vars_for(contract)
            section_rec.accepted_fragment = code
            section_rec.accepted_vars = [v.to_dict() for v in new_vars]
            return apply_fragment(state, contract.section, code, new_vars)
        attempt_rec.repair = assemble_repair(
            failing,
            contract,
            self.profile.catalog,
            1,
            spec=self.pre.spec,
            k=self.config.fragments_k,
            max_rounds=self.config.max_rounds,
        ).to_dict()
        return None

    # -- final stage

    def finalize(self, state: ScaffoldState) -> None:
        record = self.record
        program = assemble_program(state, self.profile)
        record.final_program = program
        plan = ScaffoldPlan.from_dict(record.plan)
        try:
            review = review_whole_program(
                program, plan, self.pre.spec, self.provider, self.profile, task_block=self.pre.task_block
            )
            record.whole_program_review = review.to_dict()
            for warning in review.warnings:
                self._warn(warning.code, warning.message, None, None)
            if not review.passed:
                record.status = STATUS_WHOLE_PROGRAM_FAILED
                return
        except ProviderError as exc:
            record.whole_program_review = {"skipped": True, "reason": str(exc)}
            self._warn(REVIEW_SKIPPED, str(exc), None, None)

        workdir = self.run_dir / "work" / "final"
        build = self.toolchain.build(program, workdir)
        build_dict = build.to_dict()
        build_dict["diagnostics"] = [
            d.to_dict() for d in enrich(build.diagnostics, self.profile.catalog)
        ]
        build_dict["artifact_path"] = self._relpath(build_dict["artifact_path"])
        record.toolchain = {"build": build_dict, "run": None}
        if not build.success:
            record.status = STATUS_TOOLCHAIN_FAILED
            return

        datasets = {b.name: b.uri for b in self.config.dataset_bindings}
        run_result = self.toolchain.run(build.artifact_path, datasets, workdir)
        run_dict = run_result.to_dict()
        run_dict["diagnostics"] = [
            d.to_dict() for d in enrich(run_result.diagnostics, self.profile.catalog)
        ]
        run_dict["output_paths"] = [self._relpath(p) for p in run_result.output_paths]
        record.toolchain["run"] = run_dict
        if not run_result.success:
            record.status = STATUS_TOOLCHAIN_FAILED
            return
        record.outputs = [self._relpath(p) for p in run_result.output_paths]
        record.status = STATUS_SUCCEEDED


def run(
    task: TaskInput,
    config: PipelineConfig,
    provider: CompletionProvider | None = None,
    toolchain: ToolchainAdapter | None = None,
    profile: Profile | None = None,
    run_id: str | None = None,
) -> RunRecord:
    """Execute one full pipeline run and persist its record."""
    profile = profile or load_profile(config.profile_path)
    provider = provider or build_provider(config.provider)
    toolchain = toolchain or build_toolchain(config.toolchain, profile)
    snapshot = _config_snapshot(config, profile, provider, toolchain)
    record = RunRecord(
        run_id=run_id or _default_run_id(task, snapshot),
        config=snapshot,
        mode=config.mode,
        task_input=task.to_dict(),
    )
    runner = _Runner(task, config, provider, toolchain, profile, record)

    try:
        runner.pre = preprocess_mode(task, config, provider, profile)
    except (AnalysisFailure, InvalidModeInput) as exc:
        record.status = STATUS_ANALYSIS_FAILED
        record.error = str(exc)
        save_record(record, config.runs_dir)
        return record
    record.analysis = runner.pre.analysis
    record.intermediate_script = runner.pre.intermediate_script

    try:
        plan = plan_sections(runner.pre.driver_spec, profile)
    except PlanningError as exc:
        record.status = STATUS_ANALYSIS_FAILED
        record.error = f"planning failed: {exc}"
        save_record(record, config.runs_dir)
        return record
    record.plan = plan.to_dict()

    state = empty_state(plan)
    for contract in plan.sections:
        section_rec = SectionRecord(section=contract.section)
        record.sections.append(section_rec)
        next_state = runner.generate_section(contract, state, section_rec, epoch=0)
        if next_state is None:
            record.failed_section = contract.section.value
            record.status = STATUS_SECTION_EXHAUSTED
            record.recompute_counters()
            save_record(record, config.runs_dir)
            return record
        state = next_state

    record.recompute_counters()
    runner.finalize(state)
    record.recompute_counters()
    save_record(record, config.runs_dir)
    return record


# ---------------------------------------------------------------------------
# Resume


def _rebuild_state(record: RunRecord, plan: ScaffoldPlan, upto: SectionId | None = None) -> ScaffoldState:
    """Reconstruct scaffold state from accepted fragments, optionally stopping
    before ``upto``."""
    state = empty_state(plan)
    for contract in plan.sections:
        if upto is not None and contract.section == upto:
            break
        rec = record.section_record(contract.section)
        if rec is None or rec.accepted_fragment is None:
            break
        vars_ = [
            VarSummary(
                name=v["name"],
                semantic_type=v["semantic_type"],
                producing_section=SectionId.parse(v["producing_section"]),
                one_line_summary=v["one_line_summary"],
            )
            for v in rec.accepted_vars
        ]
        state = apply_fragment(state, contract.section, rec.accepted_fragment, vars_)
    return state


def _rebuild_preprocessed(record: RunRecord) -> Preprocessed:
    analysis = record.analysis or {}
    if analysis.get("kind") == "taskspec":
        spec = taskspec_from_dict(analysis["taskspec"])
        return Preprocessed(
            analysis=analysis,
            driver_spec=spec,
            spec=spec,
            intermediate_script=record.intermediate_script,
            task_block=ContextBlock(BLOCK_TASK_SPEC, serialize_taskspec(spec)),
        )
    script = record.intermediate_script or record.task_input.get("content", "")
    fallback = analysis if analysis.get("kind") == "fallback" else fallback_analysis(script)
    return Preprocessed(
        analysis=fallback,
        driver_spec=_synthesize_driver_spec(fallback, ()),
        spec=None,
        intermediate_script=record.intermediate_script,
        task_block=ContextBlock(BLOCK_SOURCE_SCRIPT, script),
    )


def resume_repair(
    run_id: str,
    edited_fragment: str | None = None,
    *,
    config: PipelineConfig,
    section: str | None = None,
    provider: CompletionProvider | None = None,
    toolchain: ToolchainAdapter | None = None,
    profile: Profile | None = None,
) -> RunRecord:
    """Continue a stored failed run from its failed node with a fresh round budget.

    An operator-edited fragment is validated as attempt 1 of the failing
    section before any provider call.
    """
    record = load_record(config.runs_dir, run_id)
    if record.status not in RESUMABLE_STATUSES:
        raise NotResumable(f"run {run_id} has status {record.status}")
    profile = profile or load_profile(config.profile_path)
    provider = provider or build_provider(config.provider)
    toolchain = toolchain or build_toolchain(config.toolchain, profile)
    plan = ScaffoldPlan.from_dict(record.plan)
    epoch = record.resume_count + 1
    record.resume_count = epoch

    task = TaskInput(record.task_input["form"], record.task_input["content"])
    runner = _Runner(task, config, provider, toolchain, profile, record)
    runner.pre = _rebuild_preprocessed(record)

    if record.status == STATUS_SECTION_EXHAUSTED:
        target = SectionId.parse(section) if section else SectionId.parse(record.failed_section)
    else:
        if edited_fragment is not None and section is None:
            raise NotResumable(
                "whole-program repair with an edited fragment needs an explicit section"
            )
        target = SectionId.parse(section) if section else None

    if target is not None:
        state = _rebuild_state(record, plan, upto=target)
        try:
            contract = plan.contract_for(target)
        except KeyError:
            raise NotResumable(f"section {target.value} is not part of the plan") from None
        section_rec = record.section_record(target)
        if section_rec is None:
            section_rec = SectionRecord(section=target)
            record.sections.append(section_rec)
        section_rec.accepted_fragment = None
        section_rec.accepted_vars = []

        next_state = None
        start_attempt = 1
        if edited_fragment is not None:
            next_state = runner.validate_operator_fragment(
                edited_fragment, contract, state, section_rec, epoch
            )
            start_attempt = 2
        if next_state is None:
            next_state = runner.generate_section(
                contract, state, section_rec, epoch, start_attempt=start_attempt
            )
        if next_state is None:
            record.failed_section = target.value
            record.status = STATUS_SECTION_EXHAUSTED
            record.recompute_counters()
            save_record(record, config.runs_dir)
            return record
        state = next_state

        # regenerate any later sections that were never accepted, or reuse
        # accepted ones (targeted repair leaves them untouched)
        reached = False
        for contract in plan.sections:
            if contract.section == target:
                reached = True
                continue
            if not reached:
                continue
            rec = record.section_record(contract.section)
            if rec is not None and rec.accepted_fragment is not None:
                vars_ = [
                    VarSummary(
                        name=v["name"],
                        semantic_type=v["semantic_type"],
                        producing_section=SectionId.parse(v["producing_section"]),
                        one_line_summary=v["one_line_summary"],
                    )
                    for v in rec.accepted_vars
                ]
                state = apply_fragment(state, contract.section, rec.accepted_fragment, vars_)
                continue
            if rec is None:
                rec = SectionRecord(section=contract.section)
                record.sections.append(rec)
            next_state = runner.generate_section(contract, state, rec, epoch)
            if next_state is None:
                record.failed_section = contract.section.value
                record.status = STATUS_SECTION_EXHAUSTED
                record.recompute_counters()
                save_record(record, config.runs_dir)
                return record
            state = next_state
    else:
        state = _rebuild_state(record, plan)

    record.failed_section = None
    record.recompute_counters()
    runner.finalize(state)
    record.recompute_counters()
    save_record(record, config.runs_dir)
    return record
