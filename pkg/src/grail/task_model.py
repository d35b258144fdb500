"""Structured intermediate representation of a translation task.

Task analysis lifts either a source script or a plain-text description into an
ecosystem-neutral TaskSpec (task kind, ordered operations, datasets, outputs)
instead of translating call-by-call. Analyzers re-ask the provider exactly
once on a malformed reply, then fail.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping

from .catalog import Catalog
from .jsonutil import canonical_dumps
from .llm_gateway import (
    BLOCK_API_FRAGMENTS,
    REQUEST_ANALYZE,
    CompletionProvider,
    ContextBlock,
    PromptBundle,
    ProviderError,
)

SCHEMA_VERSION = 1

TASK_KINDS = ("RasterOnly", "RasterVector")
SOURCE_FORMS = ("Script", "NaturalLanguage")
ROLES = ("Raster", "Vector")
PIXEL_TYPES = ("Int", "Float", "Byte")
OUTPUT_FORMATS = ("CSV", "GeoTIFF")

CORE_VERBS = (
    "Load",
    "TypeCast",
    "Reproject",
    "Crop",
    "Mask",
    "Join",
    "ClassCount",
    "ZonalStatistic",
    "WriteOutput",
)

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# params under these keys are treated as dataset references
_DATASET_PARAM_KEYS = ("dataset", "raster", "vector", "left", "right", "source")


class AnalysisFailure(Exception):
    """The provider reply could not be turned into a valid TaskSpec."""


class UnsupportedOperation(AnalysisFailure):
    """An inferred operation has no coverage in the target catalog."""


class TaskSpecFormatError(ValueError):
    """A serialized TaskSpec document is malformed."""


@dataclass(frozen=True)
class GeoOperation:
    verb: str
    params: Mapping[str, str] = field(default_factory=dict)
    produces: str = ""

    def to_dict(self) -> dict:
        return {"verb": self.verb, "params": dict(sorted(self.params.items())), "produces": self.produces}


@dataclass(frozen=True)
class DatasetRef:
    name: str
    role: str
    uri: str
    pixel_type: str | None = None
    crs: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "role": self.role, "uri": self.uri}
        if self.pixel_type is not None:
            out["pixel_type"] = self.pixel_type
        if self.crs is not None:
            out["crs"] = self.crs
        return out


@dataclass(frozen=True)
class OutputSpec:
    format: str
    description: str = ""

    def to_dict(self) -> dict:
        return {"format": self.format, "description": self.description}


@dataclass(frozen=True)
class TaskSpec:
    task_kind: str
    operations: tuple[GeoOperation, ...]
    datasets: tuple[DatasetRef, ...]
    outputs: tuple[OutputSpec, ...]
    source_form: str

    def dataset(self, name: str) -> DatasetRef | None:
        for d in self.datasets:
            if d.name == name:
                return d
        return None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "task_kind": self.task_kind,
            "operations": [op.to_dict() for op in self.operations],
            "datasets": [d.to_dict() for d in self.datasets],
            "outputs": [o.to_dict() for o in self.outputs],
            "source_form": self.source_form,
        }


def serialize_taskspec(spec: TaskSpec) -> str:
    return canonical_dumps(spec.to_dict())


def _check_keys(data: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise TaskSpecFormatError(f"{where}: unknown keys {sorted(unknown)}")


def taskspec_from_dict(data: Mapping, *, default_source_form: str | None = None) -> TaskSpec:
    """Strict parser for the TaskSpec document shape; unknown keys rejected."""
    if not isinstance(data, Mapping):
        raise TaskSpecFormatError("document must be a JSON object")
    allowed = {"schema_version", "task_kind", "operations", "datasets", "outputs", "source_form"}
    _check_keys(data, allowed, "top level")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise TaskSpecFormatError(f"unsupported schema_version {version}")
    for required in ("task_kind", "operations", "datasets", "outputs"):
        if required not in data:
            raise TaskSpecFormatError(f"missing key {required!r}")

    operations = []
    for i, raw in enumerate(data["operations"]):
        _check_keys(raw, {"verb", "params", "produces"}, f"operations[{i}]")
        params = raw.get("params", {})
        if not isinstance(params, Mapping) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in params.items()
        ):
            raise TaskSpecFormatError(f"operations[{i}]: params must map strings to strings")
        operations.append(
            GeoOperation(verb=raw["verb"], params=dict(params), produces=raw.get("produces", ""))
        )

    datasets = []
    for i, raw in enumerate(data["datasets"]):
        _check_keys(raw, {"name", "role", "uri", "pixel_type", "crs"}, f"datasets[{i}]")
        datasets.append(
            DatasetRef(
                name=raw["name"],
                role=raw["role"],
                uri=raw["uri"],
                pixel_type=raw.get("pixel_type"),
                crs=raw.get("crs"),
            )
        )

    outputs = []
    for i, raw in enumerate(data["outputs"]):
        _check_keys(raw, {"format", "description"}, f"outputs[{i}]")
        outputs.append(OutputSpec(format=raw["format"], description=raw.get("description", "")))

    source_form = data.get("source_form", default_source_form)
    if source_form is None:
        raise TaskSpecFormatError("missing key 'source_form'")
    return TaskSpec(
        task_kind=data["task_kind"],
        operations=tuple(operations),
        datasets=tuple(datasets),
        outputs=tuple(outputs),
        source_form=source_form,
    )


def parse_taskspec(text: str) -> TaskSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaskSpecFormatError(f"not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    return taskspec_from_dict(data)


def validate_taskspec(spec: TaskSpec) -> list[str]:
    """Return human-readable invariant violations; empty list iff the spec is valid."""
    violations: list[str] = []
    if spec.task_kind not in TASK_KINDS:
        violations.append(f"task_kind: unknown value {spec.task_kind!r}")
    if spec.source_form not in SOURCE_FORMS:
        violations.append(f"source_form: unknown value {spec.source_form!r}")
    if not spec.operations:
        violations.append("operations: must be non-empty")

    dataset_names = set()
    has_vector = False
    for d in spec.datasets:
        if not d.name or not _IDENT.match(d.name):
            violations.append(f"datasets: name {d.name!r} is not an identifier")
        if d.name in dataset_names:
            violations.append(f"datasets: duplicate name {d.name!r}")
        dataset_names.add(d.name)
        if d.role not in ROLES:
            violations.append(f"datasets[{d.name}]: unknown role {d.role!r}")
        if d.role == "Vector":
            has_vector = True
            if d.pixel_type is not None:
                violations.append(f"datasets[{d.name}]: vector datasets carry no pixel_type")
        if d.pixel_type is not None and d.pixel_type not in PIXEL_TYPES:
            violations.append(f"datasets[{d.name}]: unknown pixel_type {d.pixel_type!r}")
        if not d.uri:
            violations.append(f"datasets[{d.name}]: empty uri")

    if spec.task_kind == "RasterVector" and not has_vector:
        violations.append("task_kind requires a vector dataset")

    produced = set()
    for i, op in enumerate(spec.operations):
        if not _IDENT.match(op.verb or ""):
            violations.append(f"operations[{i}]: verb {op.verb!r} is not an identifier")
        if op.produces:
            if op.produces in produced:
                violations.append(f"operations[{i}]: duplicate produces name {op.produces!r}")
            produced.add(op.produces)
        if op.verb in ("Mask", "Join") and spec.task_kind != "RasterVector":
            violations.append(f"operations[{i}]: {op.verb} requires task_kind RasterVector")
        for key in _DATASET_PARAM_KEYS:
            ref = op.params.get(key)
            if ref is not None and ref not in dataset_names:
                violations.append(
                    f"operations[{i}]: param {key}={ref!r} names no declared dataset"
                )

    for i, out in enumerate(spec.outputs):
        if out.format not in OUTPUT_FORMATS:
            violations.append(f"outputs[{i}]: unknown format {out.format!r}")
    return violations


# ---------------------------------------------------------------------------
# Analyzers


def verb_supported(catalog: Catalog, verb: str) -> bool:
    """A verb is covered when some catalog entry carries it as a tag."""
    tag = verb.lower()
    return any(tag in e.tags for e in catalog.entries)


def _supported_operations_block(catalog: Catalog) -> ContextBlock:
    lines = ["Documented API surface (name: tags):"]
    for entry in sorted(catalog.entries, key=lambda e: e.name):
        lines.append(f"- {entry.name}: {', '.join(sorted(entry.tags))}")
    return ContextBlock(BLOCK_API_FRAGMENTS, "\n".join(lines))


_ANALYZER_SYSTEM = (
    "You convert geospatial analysis tasks into a structured task description. "
    "Reply with exactly one JSON object and nothing else, using keys task_kind "
    "(RasterOnly or RasterVector), operations (list of {verb, params, produces}), "
    "datasets (list of {name, role, uri, pixel_type?, crs?}), and outputs "
    "(list of {format, description}). Core verbs: " + ", ".join(CORE_VERBS) + "."
)

_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```\s*$", re.DOTALL)


def _strip_fences(reply: str) -> str:
    m = _FENCE.match(reply.strip())
    return m.group(1) if m else reply


def _parse_reply(reply: str, source_form: str) -> TaskSpec:
    try:
        data = json.loads(_strip_fences(reply))
    except json.JSONDecodeError as exc:
        raise TaskSpecFormatError(f"reply is not valid JSON: {exc.msg}") from exc
    if isinstance(data, Mapping):
        data = dict(data)
        data.pop("source_form", None)  # the mode, not the model, decides the form
    spec = taskspec_from_dict(data, default_source_form=source_form)
    violations = validate_taskspec(spec)
    if violations:
        raise TaskSpecFormatError("invalid task description: " + "; ".join(violations))
    return spec


def _analyze(
    request_text: str,
    source_form: str,
    llm: CompletionProvider,
    catalog: Catalog,
) -> TaskSpec:
    bundle = PromptBundle(
        system_text=_ANALYZER_SYSTEM,
        context_blocks=(_supported_operations_block(catalog),),
        request_text=request_text,
    )
    try:
        reply = llm.complete(bundle)
    except ProviderError as exc:
        raise AnalysisFailure(f"provider failed during analysis: {exc}") from exc
    try:
        spec = _parse_reply(reply, source_form)
    except TaskSpecFormatError as first_error:
        retry = PromptBundle(
            system_text=_ANALYZER_SYSTEM,
            context_blocks=bundle.context_blocks,
            request_text=(
                request_text
                + "\n\nYour previous reply was rejected: "
                + str(first_error)
                + "\nReply again with exactly one valid JSON object."
            ),
        )
        try:
            reply = llm.complete(retry)
        except ProviderError as exc:
            raise AnalysisFailure(f"provider failed during analysis retry: {exc}") from exc
        try:
            spec = _parse_reply(reply, source_form)
        except TaskSpecFormatError as second_error:
            raise AnalysisFailure(
                f"reply could not be parsed after one retry: {second_error}"
            ) from second_error
    for op in spec.operations:
        if not verb_supported(catalog, op.verb):
            raise UnsupportedOperation(f"operation {op.verb!r} has no catalog coverage")
    return spec


def analyze_text(description: str, llm: CompletionProvider, catalog: Catalog) -> TaskSpec:
    """Infer a TaskSpec from a plain-text task description."""
    if not description or not description.strip():
        raise AnalysisFailure("task description is empty")
    request = (
        REQUEST_ANALYZE
        + " described below and reply with the JSON task description.\n---\n"
        + description.strip()
    )
    return _analyze(request, "NaturalLanguage", llm, catalog)


def analyze_script(source: str, llm: CompletionProvider, catalog: Catalog) -> TaskSpec:
    """Lift a source script into the ecosystem-neutral TaskSpec."""
    if not source or not source.strip():
        raise AnalysisFailure("source script is empty")
    request = (
        REQUEST_ANALYZE
        + " implemented by the source script below and reply with the JSON task "
        + "description. Describe intent, not syntax; do not copy script "
        + "identifiers or text into the description.\n---\n"
        + source
    )
    return _analyze(request, "Script", llm, catalog)
