"""Six-stage program scaffold: section contracts, plan pruning, and state.

A generated program is assembled from per-section code fragments produced in a
fixed order. Each section carries a contract (required calls, input/output
variables, forbidden patterns) instantiated from the target profile's
templates, and the evolving state tracks accepted fragments plus one-line
variable summaries that later sections build upon.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids an import cycle
    from .catalog import Profile
    from .task_model import TaskSpec


class ScaffoldError(Exception):
    """Base class for scaffold failures."""


class PlanningError(ScaffoldError):
    """An operation in the task has no coverage in the target catalog."""


class OrderViolation(ScaffoldError):
    """A fragment was applied out of plan order."""


class ContractVarMismatch(ScaffoldError):
    """Applied variable summaries do not match the section contract."""


class IncompleteScaffold(ScaffoldError):
    """Assembly was requested while plan sections still lack fragments."""

    def __init__(self, missing: list["SectionId"]):
        self.missing = missing
        super().__init__(
            "missing fragments for sections: " + ", ".join(s.value for s in missing)
        )


class SectionId(str, Enum):
    LOAD_DATA = "LoadData"
    TYPE_CHECK = "TypeCheck"
    SPATIAL_CHECK = "SpatialCheck"
    TRANSFORM = "Transform"
    RASTER_VECTOR_JOIN = "RasterVectorJoin"
    ANALYTICS = "Analytics"

    @classmethod
    def parse(cls, value: str) -> "SectionId":
        for member in cls:
            if member.value == value:
                return member
        raise ValueError(f"unknown section id: {value!r}")


#: Fixed total order of the six logical stages.
SECTION_ORDER: tuple[SectionId, ...] = (
    SectionId.LOAD_DATA,
    SectionId.TYPE_CHECK,
    SectionId.SPATIAL_CHECK,
    SectionId.TRANSFORM,
    SectionId.RASTER_VECTOR_JOIN,
    SectionId.ANALYTICS,
)

_SECTION_RANK = {s: i for i, s in enumerate(SECTION_ORDER)}


def section_rank(section: SectionId) -> int:
    return _SECTION_RANK[section]


@dataclass(frozen=True)
class VarSpec:
    """A contract-declared variable: name, semantic type, optional summary template."""

    name: str
    semantic_type: str
    summary_template: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "semantic_type": self.semantic_type,
            "summary_template": self.summary_template,
        }


# pure validation stages may produce no values; every other stage must
_OPTIONAL_OUTPUT_SECTIONS = frozenset({SectionId.TYPE_CHECK, SectionId.SPATIAL_CHECK})


@dataclass(frozen=True)
class SectionContract:
    section: SectionId
    required_calls: tuple[str, ...]
    input_vars: tuple[VarSpec, ...]
    output_vars: tuple[VarSpec, ...]
    expected_output_format: str
    forbidden_patterns: tuple[str, ...]

    def __post_init__(self) -> None:
        for pattern in self.forbidden_patterns:
            re.compile(pattern)  # contracts with broken patterns are authoring bugs
        if not self.output_vars and self.section not in _OPTIONAL_OUTPUT_SECTIONS:
            raise ValueError(f"{self.section.value} contracts must declare output variables")

    def to_dict(self) -> dict:
        return {
            "section": self.section.value,
            "required_calls": list(self.required_calls),
            "input_vars": [v.to_dict() for v in self.input_vars],
            "output_vars": [v.to_dict() for v in self.output_vars],
            "expected_output_format": self.expected_output_format,
            "forbidden_patterns": list(self.forbidden_patterns),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SectionContract":
        return cls(
            section=SectionId.parse(data["section"]),
            required_calls=tuple(data.get("required_calls", ())),
            input_vars=tuple(_var_from_dict(v) for v in data.get("input_vars", ())),
            output_vars=tuple(_var_from_dict(v) for v in data.get("output_vars", ())),
            expected_output_format=data.get("expected_output_format", ""),
            forbidden_patterns=tuple(data.get("forbidden_patterns", ())),
        )


def _var_from_dict(data: Mapping) -> VarSpec:
    return VarSpec(
        name=data["name"],
        semantic_type=data.get("semantic_type", ""),
        summary_template=data.get("summary_template", ""),
    )


@dataclass(frozen=True)
class PrunedSection:
    section: SectionId
    reason: str

    def to_dict(self) -> dict:
        return {"section": self.section.value, "reason": self.reason}


@dataclass(frozen=True)
class ScaffoldPlan:
    profile_name: str
    sections: tuple[SectionContract, ...]
    pruned: tuple[PrunedSection, ...]

    def __post_init__(self) -> None:
        kept = [c.section for c in self.sections]
        dropped = [p.section for p in self.pruned]
        if sorted(kept + dropped, key=section_rank) != list(SECTION_ORDER):
            raise ValueError("plan must partition the six sections exactly")
        if kept != sorted(kept, key=section_rank):
            raise ValueError("plan sections must preserve the fixed order")
        if SectionId.LOAD_DATA in dropped or SectionId.ANALYTICS in dropped:
            raise ValueError("LoadData and Analytics are never pruned")

    @property
    def section_ids(self) -> tuple[SectionId, ...]:
        return tuple(c.section for c in self.sections)

    def contract_for(self, section: SectionId) -> SectionContract:
        for contract in self.sections:
            if contract.section == section:
                return contract
        raise KeyError(section)

    def to_dict(self) -> dict:
        return {
            "profile_name": self.profile_name,
            "sections": [c.to_dict() for c in self.sections],
            "pruned": [p.to_dict() for p in self.pruned],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScaffoldPlan":
        return cls(
            profile_name=data["profile_name"],
            sections=tuple(SectionContract.from_dict(c) for c in data["sections"]),
            pruned=tuple(
                PrunedSection(SectionId.parse(p["section"]), p["reason"])
                for p in data["pruned"]
            ),
        )


@dataclass(frozen=True)
class VarSummary:
    """One-line summary of a produced variable, carried into later prompts."""

    name: str
    semantic_type: str
    producing_section: SectionId
    one_line_summary: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "semantic_type": self.semantic_type,
            "producing_section": self.producing_section.value,
            "one_line_summary": self.one_line_summary,
        }


@dataclass(frozen=True)
class ScaffoldState:
    plan: ScaffoldPlan
    fragments: tuple[tuple[SectionId, str], ...] = ()
    var_summaries: tuple[VarSummary, ...] = ()

    def __post_init__(self) -> None:
        done = [s for s, _ in self.fragments]
        expected = list(self.plan.section_ids[: len(done)])
        if done != expected:
            raise ValueError("fragments must cover a prefix of the plan in order")
        for summary in self.var_summaries:
            if summary.producing_section not in done:
                raise ValueError(
                    f"summary {summary.name} produced by a section without a fragment"
                )

    @property
    def completed(self) -> tuple[SectionId, ...]:
        return tuple(s for s, _ in self.fragments)

    @property
    def next_section(self) -> SectionId | None:
        remaining = self.plan.section_ids[len(self.fragments) :]
        return remaining[0] if remaining else None

    def fragment_for(self, section: SectionId) -> str | None:
        for sec, code in self.fragments:
            if sec == section:
                return code
        return None

    def known_names(self) -> set[str]:
        return {v.name for v in self.var_summaries}


def empty_state(plan: ScaffoldPlan) -> ScaffoldState:
    return ScaffoldState(plan=plan)


def apply_fragment(
    state: ScaffoldState,
    section: SectionId,
    code: str,
    new_vars: Iterable[VarSummary],
) -> ScaffoldState:
    """Record an accepted fragment, returning a new state (value semantics)."""
    expected = state.next_section
    if expected is None:
        raise OrderViolation("all plan sections already have fragments")
    if section != expected:
        raise OrderViolation(
            f"section {section.value} applied out of order; expected {expected.value}"
        )
    contract = state.plan.contract_for(section)
    new_vars = tuple(new_vars)
    declared = {v.name for v in contract.output_vars}
    supplied = {v.name for v in new_vars}
    missing = declared - supplied
    extra = supplied - declared
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing: " + ", ".join(sorted(missing)))
        if extra:
            parts.append("undeclared: " + ", ".join(sorted(extra)))
        raise ContractVarMismatch(f"{section.value} variables {'; '.join(parts)}")
    return ScaffoldState(
        plan=state.plan,
        fragments=state.fragments + ((section, code),),
        var_summaries=state.var_summaries + new_vars,
    )


_SECTION_HEADER = "// === section: {name} ==="
_SECTION_HEADER_RE = re.compile(r"^// === section: (\w+) ===$", re.MULTILINE)


def assemble_program(state: ScaffoldState, profile: "Profile") -> str:
    """Prologue + fragments in section order + epilogue, byte-deterministic."""
    missing = [s for s in state.plan.section_ids if state.fragment_for(s) is None]
    if missing:
        raise IncompleteScaffold(missing)
    parts = [profile.prologue.rstrip("\n")]
    for section, code in state.fragments:
        parts.append(_SECTION_HEADER.format(name=section.value))
        parts.append(code.rstrip("\n"))
    parts.append(profile.epilogue.rstrip("\n"))
    return "\n".join(parts) + "\n"


def assemble_partial(state: ScaffoldState, profile: "Profile", section: SectionId, code: str) -> str:
    """Assemble accepted fragments plus one candidate, for compile-layer checks."""
    parts = [profile.prologue.rstrip("\n")]
    for done, accepted in state.fragments:
        parts.append(_SECTION_HEADER.format(name=done.value))
        parts.append(accepted.rstrip("\n"))
    parts.append(_SECTION_HEADER.format(name=section.value))
    parts.append(code.rstrip("\n"))
    parts.append(profile.epilogue.rstrip("\n"))
    return "\n".join(parts) + "\n"


def split_program(program: str) -> list[tuple[SectionId, str]]:
    """Recover (section, fragment) pairs from an assembled program."""
    matches = list(_SECTION_HEADER_RE.finditer(program))
    out: list[tuple[SectionId, str]] = []
    for i, m in enumerate(matches):
        start = m.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(program)
        body = program[start:end]
        # the epilogue trails the final fragment; it never contains a header
        out.append((SectionId.parse(m.group(1)), body.strip("\n")))
    return out


def render_contract_block(contract: SectionContract) -> str:
    """Contract text injected into prompts; first line keys scripted matchers."""
    lines = [f"Section: {contract.section.value}"]
    lines.append(
        "Required calls: "
        + (", ".join(contract.required_calls) if contract.required_calls else "(none)")
    )
    ins = ", ".join(f"{v.name}: {v.semantic_type}" for v in contract.input_vars)
    outs = ", ".join(f"{v.name}: {v.semantic_type}" for v in contract.output_vars)
    lines.append(f"Input variables: {ins or '(none)'}")
    lines.append(f"Output variables: {outs or '(none)'}")
    lines.append(f"Expected output format: {contract.expected_output_format}")
    lines.append(
        "Forbidden patterns: "
        + (", ".join(contract.forbidden_patterns) if contract.forbidden_patterns else "(none)")
    )
    return "\n".join(lines)


def render_state_block(state: ScaffoldState) -> str:
    """Scaffold-state text for prompts: accepted sections and variable summaries."""
    if not state.fragments:
        return "No sections accepted yet."
    lines = ["Accepted sections: " + ", ".join(s.value for s in state.completed)]
    if state.var_summaries:
        lines.append("Variables in scope:")
        for v in state.var_summaries:
            lines.append(
                f"- {v.name} ({v.semantic_type}, from {v.producing_section.value}): "
                f"{v.one_line_summary}"
            )
    else:
        lines.append("No variables produced yet.")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Planning


_CORE_VERB_SECTIONS: dict[str, SectionId] = {
    "Load": SectionId.LOAD_DATA,
    "TypeCast": SectionId.TRANSFORM,
    "Reproject": SectionId.TRANSFORM,
    "Crop": SectionId.TRANSFORM,
    "Mask": SectionId.RASTER_VECTOR_JOIN,
    "Join": SectionId.RASTER_VECTOR_JOIN,
    "ClassCount": SectionId.ANALYTICS,
    "ZonalStatistic": SectionId.ANALYTICS,
    "WriteOutput": SectionId.ANALYTICS,
}

_TRANSFORM_VERBS = ("TypeCast", "Reproject", "Crop")


def plan_sections(spec: "TaskSpec", profile: "Profile") -> ScaffoldPlan:
    """Prune irrelevant stages and instantiate the retained contracts.

    Pruning rules:
      - RasterVectorJoin pruned iff the task has no vector overlay.
      - SpatialCheck pruned iff fewer than two datasets participate.
      - Transform pruned iff no TypeCast/Reproject/Crop operation is requested.
      - TypeCheck pruned iff every raster declares its pixel type and no cast
        is requested (conservative retention otherwise).
      - LoadData and Analytics are always retained.
    """
    verbs = [op.verb for op in spec.operations]
    rasters = [d for d in spec.datasets if d.role == "Raster"]
    vectors = [d for d in spec.datasets if d.role == "Vector"]
    raster_vector = spec.task_kind == "RasterVector"

    pruned: list[PrunedSection] = []
    if not raster_vector:
        pruned.append(
            PrunedSection(SectionId.RASTER_VECTOR_JOIN, "no vector overlay in a raster-only task")
        )
    if len(spec.datasets) < 2:
        pruned.append(PrunedSection(SectionId.SPATIAL_CHECK, "fewer than two datasets"))
    if not any(v in _TRANSFORM_VERBS for v in verbs):
        pruned.append(PrunedSection(SectionId.TRANSFORM, "no transform operations requested"))
    if rasters and all(d.pixel_type for d in rasters) and "TypeCast" not in verbs:
        pruned.append(
            PrunedSection(
                SectionId.TYPE_CHECK,
                "pixel types declared for every raster and no cast requested",
            )
        )
    pruned_ids = {p.section for p in pruned}
    kept = [s for s in SECTION_ORDER if s not in pruned_ids]

    subs = _substitutions(spec, rasters, vectors, kept)
    extra_calls = _verb_required_calls(spec, profile, kept)

    contracts = []
    for section in kept:
        template = profile.contracts.get(section)
        if template is None:
            raise PlanningError(f"profile {profile.name} has no contract for {section.value}")
        contracts.append(
            _instantiate_contract(section, template, raster_vector, subs, extra_calls.get(section, ()))
        )

    plan = ScaffoldPlan(
        profile_name=profile.name,
        sections=tuple(contracts),
        pruned=tuple(sorted(pruned, key=lambda p: section_rank(p.section))),
    )
    entry_names = {e.name for e in profile.catalog.entries}
    for contract in plan.sections:
        unknown = [c for c in contract.required_calls if c not in entry_names]
        if unknown:
            raise PlanningError(
                f"{contract.section.value} requires calls with no catalog entry: "
                + ", ".join(sorted(unknown))
            )
    return plan


def _substitutions(spec, rasters, vectors, kept: list[SectionId]) -> dict[str, str]:
    raster = rasters[0] if rasters else None
    vector = vectors[0] if vectors else None
    raster_input = "prepared" if SectionId.TRANSFORM in kept else "raster"
    analytics_input = "joined" if SectionId.RASTER_VECTOR_JOIN in kept else raster_input
    formats = ", ".join(dict.fromkeys(o.format for o in spec.outputs)) or "CSV"
    return {
        "raster_dataset": raster.name if raster else "raster_input",
        "raster_uri": raster.uri if raster else "",
        "pixel_type": (raster.pixel_type if raster and raster.pixel_type else "Int"),
        "vector_dataset": vector.name if vector else "",
        "vector_uri": vector.uri if vector else "",
        "raster_input": raster_input,
        "analytics_input": analytics_input,
        "output_formats": formats,
    }


class _Defaulting(dict):
    def __missing__(self, key: str) -> str:  # leave unknown placeholders visible
        return "{" + key + "}"


def _subst(text: str, subs: dict[str, str]) -> str:
    return text.format_map(_Defaulting(subs))


def _instantiate_contract(
    section: SectionId,
    template: Mapping,
    raster_vector: bool,
    subs: dict[str, str],
    extra_calls: tuple[str, ...],
) -> SectionContract:
    required = list(template.get("required_calls", ()))
    input_vars = list(template.get("input_vars", ()))
    output_vars = list(template.get("output_vars", ()))
    forbidden = list(template.get("forbidden_patterns", ()))
    if raster_vector and "raster_vector" in template:
        merge = template["raster_vector"]
        required += list(merge.get("required_calls", ()))
        input_vars += list(merge.get("input_vars", ()))
        output_vars += list(merge.get("output_vars", ()))
        forbidden += list(merge.get("forbidden_patterns", ()))
    for call in extra_calls:
        if call not in required:
            required.append(call)

    def build_var(raw: Mapping) -> VarSpec:
        return VarSpec(
            name=_subst(raw["name"], subs),
            semantic_type=_subst(raw.get("semantic_type", ""), subs),
            summary_template=_subst(raw.get("summary_template", ""), subs),
        )

    return SectionContract(
        section=section,
        required_calls=tuple(required),
        input_vars=tuple(build_var(v) for v in input_vars),
        output_vars=tuple(build_var(v) for v in output_vars),
        expected_output_format=_subst(template.get("expected_output_format", ""), subs),
        forbidden_patterns=tuple(forbidden),
    )


def _verb_required_calls(spec, profile, kept: list[SectionId]) -> dict[SectionId, tuple[str, ...]]:
    """Resolve verb-driven required calls; unsupported verbs raise PlanningError."""
    entry_names = {e.name for e in profile.catalog.entries}
    out: dict[SectionId, list[str]] = {}

    def add(section: SectionId, call: str, verb: str) -> None:
        if call not in entry_names:
            raise PlanningError(f"operation {verb} maps to unknown call {call!r}")
        if section not in kept:
            raise PlanningError(
                f"operation {verb} needs section {section.value}, which was pruned"
            )
        out.setdefault(section, [])
        if call not in out[section]:
            out[section].append(call)

    for op in spec.operations:
        verb = op.verb
        if verb == "WriteOutput":
            for output in spec.outputs:
                call = profile.format_calls.get(output.format)
                if call is None:
                    raise PlanningError(f"no write call for output format {output.format}")
                add(SectionId.ANALYTICS, call, verb)
            continue
        if verb in _CORE_VERB_SECTIONS:
            section = _CORE_VERB_SECTIONS[verb]
            for call in profile.verb_calls.get(verb, ()):
                add(section, call, verb)
            # Load/Mask/Join are satisfied by the section templates themselves
            continue
        # custom verb: resolved through catalog tags
        supporting = sorted(
            e.name for e in profile.catalog.entries if verb.lower() in e.tags
        )
        if not supporting:
            raise PlanningError(f"operation {verb} has no catalog coverage")
        entry = next(e for e in profile.catalog.entries if e.name == supporting[0])
        section = min(entry.section_affinity, key=section_rank)
        add(section, entry.name, verb)
    return {k: tuple(v) for k, v in out.items()}
