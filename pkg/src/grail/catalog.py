"""LLM-ready target-library documentation.

A profile file bundles everything one target library needs: structured API
entries with minimal executable examples, alias rules mapping names inferred
from foreign ecosystems onto native calls, repair hints keyed to diagnostic
patterns, per-section contract templates, and the program prologue/epilogue.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

from .jsonutil import digest_obj
from .scaffold import SectionId

if TYPE_CHECKING:  # pragma: no cover
    from .task_model import TaskSpec

RECEIVER_KINDS = ("Raster", "Vector", "Any")


class CatalogFormatError(Exception):
    """The profile file does not parse; carries a line/field locus."""

    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{message}" + (f" ({locus})" if locus else ""))


class CatalogIntegrityError(Exception):
    """The profile parsed but violates catalog invariants."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class ApiParam:
    name: str
    semantic_type: str
    constraints: str = ""


@dataclass(frozen=True)
class ApiOutput:
    semantic_type: str
    semantics: str = ""


@dataclass(frozen=True)
class ApiEntry:
    name: str
    description: str
    params: tuple[ApiParam, ...]
    output: ApiOutput
    example: str
    tags: frozenset[str]
    section_affinity: frozenset[SectionId]

    def render(self) -> str:
        lines = [f"### {self.name}", self.description]
        if self.params:
            lines.append(
                "Parameters: "
                + "; ".join(
                    f"{p.name}: {p.semantic_type}"
                    + (f" ({p.constraints})" if p.constraints else "")
                    for p in self.params
                )
            )
        lines.append(f"Output: {self.output.semantic_type} — {self.output.semantics}")
        lines.append("Example:")
        lines.append(self.example.rstrip("\n"))
        return "\n".join(lines)


@dataclass(frozen=True)
class AliasRule:
    foreign_name: str
    native_call: str
    receiver_kind: str
    note: str = ""


@dataclass(frozen=True)
class ErrorHint:
    pattern: str
    cause: str
    suggested_fix: str
    compiled: re.Pattern = field(compare=False, repr=False, default=None)  # type: ignore[assignment]

    def matches(self, text: str) -> bool:
        return bool(self.compiled.search(text))


def _hint(pattern: str, cause: str, suggested_fix: str) -> ErrorHint:
    return ErrorHint(pattern, cause, suggested_fix, re.compile(pattern))


@dataclass(frozen=True)
class Catalog:
    entries: tuple[ApiEntry, ...]
    aliases: tuple[AliasRule, ...]
    hints: tuple[ErrorHint, ...]
    profile_name: str

    def entry(self, name: str) -> ApiEntry | None:
        for e in self.entries:
            if e.name == name:
                return e
        return None


@dataclass(frozen=True)
class Profile:
    """A loaded target-library profile: catalog plus scaffold/program settings."""

    catalog: Catalog
    contracts: Mapping[SectionId, Mapping]
    prologue: str
    epilogue: str
    system_prompt: str
    verb_calls: Mapping[str, tuple[str, ...]]
    format_calls: Mapping[str, str]
    scope_allowlist: frozenset[str]
    keywords: frozenset[str]
    language: str
    aliases_as_shims: bool
    shim_extension: str
    fixed_dump_k: int
    source_digest: str

    @property
    def name(self) -> str:
        return self.catalog.profile_name


DEFAULT_PROFILE_PATH = Path(__file__).parent / "profiles" / "rdpro.json"


def load_profile(path: str | Path | None = None) -> Profile:
    """Parse and integrity-check a profile file; default is the shipped rdpro profile."""
    path = Path(path) if path else DEFAULT_PROFILE_PATH
    if not path.exists():
        raise CatalogFormatError(f"profile file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogFormatError(
            f"profile is not valid JSON: {exc.msg}", locus=f"line {exc.lineno}"
        ) from exc
    return profile_from_dict(data)


def load_catalog(path: str | Path | None = None) -> Catalog:
    return load_profile(path).catalog


def profile_from_dict(data: Mapping) -> Profile:
    violations: list[str] = []

    def require(condition: bool, message: str) -> None:
        if not condition:
            violations.append(message)

    entries: list[ApiEntry] = []
    seen_names: set[str] = set()
    for i, raw in enumerate(data.get("entries", [])):
        name = raw.get("name", "")
        locus = f"entries[{i}]" + (f" ({name})" if name else "")
        require(bool(name), f"{locus}: missing name")
        require(name not in seen_names, f"{locus}: duplicate entry name")
        seen_names.add(name)
        require(bool(raw.get("example", "").strip()), f"{locus}: missing usage example")
        params = []
        for j, p in enumerate(raw.get("params", [])):
            require(
                bool(p.get("semantic_type", "").strip()),
                f"{locus}.params[{j}]: missing semantic_type",
            )
            params.append(
                ApiParam(p.get("name", ""), p.get("semantic_type", ""), p.get("constraints", ""))
            )
        affinity = set()
        for s in raw.get("section_affinity", []):
            try:
                affinity.add(SectionId.parse(s))
            except ValueError:
                violations.append(f"{locus}: unknown section {s!r}")
        out = raw.get("output", {})
        entries.append(
            ApiEntry(
                name=name,
                description=raw.get("description", ""),
                params=tuple(params),
                output=ApiOutput(out.get("semantic_type", ""), out.get("semantics", "")),
                example=raw.get("example", ""),
                tags=frozenset(t.lower() for t in raw.get("tags", [])),
                section_affinity=frozenset(affinity),
            )
        )

    aliases: list[AliasRule] = []
    seen_pairs: set[tuple[str, str]] = set()
    for i, raw in enumerate(data.get("aliases", [])):
        locus = f"aliases[{i}]"
        foreign = raw.get("foreign_name", "")
        native = raw.get("native_call", "")
        kind = raw.get("receiver_kind", "Any")
        require(foreign != native, f"{locus}: foreign_name equals native_call")
        require(kind in RECEIVER_KINDS, f"{locus}: unknown receiver_kind {kind!r}")
        require((foreign, kind) not in seen_pairs, f"{locus}: duplicate (foreign_name, receiver_kind)")
        seen_pairs.add((foreign, kind))
        aliases.append(AliasRule(foreign, native, kind, raw.get("note", "")))

    hints: list[ErrorHint] = []
    for i, raw in enumerate(data.get("hints", [])):
        locus = f"hints[{i}]"
        pattern = raw.get("pattern", "")
        require(bool(raw.get("suggested_fix", "").strip()), f"{locus}: missing suggested_fix")
        try:
            compiled = re.compile(pattern)
        except re.error as exc:
            violations.append(f"{locus}: pattern does not compile: {exc}")
            compiled = re.compile(re.escape(pattern))
        hints.append(ErrorHint(pattern, raw.get("cause", ""), raw.get("suggested_fix", ""), compiled))

    contracts: dict[SectionId, Mapping] = {}
    for key, template in data.get("contracts", {}).items():
        try:
            contracts[SectionId.parse(key)] = template
        except ValueError:
            violations.append(f"contracts: unknown section {key!r}")

    profile_name = data.get("profile_name", "")
    require(bool(profile_name), "missing profile_name")

    entry_affinities = set()
    for e in entries:
        entry_affinities |= e.section_affinity
    for section in contracts:
        require(
            section in entry_affinities,
            f"no catalog entry covers scaffold section {section.value}",
        )
    entry_names = {e.name for e in entries}
    for i, rule in enumerate(aliases):
        require(
            rule.native_call in entry_names,
            f"aliases[{i}]: native_call {rule.native_call!r} names no catalog entry",
        )

    if violations:
        raise CatalogIntegrityError(violations)

    settings = data.get("settings", {})
    catalog = Catalog(
        entries=tuple(entries),
        aliases=tuple(aliases),
        hints=tuple(hints),
        profile_name=profile_name,
    )
    return Profile(
        catalog=catalog,
        contracts=contracts,
        prologue=data.get("prologue", ""),
        epilogue=data.get("epilogue", ""),
        system_prompt=data.get("system_prompt", ""),
        verb_calls={k: tuple(v) for k, v in data.get("verb_calls", {}).items()},
        format_calls=dict(data.get("format_calls", {})),
        scope_allowlist=frozenset(settings.get("scope_allowlist", [])),
        keywords=frozenset(settings.get("keywords", [])),
        language=settings.get("language", data.get("language", "scala")),
        aliases_as_shims=bool(settings.get("aliases_as_shims", False)),
        shim_extension=settings.get("shim_extension", "scala"),
        fixed_dump_k=int(settings.get("fixed_dump_k", 8)),
        source_digest=digest_obj(data),
    )


# ---------------------------------------------------------------------------
# Retrieval, aliases, hints


_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _spec_keywords(spec: "TaskSpec") -> set[str]:
    keywords: set[str] = set()
    for op in spec.operations:
        keywords.add(op.verb.lower())
        for value in op.params.values():
            keywords.update(w.lower() for w in _WORD.findall(value))
    return keywords


def retrieve_fragments(
    catalog: Catalog, section: SectionId, spec: "TaskSpec", k: int
) -> list[ApiEntry]:
    """Rank section-affine entries by tag overlap with the task's verbs/params.

    Purely lexical and deterministic: ties break on entry name so identical
    inputs always produce identical rankings.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    keywords = _spec_keywords(spec)
    candidates = [e for e in catalog.entries if section in e.section_affinity]
    scored = sorted(candidates, key=lambda e: (-len(e.tags & keywords), e.name))
    return scored[:k]


def fixed_fragment_dump(catalog: Catalog, k: int) -> list[ApiEntry]:
    """Section-agnostic top-k dump (name order), used when no task analysis exists."""
    return sorted(catalog.entries, key=lambda e: e.name)[: max(k, 1)]


def resolve_alias(catalog: Catalog, foreign_name: str, receiver_kind: str) -> AliasRule | None:
    """Find the alias rule for a foreign name; exact receiver match beats Any."""
    named = [r for r in catalog.aliases if r.foreign_name == foreign_name]
    if receiver_kind != "Any":
        for rule in named:
            if rule.receiver_kind == receiver_kind:
                return rule
    for rule in named:
        if rule.receiver_kind == "Any":
            return rule
    if receiver_kind == "Any" and named:
        return named[0]
    return None


def match_hint(catalog: Catalog, diagnostic_text: str) -> ErrorHint | None:
    """First hint (catalog order) whose pattern matches the diagnostic text."""
    if not diagnostic_text:
        return None
    for hint in catalog.hints:
        if hint.matches(diagnostic_text):
            return hint
    return None


def render_fragments_block(entries: list[ApiEntry]) -> str:
    if not entries:
        return "(no documentation fragments matched this section)"
    return "\n\n".join(e.render() for e in entries)
