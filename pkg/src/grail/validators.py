"""The four validation layers and the repair-feedback assembler.

Layer order is fixed: Scope -> Contract -> SemanticReview -> CompileRun, and a
failing layer short-circuits the rest for that attempt. Scope and Contract are
pure; the semantic review asks the provider for PASS/FAIL against a fixed
rubric and never hard-fails on a malformed reviewer reply (the deterministic
layers are the safety net).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .catalog import ApiEntry, Catalog, ErrorHint, match_hint, render_fragments_block, retrieve_fragments
from .llm_gateway import (
    BLOCK_SECTION_CONTRACT,
    REQUEST_REVIEW_FRAGMENT,
    REQUEST_REVIEW_PROGRAM,
    CompletionProvider,
    ContextBlock,
    PromptBundle,
)
from .scaffold import (
    ScaffoldPlan,
    ScaffoldState,
    SectionContract,
    SectionId,
    render_contract_block,
    split_program,
)

LAYER_SCOPE = "Scope"
LAYER_CONTRACT = "Contract"
LAYER_SEMANTIC = "SemanticReview"
LAYER_COMPILE_RUN = "CompileRun"
LAYERS = (LAYER_SCOPE, LAYER_CONTRACT, LAYER_SEMANTIC, LAYER_COMPILE_RUN)

# Stable public issue codes.
UNDECLARED_IDENTIFIER = "UNDECLARED_IDENTIFIER"
OUT_OF_SCOPE_DECLARATION = "OUT_OF_SCOPE_DECLARATION"
MISSING_REQUIRED_CALL = "MISSING_REQUIRED_CALL"
MISSING_OUTPUT_VAR = "MISSING_OUTPUT_VAR"
FORBIDDEN_PATTERN = "FORBIDDEN_PATTERN"
SEMANTIC_REJECTION = "SEMANTIC_REJECTION"
REVIEWER_MALFORMED = "REVIEWER_MALFORMED"
REVIEW_SKIPPED = "REVIEW_SKIPPED"
COMPILE_ERROR = "COMPILE_ERROR"
RUN_ERROR = "RUN_ERROR"
PROVIDER_FAILURE = "PROVIDER_FAILURE"
UNUSED_SECTION_OUTPUT = "UNUSED_SECTION_OUTPUT"
OUTPUT_FORMAT_MISMATCH = "OUTPUT_FORMAT_MISMATCH"


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    locus: str | None = None

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.locus is not None:
            out["locus"] = self.locus
        return out


@dataclass(frozen=True)
class ValidationVerdict:
    layer: str
    passed: bool
    issues: tuple[Issue, ...] = ()
    warnings: tuple[Issue, ...] = ()  # informational; never affect passed

    def __post_init__(self) -> None:
        if self.passed != (len(self.issues) == 0):
            raise ValueError("verdict invariant: passed iff issues empty")

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "passed": self.passed,
            "issues": [i.to_dict() for i in self.issues],
            "warnings": [w.to_dict() for w in self.warnings],
        }


def _verdict(layer: str, issues: list[Issue], warnings: tuple[Issue, ...] = ()) -> ValidationVerdict:
    return ValidationVerdict(layer=layer, passed=not issues, issues=tuple(issues), warnings=warnings)


# ---------------------------------------------------------------------------
# Scope check: free-identifier and declaration-placement discipline.

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

_STRIP_PATTERNS = (
    re.compile(r'"""(?:.|\n)*?"""'),
    re.compile(r'(?:[A-Za-z_][A-Za-z0-9_]*)?"(?:\\.|[^"\\\n])*"'),  # incl. interpolator prefix
    re.compile(r"'(?:\\.|[^'\\\n])'"),
    re.compile(r"/\*(?:.|\n)*?\*/"),
    re.compile(r"//[^\n]*"),
)

_BINDER_PATTERNS = (
    re.compile(r"\b(?:val|var)\s+([A-Za-z_]\w*)"),
    re.compile(r"\bdef\s+([A-Za-z_]\w*)"),
    re.compile(r"\bcase\s+([A-Za-z_]\w*)\s*=>"),
    re.compile(r"\bfor\s*\(\s*([A-Za-z_]\w*)\s*<-"),
    re.compile(r"(?:^|[({,=])\s*([A-Za-z_]\w*)\s*=>", re.MULTILINE),
)

_PARAM_LIST_PATTERNS = (
    re.compile(r"\bdef\s+[A-Za-z_]\w*\s*\(([^)]*)\)"),
    re.compile(r"\bcase\s+\(([^)]*)\)\s*=>"),
    re.compile(r"\(([^()]*)\)\s*=>"),
    re.compile(r"\(\(([^)]*)\)\s*<-"),
)

_BAD_DECLARATIONS = (
    (re.compile(r"^\s*import\b"), "import declarations belong to the scaffold prologue"),
    (re.compile(r"^\s*package\b"), "package declarations belong to the scaffold prologue"),
    (re.compile(r"^\s*(?:object|class|trait)\b"), "type declarations belong to the scaffold prologue"),
    (re.compile(r"\bdef\s+main\s*\("), "entry points belong to the scaffold prologue"),
)


def strip_strings_and_comments(code: str) -> str:
    for pattern in _STRIP_PATTERNS:
        code = pattern.sub(" ", code)
    return code


def _local_binders(code: str) -> set[str]:
    names: set[str] = set()
    for pattern in _BINDER_PATTERNS:
        names.update(pattern.findall(code))
    for pattern in _PARAM_LIST_PATTERNS:
        for group in pattern.findall(code):
            for part in group.split(","):
                token = part.split(":")[0].strip()
                if token and _IDENT_RE.fullmatch(token):
                    names.add(token)
    return names


def _free_identifiers(code: str, keywords: frozenset[str]) -> list[str]:
    """Identifiers used in lexical positions, excluding member selections."""
    out = []
    for m in _IDENT_RE.finditer(code):
        token = m.group(0)
        if token in keywords:
            continue
        i = m.start() - 1
        while i >= 0 and code[i] in " \t":
            i -= 1
        if i >= 0 and code[i] == ".":
            continue  # member selection on some receiver
        out.append(token)
    return out


def prologue_identifiers(profile) -> set[str]:
    stripped = strip_strings_and_comments(profile.prologue)
    names = _local_binders(stripped)
    names.update(re.findall(r"\bobject\s+([A-Za-z_]\w*)", stripped))
    names.add("args")
    return names


def check_scope(
    code: str,
    contract: SectionContract,
    state: ScaffoldState,
    profile,
) -> ValidationVerdict:
    """Free identifiers must resolve to contract inputs, prior variables,
    catalog/prologue identifiers, or fragment-local bindings; fragments may not
    declare imports or entry points."""
    issues: list[Issue] = []
    stripped = strip_strings_and_comments(code)

    for lineno, line in enumerate(stripped.splitlines(), start=1):
        for pattern, why in _BAD_DECLARATIONS:
            if pattern.search(line):
                issues.append(Issue(OUT_OF_SCOPE_DECLARATION, why, locus=f"line {lineno}"))

    allowed: set[str] = set(profile.scope_allowlist)
    allowed.update(v.name for v in contract.input_vars)
    allowed.update(state.known_names())
    allowed.update(e.name for e in profile.catalog.entries)
    allowed.update(r.foreign_name for r in profile.catalog.aliases)
    allowed.update(prologue_identifiers(profile))
    allowed.update(_local_binders(stripped))

    unknown = sorted(
        {t for t in _free_identifiers(stripped, profile.keywords) if t not in allowed}
    )
    for token in unknown:
        issues.append(Issue(UNDECLARED_IDENTIFIER, f"identifier {token!r} is not in scope"))
    return _verdict(LAYER_SCOPE, issues)


# ---------------------------------------------------------------------------
# Contract check: required calls, output assignments, forbidden patterns.


def _call_occurs(code: str, name: str) -> bool:
    return bool(re.search(rf"(?:\.\s*{re.escape(name)}\b)|(?:\b{re.escape(name)}\s*\()", code))


def _assigned(code: str, name: str) -> bool:
    escaped = re.escape(name)
    return bool(
        re.search(rf"\b(?:val|var)\s+{escaped}\b", code)
        or re.search(rf"(?m)^\s*{escaped}\s*=(?!=)", code)
    )


def check_contract(code: str, contract: SectionContract) -> ValidationVerdict:
    """Deterministic check: every required call occurs, every output variable
    is assigned, and no forbidden pattern matches. No provider involvement."""
    issues: list[Issue] = []
    for call in contract.required_calls:
        if not _call_occurs(code, call):
            issues.append(Issue(MISSING_REQUIRED_CALL, f"required call {call!r} is missing"))
    for var in contract.output_vars:
        if not _assigned(code, var.name):
            issues.append(Issue(MISSING_OUTPUT_VAR, f"output variable {var.name!r} is never assigned"))
    for pattern in contract.forbidden_patterns:
        m = re.search(pattern, code)
        if m:
            issues.append(
                Issue(FORBIDDEN_PATTERN, f"forbidden pattern {pattern!r} matched {m.group(0)!r}")
            )
    return _verdict(LAYER_CONTRACT, issues)


def static_layers(
    code: str,
    contract: SectionContract,
    state: ScaffoldState,
    profile,
) -> list[ValidationVerdict]:
    """Run the two pure layers in order, short-circuiting on failure."""
    scope = check_scope(code, contract, state, profile)
    if not scope.passed:
        return [scope]
    return [scope, check_contract(code, contract)]


# ---------------------------------------------------------------------------
# Semantic review (provider-backed)

_REVIEW_SYSTEM = (
    "You review generated code fragments. Judge only whether the fragment "
    "implements its section's role for the given task and whether units, class "
    "labels, and aggregations are consistent. Reply with exactly PASS, or "
    "FAIL: <short reason>."
)

_FAIL_RE = re.compile(r"^\s*FAIL\b[:\s-]*(.*)", re.DOTALL)
_PASS_RE = re.compile(r"^\s*PASS\b")


def parse_review_reply(reply: str) -> tuple[bool | None, str]:
    """Returns (passed, detail); passed=None marks a malformed reply."""
    if _PASS_RE.match(reply):
        return True, ""
    m = _FAIL_RE.match(reply)
    if m:
        return False, m.group(1).strip() or "reviewer rejected the fragment"
    return None, reply.strip()[:200]


def review_semantics(
    code: str,
    contract: SectionContract,
    spec,
    llm: CompletionProvider,
    task_block: ContextBlock | None = None,
) -> ValidationVerdict:
    """Provider PASS/FAIL review. Malformed replies pass with a recorded
    warning; ProviderError propagates so the caller can record a skipped layer.
    """
    blocks: list[ContextBlock] = []
    if task_block is not None:
        blocks.append(task_block)
    elif spec is not None:
        from .task_model import serialize_taskspec  # local import avoids a cycle

        blocks.append(ContextBlock("TaskSpec", serialize_taskspec(spec)))
    blocks.append(ContextBlock(BLOCK_SECTION_CONTRACT, render_contract_block(contract)))
    bundle = PromptBundle(
        system_text=_REVIEW_SYSTEM,
        context_blocks=tuple(blocks),
        request_text=(
            f"{REQUEST_REVIEW_FRAGMENT} for section {contract.section.value} below. "
            "Reply PASS or FAIL: <reason>.\n---\n" + code
        ),
    )
    reply = llm.complete(bundle)
    passed, detail = parse_review_reply(reply)
    if passed is None:
        warning = Issue(REVIEWER_MALFORMED, f"unparseable reviewer reply: {detail}")
        return ValidationVerdict(LAYER_SEMANTIC, True, (), (warning,))
    if passed:
        return ValidationVerdict(LAYER_SEMANTIC, True)
    return _verdict(LAYER_SEMANTIC, [Issue(SEMANTIC_REJECTION, detail)])


# ---------------------------------------------------------------------------
# Repair assembly


@dataclass(frozen=True)
class RepairContext:
    section: SectionId
    attempt: int
    failed_layer: str
    issues: tuple[Issue, ...]
    matched_hints: tuple[ErrorHint, ...] = ()
    refreshed_fragments: tuple[ApiEntry, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "section": self.section.value,
            "attempt": self.attempt,
            "failed_layer": self.failed_layer,
            "issues": [i.to_dict() for i in self.issues],
            "matched_hints": [
                {"pattern": h.pattern, "cause": h.cause, "suggested_fix": h.suggested_fix}
                for h in self.matched_hints
            ],
        }


def assemble_repair(
    verdict: ValidationVerdict,
    contract: SectionContract,
    catalog: Catalog,
    attempt: int,
    spec=None,
    k: int = 3,
    fixed_dump: tuple[ApiEntry, ...] | None = None,
    max_rounds: int = 5,
) -> RepairContext:
    """Turn a failed verdict into the next attempt's repair context.

    Issues are carried verbatim; compile/run failures additionally pull the
    matching repair hints, and the section's documentation fragments are
    re-retrieved so the next prompt carries fresh guidance.
    """
    if verdict.passed:
        raise ValueError("assemble_repair requires a failed verdict")
    if not (1 <= attempt <= max_rounds):
        raise ValueError(f"attempt {attempt} outside 1..{max_rounds}")
    hints: list[ErrorHint] = []
    if verdict.layer == LAYER_COMPILE_RUN:
        seen: set[str] = set()
        for issue in verdict.issues:
            hint = match_hint(catalog, issue.message)
            if hint is not None and hint.pattern not in seen:
                seen.add(hint.pattern)
                hints.append(hint)
    if fixed_dump is not None:
        refreshed: tuple[ApiEntry, ...] = tuple(fixed_dump)
    elif spec is not None:
        refreshed = tuple(retrieve_fragments(catalog, contract.section, spec, k))
    else:
        refreshed = ()
    return RepairContext(
        section=contract.section,
        attempt=attempt,
        failed_layer=verdict.layer,
        issues=verdict.issues,
        matched_hints=tuple(hints),
        refreshed_fragments=refreshed,
    )


def render_repair_block(ctx: RepairContext) -> str:
    lines = [f"Attempt {ctx.attempt} failed at layer {ctx.failed_layer}."]
    lines.append("Issues:")
    for issue in ctx.issues:
        locus = f" [{issue.locus}]" if issue.locus else ""
        lines.append(f"- {issue.code}: {issue.message}{locus}")
    if ctx.matched_hints:
        lines.append("Hints:")
        for hint in ctx.matched_hints:
            lines.append(f"- cause: {hint.cause}")
            lines.append(f"  suggested fix: {hint.suggested_fix}")
    if ctx.refreshed_fragments:
        lines.append("Re-retrieved API documentation:")
        lines.append(render_fragments_block(list(ctx.refreshed_fragments)))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Whole-program review


def _written_formats(fragment: str, profile) -> set[str]:
    return {fmt for fmt, call in profile.format_calls.items() if _call_occurs(fragment, call)}


def review_whole_program(
    program: str,
    plan: ScaffoldPlan,
    spec,
    llm: CompletionProvider,
    profile,
    task_block: ContextBlock | None = None,
) -> ValidationVerdict:
    """Deterministic cross-section checks, then a provider review of the whole
    program under the semantic rubric."""
    fragments = dict(split_program(program))
    issues: list[Issue] = []

    ordered = [c for c in plan.sections if c.section in fragments]
    for idx, contract in enumerate(ordered):
        later = "\n".join(fragments[c.section] for c in ordered[idx + 1 :])
        is_last = idx == len(ordered) - 1
        for var in contract.output_vars:
            if is_last:
                continue  # final-section outputs are the declared results
            if not re.search(rf"\b{re.escape(var.name)}\b", later):
                issues.append(
                    Issue(
                        UNUSED_SECTION_OUTPUT,
                        f"output {var.name!r} of {contract.section.value} is never consumed",
                        locus=contract.section.value,
                    )
                )

    required_formats = (
        {o.format for o in spec.outputs} if spec is not None and spec.outputs else {"CSV"}
    )
    analytics = fragments.get(SectionId.ANALYTICS)
    if analytics is not None:
        written = _written_formats(analytics, profile)
        if written != required_formats:
            issues.append(
                Issue(
                    OUTPUT_FORMAT_MISMATCH,
                    f"task requires {sorted(required_formats)} but the program writes "
                    f"{sorted(written) or ['nothing']}",
                    locus=SectionId.ANALYTICS.value,
                )
            )

    if issues:
        return _verdict(LAYER_SEMANTIC, issues)

    blocks: list[ContextBlock] = []
    if task_block is not None:
        blocks.append(task_block)
    elif spec is not None:
        from .task_model import serialize_taskspec

        blocks.append(ContextBlock("TaskSpec", serialize_taskspec(spec)))
    bundle = PromptBundle(
        system_text=_REVIEW_SYSTEM,
        context_blocks=tuple(blocks),
        request_text=(
            REQUEST_REVIEW_PROGRAM
            + " below for cross-section consistency. Reply PASS or FAIL: <reason>.\n---\n"
            + program
        ),
    )
    reply = llm.complete(bundle)
    passed, detail = parse_review_reply(reply)
    if passed is None:
        warning = Issue(REVIEWER_MALFORMED, f"unparseable reviewer reply: {detail}")
        return ValidationVerdict(LAYER_SEMANTIC, True, (), (warning,))
    if passed:
        return ValidationVerdict(LAYER_SEMANTIC, True)
    return _verdict(LAYER_SEMANTIC, [Issue(SEMANTIC_REJECTION, detail)])
