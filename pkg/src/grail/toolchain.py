"""Compile-and-run boundary: adapters, diagnostics, enrichment, alias shims.

Adapters never raise on ordinary failure; build/run outcomes are encoded in
result values whose diagnostics feed the repair loop. The stub toolchain
stands in for the real cluster stack at desk scale, and the external-command
adapter integrates a real compiler/submitter via configurable templates.
"""

from __future__ import annotations

import os
import re
import signal
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .catalog import Catalog, ErrorHint, match_hint, Profile
from .scaffold import SectionId, split_program

SEVERITY_ERROR = "Error"
SEVERITY_WARNING = "Warning"


@dataclass(frozen=True)
class Locus:
    line: int
    column: int | None = None

    def to_dict(self) -> dict:
        out: dict = {"line": self.line}
        if self.column is not None:
            out["column"] = self.column
        return out


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    locus: Locus | None = None
    raw: str = ""
    hint: ErrorHint | None = None

    def __post_init__(self) -> None:
        if self.severity == SEVERITY_ERROR and not self.message:
            raise ValueError("error diagnostics need a message")

    def to_dict(self) -> dict:
        out: dict = {"severity": self.severity, "message": self.message, "raw": self.raw}
        if self.locus is not None:
            out["locus"] = self.locus.to_dict()
        if self.hint is not None:
            out["hint"] = {
                "pattern": self.hint.pattern,
                "cause": self.hint.cause,
                "suggested_fix": self.hint.suggested_fix,
            }
        return out


@dataclass(frozen=True)
class BuildResult:
    success: bool
    diagnostics: tuple[Diagnostic, ...] = ()
    artifact_path: str | None = None
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.success and any(d.severity == SEVERITY_ERROR for d in self.diagnostics):
            raise ValueError("successful builds cannot carry error diagnostics")

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "artifact_path": self.artifact_path,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class RunResult:
    success: bool
    diagnostics: tuple[Diagnostic, ...] = ()
    output_paths: tuple[str, ...] = ()
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.success and any(d.severity == SEVERITY_ERROR for d in self.diagnostics):
            raise ValueError("successful runs cannot carry error diagnostics")

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "output_paths": list(self.output_paths),
            "wall_time": self.wall_time,
        }


class ToolchainAdapter(Protocol):
    adapter_id: str

    def build(self, program: str, workdir: Path) -> BuildResult: ...

    def run(self, artifact: str, datasets: Mapping[str, str], workdir: Path) -> RunResult: ...

    def describe(self) -> dict: ...


# ---------------------------------------------------------------------------
# Log parsing

# scalac/sbt style: optional [error]/[warn] bracket, file:line(:col):, optional
# severity word, message.
_LOCUS_LINE = re.compile(
    r"^(?:\[(?P<bracket>error|warn(?:ing)?)\]\s*)?"
    r"(?P<file>[^\s:]+\.(?:scala|java|sc)):(?P<line>\d+)(?::(?P<col>\d+))?:\s*"
    r"(?:(?P<word>error|warning):\s*)?(?P<msg>.+)$",
    re.IGNORECASE,
)
_BRACKET_LINE = re.compile(r"^\[(?P<sev>error|warn(?:ing)?)\]\s*(?P<msg>.+)$", re.IGNORECASE)
_WORD_LINE = re.compile(r"^(?P<sev>error|warning)\s*:\s*(?P<msg>.+)$", re.IGNORECASE)
_EXCEPTION_LINE = re.compile(r"^Exception in thread .+?:\s*(?P<msg>.+)$")


def _severity(token: str | None) -> str:
    if token and token.lower().startswith("warn"):
        return SEVERITY_WARNING
    return SEVERITY_ERROR


def _start_diagnostic(line: str, catalog: Catalog) -> Diagnostic | None:
    m = _LOCUS_LINE.match(line)
    if m:
        sev = _severity(m.group("word") or m.group("bracket") or "error")
        return Diagnostic(
            severity=sev,
            message=m.group("msg").strip(),
            locus=Locus(int(m.group("line")), int(m.group("col")) if m.group("col") else None),
            raw=line,
        )
    m = _BRACKET_LINE.match(line)
    if m:
        return Diagnostic(_severity(m.group("sev")), m.group("msg").strip(), raw=line)
    m = _WORD_LINE.match(line)
    if m:
        return Diagnostic(_severity(m.group("sev")), m.group("msg").strip(), raw=line)
    m = _EXCEPTION_LINE.match(line)
    if m:
        return Diagnostic(SEVERITY_ERROR, m.group("msg").strip(), raw=line)
    # library-enriched messages carry no severity marker; the catalog's hint
    # patterns identify them as diagnostic group starts
    if line.strip() and match_hint(catalog, line) is not None:
        return Diagnostic(SEVERITY_ERROR, line.strip(), raw=line)
    return None


def parse_log(raw_log: str, catalog: Catalog) -> list[Diagnostic]:
    """Group an error log into diagnostics, in log order.

    Every line after a diagnostic start attaches to that diagnostic's raw
    excerpt until the next start. A non-empty log with no recognizable
    diagnostics becomes a single error diagnostic wrapping the whole text.
    """
    if not raw_log.strip():
        return []
    diagnostics: list[Diagnostic] = []
    current: Diagnostic | None = None
    for line in raw_log.splitlines():
        started = _start_diagnostic(line, catalog)
        if started is not None:
            if current is not None:
                diagnostics.append(current)
            current = started
        elif current is not None:
            current = replace(current, raw=current.raw + "\n" + line)
    if current is not None:
        diagnostics.append(current)
    if not diagnostics:
        return [Diagnostic(SEVERITY_ERROR, raw_log.strip().splitlines()[0], raw=raw_log)]
    return diagnostics


def enrich(diags: Sequence[Diagnostic], catalog: Catalog) -> list[Diagnostic]:
    """Attach the matching repair hint to each diagnostic; order and count unchanged."""
    return [replace(d, hint=match_hint(catalog, d.message)) for d in diags]


# ---------------------------------------------------------------------------
# Alias shims

_RECEIVER_TYPES = {
    "Raster": "RasterRDD[Any]",
    "Vector": "VectorRDD",
    "Any": "Any",
}


def generate_alias_shims(catalog: Catalog) -> str:
    """Forwarding definitions, one per alias rule, in alias-table order."""
    if not catalog.aliases:
        return ""
    name = "".join(part.capitalize() for part in re.split(r"[^A-Za-z0-9]+", catalog.profile_name) if part)
    lines = [
        f"// Alias shims for profile '{catalog.profile_name}'. Generated from the alias table; do not edit.",
        f"object {name or 'Profile'}AliasShims {{",
    ]
    for rule in catalog.aliases:
        receiver = _RECEIVER_TYPES.get(rule.receiver_kind, "Any")
        if rule.note:
            lines.append(f"  // {rule.note}")
        lines.append(
            f"  def {rule.foreign_name}(self: {receiver}, args: Any*) = "
            f"self.{rule.native_call}(args: _*)"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def shim_filename(profile: Profile) -> str:
    return f"{profile.name}_aliases.{profile.shim_extension}"


# ---------------------------------------------------------------------------
# Stub toolchain


@dataclass(frozen=True)
class FailureInjection:
    pattern: str
    message: str
    severity: str = SEVERITY_ERROR
    phase: str = "build"  # build | run

    def to_dict(self) -> dict:
        return {
            "pattern": self.pattern,
            "message": self.message,
            "severity": self.severity,
            "phase": self.phase,
        }


DEFAULT_CSV_ROWS: tuple[tuple[str, ...], ...] = (
    ("zone", "dominant_class", "percentage"),
    ("Roxbury", "23", "41.6"),
    ("Dorchester", "23", "38.2"),
)


class StubToolchain:
    """Desk-scale stand-in for the real compile/submit environment.

    Build validates the submitted program against the profile's contract
    templates (required calls for every section present in the program) and
    applies configured failure injections; run emits a CSV with configured
    rows. Results are deterministic: wall times are synthetic.
    """

    adapter_id = "stub"

    def __init__(
        self,
        profile: Profile,
        failure_injections: Sequence[FailureInjection | Mapping] = (),
        csv_rows: Sequence[Sequence[str]] = DEFAULT_CSV_ROWS,
        output_name: str = "result.csv",
        wall_time: float = 0.0,
    ):
        self.profile = profile
        self.failure_injections = tuple(
            f if isinstance(f, FailureInjection) else FailureInjection(**f)
            for f in failure_injections
        )
        self.csv_rows = tuple(tuple(str(c) for c in row) for row in csv_rows)
        self.output_name = output_name
        self.wall_time = wall_time

    def _required_calls(self, program: str) -> list[tuple[SectionId, str]]:
        sections = [s for s, _ in split_program(program)]
        raster_vector = SectionId.RASTER_VECTOR_JOIN in sections
        required: list[tuple[SectionId, str]] = []
        for section in sections:
            template = self.profile.contracts.get(section, {})
            calls = list(template.get("required_calls", ()))
            if raster_vector and "raster_vector" in template:
                calls += list(template["raster_vector"].get("required_calls", ()))
            for call in calls:
                required.append((section, call))
        return required

    def build(self, program: str, workdir: Path) -> BuildResult:
        workdir.mkdir(parents=True, exist_ok=True)
        diagnostics: list[Diagnostic] = []
        for section, call in self._required_calls(program):
            if not re.search(rf"(?:\.\s*{re.escape(call)}\b)|(?:\b{re.escape(call)}\s*\()", program):
                diagnostics.append(
                    Diagnostic(
                        SEVERITY_ERROR,
                        f"not found: value {call} (required by section {section.value})",
                        raw=f"stub compiler: section {section.value} lacks {call}",
                    )
                )
        for injection in self.failure_injections:
            if injection.phase == "build" and re.search(injection.pattern, program):
                diagnostics.append(
                    Diagnostic(injection.severity, injection.message, raw=injection.message)
                )
        program_path = workdir / "program.scala"
        program_path.write_text(program, encoding="utf-8")
        if self.profile.aliases_as_shims:
            shims = generate_alias_shims(self.profile.catalog)
            if shims:
                (workdir / shim_filename(self.profile)).write_text(shims, encoding="utf-8")
        success = not any(d.severity == SEVERITY_ERROR for d in diagnostics)
        return BuildResult(
            success=success,
            diagnostics=tuple(diagnostics),
            artifact_path=str(program_path) if success else None,
            wall_time=self.wall_time,
        )

    def run(self, artifact: str, datasets: Mapping[str, str], workdir: Path) -> RunResult:
        workdir.mkdir(parents=True, exist_ok=True)
        program = Path(artifact).read_text(encoding="utf-8")
        diagnostics = [
            Diagnostic(i.severity, i.message, raw=i.message)
            for i in self.failure_injections
            if i.phase == "run" and re.search(i.pattern, program)
        ]
        if any(d.severity == SEVERITY_ERROR for d in diagnostics):
            return RunResult(False, tuple(diagnostics), (), self.wall_time)
        out_dir = workdir / "out"
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / self.output_name
        out_path.write_text(
            "\n".join(",".join(row) for row in self.csv_rows) + "\n", encoding="utf-8"
        )
        return RunResult(True, tuple(diagnostics), (str(out_path),), self.wall_time)

    def describe(self) -> dict:
        return {
            "adapter_id": self.adapter_id,
            "failure_injections": [i.to_dict() for i in self.failure_injections],
            "csv_rows": [list(r) for r in self.csv_rows],
            "output_name": self.output_name,
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# External-command toolchain

TIMEOUT_MESSAGE = "TIMEOUT: command exceeded {seconds}s"


class ExternalCommandToolchain:
    """Adapter driving a real toolchain through shell command templates.

    Templates may reference {program}, {artifact}, {datasets}, and {workdir}.
    Commands run in their own session and the whole process group is killed on
    timeout, leaving no orphans; a timeout yields a single TIMEOUT diagnostic.
    """

    adapter_id = "external"

    def __init__(
        self,
        catalog: Catalog,
        build_cmd: str,
        run_cmd: str,
        timeout_s: float = 300.0,
        artifact_name: str = "program.jar",
        output_glob: str = "out/*",
        profile: Profile | None = None,
    ):
        self.catalog = catalog
        self.build_cmd = build_cmd
        self.run_cmd = run_cmd
        self.timeout_s = timeout_s
        self.artifact_name = artifact_name
        self.output_glob = output_glob
        self.profile = profile

    def _execute(self, command: str, workdir: Path) -> tuple[int | None, str]:
        proc = subprocess.Popen(
            command,
            shell=True,
            cwd=workdir,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            start_new_session=True,
        )
        try:
            output, _ = proc.communicate(timeout=self.timeout_s)
            return proc.returncode, output or ""
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            proc.wait()
            return None, ""

    def build(self, program: str, workdir: Path) -> BuildResult:
        workdir.mkdir(parents=True, exist_ok=True)
        program_path = workdir / "program.scala"
        program_path.write_text(program, encoding="utf-8")
        if self.profile is not None and self.profile.aliases_as_shims:
            shims = generate_alias_shims(self.catalog)
            if shims:
                (workdir / shim_filename(self.profile)).write_text(shims, encoding="utf-8")
        artifact = workdir / self.artifact_name
        command = self.build_cmd.format(
            program=program_path, artifact=artifact, workdir=workdir, datasets=""
        )
        import time

        started = time.monotonic()
        code, output = self._execute(command, workdir)
        elapsed = time.monotonic() - started
        if code is None:
            return BuildResult(
                False,
                (Diagnostic(SEVERITY_ERROR, TIMEOUT_MESSAGE.format(seconds=self.timeout_s)),),
                None,
                elapsed,
            )
        diagnostics = tuple(parse_log(output, self.catalog)) if code != 0 else ()
        if code != 0 and not diagnostics:
            diagnostics = (Diagnostic(SEVERITY_ERROR, f"build exited with code {code}"),)
        return BuildResult(code == 0, diagnostics, str(artifact) if code == 0 else None, elapsed)

    def run(self, artifact: str, datasets: Mapping[str, str], workdir: Path) -> RunResult:
        workdir.mkdir(parents=True, exist_ok=True)
        dataset_args = " ".join(f"{k}={v}" for k, v in sorted(datasets.items()))
        command = self.run_cmd.format(
            program="", artifact=artifact, datasets=dataset_args, workdir=workdir
        )
        import time

        started = time.monotonic()
        code, output = self._execute(command, workdir)
        elapsed = time.monotonic() - started
        if code is None:
            return RunResult(
                False,
                (Diagnostic(SEVERITY_ERROR, TIMEOUT_MESSAGE.format(seconds=self.timeout_s)),),
                (),
                elapsed,
            )
        diagnostics = tuple(parse_log(output, self.catalog)) if code != 0 else ()
        if code != 0 and not diagnostics:
            diagnostics = (Diagnostic(SEVERITY_ERROR, f"run exited with code {code}"),)
        outputs = tuple(str(p) for p in sorted(workdir.glob(self.output_glob))) if code == 0 else ()
        return RunResult(code == 0, diagnostics, outputs, elapsed)

    def describe(self) -> dict:
        return {
            "adapter_id": self.adapter_id,
            "build_cmd": self.build_cmd,
            "run_cmd": self.run_cmd,
            "timeout_s": self.timeout_s,
        }


def build_toolchain(config: Mapping, profile: Profile) -> ToolchainAdapter:
    """Construct an adapter from a config mapping ({"kind": ...})."""
    kind = config.get("kind", "stub")
    if kind == "stub":
        return StubToolchain(
            profile,
            failure_injections=config.get("failure_injections", ()),
            csv_rows=config.get("csv_rows", DEFAULT_CSV_ROWS),
            output_name=config.get("output_name", "result.csv"),
            wall_time=float(config.get("wall_time", 0.0)),
        )
    if kind == "external":
        return ExternalCommandToolchain(
            catalog=profile.catalog,
            build_cmd=config["build_cmd"],
            run_cmd=config["run_cmd"],
            timeout_s=float(config.get("timeout_s", 300.0)),
            artifact_name=config.get("artifact_name", "program.jar"),
            output_glob=config.get("output_glob", "out/*"),
            profile=profile,
        )
    raise ValueError(f"unknown toolchain kind: {kind!r}")
