"""Benchmark harness: N runs per (task, mode) condition, Table-style report.

Each condition executes ``runs_per_condition`` pipeline runs against a fresh
scripted backend per run; per-run failure schedules (explicit or seeded
random) inject bounded section failures. The report aggregates success rate
and average fix iterations (failed runs included), plus average attempts for
the alternative counting.
"""

from __future__ import annotations

import copy
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .catalog import Profile, load_profile
from .jsonutil import read_json, write_canonical
from .llm_gateway import ScriptedBackend
from .pipeline import (
    MODE_DISPLAY,
    MODES,
    STATUS_SUCCEEDED,
    PipelineConfig,
    RunRecord,
    TaskInput,
    run,
)


class BenchAborted(Exception):
    """Infrastructure failure (bad plan/profile); run failures are data, not errors."""


@dataclass(frozen=True)
class BenchTask:
    name: str
    input: str
    input_form: str = "text"
    expected_task_kind: str | None = None


@dataclass(frozen=True)
class BenchPlan:
    tasks: tuple[BenchTask, ...]
    modes: tuple[str, ...]
    runs_per_condition: int = 5
    seed: int = 0
    profile_path: str | None = None
    toolchain: Mapping = field(default_factory=lambda: {"kind": "stub"})
    backend: Mapping = field(default_factory=dict)
    runs_dir: str = "runs"
    max_rounds: int = 5

    def __post_init__(self) -> None:
        if self.runs_per_condition < 1:
            raise ValueError("runs_per_condition must be >= 1")
        for mode in self.modes:
            if mode not in MODES:
                raise ValueError(f"unknown mode {mode!r}")

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Path | None = None) -> "BenchPlan":
        tasks = tuple(
            BenchTask(
                name=t["name"],
                input=t["input"],
                input_form=t.get("input_form", "text"),
                expected_task_kind=t.get("expected_task_kind"),
            )
            for t in data["tasks"]
        )
        backend = dict(data.get("backend", {}))
        if base_dir and "rules_file" in backend and not Path(backend["rules_file"]).is_absolute():
            backend["rules_file"] = str(base_dir / backend["rules_file"])
        profile_path = data.get("profile_path")
        if base_dir and profile_path and not Path(profile_path).is_absolute():
            profile_path = str(base_dir / profile_path)
        return cls(
            tasks=tasks,
            modes=tuple(data["modes"]),
            runs_per_condition=int(data.get("runs_per_condition", 5)),
            seed=int(data.get("seed", 0)),
            profile_path=profile_path,
            toolchain=data.get("toolchain", {"kind": "stub"}),
            backend=backend,
            runs_dir=data.get("runs_dir", "runs"),
            max_rounds=int(data.get("max_rounds", 5)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "BenchPlan":
        path = Path(path)
        return cls.from_dict(read_json(path), base_dir=path.parent)


@dataclass
class ConditionReport:
    task: str
    mode: str
    success_count: int
    total: int
    avg_fix_iters: float
    avg_attempts: float
    run_ids: list[str]
    task_kind_matches: list[bool | None]

    @property
    def success_rate(self) -> float:
        return self.success_count / self.total

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "mode": self.mode,
            "success_count": self.success_count,
            "total": self.total,
            "success_rate": self.success_rate,
            "avg_fix_iters": self.avg_fix_iters,
            "avg_attempts": self.avg_attempts,
            "run_ids": self.run_ids,
            "task_kind_matches": self.task_kind_matches,
        }


@dataclass
class BenchReport:
    conditions: list[ConditionReport]
    runs_dir: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "conditions": [c.to_dict() for c in self.conditions],
            "runs_dir": self.runs_dir,
            "seed": self.seed,
        }


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower()


def _base_rules(backend: Mapping) -> list[dict]:
    if "rules" in backend:
        return [dict(r) for r in backend["rules"]]
    if "rules_file" in backend:
        return [dict(r) for r in read_json(Path(backend["rules_file"]))]
    raise BenchAborted("scripted backend needs 'rules' or 'rules_file'")


def _schedule_for(
    backend: Mapping,
    condition_key: str,
    runs: int,
    rng: random.Random,
) -> list[Mapping[str, int]]:
    schedules = backend.get("fail_schedules", {}).get(condition_key)
    if schedules is not None:
        out = [dict(s) for s in schedules]
        out += [{} for _ in range(runs - len(out))]
        return out[:runs]
    rand = backend.get("random_single_failure")
    if rand:
        pool = list(rand.get("pool", []))
        if not pool:
            raise BenchAborted("random_single_failure needs a section pool")
        return [{rng.choice(pool): 1} for _ in range(runs)]
    return [{} for _ in range(runs)]


def _rules_with_failures(base: list[dict], fails: Mapping[str, int]) -> list[dict]:
    rules = copy.deepcopy(base)
    for section, count in fails.items():
        matched = False
        for rule in rules:
            match = rule.get("match", {})
            if match.get("kind") == "generate" and match.get("section") == section:
                rule["fail_count"] = int(count)
                matched = True
        if not matched:
            raise BenchAborted(f"fail schedule names section {section!r} with no generate rule")
    return rules


def _kind_match(record: RunRecord, expected: str | None) -> bool | None:
    if expected is None or record.analysis is None:
        return None
    if record.analysis.get("kind") == "taskspec":
        return record.analysis["taskspec"]["task_kind"] == expected
    return record.analysis.get("task_kind") == expected


def run_bench(plan: BenchPlan, profile: Profile | None = None) -> BenchReport:
    """Execute the plan; run order and seeded randomness derive from plan.seed."""
    try:
        profile = profile or load_profile(plan.profile_path)
    except Exception as exc:
        raise BenchAborted(f"profile failed to load: {exc}") from exc
    kind = plan.backend.get("kind", "scripted")
    if kind == "scripted":
        base_rules = _base_rules(plan.backend)
    elif kind == "openai":
        # live-provider mode for qualitative comparison; schedules need scripts
        if plan.backend.get("fail_schedules") or plan.backend.get("random_single_failure"):
            raise BenchAborted("failure schedules require a scripted backend")
        base_rules = None
    else:
        raise BenchAborted(f"unsupported bench backend kind {kind!r}")
    rng = random.Random(plan.seed)

    conditions: list[ConditionReport] = []
    for task in plan.tasks:
        for mode in plan.modes:
            key = f"{task.name}|{mode}"
            schedules = _schedule_for(plan.backend, key, plan.runs_per_condition, rng)
            run_ids: list[str] = []
            fix_iters: list[int] = []
            attempts: list[int] = []
            matches: list[bool | None] = []
            successes = 0
            for index, fails in enumerate(schedules):
                if base_rules is not None:
                    rules = _rules_with_failures(base_rules, fails)
                    backend = ScriptedBackend(rules)
                    provider_config: Mapping = {"kind": "scripted", "rules": rules}
                else:
                    backend = None  # built fresh from the plan's provider config
                    provider_config = plan.backend
                config = PipelineConfig(
                    mode=mode,
                    max_rounds=plan.max_rounds,
                    provider=provider_config,
                    profile_path=plan.profile_path,
                    toolchain=plan.toolchain,
                    runs_dir=plan.runs_dir,
                )
                run_id = f"bench-{_slug(task.name)}-{_slug(mode)}-r{index}"
                record = run(
                    TaskInput(task.input_form, task.input),
                    config,
                    provider=backend,
                    profile=profile,
                    run_id=run_id,
                )
                run_ids.append(record.run_id)
                fix_iters.append(record.fix_iterations)
                attempts.append(record.total_attempts)
                matches.append(_kind_match(record, task.expected_task_kind))
                if record.status == STATUS_SUCCEEDED:
                    successes += 1
            total = len(schedules)
            conditions.append(
                ConditionReport(
                    task=task.name,
                    mode=mode,
                    success_count=successes,
                    total=total,
                    avg_fix_iters=sum(fix_iters) / total,
                    avg_attempts=sum(attempts) / total,
                    run_ids=run_ids,
                    task_kind_matches=matches,
                )
            )
    return BenchReport(conditions=conditions, runs_dir=plan.runs_dir, seed=plan.seed)


_COLUMNS = ("Task", "Mode", "Success Rate", "Avg. Fix Iters")


def render_table(report: BenchReport) -> str:
    """Fixed-width table, one row per condition, averages to one decimal."""
    rows = [
        (
            c.task,
            MODE_DISPLAY.get(c.mode, c.mode),
            f"{c.success_count}/{c.total}",
            f"{c.avg_fix_iters:.1f}",
        )
        for c in report.conditions
    ]
    widths = [len(h) for h in _COLUMNS]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

    def fmt(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()

    lines = [fmt(_COLUMNS)]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def save_report(report: BenchReport, path: str | Path) -> None:
    write_canonical(Path(path), report.to_dict())
