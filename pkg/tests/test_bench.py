from __future__ import annotations

import json

import pytest

from grail.bench import BenchAborted, BenchPlan, BenchReport, render_table, run_bench, save_report
from grail.pipeline import MODE_NL_SCALA, load_record

from conftest import RASTER_ONLY_TEXT, raster_only_rules


def plan_with(runs_dir, schedules=None, backend_extra=None, **kw) -> BenchPlan:
    backend = {"kind": "scripted", "rules": raster_only_rules()}
    if schedules is not None:
        backend["fail_schedules"] = schedules
    backend.update(backend_extra or {})
    defaults = dict(
        tasks=(_task("Raster-Only", RASTER_ONLY_TEXT, "RasterOnly"),),
        modes=(MODE_NL_SCALA,),
        runs_per_condition=5,
        seed=1,
        backend=backend,
        runs_dir=str(runs_dir),
    )
    defaults.update(kw)
    return BenchPlan(**defaults)


def _task(name, text, kind):
    from grail.bench import BenchTask

    return BenchTask(name=name, input=text, expected_task_kind=kind)


def test_all_good_condition_aggregates_5_of_5(runs_dir):
    report = run_bench(plan_with(runs_dir))
    assert len(report.conditions) == 1
    cond = report.conditions[0]
    assert (cond.success_count, cond.total) == (5, 5)
    assert cond.avg_fix_iters == 0.0
    assert cond.task_kind_matches == [True] * 5


def test_random_single_failure_gives_exactly_one_retry_per_run(runs_dir):
    plan = plan_with(
        runs_dir,
        backend_extra={
            "random_single_failure": {"pool": ["LoadData", "TypeCheck", "Analytics"]}
        },
    )
    report = run_bench(plan)
    cond = report.conditions[0]
    assert (cond.success_count, cond.total) == (5, 5)
    assert cond.avg_fix_iters == 1.0


def test_exhausting_schedule_counts_failed_runs_in_average(runs_dir):
    schedules = {"Raster-Only|NlScala": [{"LoadData": 1, "Analytics": 5}] * 5}
    report = run_bench(plan_with(runs_dir, schedules=schedules))
    cond = report.conditions[0]
    assert (cond.success_count, cond.total) == (0, 5)
    assert cond.avg_fix_iters == 5.0


def test_seed_determinism(runs_dir, tmp_path):
    plan_a = plan_with(
        runs_dir,
        backend_extra={"random_single_failure": {"pool": ["LoadData", "TypeCheck", "Analytics"]}},
    )
    report_a = run_bench(plan_a)
    other_dir = tmp_path / "other-runs"
    other_dir.mkdir()
    plan_b = plan_with(
        other_dir,
        backend_extra={"random_single_failure": {"pool": ["LoadData", "TypeCheck", "Analytics"]}},
    )
    report_b = run_bench(plan_b)
    strip = lambda rep: [
        {k: v for k, v in c.to_dict().items() if k != "run_ids"} for c in rep.conditions
    ]
    assert strip(report_a) == strip(report_b)


def test_aggregates_recomputable_from_run_records(runs_dir):
    schedules = {"Raster-Only|NlScala": [{"TypeCheck": 2}, {}, {"Analytics": 1}, {}, {}]}
    report = run_bench(plan_with(runs_dir, schedules=schedules))
    cond = report.conditions[0]
    records = [load_record(runs_dir, run_id) for run_id in cond.run_ids]
    assert sum(r.fix_iterations for r in records) / len(records) == cond.avg_fix_iters
    assert sum(1 for r in records if r.status == "Succeeded") == cond.success_count


def test_bench_aborts_on_bad_schedule_section(runs_dir):
    schedules = {"Raster-Only|NlScala": [{"Mystery": 1}]}
    with pytest.raises(BenchAborted):
        run_bench(plan_with(runs_dir, schedules=schedules))


def test_bench_aborts_on_missing_profile(runs_dir):
    plan = plan_with(runs_dir, profile_path="/nope/profile.json")
    with pytest.raises(BenchAborted):
        run_bench(plan)


def test_live_provider_mode_records_failures_as_data(runs_dir):
    # an unreachable endpoint: runs fail (AnalysisFailed), the bench does not abort
    plan = plan_with(
        runs_dir,
        runs_per_condition=1,
        backend_extra=None,
    )
    plan = BenchPlan(
        tasks=plan.tasks,
        modes=plan.modes,
        runs_per_condition=1,
        seed=0,
        backend={"kind": "openai", "base_url": "http://127.0.0.1:9", "model": "m", "timeout": 0.2},
        runs_dir=str(runs_dir),
    )
    report = run_bench(plan)
    cond = report.conditions[0]
    assert (cond.success_count, cond.total) == (0, 1)


def test_live_provider_mode_rejects_fail_schedules(runs_dir):
    plan = BenchPlan(
        tasks=(_task("t", "x", None),),
        modes=("NlScala",),
        runs_per_condition=1,
        backend={"kind": "openai", "base_url": "http://x", "fail_schedules": {"t|NlScala": [{}]}},
        runs_dir=str(runs_dir),
    )
    with pytest.raises(BenchAborted):
        run_bench(plan)


def test_render_table_shapes_rows(runs_dir):
    report = run_bench(plan_with(runs_dir))
    table = render_table(report)
    lines = table.splitlines()
    assert lines[0].split() == ["Task", "Mode", "Success", "Rate", "Avg.", "Fix", "Iters"]
    assert "Raster-Only" in lines[1]
    assert "NL-Scala" in lines[1]
    assert "5/5" in lines[1]
    assert "0.0" in lines[1]


def test_render_table_empty_report():
    table = render_table(BenchReport(conditions=[], runs_dir="x", seed=0))
    assert table.splitlines() == ["Task  Mode  Success Rate  Avg. Fix Iters"]


def test_render_table_one_decimal(runs_dir):
    schedules = {"Raster-Only|NlScala": [{"TypeCheck": 2}, {"TypeCheck": 1}, {"TypeCheck": 3}, {"TypeCheck": 1}, {"TypeCheck": 1}]}
    report = run_bench(plan_with(runs_dir, schedules=schedules))
    assert report.conditions[0].avg_fix_iters == pytest.approx(1.6)
    assert "1.6" in render_table(report)


def test_plan_from_file_and_report_sidecar(runs_dir, tmp_path):
    plan_doc = {
        "tasks": [{"name": "Raster-Only", "input": RASTER_ONLY_TEXT, "expected_task_kind": "RasterOnly"}],
        "modes": ["NlScala"],
        "runs_per_condition": 2,
        "seed": 3,
        "backend": {"kind": "scripted", "rules": raster_only_rules()},
        "runs_dir": str(runs_dir),
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan_doc), encoding="utf-8")
    plan = BenchPlan.from_file(plan_path)
    report = run_bench(plan)
    sidecar = tmp_path / "report.json"
    save_report(report, sidecar)
    saved = json.loads(sidecar.read_text(encoding="utf-8"))
    assert saved["conditions"][0]["success_count"] == 2
