from __future__ import annotations

import json

from click.testing import CliRunner

from grail.bench import BenchPlan, render_table, run_bench
from grail.catalog import DEFAULT_PROFILE_PATH
from grail.cli import main

from conftest import (
    FIXTURES,
    RASTER_ONLY_TEXT,
    boston_rules,
    raster_only_rules,
)


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_translate_happy_path_writes_program(tmp_path):
    rules_path = write_json(tmp_path / "rules.json", raster_only_rules())
    task_path = tmp_path / "task.txt"
    task_path.write_text(RASTER_ONLY_TEXT, encoding="utf-8")
    out_dir = tmp_path / "runs"
    runner = CliRunner()
    result = runner.invoke(
        main,
        [
            "translate",
            "--input", str(task_path),
            "--mode", "NlScala",
            "--scripted-rules", rules_path,
            "--out", str(out_dir),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "status: Succeeded" in result.output
    program_line = next(l for l in result.output.splitlines() if l.startswith("program:"))
    program_path = program_line.split("program: ")[1].strip()
    assert "geoTiff" in open(program_path, encoding="utf-8").read()


def test_translate_python_script_defaults_to_python_scala(tmp_path):
    rules_path = write_json(tmp_path / "rules.json", boston_rules())
    script_path = tmp_path / "task.py"
    script_path.write_text((FIXTURES / "boston_landuse.py").read_text(encoding="utf-8"))
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["translate", "--input", str(script_path), "--scripted-rules", rules_path,
         "--out", str(tmp_path / "runs")],
    )
    assert result.exit_code == 0, result.output


def test_translate_failure_exits_nonzero(tmp_path):
    rules_path = write_json(tmp_path / "rules.json", raster_only_rules({"LoadData": 5}))
    task_path = tmp_path / "task.txt"
    task_path.write_text(RASTER_ONLY_TEXT, encoding="utf-8")
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["translate", "--input", str(task_path), "--mode", "NlScala",
         "--scripted-rules", rules_path, "--out", str(tmp_path / "runs")],
    )
    assert result.exit_code == 1
    assert "SectionExhausted" in result.output


def test_catalog_check_ok():
    runner = CliRunner()
    result = runner.invoke(main, ["catalog", "check", "--profile", str(DEFAULT_PROFILE_PATH)])
    assert result.exit_code == 0, result.output
    assert "OK" in result.output


def test_translate_reads_profile_from_environment(tmp_path, monkeypatch):
    rules_path = write_json(tmp_path / "rules.json", raster_only_rules())
    task_path = tmp_path / "task.txt"
    task_path.write_text(RASTER_ONLY_TEXT, encoding="utf-8")
    monkeypatch.setenv("GRAIL_PROFILE", str(DEFAULT_PROFILE_PATH))
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["translate", "--input", str(task_path), "--mode", "NlScala",
         "--scripted-rules", rules_path, "--out", str(tmp_path / "runs")],
    )
    assert result.exit_code == 0, result.output


def test_catalog_check_broken_profile(tmp_path):
    broken = dict(json.loads(DEFAULT_PROFILE_PATH.read_text(encoding="utf-8")))
    broken["entries"] = [dict(broken["entries"][0], example="")]
    profile_path = write_json(tmp_path / "broken.json", broken)
    runner = CliRunner()
    result = runner.invoke(main, ["catalog", "check", "--profile", profile_path])
    assert result.exit_code == 2
    assert "example" in result.output


def test_bench_renders_module_table(tmp_path):
    plan_doc = {
        "tasks": [{"name": "Raster-Only", "input": RASTER_ONLY_TEXT, "expected_task_kind": "RasterOnly"}],
        "modes": ["NlScala"],
        "runs_per_condition": 3,
        "seed": 0,
        "backend": {
            "kind": "scripted",
            "rules": raster_only_rules(),
            "fail_schedules": {"Raster-Only|NlScala": [{"TypeCheck": 1}, {}, {}]},
        },
        "runs_dir": str(tmp_path / "bench-runs"),
    }
    plan_path = write_json(tmp_path / "plan.json", plan_doc)
    runner = CliRunner()
    result = runner.invoke(main, ["bench", "--plan", plan_path, "--report", str(tmp_path / "r.json")])
    assert result.exit_code == 0, result.output

    expected = render_table(run_bench(BenchPlan.from_dict(
        {**plan_doc, "runs_dir": str(tmp_path / "bench-runs-2")}
    )))
    assert expected in result.output
    assert (tmp_path / "r.json").exists()


def test_bench_aborts_with_exit_2_on_bad_plan(tmp_path):
    plan_doc = {
        "tasks": [{"name": "t", "input": "x"}],
        "modes": ["NlScala"],
        "runs_per_condition": 1,
        "backend": {"kind": "scripted", "rules": [], "fail_schedules": {"t|NlScala": [{"Nope": 1}]}},
        "runs_dir": str(tmp_path / "runs"),
    }
    plan_path = write_json(tmp_path / "plan.json", plan_doc)
    runner = CliRunner()
    result = runner.invoke(main, ["bench", "--plan", plan_path])
    assert result.exit_code == 2
