"""Command-line client: headless translation, benchmarking, profile checks,
and a `serve` verb that hosts the HTTP service."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

PROFILE_ENV_VAR = "GRAIL_PROFILE"

from . import bench as bench_mod
from . import pipeline
from .catalog import CatalogFormatError, CatalogIntegrityError, load_profile
from .pipeline import INPUT_SCRIPT, INPUT_TEXT, MODES, PipelineConfig, TaskInput, load_binding


@click.group()
def main() -> None:
    """Agentic translation of geospatial tasks into target-library programs."""


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _provider_config(scripted_rules: str | None, llm_base_url: str | None, llm_model: str):
    if scripted_rules:
        return {"kind": "scripted", "rules_file": scripted_rules}
    if llm_base_url:
        return {"kind": "openai", "base_url": llm_base_url, "model": llm_model}
    raise click.UsageError("choose a provider: --scripted-rules FILE or --llm-base-url URL")


@main.command()
@click.option("--input", "input_path", required=True, help="Task file, or '-' for stdin.")
@click.option(
    "--input-form",
    type=click.Choice([INPUT_TEXT, INPUT_SCRIPT]),
    default=None,
    help="How to treat the input; defaults to 'script' for .py files.",
)
@click.option("--mode", type=click.Choice(MODES), default=None, help="Translation mode.")
@click.option("--profile", "profile_path", default=None, help="Target profile file (default: shipped rdpro).")
@click.option("--toolchain", type=click.Choice(["stub", "external"]), default="stub")
@click.option("--build-cmd", default=None, help="External toolchain build command template.")
@click.option("--run-cmd", default=None, help="External toolchain run command template.")
@click.option("--scripted-rules", default=None, help="Scripted provider rules file (JSON).")
@click.option("--llm-base-url", default=None, help="OpenAI-compatible endpoint base URL.")
@click.option("--llm-model", default="default", help="Model name for the wire provider.")
@click.option("--dataset", "datasets", multiple=True, help="Dataset binding name=uri (repeatable).")
@click.option("--out", "out_dir", default="runs", help="Runs directory for records and outputs.")
@click.option("--max-rounds", default=5, show_default=True)
def translate(
    input_path: str,
    input_form: str | None,
    mode: str | None,
    profile_path: str | None,
    toolchain: str,
    build_cmd: str | None,
    run_cmd: str | None,
    scripted_rules: str | None,
    llm_base_url: str | None,
    llm_model: str,
    datasets: tuple[str, ...],
    out_dir: str,
    max_rounds: int,
) -> None:
    """Run one translation pipeline and print status plus the program path."""
    content = _read_input(input_path)
    profile_path = profile_path or os.environ.get(PROFILE_ENV_VAR)
    if input_form is None:
        input_form = INPUT_SCRIPT if input_path.endswith(".py") else INPUT_TEXT
    if mode is None:
        mode = pipeline.MODE_PYTHON_SCALA if input_form == INPUT_SCRIPT else pipeline.MODE_NL_SCALA

    bindings = []
    for item in datasets:
        name, _, uri = item.partition("=")
        if not uri:
            raise click.UsageError(f"--dataset expects name=uri, got {item!r}")
        bindings.append(load_binding({"name": name, "uri": uri}))

    if toolchain == "external":
        if not build_cmd or not run_cmd:
            raise click.UsageError("--toolchain external needs --build-cmd and --run-cmd")
        toolchain_cfg = {"kind": "external", "build_cmd": build_cmd, "run_cmd": run_cmd}
    else:
        toolchain_cfg = {"kind": "stub"}

    config = PipelineConfig(
        mode=mode,
        max_rounds=max_rounds,
        provider=_provider_config(scripted_rules, llm_base_url, llm_model),
        profile_path=profile_path,
        toolchain=toolchain_cfg,
        dataset_bindings=tuple(bindings),
        runs_dir=out_dir,
    )
    record = pipeline.run(TaskInput(input_form, content), config)
    run_dir = pipeline.run_dir_for(out_dir, record.run_id)
    click.echo(f"status: {record.status}")
    click.echo(f"run: {run_dir / 'record.json'}")
    if record.final_program is not None:
        program_path = run_dir / "program.scala"
        program_path.write_text(record.final_program, encoding="utf-8")
        click.echo(f"program: {program_path}")
    for rel in record.outputs:
        click.echo(f"output: {run_dir / rel}")
    if record.error:
        click.echo(f"error: {record.error}", err=True)
    sys.exit(0 if record.status == pipeline.STATUS_SUCCEEDED else 1)


@main.command("bench")
@click.option("--plan", "plan_path", required=True, help="Bench plan file (JSON).")
@click.option("--report", "report_path", default=None, help="Write the report JSON here.")
def bench_cmd(plan_path: str, report_path: str | None) -> None:
    """Run the benchmark harness and print the results table."""
    try:
        plan = bench_mod.BenchPlan.from_file(plan_path)
        report = bench_mod.run_bench(plan)
    except bench_mod.BenchAborted as exc:
        click.echo(f"bench aborted: {exc}", err=True)
        sys.exit(2)
    click.echo(bench_mod.render_table(report))
    if report_path:
        bench_mod.save_report(report, report_path)
        click.echo(f"report: {report_path}")
    sys.exit(0)


@main.group()
def catalog() -> None:
    """Catalog and profile utilities."""


@catalog.command("check")
@click.option("--profile", "profile_path", required=True, help="Profile file to validate.")
def catalog_check(profile_path: str) -> None:
    """Validate a profile file; exit 0 only when it satisfies every invariant."""
    try:
        profile = load_profile(profile_path)
    except CatalogIntegrityError as exc:
        click.echo("profile is invalid:")
        for violation in exc.violations:
            click.echo(f"- {violation}")
        sys.exit(2)
    except CatalogFormatError as exc:
        click.echo(f"profile does not parse: {exc}")
        sys.exit(2)
    click.echo(
        f"profile '{profile.name}' OK: {len(profile.catalog.entries)} entries, "
        f"{len(profile.catalog.aliases)} aliases, {len(profile.catalog.hints)} hints, "
        f"{len(profile.contracts)} contracts"
    )
    sys.exit(0)


@main.command()
@click.option("--config", "config_path", required=True, help="Service config file (JSON).")
def serve(config_path: str) -> None:
    """Host the HTTP service for the web interface."""
    import uvicorn

    from .service.app import ServiceConfig, create_app

    config = ServiceConfig.from_file(config_path)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)


if __name__ == "__main__":
    main()
