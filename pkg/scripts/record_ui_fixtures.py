#!/usr/bin/env python3
"""Record API responses for the web UI's snapshot tests.

Drives the service (scripted provider + stub toolchain) through the demo
repair flow and saves every response the UI consumes, before and after the
repair, under frontend/test/fixtures/.
"""

from __future__ import annotations

import json
import shutil
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from conftest import BOSTON_FRAGMENTS, RASTER_VECTOR_TEXT, boston_rules  # noqa: E402

from grail.service.app import ServiceConfig, create_app  # noqa: E402

OUT = ROOT / "frontend" / "test" / "fixtures"

FAIL_TEXT = RASTER_VECTOR_TEXT  # same task; the provider is rigged to fail the join


def save(name: str, payload) -> None:
    path = OUT / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def snapshot(client: TestClient, run_id: str, prefix: str) -> None:
    save(f"{prefix}/summary.json", client.get(f"/api/v1/runs/{run_id}").json())
    save(f"{prefix}/sections.json", client.get(f"/api/v1/runs/{run_id}/sections").json())
    save(f"{prefix}/program.json", client.get(f"/api/v1/runs/{run_id}/program").json())
    save(f"{prefix}/outputs.json", client.get(f"/api/v1/runs/{run_id}/outputs").json())


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="ui-fixtures-"))
    baseline = workdir / "baseline.csv"
    baseline.write_text(
        "zone,dominant_class,percentage\nRoxbury,23,41.6\nDorchester,23,38.2\n", encoding="utf-8"
    )
    config = ServiceConfig(
        runs_dir=str(workdir / "runs"),
        provider={"kind": "scripted", "rules": boston_rules(fail_counts={"RasterVectorJoin": 5})},
        toolchain={"kind": "stub"},
        datasets={
            "boston_nlcd": {"uri": "data/nlcd_boston.tif", "role": "Raster"},
            "boston_neighborhoods": {"uri": "data/boston_neighborhoods.zip", "role": "Vector"},
        },
        baselines={"boston": str(baseline)},
        run_sync=True,
    )
    client = TestClient(create_app(config))

    save("datasets.json", client.get("/api/v1/datasets").json())
    save("modes.json", client.get("/api/v1/modes").json())

    submitted = client.post(
        "/api/v1/runs",
        json={"input": FAIL_TEXT, "mode": "NlScala", "baseline": "boston",
              "datasets": ["boston_nlcd", "boston_neighborhoods"]},
    )
    run_id = submitted.json()["run_id"]
    save("submit.json", {"status_code": submitted.status_code, "body": submitted.json()})
    snapshot(client, run_id, "exhausted")

    repaired = client.post(
        f"/api/v1/runs/{run_id}/repair",
        json={"edited_fragment": BOSTON_FRAGMENTS["RasterVectorJoin"]},
    )
    save("repair.json", {"status_code": repaired.status_code, "body": repaired.json()})
    snapshot(client, run_id, "repaired")

    save("runs.json", client.get("/api/v1/runs").json())
    shutil.rmtree(workdir)
    print(f"fixtures written under {OUT}")


if __name__ == "__main__":
    main()
