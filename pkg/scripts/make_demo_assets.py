#!/usr/bin/env python3
"""Regenerate the demo directory: service config, scripted provider rules,
placeholder datasets with metadata sidecars, and the baseline CSV."""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from conftest import (  # noqa: E402
    BOSTON_FRAGMENTS,
    BOSTON_SPEC,
    RASTER_ONLY_FRAGMENTS,
    RASTER_ONLY_REFERENCE_SCRIPT,
    RASTER_ONLY_SPEC,
    rule_analyze,
    rule_reference_script,
    rule_review,
    rule_review_program,
    rule_section,
)

DEMO = ROOT / "demo"

# A task-description variant that exhausts the join section, to demonstrate
# the inspect-and-repair flow: its analyzer reply plants a marker that a
# failing scripted rule keys on via the TaskSpec prompt block.
FAIL_MARKER = "demo-fail"
BOSTON_SPEC_FAILING = json.loads(json.dumps(BOSTON_SPEC))
BOSTON_SPEC_FAILING["outputs"][0]["description"] = f"per-neighborhood summary ({FAIL_MARKER})"


def demo_rules() -> list[dict]:
    rules = [
        rule_analyze("break the join", BOSTON_SPEC_FAILING),
        rule_analyze("raster-only workflow", RASTER_ONLY_SPEC),
        rule_analyze("Boston", BOSTON_SPEC),
        rule_analyze("SENTINEL_FIXTURE_7f3a", BOSTON_SPEC),
        rule_analyze("rasterio", BOSTON_SPEC),
        rule_reference_script(RASTER_ONLY_REFERENCE_SCRIPT),
    ]
    failing_join = rule_section("RasterVectorJoin", BOSTON_FRAGMENTS["RasterVectorJoin"], fail_count=5)
    failing_join["match"]["body_contains"] = FAIL_MARKER
    failing_join["name"] = "generate:RasterVectorJoin(failing-demo)"
    rules.append(failing_join)
    rules += [rule_section(s, f) for s, f in BOSTON_FRAGMENTS.items()]
    rules += [
        rule_section(s, f)
        for s, f in RASTER_ONLY_FRAGMENTS.items()
        if s == "Analytics"
    ]
    rules += [rule_review(), rule_review_program()]
    return rules


def main() -> None:
    DEMO.mkdir(exist_ok=True)
    (DEMO / "data").mkdir(exist_ok=True)
    (DEMO / "rules.json").write_text(json.dumps(demo_rules(), indent=2) + "\n", encoding="utf-8")

    config = {
        "listen": "127.0.0.1:8733",
        "runs_dir": "runs",
        "provider": {"kind": "scripted", "rules_file": "rules.json"},
        "toolchain": {"kind": "stub"},
        "datasets": {
            "boston_nlcd": {"uri": "data/nlcd_boston.tif", "role": "Raster"},
            "boston_neighborhoods": {"uri": "data/boston_neighborhoods.zip", "role": "Vector"},
        },
        "baselines": {"boston": "baseline_boston.csv"},
    }
    (DEMO / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")

    (DEMO / "baseline_boston.csv").write_text(
        "zone,dominant_class,percentage\nRoxbury,23,41.6\nDorchester,23,38.2\n", encoding="utf-8"
    )
    (DEMO / "data" / "nlcd_boston.tif").write_bytes(b"placeholder raster\n")
    (DEMO / "data" / "nlcd_boston.tif.meta.json").write_text(
        json.dumps({"role": "Raster", "pixel_type": "Int", "crs": "EPSG:5070"}, indent=2) + "\n",
        encoding="utf-8",
    )
    (DEMO / "data" / "boston_neighborhoods.zip").write_bytes(b"placeholder vector\n")
    (DEMO / "data" / "boston_neighborhoods.zip.meta.json").write_text(
        json.dumps({"role": "Vector", "crs": "EPSG:4326"}, indent=2) + "\n", encoding="utf-8"
    )
    print(f"demo assets written under {DEMO}")


if __name__ == "__main__":
    main()
