"""Shared fixtures: task texts, task-description payloads, good fragments, and
scripted-rule builders used across the suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from grail.catalog import load_profile

FIXTURES = Path(__file__).parent / "fixtures"

# Natural-language task inputs for the two demo workflows.
RASTER_ONLY_TEXT = (
    "Calculate overall land-use category percentages for the NLCD raster and "
    "write a CSV summary. This is a raster-only workflow with no polygon "
    "overlay. Compute class counts and percentages for the whole raster and "
    "save a tabular CSV output."
)

RASTER_VECTOR_TEXT = (
    "Calculate land-use category percentages and summary statistics for Boston "
    "neighborhoods from NLCD raster data. Produce tabular CSV outputs with "
    "per-neighborhood class percentages and a neighborhood-level dominant "
    "class summary."
)

SIX_SECTION_TEXT = (
    "Cast the NLCD raster to integer class labels, then calculate "
    "per-neighborhood land-use percentages for Boston and save a CSV summary."
)

RASTER_ONLY_SPEC = {
    "task_kind": "RasterOnly",
    "operations": [
        {"verb": "Load", "params": {"dataset": "nlcd"}, "produces": "raster"},
        {"verb": "ClassCount", "params": {}, "produces": "counts"},
        {"verb": "WriteOutput", "params": {}, "produces": ""},
    ],
    "datasets": [{"name": "nlcd", "role": "Raster", "uri": "data/nlcd.tif"}],
    "outputs": [{"format": "CSV", "description": "class percentage summary"}],
}

BOSTON_SPEC = {
    "task_kind": "RasterVector",
    "operations": [
        {"verb": "Load", "params": {"dataset": "nlcd"}, "produces": "raster"},
        {
            "verb": "Join",
            "params": {"raster": "nlcd", "vector": "neighborhoods"},
            "produces": "joined",
        },
        {"verb": "ClassCount", "params": {}, "produces": "counts"},
        {"verb": "WriteOutput", "params": {}, "produces": ""},
    ],
    "datasets": [
        {"name": "nlcd", "role": "Raster", "uri": "data/nlcd_boston.tif"},
        {"name": "neighborhoods", "role": "Vector", "uri": "data/boston_neighborhoods.zip"},
    ],
    "outputs": [{"format": "CSV", "description": "per-neighborhood class percentages"}],
}

SIX_SECTION_SPEC = {
    "task_kind": "RasterVector",
    "operations": [
        {"verb": "Load", "params": {"dataset": "nlcd"}, "produces": "raster"},
        {"verb": "TypeCast", "params": {}, "produces": "prepared"},
        {
            "verb": "Join",
            "params": {"raster": "nlcd", "vector": "neighborhoods"},
            "produces": "joined",
        },
        {"verb": "ClassCount", "params": {}, "produces": "counts"},
        {"verb": "WriteOutput", "params": {}, "produces": ""},
    ],
    "datasets": [
        {"name": "nlcd", "role": "Raster", "uri": "data/nlcd_boston.tif"},
        {"name": "neighborhoods", "role": "Vector", "uri": "data/boston_neighborhoods.zip"},
    ],
    "outputs": [{"format": "CSV", "description": "per-neighborhood class percentages"}],
}

RASTER_ONLY_FRAGMENTS = {
    "LoadData": 'val raster = sc.geoTiff("data/nlcd.tif")',
    "TypeCheck": "raster.requirePixelType(IntType)",
    "Analytics": (
        "val results = raster.classCount().percentages()\n"
        'results.saveAsCSV("out/landuse_summary.csv")'
    ),
}

BOSTON_FRAGMENTS = {
    "LoadData": (
        'val raster = sc.geoTiff("data/nlcd_boston.tif")\n'
        'val vector = sc.shapefile("data/boston_neighborhoods.zip")'
    ),
    "TypeCheck": "raster.requirePixelType(IntType)",
    "SpatialCheck": "raster.requireAlignedExtent(vector)",
    "RasterVectorJoin": "val joined = raster.raptorJoin(vector)",
    "Analytics": (
        "val results = joined.classCount().byFeature().percentages()\n"
        'results.saveAsCSV("out/boston_landuse.csv")'
    ),
}

SIX_SECTION_FRAGMENTS = {
    "LoadData": BOSTON_FRAGMENTS["LoadData"],
    "TypeCheck": BOSTON_FRAGMENTS["TypeCheck"],
    "SpatialCheck": BOSTON_FRAGMENTS["SpatialCheck"],
    "Transform": "val prepared = raster.castPixels(IntType)",
    "RasterVectorJoin": "val joined = prepared.raptorJoin(vector)",
    "Analytics": BOSTON_FRAGMENTS["Analytics"],
}

# A raster-only Python reference script free of vector keywords.
RASTER_ONLY_REFERENCE_SCRIPT = (
    "# reference: raster-only land use summary\n"
    "import rasterio\n"
    "import numpy as np\n"
    "with rasterio.open('data/nlcd.tif') as src:\n"
    "    data = src.read(1)\n"
    "values, counts = np.unique(data, return_counts=True)\n"
    "with open('out/summary.csv', 'w') as fh:\n"
    "    fh.write('class,percentage\\n')\n"
    "    for v, c in zip(values, counts):\n"
    "        fh.write(f'{v},{100.0 * c / counts.sum():.2f}\\n')\n"
)


def rule_analyze(request_contains: str, spec: dict, fail_count: int = 0) -> dict:
    return {
        "name": f"analyze:{request_contains[:24]}",
        "match": {"kind": "analyze", "request_contains": request_contains},
        "reply": json.dumps(spec),
        "fail_count": fail_count,
        "bad_reply": "this is not a json object",
    }


def rule_section(section: str, fragment: str, fail_count: int = 0, bad_reply: str | None = None) -> dict:
    rule = {
        "name": f"generate:{section}",
        "match": {"kind": "generate", "section": section},
        "reply": fragment,
        "fail_count": fail_count,
    }
    if bad_reply is not None:
        rule["bad_reply"] = bad_reply
    return rule


def rule_review(reply: str = "PASS") -> dict:
    return {"name": "review", "match": {"kind": "review"}, "reply": reply}


def rule_review_program(reply: str = "PASS") -> dict:
    return {"name": "review-program", "match": {"kind": "review_program"}, "reply": reply}


def rule_reference_script(script: str) -> dict:
    return {"name": "reference-script", "match": {"kind": "reference_script"}, "reply": script}


def raster_only_rules(fail_counts: dict[str, int] | None = None) -> list[dict]:
    fails = fail_counts or {}
    rules = [rule_analyze("raster-only workflow", RASTER_ONLY_SPEC)]
    rules += [
        rule_section(s, f, fail_count=fails.get(s, 0)) for s, f in RASTER_ONLY_FRAGMENTS.items()
    ]
    rules += [rule_review(), rule_review_program()]
    return rules


def boston_rules(fail_counts: dict[str, int] | None = None) -> list[dict]:
    fails = fail_counts or {}
    rules = [rule_analyze("Boston", BOSTON_SPEC)]
    rules += [rule_section(s, f, fail_count=fails.get(s, 0)) for s, f in BOSTON_FRAGMENTS.items()]
    rules += [rule_review(), rule_review_program()]
    return rules


def six_section_rules(fail_counts: dict[str, int] | None = None) -> list[dict]:
    fails = fail_counts or {}
    rules = [rule_analyze("Cast the NLCD raster", SIX_SECTION_SPEC)]
    rules += [
        rule_section(s, f, fail_count=fails.get(s, 0)) for s, f in SIX_SECTION_FRAGMENTS.items()
    ]
    rules += [rule_review(), rule_review_program()]
    return rules


@pytest.fixture(scope="session")
def profile():
    return load_profile()


@pytest.fixture()
def runs_dir(tmp_path):
    out = tmp_path / "runs"
    out.mkdir()
    return out
