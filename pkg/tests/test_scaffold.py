from __future__ import annotations

import itertools

import pytest

from grail.scaffold import (
    SECTION_ORDER,
    ContractVarMismatch,
    IncompleteScaffold,
    OrderViolation,
    PlanningError,
    ScaffoldPlan,
    SectionId,
    VarSummary,
    apply_fragment,
    assemble_program,
    empty_state,
    plan_sections,
    split_program,
)
from grail.task_model import DatasetRef, GeoOperation, OutputSpec, TaskSpec, taskspec_from_dict

from conftest import BOSTON_SPEC, RASTER_ONLY_SPEC, SIX_SECTION_SPEC


def spec_of(payload: dict) -> TaskSpec:
    return taskspec_from_dict(payload, default_source_form="NaturalLanguage")


def summaries_for(plan: ScaffoldPlan, section: SectionId) -> list[VarSummary]:
    contract = plan.contract_for(section)
    return [
        VarSummary(v.name, v.semantic_type, section, v.summary_template or v.name)
        for v in contract.output_vars
    ]


def test_raster_only_plan_prunes_join_and_spatial_check(profile):
    plan = plan_sections(spec_of(RASTER_ONLY_SPEC), profile)
    assert plan.section_ids == (SectionId.LOAD_DATA, SectionId.TYPE_CHECK, SectionId.ANALYTICS)
    pruned = {p.section: p.reason for p in plan.pruned}
    assert SectionId.RASTER_VECTOR_JOIN in pruned
    assert SectionId.SPATIAL_CHECK in pruned
    assert SectionId.TRANSFORM in pruned
    assert "raster-only" in pruned[SectionId.RASTER_VECTOR_JOIN]


def test_boston_plan_retains_join_with_raptor_join_required(profile):
    plan = plan_sections(spec_of(BOSTON_SPEC), profile)
    assert plan.section_ids == (
        SectionId.LOAD_DATA,
        SectionId.TYPE_CHECK,
        SectionId.SPATIAL_CHECK,
        SectionId.RASTER_VECTOR_JOIN,
        SectionId.ANALYTICS,
    )
    join = plan.contract_for(SectionId.RASTER_VECTOR_JOIN)
    assert "raptorJoin" in join.required_calls
    analytics = plan.contract_for(SectionId.ANALYTICS)
    assert "classCount" in analytics.required_calls
    assert "saveAsCSV" in analytics.required_calls
    load = plan.contract_for(SectionId.LOAD_DATA)
    assert set(load.required_calls) == {"geoTiff", "shapefile"}


def test_spatial_check_retained_without_crs_metadata(profile):
    # two datasets, neither declaring a CRS: conservatively keep the check
    plan = plan_sections(spec_of(BOSTON_SPEC), profile)
    assert SectionId.SPATIAL_CHECK in plan.section_ids


def test_six_section_plan(profile):
    plan = plan_sections(spec_of(SIX_SECTION_SPEC), profile)
    assert plan.section_ids == SECTION_ORDER
    transform = plan.contract_for(SectionId.TRANSFORM)
    assert "castPixels" in transform.required_calls
    # Transform feeds the join when retained
    join = plan.contract_for(SectionId.RASTER_VECTOR_JOIN)
    assert any(v.name == "prepared" for v in join.input_vars)


def test_type_check_pruned_when_pixel_types_declared(profile):
    payload = dict(RASTER_ONLY_SPEC)
    payload["datasets"] = [
        {"name": "nlcd", "role": "Raster", "uri": "data/nlcd.tif", "pixel_type": "Int"}
    ]
    plan = plan_sections(spec_of(payload), profile)
    assert SectionId.TYPE_CHECK not in plan.section_ids


def test_plan_partitions_sections_exhaustively(profile):
    kinds = ("RasterOnly", "RasterVector")
    pixel_types = (None, "Int")
    transform_verbs = (False, True)
    for kind, pixel_type, with_transform in itertools.product(kinds, pixel_types, transform_verbs):
        datasets = [DatasetRef("nlcd", "Raster", "a.tif", pixel_type=pixel_type)]
        operations = [GeoOperation("Load", {"dataset": "nlcd"}, "raster")]
        if kind == "RasterVector":
            datasets.append(DatasetRef("zones", "Vector", "z.zip"))
            operations.append(GeoOperation("Join", {}, "joined"))
        if with_transform:
            operations.append(GeoOperation("Reproject", {}, "prepared"))
        operations += [GeoOperation("ClassCount", {}, "counts"), GeoOperation("WriteOutput", {}, "")]
        spec = TaskSpec(kind, tuple(operations), tuple(datasets), (OutputSpec("CSV"),), "NaturalLanguage")
        plan = plan_sections(spec, profile)  # partition invariant enforced on build
        kept = set(plan.section_ids) | {p.section for p in plan.pruned}
        assert kept == set(SECTION_ORDER)


def test_unknown_verb_without_coverage_raises(profile):
    payload = dict(RASTER_ONLY_SPEC)
    payload["operations"] = RASTER_ONLY_SPEC["operations"] + [
        {"verb": "Hillshade", "params": {}, "produces": "shade"}
    ]
    with pytest.raises(PlanningError):
        plan_sections(spec_of(payload), profile)


def test_custom_verb_resolves_through_tags(profile):
    payload = dict(RASTER_ONLY_SPEC)
    payload["operations"] = RASTER_ONLY_SPEC["operations"] + [
        {"verb": "Histogram", "params": {}, "produces": "hist"}
    ]
    plan = plan_sections(spec_of(payload), profile)
    analytics = plan.contract_for(SectionId.ANALYTICS)
    assert "classCount" in analytics.required_calls


def test_apply_fragment_first_section(profile):
    plan = plan_sections(spec_of(RASTER_ONLY_SPEC), profile)
    state = empty_state(plan)
    new = apply_fragment(
        state, SectionId.LOAD_DATA, "val raster = sc.geoTiff(\"x\")", summaries_for(plan, SectionId.LOAD_DATA)
    )
    assert new.completed == (SectionId.LOAD_DATA,)
    assert [v.name for v in new.var_summaries] == ["raster"]
    # input state untouched (value semantics)
    assert state.fragments == ()
    assert state.var_summaries == ()


def test_apply_fragment_out_of_order_rejected(profile):
    plan = plan_sections(spec_of(RASTER_ONLY_SPEC), profile)
    state = empty_state(plan)
    state = apply_fragment(state, SectionId.LOAD_DATA, "val raster = 1", summaries_for(plan, SectionId.LOAD_DATA))
    with pytest.raises(OrderViolation):
        apply_fragment(state, SectionId.LOAD_DATA, "val raster = 1", summaries_for(plan, SectionId.LOAD_DATA))


def test_apply_fragment_analytics_before_join_rejected(profile):
    plan = plan_sections(spec_of(BOSTON_SPEC), profile)
    state = empty_state(plan)
    state = apply_fragment(state, SectionId.LOAD_DATA, "frag", summaries_for(plan, SectionId.LOAD_DATA))
    state = apply_fragment(state, SectionId.TYPE_CHECK, "frag", [])
    state = apply_fragment(state, SectionId.SPATIAL_CHECK, "frag", [])
    with pytest.raises(OrderViolation):
        apply_fragment(state, SectionId.ANALYTICS, "frag", summaries_for(plan, SectionId.ANALYTICS))


def test_apply_fragment_var_mismatch(profile):
    plan = plan_sections(spec_of(RASTER_ONLY_SPEC), profile)
    state = empty_state(plan)
    with pytest.raises(ContractVarMismatch):
        apply_fragment(state, SectionId.LOAD_DATA, "frag", [])


def test_assembly_order_and_determinism(profile):
    plan = plan_sections(spec_of(RASTER_ONLY_SPEC), profile)
    state = empty_state(plan)
    state = apply_fragment(state, SectionId.LOAD_DATA, "frag load", summaries_for(plan, SectionId.LOAD_DATA))
    state = apply_fragment(state, SectionId.TYPE_CHECK, "frag check", [])
    state = apply_fragment(state, SectionId.ANALYTICS, "frag analytics", summaries_for(plan, SectionId.ANALYTICS))
    program = assemble_program(state, profile)
    assert program == assemble_program(state, profile)
    assert program.startswith(profile.prologue.rstrip("\n"))
    assert program.rstrip("\n").endswith(profile.epilogue.rstrip("\n"))
    assert program.index("frag load") < program.index("frag check") < program.index("frag analytics")
    pieces = dict(split_program(program))
    assert pieces[SectionId.LOAD_DATA] == "frag load"
    assert pieces[SectionId.ANALYTICS].startswith("frag analytics")


def test_assembly_missing_section(profile):
    plan = plan_sections(spec_of(RASTER_ONLY_SPEC), profile)
    state = empty_state(plan)
    state = apply_fragment(state, SectionId.LOAD_DATA, "frag", summaries_for(plan, SectionId.LOAD_DATA))
    with pytest.raises(IncompleteScaffold) as exc:
        assemble_program(state, profile)
    assert SectionId.ANALYTICS in exc.value.missing


def test_plan_never_prunes_load_or_analytics():
    with pytest.raises(ValueError):
        ScaffoldPlan(profile_name="p", sections=(), pruned=tuple())


def test_contract_outputs_required_outside_validation_stages():
    from grail.scaffold import SectionContract

    # pure validation stages may omit outputs
    SectionContract(SectionId.TYPE_CHECK, (), (), (), "", ())
    with pytest.raises(ValueError):
        SectionContract(SectionId.LOAD_DATA, ("geoTiff",), (), (), "", ())
