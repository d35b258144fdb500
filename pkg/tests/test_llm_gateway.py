from __future__ import annotations

import json

import httpx
import pytest

from grail.llm_gateway import (
    BLOCK_REPAIR_CONTEXT,
    BLOCK_SECTION_CONTRACT,
    BLOCK_TASK_SPEC,
    REQUEST_GENERATE,
    ContextBlock,
    DecodeParams,
    PromptBundle,
    ProviderError,
    ScriptedBackend,
    WireBackend,
    build_provider,
    render_prompt,
)


def bundle_with(blocks, request_text=REQUEST_GENERATE + " for LoadData."):
    return PromptBundle(
        system_text="system here",
        context_blocks=tuple(blocks),
        request_text=request_text,
    )


def test_render_orders_blocks_under_headers():
    bundle = bundle_with(
        [ContextBlock(BLOCK_TASK_SPEC, "spec body"), ContextBlock(BLOCK_SECTION_CONTRACT, "contract body")]
    )
    text = render_prompt(bundle)
    assert text.index("== TaskSpec ==") < text.index("== SectionContract ==")
    assert text.startswith("system here\n")
    assert render_prompt(bundle) == text  # pure


def test_render_without_blocks_is_system_plus_request():
    bundle = bundle_with([])
    assert render_prompt(bundle) == "system here\n" + bundle.request_text + "\n"


def test_retry_bundle_renders_repair_context_once():
    bundle = bundle_with(
        [ContextBlock(BLOCK_SECTION_CONTRACT, "c"), ContextBlock(BLOCK_REPAIR_CONTEXT, "attempt 1 failed")]
    )
    text = render_prompt(bundle)
    assert text.count("== RepairContext ==") == 1


def test_duplicate_labels_rejected():
    with pytest.raises(ValueError):
        bundle_with([ContextBlock(BLOCK_TASK_SPEC, "a"), ContextBlock(BLOCK_TASK_SPEC, "b")])


def test_unknown_label_rejected():
    with pytest.raises(ValueError):
        ContextBlock("Mystery", "a")


def test_decode_params_validation():
    with pytest.raises(ValueError):
        DecodeParams(temperature=-1)
    with pytest.raises(ValueError):
        DecodeParams(max_tokens=0)


def test_scripted_echo_for_matching_section():
    backend = ScriptedBackend(
        [{"match": {"kind": "generate", "section": "LoadData"}, "reply": "fixture fragment"}]
    )
    bundle = bundle_with([ContextBlock(BLOCK_SECTION_CONTRACT, "Section: LoadData\nrest")])
    assert backend.complete(bundle) == "fixture fragment"


def test_scripted_fail_count_sequences_bad_then_good():
    backend = ScriptedBackend(
        [
            {
                "match": {"kind": "generate", "section": "LoadData"},
                "reply": "good",
                "fail_count": 2,
                "bad_reply": "bad",
            }
        ]
    )
    bundle = bundle_with([ContextBlock(BLOCK_SECTION_CONTRACT, "Section: LoadData\nrest")])
    assert [backend.complete(bundle) for _ in range(3)] == ["bad", "bad", "good"]


def test_scripted_no_match_is_malformed_error():
    backend = ScriptedBackend([{"match": {"kind": "review"}, "reply": "PASS"}])
    with pytest.raises(ProviderError) as exc:
        backend.complete(bundle_with([]))
    assert exc.value.kind == "malformed"


def test_scripted_first_matching_rule_wins():
    backend = ScriptedBackend(
        [
            {"match": {"request_contains": "LoadData"}, "reply": "first"},
            {"match": {}, "reply": "catch-all"},
        ]
    )
    assert backend.complete(bundle_with([])) == "first"
    assert backend.complete(bundle_with([], request_text="something else")) == "catch-all"


def test_scripted_from_file(tmp_path):
    rules = [{"match": {}, "reply": "hello"}]
    path = tmp_path / "rules.json"
    path.write_text(json.dumps(rules), encoding="utf-8")
    backend = ScriptedBackend.from_file(path)
    assert backend.complete(bundle_with([])) == "hello"
    assert backend.describe()["rules_digest"]


def _wire_backend(handler):
    transport = httpx.MockTransport(handler)
    client = httpx.Client(transport=transport)
    return WireBackend("http://llm.test", model="test-model", client=client)


def test_wire_backend_request_conforms_to_chat_schema(monkeypatch):
    captured = {}

    def handler(request: httpx.Request) -> httpx.Response:
        captured["url"] = str(request.url)
        captured["auth"] = request.headers.get("authorization")
        captured["body"] = json.loads(request.content)
        return httpx.Response(
            200, json={"choices": [{"message": {"role": "assistant", "content": "reply!"}}]}
        )

    monkeypatch.setenv("GRAIL_LLM_TOKEN", "sekrit")
    backend = _wire_backend(handler)
    reply = backend.complete(bundle_with([ContextBlock(BLOCK_TASK_SPEC, "body")]))
    assert reply == "reply!"
    assert captured["url"] == "http://llm.test/v1/chat/completions"
    assert captured["auth"] == "Bearer sekrit"
    body = captured["body"]
    assert body["model"] == "test-model"
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert all(isinstance(m["content"], str) for m in body["messages"])
    assert body["temperature"] == 0.0 and body["max_tokens"] > 0 and "seed" in body


def test_wire_backend_missing_content_is_malformed():
    backend = _wire_backend(lambda req: httpx.Response(200, json={"choices": [{}]}))
    with pytest.raises(ProviderError) as exc:
        backend.complete(bundle_with([]))
    assert exc.value.kind == "malformed"


def test_wire_backend_maps_5xx_to_overload():
    backend = _wire_backend(lambda req: httpx.Response(503, text="busy"))
    with pytest.raises(ProviderError) as exc:
        backend.complete(bundle_with([]))
    assert exc.value.kind == "overload"


def test_wire_backend_maps_network_error_to_transport():
    def handler(request):
        raise httpx.ConnectError("refused")

    backend = _wire_backend(handler)
    with pytest.raises(ProviderError) as exc:
        backend.complete(bundle_with([]))
    assert exc.value.kind == "transport"


def test_build_provider_factory(tmp_path):
    rules_file = tmp_path / "r.json"
    rules_file.write_text(json.dumps([{"match": {}, "reply": "x"}]), encoding="utf-8")
    assert build_provider({"kind": "scripted", "rules_file": str(rules_file)}).provider_id == "scripted"
    assert build_provider({"kind": "scripted", "rules": []}).provider_id == "scripted"
    wire = build_provider({"kind": "openai", "base_url": "http://x", "model": "m"})
    assert wire.provider_id == "openai-compatible"
    with pytest.raises(ValueError):
        build_provider({"kind": "psychic"})
