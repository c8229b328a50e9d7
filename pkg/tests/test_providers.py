from __future__ import annotations

import json

import pytest

from labflow.engine.state import Verdict
from labflow.errors import (
    BudgetExhausted,
    MalformedResponse,
    ScriptParseError,
    UnmatchedRequest,
    UnreadableImage,
)
from labflow.providers.base import (
    ChatRequest,
    ChatResponse,
    Role,
    call_counter,
    parse_decision,
)
from labflow.providers.script import ScriptedGateway, load_script

from conftest import PNG_1PX, scripted, text_entry, tool_entry, vision_entry


def request(text: str) -> ChatRequest:
    return ChatRequest(system="sys", messages=[{"role": "user", "content": text}])


def test_scripted_match_consumes_one_call(state, ctx_factory):
    gateway = scripted({Role.BASE: [text_entry("a summary", contains="summarize")]})
    exchange = gateway.chat(state, Role.BASE, request("please summarize this"))
    assert exchange.response.text == "a summary"
    assert state.counter(call_counter(Role.BASE)) == 1
    assert state.messages[-1].role == "model:base"


def test_budget_exhausted_after_n_calls(state):
    gateway = scripted(
        {Role.BASE: [text_entry("one"), text_entry("two"), text_entry("three")]},
        budgets={Role.BASE: 2},
    )
    gateway.chat(state, Role.BASE, request("x"))
    gateway.chat(state, Role.BASE, request("x"))
    with pytest.raises(BudgetExhausted):
        gateway.chat(state, Role.BASE, request("x"))


def test_tool_call_response(state):
    gateway = scripted(
        {Role.SEARCH: [tool_entry("arxiv_search", {"query": "sepsis"}, contains="search")]}
    )
    exchange = gateway.chat(state, Role.SEARCH, request("search for sepsis papers"))
    assert len(exchange.response.tool_calls) == 1
    assert exchange.response.tool_calls[0].name == "arxiv_search"


def test_strict_mode_rejects_unmatched_request(state):
    gateway = scripted({Role.BASE: [text_entry("canned", contains="expected-token")]})
    with pytest.raises(UnmatchedRequest):
        gateway.chat(state, Role.BASE, request("something else entirely"))


def test_strict_mode_rejects_exhausted_script(state):
    gateway = scripted({Role.BASE: []})
    with pytest.raises(UnmatchedRequest):
        gateway.chat(state, Role.BASE, request("anything"))


def test_entries_consumed_in_order(state):
    gateway = scripted({Role.BASE: [text_entry("first"), text_entry("second")]})
    assert gateway.chat(state, Role.BASE, request("a")).response.text == "first"
    assert gateway.chat(state, Role.BASE, request("b")).response.text == "second"


def test_response_must_carry_text_or_tool_calls():
    with pytest.raises(MalformedResponse):
        ChatResponse(text="", tool_calls=[])


def test_load_script_round_trip(tmp_path):
    path = tmp_path / "script.jsonl"
    path.write_text(
        json.dumps({"match": {"contains": "q"}, "respond": {"text": "ok"}}) + "\n"
    )
    script = load_script(path)
    assert len(script.entries) == 1
    assert script.entries[0].contains == "q"


def test_load_script_rejects_bad_lines(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json}\n")
    with pytest.raises(ScriptParseError):
        load_script(path)
    path.write_text(json.dumps({"match": {}}) + "\n")
    with pytest.raises(ScriptParseError):
        load_script(path)


# --- vision ------------------------------------------------------------------

def figure_artifact(state, ctx, name="plot.png"):
    artifact = ctx.store.put(PNG_1PX, kind="figure", name=name, media_type="image/png")
    state.add_artifact(artifact)
    return artifact


def test_vision_approved_verdict_stored(state, ctx_factory):
    ctx = ctx_factory()
    artifact = figure_artifact(state, ctx)
    gateway = scripted({Role.VISION: [vision_entry([])]})
    verdict = gateway.vision_review(state, artifact)
    assert verdict.approved is True
    assert artifact.approved() is True


def test_blocking_issue_means_rejected(state, ctx_factory):
    ctx = ctx_factory()
    artifact = figure_artifact(state, ctx)
    gateway = scripted(
        {
            Role.VISION: [
                vision_entry(
                    [{"severity": "blocking", "description": "axis labels unreadable"}]
                )
            ]
        }
    )
    verdict = gateway.vision_review(state, artifact)
    assert verdict.approved is False
    assert artifact.approved() is False


def test_second_review_wins_but_history_kept(state, ctx_factory):
    ctx = ctx_factory()
    artifact = figure_artifact(state, ctx)
    gateway = scripted(
        {
            Role.VISION: [
                vision_entry([{"severity": "blocking", "description": "cropped"}]),
                vision_entry([]),
            ]
        }
    )
    gateway.vision_review(state, artifact)
    gateway.vision_review(state, artifact)
    assert artifact.approved() is True
    assert len(artifact.verdicts()) == 2
    assert artifact.verdicts()[0]["approved"] is False


def test_unreadable_media_type_rejected(state, ctx_factory):
    ctx = ctx_factory()
    artifact = ctx.store.put(b"csv,data", kind="dataset", name="t.csv", media_type="text/csv")
    state.add_artifact(artifact)
    gateway = scripted({Role.VISION: [vision_entry([])]})
    with pytest.raises(UnreadableImage):
        gateway.vision_review(state, artifact)


def test_contradictory_scripted_verdict_rejected(state, ctx_factory):
    ctx = ctx_factory()
    artifact = figure_artifact(state, ctx)
    gateway = ScriptedGateway(
        scripted({Role.VISION: [
            {"match": {}, "respond": {"vision": {"approved": True, "issues": [
                {"severity": "blocking", "description": "broken"}]}}}
        ]}).scripts
    )
    with pytest.raises(ScriptParseError):
        gateway.vision_review(state, artifact)


# --- decision protocol ---------------------------------------------------------

def test_parse_decision_strict():
    decision = parse_decision("thinking...\nDECISION: continue")
    assert decision.verdict is Verdict.CONTINUE
    assert decision.rationale == "thinking..."


def test_parse_decision_takes_last_line():
    decision = parse_decision("DECISION: redo\nmore words\nDECISION: fix")
    assert decision.verdict is Verdict.FIX


@pytest.mark.parametrize(
    "text", ["no verdict", "DECISION: maybe", "DECISION:", "decided: continue"]
)
def test_parse_decision_rejects_garbage(text):
    with pytest.raises(ValueError):
        parse_decision(text)


def test_parse_decision_respects_allowed_subset():
    with pytest.raises(ValueError):
        parse_decision("DECISION: polish", allowed=(Verdict.CONTINUE, Verdict.END))


def test_budget_ledger_matches_message_count(state):
    gateway = scripted({Role.BASE: [text_entry("a"), text_entry("b"), text_entry("c")]})
    for _ in range(3):
        gateway.chat(state, Role.BASE, request("x"))
    exchanges = [m for m in state.messages if m.role == "model:base"]
    assert state.counter(call_counter(Role.BASE)) == len(exchanges) == 3
