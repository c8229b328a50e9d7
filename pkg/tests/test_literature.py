from __future__ import annotations

import pytest

from labflow.engine.runner import RetryPolicy, RunLimits, run
from labflow.engine.state import RunStatus, SharedState
from labflow.errors import ModelRefusal
from labflow.literature import (
    ReviewPhase,
    ReviewState,
    build_literature_graph,
    citation_key,
    load_review,
    parse_citation_block,
    react_step,
    save_review,
    should_stop,
    write_report,
)
from labflow.providers.base import Role
from labflow.toolkit.registry import ToolRegistry
from labflow.toolkit.search import register_search_tools

from conftest import (
    make_plan,
    scripted,
    subtask,
    text_entry,
    tool_entry,
    write_search_fixture,
)

FAST = RetryPolicy(backoff=())


def result(title, doi=None, url=None, year=2021):
    ident = {"doi": doi} if doi else {"url": url or f"https://x/{title}"}
    return {
        "title": title,
        "authors": ["Author A"],
        "venue": "Journal",
        "year": year,
        "identifier": ident,
    }


def search_tools(tmp_path, per_tool: dict[str, dict[str, list[dict]]]) -> ToolRegistry:
    fixtures = {}
    for tool, entries in per_tool.items():
        fixtures[tool] = write_search_fixture(tmp_path / f"{tool}.json", entries)
    return register_search_tools(ToolRegistry(), fixtures)


def searching_state(state: SharedState, query="pneumonia mortality") -> ReviewState:
    review = ReviewState(query=query)
    save_review(state, review)
    return review


# --- react_step -----------------------------------------------------------------

def test_thought_appends_without_tool_call(state, ctx_factory):
    searching_state(state)
    ctx = ctx_factory(gateway=scripted({Role.SEARCH: [text_entry("I should search arxiv")]}))
    review = react_step(state, ctx)
    assert review.tool_calls == 0
    assert review.transcript == [{"thought": "I should search arxiv"}]


def test_action_appends_observation_and_counts(state, ctx_factory, tmp_path):
    searching_state(state)
    tools = search_tools(
        tmp_path, {"arxiv_search": {"pneumonia": [result("P1", doi="10.1/p1")]}}
    )
    ctx = ctx_factory(
        gateway=scripted({Role.SEARCH: [tool_entry("arxiv_search", {"query": "pneumonia"})]}),
        tools=tools,
    )
    review = react_step(state, ctx)
    assert review.tool_calls == 1
    assert "action" in review.transcript[0]
    assert "observation" in review.transcript[1]
    assert len(review.candidates) == 1
    assert state.counter("tool_calls") == 1


def test_react_step_requires_searching_phase(state, ctx_factory):
    review = searching_state(state)
    review.phase = ReviewPhase.WRITING
    save_review(state, review)
    with pytest.raises(ValueError, match="phase=searching"):
        react_step(state, ctx_factory())


# --- should_stop ------------------------------------------------------------------

@pytest.mark.parametrize(
    "tool_calls,k_min,expected",
    [(0, 3, False), (2, 3, False), (3, 3, True), (7, 3, True)],
)
def test_should_stop_threshold(tool_calls, k_min, expected):
    review = ReviewState(query="q", tool_calls=tool_calls)
    assert should_stop(review, k_min) is expected


def test_should_stop_requires_positive_k_min():
    with pytest.raises(ValueError):
        should_stop(ReviewState(query="q"), 0)


# --- write_report ------------------------------------------------------------------

def writing_state(state, candidates, phase=ReviewPhase.WRITING):
    review = ReviewState(query="q", candidates=candidates, phase=phase, tool_calls=3)
    save_review(state, review)
    return review


def test_duplicate_doi_cited_once(state, ctx_factory):
    dup = result("Same paper", doi="10.99/dup")
    other = result("Other paper", doi="10.99/other")
    writing_state(state, [dup, dict(dup, source_tool="medrxiv_search"), other])
    key = citation_key_from(dup)
    body = f"Reviewed [@{key}]."
    ctx = ctx_factory(gateway=scripted({Role.WRITE: [text_entry(body)]}))
    report = write_report(state, ctx)
    assert len(report.cited) == 2
    assert "1 merged" in report.dedup_note


def citation_key_from(raw: dict) -> str:
    from labflow.toolkit.search import SearchResult

    return citation_key(SearchResult.from_dict(raw))


def test_zero_candidates_reports_explicitly(state, ctx_factory):
    writing_state(state, [])
    ctx = ctx_factory(gateway=scripted({Role.WRITE: []}))
    report = write_report(state, ctx)
    assert "no relevant literature found" in report.body.lower()
    assert report.cited == []
    assert load_review(state).phase is ReviewPhase.DONE


def test_wrong_phase_rejected(state, ctx_factory):
    writing_state(state, [], phase=ReviewPhase.SEARCHING)
    with pytest.raises(ValueError, match="phase=writing"):
        write_report(state, ctx_factory())


def test_unresolved_citation_key_is_refusal(state, ctx_factory):
    writing_state(state, [result("Known", doi="10.1/k")])
    ctx = ctx_factory(gateway=scripted({Role.WRITE: [text_entry("See [@doi:10.1/unknown].")]}))
    with pytest.raises(ModelRefusal, match="unknown keys"):
        write_report(state, ctx)


def test_five_candidates_all_keys_resolve(state, ctx_factory):
    candidates = [
        result("Alpha", doi="10.1/a"),
        result("Beta", doi="10.1/b"),
        result("Gamma", url="https://g"),
        result("Delta", doi="10.1/d"),
        result("Epsilon", url="https://e"),
    ]
    writing_state(state, candidates)
    keys = [citation_key_from(c) for c in candidates]
    body = "Survey: " + " ".join(f"[@{k}]" for k in keys)
    ctx = ctx_factory(gateway=scripted({Role.WRITE: [text_entry(body)]}))
    report = write_report(state, ctx)
    assert len(report.cited) == 5
    artifact = state.artifact_by_name("literature_report")
    block = parse_citation_block(
        ctx.store.get_bytes(artifact).decode()
    )
    assert {e["key"] for e in block} == set(keys)


# --- pipeline shape ------------------------------------------------------------------

def lit_plan():
    return make_plan(
        subtask(1, "literature", title="pneumonia mortality review",
                outputs=["literature_report"]),
        subtask(2, "writing", outputs=["manuscript"]),
    )


def test_pipeline_shape_and_k_min(ctx_factory, tmp_path):
    hits = {
        "pneumonia": [result("P1", doi="10.1/p1"), result("P2", doi="10.1/p2")]
    }
    tools = search_tools(
        tmp_path,
        {"arxiv_search": hits, "medrxiv_search": hits, "tavily_search": hits},
    )
    search_script = [
        text_entry("first, think"),
        tool_entry("arxiv_search", {"query": "pneumonia"}),
        tool_entry("medrxiv_search", {"query": "pneumonia"}),
        tool_entry("tavily_search", {"query": "pneumonia"}),
    ]
    keys = [citation_key_from(r) for r in hits["pneumonia"]]
    gateway = scripted(
        {
            Role.SEARCH: search_script,
            Role.WRITE: [text_entry(f"Consolidated [@{keys[0]}] and [@{keys[1]}].")],
        }
    )
    ctx = ctx_factory(gateway=gateway, tools=tools)
    state = SharedState(run_id="lit")
    state.plan = lit_plan()

    final, events = run(build_literature_graph(k_min=3), state, FAST, RunLimits(), ctx)
    assert final.status is RunStatus.STOPPED

    nodes = [e.node for e in events]
    # START -> search (xN) -> write report -> report tool node -> END
    assert nodes[-2:] == ["lit_write", "lit_report"]
    search_visits = [n for n in nodes if n == "lit_search"]
    assert len(search_visits) == 4  # one thought + three actions

    review = load_review(final)
    assert review.tool_calls >= 3
    # stop criterion held before any report was written
    write_index = nodes.index("lit_write")
    assert all(n == "lit_search" for n in nodes[:write_index])
    assert final.counter("tool_calls") == review.tool_calls
    actions = sum(1 for entry in review.transcript if "action" in entry)
    assert actions == review.tool_calls  # invariant: tool_calls == action entries
    decisions = [e.decision.verdict.value for e in events if e.decision]
    assert decisions[-1] == "end" and set(decisions[:-1]) == {"continue"}


def test_ceiling_forces_stop_when_model_only_thinks(ctx_factory):
    thoughts = [text_entry(f"thought {n}") for n in range(20)]
    ctx = ctx_factory(gateway=scripted({Role.SEARCH: thoughts, Role.WRITE: []}))
    state = SharedState(run_id="lit-ceiling")
    state.plan = lit_plan()
    final, events = run(
        build_literature_graph(k_min=3, k_max=5), state, FAST, RunLimits(), ctx
    )
    assert final.status is RunStatus.STOPPED
    review = load_review(final)
    assert review.tool_calls == 0
    assert review.react_steps() == 5
    assert "no relevant literature found" in review_report_body(final, ctx).lower()


def review_report_body(state, ctx) -> str:
    artifact = state.artifact_by_name("literature_report")
    return ctx.store.get_bytes(artifact).decode()


def test_no_literature_subtask_skips_cleanly(ctx_factory):
    ctx = ctx_factory(gateway=scripted({Role.SEARCH: [], Role.WRITE: []}))
    state = SharedState(run_id="lit-skip")
    state.plan = make_plan(
        subtask(1, "coding", outputs=["x.png"]), subtask(2, "writing", outputs=["m"])
    )
    final, events = run(build_literature_graph(), state, FAST, RunLimits(), ctx)
    assert final.status is RunStatus.STOPPED
    assert load_review(final).skip is True
    assert [e.node for e in events] == ["lit_search", "lit_write", "lit_report"]
