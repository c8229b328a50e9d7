from __future__ import annotations

import base64

import pytest

from labflow.coder import (
    attempt_subtask,
    build_coder_graph,
    conclude,
    load_coder,
    read_plan,
    review_figures,
    route,
    save_coder,
)
from labflow.engine.runner import RetryPolicy, RunLimits, run
from labflow.engine.state import RouterDecision, RunStatus, SharedState, Verdict
from labflow.errors import EmptyPlan, RefinementBudgetExhausted
from labflow.providers.base import Role
from labflow.toolkit.sandbox import ExecutionResult

from conftest import PNG_1PX, decision_entry, make_plan, scripted, subtask, text_entry

FAST = RetryPolicy(backoff=())

PNG_B64 = base64.b64encode(PNG_1PX).decode()

PLOT_SCRIPT = (
    "import base64\n"
    f"open('plot.png', 'wb').write(base64.b64decode('{PNG_B64}'))\n"
)

FAIL_SCRIPT = "import sys; sys.stderr.write('traceback: boom'); sys.exit(1)"


def coding_plan(n: int = 1):
    subs = [
        subtask(i, "coding", title=f"produce plot {i}", outputs=[f"plot.png" if i == 1 else f"plot{i}.png"])
        for i in range(1, n + 1)
    ]
    return make_plan(*subs) if n > 1 else make_plan(subs[0], subtask(2, "writing", outputs=["m"]))


def seeded(ctx, plan=None) -> SharedState:
    state = SharedState(run_id="coder")
    state.plan = plan or coding_plan()
    save_coder(state, read_plan(state.plan))
    return state


# --- read_plan ---------------------------------------------------------------------

def test_read_plan_four_subtasks_starts_at_one():
    plan = make_plan(*[subtask(i, "coding", outputs=[f"o{i}.txt"]) for i in range(1, 5)])
    cstate = read_plan(plan)
    assert cstate.current == 1
    assert cstate.queue == [1, 2, 3, 4]
    assert cstate.refinements == {}


def test_read_plan_without_coding_subtasks_is_empty():
    plan = make_plan(
        subtask(1, "literature", outputs=["r"]), subtask(2, "writing", outputs=["m"])
    )
    with pytest.raises(EmptyPlan):
        read_plan(plan)


def test_read_plan_queue_ordered_by_ordinal():
    plan = make_plan(
        subtask(1, "literature", outputs=["r"]),
        subtask(2, "data_analysis", outputs=["s.csv"]),
        subtask(3, "coding", outputs=["p.png"]),
        subtask(4, "writing", outputs=["m"]),
    )
    assert read_plan(plan).queue == [3]


# --- attempt_subtask ----------------------------------------------------------------

def test_valid_attempt_registers_figure(ctx_factory):
    ctx = ctx_factory(
        gateway=scripted(
            {Role.BASE: [text_entry(PLOT_SCRIPT)], Role.VISION: [
                {"match": {}, "respond": {"vision": {"issues": []}}}
            ]}
        )
    )
    state = seeded(ctx)
    outcome = attempt_subtask(state, ctx, state.plan.subtask(1))
    assert outcome.execution.validated is True
    assert len(outcome.figures) == 1
    review_figures(state, ctx)
    assert state.artifacts[outcome.figures[0]].approved() is True


def test_rejected_plot_marks_redo_path(ctx_factory):
    ctx = ctx_factory(
        gateway=scripted(
            {
                Role.BASE: [text_entry(PLOT_SCRIPT)],
                Role.VISION: [
                    {"match": {}, "respond": {"vision": {"issues": [
                        {"severity": "blocking", "description": "axis labels unreadable"}
                    ]}}}
                ],
            }
        )
    )
    state = seeded(ctx)
    outcome = attempt_subtask(state, ctx, state.plan.subtask(1))
    review_figures(state, ctx)
    assert outcome.vision_blocked(state) is True
    cstate = load_coder(state)
    assert cstate.last_failure["kind"] == "vision"


def test_attempt_on_wrong_subtask_rejected(ctx_factory):
    ctx = ctx_factory(gateway=scripted({Role.BASE: []}))
    state = seeded(ctx, coding_plan(2))
    with pytest.raises(ValueError, match="not the current subtask"):
        attempt_subtask(state, ctx, state.plan.subtask(2))


# --- route --------------------------------------------------------------------------

def ok_outcome(subtask_id=1, validated=True, figures=()):
    return_result = ExecutionResult(
        exit_status=0 if validated else 1,
        stdout_tail="",
        stderr_tail="" if validated else "boom",
        produced_files=(),
        duration=0.0,
        validated=validated,
    )
    from labflow.coder import SubtaskOutcome

    return SubtaskOutcome(subtask=subtask_id, execution=return_result, figures=list(figures))


def test_continue_advances_cursor(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx, make_plan(*[subtask(i, "coding", outputs=[f"o{i}"]) for i in (1, 2)]))
    decision = route(state, ctx, ok_outcome(1), RouterDecision(Verdict.CONTINUE))
    assert decision.verdict is Verdict.CONTINUE
    cstate = load_coder(state)
    assert cstate.current == 2
    assert cstate.completed == [1]
    assert state.subtask_index == 2


def test_validation_failure_overrides_continue(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx)
    decision = route(state, ctx, ok_outcome(validated=False), RouterDecision(Verdict.CONTINUE))
    assert decision.verdict is Verdict.REDO
    assert "override" in decision.rationale
    assert load_coder(state).refinements["1"] == 1


def test_last_subtask_continue_ends_all_completed(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx)
    decision = route(state, ctx, ok_outcome(1), RouterDecision(Verdict.CONTINUE))
    assert decision.verdict is Verdict.END
    assert decision.rationale == "all subtasks completed"
    assert load_coder(state).stop_reason == "all_done"


def test_alter_plan_stops(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx)
    decision = route(
        state, ctx, ok_outcome(1), RouterDecision(Verdict.ALTER_PLAN, "need new plan")
    )
    assert decision.verdict is Verdict.ALTER_PLAN
    assert load_coder(state).stop_reason == "alter_plan"


def test_third_redo_exhausts_budget(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx)
    route(state, ctx, ok_outcome(validated=False), RouterDecision(Verdict.REDO))
    route(state, ctx, ok_outcome(validated=False), RouterDecision(Verdict.REDO))
    with pytest.raises(RefinementBudgetExhausted):
        route(state, ctx, ok_outcome(validated=False), RouterDecision(Verdict.REDO))


# --- redo vs fix workspace semantics ---------------------------------------------------

def test_redo_restores_pristine_workspace_fix_retains(ctx_factory):
    # fix and redo are model-requested reworks of *validated* attempts; the
    # observable distinction is whether attempt-1 files survive.
    leave_marker = (
        "open('marker.txt', 'w').write('attempt1')\n"
        "open('out.txt', 'w').write('v1')\n"
    )
    second_look = (
        "import os\n"
        "open('saw_marker.txt', 'w').write(str(os.path.exists('marker.txt')))\n"
        "open('out.txt', 'w').write('v2')\n"
    )
    third_look = (
        "import os\n"
        "open('saw_marker2.txt', 'w').write(str(os.path.exists('marker.txt')))\n"
        "open('out.txt', 'w').write('v3')\n"
    )
    ctx = ctx_factory(
        gateway=scripted(
            {Role.BASE: [text_entry(leave_marker), text_entry(second_look), text_entry(third_look)]}
        )
    )
    state = seeded(ctx, make_plan(subtask(1, "coding", outputs=["out.txt"]),
                                  subtask(2, "writing", outputs=["m"])))

    attempt_subtask(state, ctx, state.plan.subtask(1))  # leaves marker.txt
    route(state, ctx, ok_outcome(), RouterDecision(Verdict.FIX, "polish the styling"))
    attempt_subtask(state, ctx, state.plan.subtask(1))  # fix: marker retained
    assert (ctx.workspace / "saw_marker.txt").read_text() == "True"

    route(state, ctx, ok_outcome(), RouterDecision(Verdict.REDO, "start over"))
    attempt_subtask(state, ctx, state.plan.subtask(1))  # redo: pristine snapshot
    assert (ctx.workspace / "saw_marker2.txt").read_text() == "False"
    assert not (ctx.workspace / "marker.txt").exists()
    assert not (ctx.workspace / "saw_marker.txt").exists()


# --- conclude ---------------------------------------------------------------------------

def test_conclude_all_done(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx)
    cstate = load_coder(state)
    cstate.completed = [1]
    cstate.stop_reason = "all_done"
    save_coder(state, cstate)
    summary = conclude(state, ctx)
    assert summary.completed == [1]
    assert summary.stop_reason == "all_done"
    assert state.artifact_by_name("coder_summary") is not None


def test_conclude_flags_unresolved(ctx_factory):
    ctx = ctx_factory()
    state = seeded(ctx)
    cstate = load_coder(state)
    cstate.unresolved = [1]
    cstate.errors = ["refinement_budget_exhausted: subtask 1"]
    cstate.stop_reason = "refinement_budget_exhausted"
    save_coder(state, cstate)
    summary = conclude(state, ctx)
    assert summary.unresolved == [1]
    assert summary.stop_reason == "refinement_budget_exhausted"


# --- full pipeline -----------------------------------------------------------------------

def test_happy_pipeline_topology_and_events(ctx_factory):
    ctx = ctx_factory(
        gateway=scripted(
            {
                Role.BASE: [text_entry(PLOT_SCRIPT)],
                Role.VISION: [{"match": {}, "respond": {"vision": {"issues": []}}}],
                Role.ROUTER: [decision_entry("continue")],
            }
        )
    )
    state = SharedState(run_id="coder-pipe")
    state.plan = coding_plan()
    final, events = run(build_coder_graph(), state, FAST, RunLimits(), ctx)
    assert final.status is RunStatus.STOPPED
    assert [e.node for e in events] == [
        "coder_plan_read",
        "coder_coding",
        "coder_vision_check",
        "coder_concluder",
    ]
    assert events[-1].decision.verdict is Verdict.END
    assert load_coder(final).stop_reason == "all_done"


def test_adversarial_always_failing_makes_exactly_three_attempts(ctx_factory):
    ctx = ctx_factory(
        gateway=scripted(
            {
                Role.BASE: [text_entry(FAIL_SCRIPT) for _ in range(3)],
                Role.ROUTER: [decision_entry("redo") for _ in range(3)],
            }
        )
    )
    state = SharedState(run_id="coder-adversarial")
    state.plan = coding_plan()
    final, events = run(
        build_coder_graph(max_refinements=2), state, FAST, RunLimits(), ctx
    )
    assert final.status is RunStatus.STOPPED
    coding_events = [e for e in events if e.node == "coder_coding"]
    assert len(coding_events) == 3  # 1 initial + 2 refinements, then the cap
    cstate = load_coder(final)
    assert cstate.attempts == {"1": 3}
    assert cstate.unresolved == [1]
    assert cstate.stop_reason == "refinement_budget_exhausted"
    assert any("refinement_budget_exhausted" in err for err in cstate.errors)
    summary = final.artifact_by_name("coder_summary")
    assert summary is not None


def test_pipeline_alter_plan_stops_run(ctx_factory):
    ctx = ctx_factory(
        gateway=scripted(
            {
                Role.BASE: [text_entry(PLOT_SCRIPT)],
                Role.VISION: [{"match": {}, "respond": {"vision": {"issues": []}}}],
                Role.ROUTER: [decision_entry("alter_plan")],
            }
        )
    )
    state = SharedState(run_id="coder-alter")
    state.plan = coding_plan()
    final, events = run(build_coder_graph(), state, FAST, RunLimits(), ctx)
    assert final.status is RunStatus.STOPPED
    assert events[-1].decision.verdict is Verdict.ALTER_PLAN
    assert load_coder(final).stop_reason == "alter_plan"
