"""Workflow runner: bounded, retried, event-logged execution of a graph.

One run is a single logical thread of control. Each node invocation —
including every retry attempt — appends exactly one event record, so the
log sequence is contiguous from 0 for completed and failed runs alike.
Failures of retryable kinds roll the state back to the pre-attempt
snapshot before the next attempt; anything else fails the run with the
node named in ``state.failure``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Optional

from ..errors import (
    LabflowError,
    NodeFailure,
    RoutingError,
    StepBudgetExhausted,
)
from ..jsonutil import digest_obj
from .events import (
    OUTCOME_OK,
    OUTCOME_RETRIED,
    EventRecord,
    outcome_error,
)
from .graph import WorkflowGraph
from .state import (
    STOP,
    NodeId,
    RouterDecision,
    RunStatus,
    SharedState,
    check_state_invariants,
)

if TYPE_CHECKING:  # pragma: no cover
    from ..providers.base import Gateway
    from ..toolkit.registry import ToolRegistry
    from .store import ArtifactStore

#: Deterministic timestamp injected into state-visible content in scripted mode.
EPOCH_ISO = "1970-01-01T00:00:00+00:00"


def wall_clock() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class RetryPolicy:
    """Bounded retries with a fixed backoff schedule.

    Defaults: 3 attempts, 1 s then 4 s backoff, only transient
    transport/tool failures retried. Router parse failures get their single
    in-protocol retry elsewhere and are final here.
    """

    max_attempts: int = 3
    backoff: tuple[float, ...] = (1.0, 4.0)
    retryable_kinds: frozenset[str] = frozenset({"transport", "tool_failure"})

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(attempt - 1, len(self.backoff) - 1)]

    def retryable(self, kind: str) -> bool:
        return kind in self.retryable_kinds


@dataclass(frozen=True)
class RunLimits:
    """Hard caps turning livelock into a diagnosable failure."""

    max_total_steps: int = 200
    pause_after: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_total_steps <= 0:
            raise ValueError("max_total_steps must be positive")


@dataclass
class RunContext:
    """Everything a node may touch besides the shared state."""

    store: "ArtifactStore"
    gateway: Optional["Gateway"] = None
    tools: Optional["ToolRegistry"] = None
    workspace: Optional[Path] = None
    run_dir: Optional[Path] = None
    settings: dict[str, Any] = field(default_factory=dict)
    clock: Callable[[], str] = lambda: EPOCH_ISO
    sleep: Callable[[float], None] = time.sleep

    def setting(self, key: str, default: Any = None) -> Any:
        return self.settings.get(key, default)


def step(
    graph: WorkflowGraph,
    state: SharedState,
    cursor: NodeId,
    ctx: RunContext,
    *,
    policy: Optional[RetryPolicy] = None,
    seq: int = 0,
    events: Optional[list[EventRecord]] = None,
) -> tuple[SharedState, NodeId, EventRecord]:
    """Execute exactly one node (with retries) and resolve the next node.

    Returns ``(state, next, record)`` where ``next`` is a node id or STOP.
    Intermediate ``retried`` records are appended to ``events`` when given;
    the returned record is the final one. Unrecoverable failures mark the
    state failed, append the error record, and re-raise with ``.state`` and
    ``.record`` attached.
    """
    policy = policy or RetryPolicy()
    if cursor not in graph.nodes:
        raise NodeFailure(f"unknown node {cursor!r}", node=cursor)
    spec = graph.nodes[cursor]
    attempt = 0
    while True:
        attempt += 1
        state.cursor = cursor
        snapshot = state.to_dict()
        input_digest = digest_obj(snapshot)
        # Nodes always run on the canonicalized form, so a restored run is
        # byte-for-byte indistinguishable from the uninterrupted one.
        state = SharedState.from_dict(snapshot)
        decision: Optional[RouterDecision] = None
        try:
            try:
                spec.fn(state, ctx)
            except LabflowError:
                raise
            except Exception as exc:
                raise NodeFailure(f"node {cursor!r} raised {type(exc).__name__}: {exc}") from exc
            if cursor in graph.exits:
                nxt: NodeId = STOP
            elif cursor in graph.edges:
                nxt = graph.edges[cursor]
            else:
                binding = graph.routers[cursor]
                decision = binding.decide(state, ctx)
                target = binding.targets.get(decision.verdict.value)
                if target is None:
                    raise RoutingError(
                        f"no target for verdict {decision.verdict.value!r}",
                        node=cursor,
                    )
                nxt = target
            restored = SharedState.from_dict(snapshot)
            check_state_invariants(restored, state)
        except LabflowError as exc:
            state = SharedState.from_dict(snapshot)
            if policy.retryable(exc.kind) and attempt < policy.max_attempts:
                record = EventRecord(
                    seq=seq,
                    node=cursor,
                    input_digest=input_digest,
                    output_digest=input_digest,
                    outcome=OUTCOME_RETRIED,
                    ts=wall_clock(),
                )
                if events is not None:
                    events.append(record)
                seq += 1
                ctx.sleep(policy.delay(attempt))
                continue
            state.status = RunStatus.FAILED
            state.failure = {"kind": exc.kind, "node": cursor, "detail": str(exc)}
            record = EventRecord(
                seq=seq,
                node=cursor,
                input_digest=input_digest,
                output_digest=state.digest(),
                outcome=outcome_error(exc.kind),
                ts=wall_clock(),
            )
            if events is not None:
                events.append(record)
            exc.state = state  # type: ignore[attr-defined]
            exc.record = record  # type: ignore[attr-defined]
            raise
        record = EventRecord(
            seq=seq,
            node=cursor,
            input_digest=input_digest,
            output_digest=state.digest(),
            outcome=OUTCOME_OK,
            ts=wall_clock(),
            decision=decision,
        )
        if events is not None:
            events.append(record)
        return state, nxt, record


def run(
    graph: WorkflowGraph,
    initial: SharedState,
    policy: Optional[RetryPolicy] = None,
    limits: Optional[RunLimits] = None,
    ctx: Optional[RunContext] = None,
    *,
    events: Optional[list[EventRecord]] = None,
) -> tuple[SharedState, list[EventRecord]]:
    """Drive a validated graph from the state's cursor (or the entry) until
    an exit is executed, an unrecoverable error occurs, the step budget is
    exhausted, or the pause threshold is reached.
    """
    from .checkpoint import persist_run_files  # local import to avoid cycle

    policy = policy or RetryPolicy()
    limits = limits or RunLimits()
    if ctx is None:
        raise ValueError("run requires a RunContext")
    if initial.status is not RunStatus.RUNNING:
        raise ValueError(f"initial state must be running, got {initial.status.value}")

    state = initial
    log: list[EventRecord] = list(events or [])
    cursor: NodeId = state.cursor or graph.entry
    state.cursor = cursor

    while True:
        if limits.pause_after is not None and len(log) >= limits.pause_after:
            persist_run_files(ctx, state, log)
            return state, log
        if len(log) >= limits.max_total_steps:
            exhausted = StepBudgetExhausted(
                f"step budget {limits.max_total_steps} exhausted", node=cursor
            )
            state.status = RunStatus.FAILED
            state.failure = {
                "kind": exhausted.kind,
                "node": cursor,
                "detail": str(exhausted),
            }
            digest = state.digest()
            log.append(
                EventRecord(
                    seq=len(log),
                    node=cursor,
                    input_digest=digest,
                    output_digest=digest,
                    outcome=outcome_error(exhausted.kind),
                    ts=wall_clock(),
                )
            )
            persist_run_files(ctx, state, log)
            return state, log
        try:
            state, nxt, _record = step(
                graph, state, cursor, ctx, policy=policy, seq=len(log), events=log
            )
        except LabflowError as exc:
            state = getattr(exc, "state", state)
            if state.status is RunStatus.RUNNING:
                state.status = RunStatus.FAILED
                state.failure = {"kind": exc.kind, "node": cursor, "detail": str(exc)}
            persist_run_files(ctx, state, log)
            return state, log
        if nxt == STOP:
            state.status = RunStatus.STOPPED
            state.cursor = None
            persist_run_files(ctx, state, log)
            return state, log
        cursor = nxt
        state.cursor = cursor
        persist_run_files(ctx, state, log)
