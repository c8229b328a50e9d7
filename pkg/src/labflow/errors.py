"""Error taxonomy shared by every labflow module.

Each error carries a stable ``kind`` string used by the engine retry policy
and by event-log outcome encoding (``error:<kind>``). Only kinds listed in
``RetryPolicy.retryable_kinds`` are ever retried.
"""

from __future__ import annotations

from typing import Any


class LabflowError(Exception):
    """Base class; ``kind`` is the machine-readable failure code."""

    kind = "error"

    def __init__(self, message: str = "", **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:  # pragma: no cover - repr plumbing
        if self.details:
            extras = ", ".join(f"{k}={v!r}" for k, v in self.details.items())
            return f"{self.message} ({extras})" if self.message else extras
        return self.message


# --- engine ---------------------------------------------------------------

class GraphValidationError(LabflowError):
    """Raised by build_graph; ``findings`` lists every structural problem."""

    kind = "graph_validation"

    def __init__(self, findings: list[GraphFinding]) -> None:
        super().__init__("; ".join(str(f) for f in findings))
        self.findings = findings


class GraphFinding:
    """One structural defect: code in {duplicate_node, dangling_edge,
    unreachable_node, conflicting_edges, dead_end, no_entry}."""

    def __init__(self, code: str, subject: str, detail: str = "") -> None:
        self.code = code
        self.subject = subject
        self.detail = detail

    def __str__(self) -> str:
        return f"{self.code}({self.subject})" + (f": {self.detail}" if self.detail else "")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GraphFinding) and (self.code, self.subject) == (
            other.code,
            other.subject,
        )


class StepBudgetExhausted(LabflowError):
    kind = "step_budget_exhausted"


class NodeFailure(LabflowError):
    kind = "node_failure"


class RouterParseFailure(LabflowError):
    kind = "router_parse_failure"


class RoutingError(LabflowError):
    """Router produced a verdict with no registered target node."""

    kind = "routing_error"


class StateInvariantViolation(LabflowError):
    """A node decreased a counter or removed an artifact."""

    kind = "state_invariant"


class CorruptCheckpoint(LabflowError):
    kind = "corrupt_checkpoint"


class VersionMismatch(LabflowError):
    kind = "checkpoint_version_mismatch"


# --- providers --------------------------------------------------------------

class BudgetExhausted(LabflowError):
    kind = "budget_exhausted"


class TransportError(LabflowError):
    kind = "transport"


class MalformedResponse(LabflowError):
    kind = "malformed_response"


class UnmatchedRequest(LabflowError):
    kind = "unmatched_request"


class ScriptParseError(LabflowError):
    kind = "script_parse"


class UnreadableImage(LabflowError):
    kind = "unreadable_image"


# --- toolkit ----------------------------------------------------------------

class DuplicateToolName(LabflowError):
    kind = "duplicate_tool"


class UnknownTool(LabflowError):
    kind = "unknown_tool"


class ArgValidation(LabflowError):
    kind = "arg_validation"


class ToolFailure(LabflowError):
    kind = "tool_failure"


class SandboxTimeout(LabflowError):
    kind = "sandbox_timeout"


class SandboxUnavailable(LabflowError):
    kind = "sandbox_unavailable"


class StorageFailure(LabflowError):
    kind = "storage"


# --- agents -----------------------------------------------------------------

class ModelRefusal(LabflowError):
    """Model output stayed unusable after the single permitted retry."""

    kind = "model_refusal"


class PlanRejected(LabflowError):
    kind = "plan_rejected"


class EmptyPlan(PlanRejected):
    kind = "empty_plan"


class OversizedPlan(PlanRejected):
    kind = "oversized_plan"


class InvalidPlan(PlanRejected):
    """EmptyPlan-class validation failure; ``findings`` names the offenders."""

    kind = "invalid_plan"

    def __init__(self, findings: list[Any]) -> None:
        super().__init__("; ".join(str(f) for f in findings))
        self.findings = findings


class AnalyzerStalled(LabflowError):
    kind = "analyzer_stalled"


class DanglingReference(LabflowError):
    kind = "dangling_reference"


class RefinementBudgetExhausted(LabflowError):
    kind = "refinement_budget_exhausted"


class UnknownLabel(LabflowError):
    kind = "unknown_label"


class CompilerUnavailable(LabflowError):
    kind = "compiler_unavailable"


# --- quality / judge / cli ----------------------------------------------------

class RegistryUnavailable(LabflowError):
    kind = "registry_unavailable"


class ScoreOutOfRange(LabflowError):
    kind = "score_out_of_range"


class CatalogMissing(LabflowError):
    kind = "catalog_missing"


class MissingArtifacts(LabflowError):
    kind = "missing_artifacts"


class NoSuchRun(LabflowError):
    kind = "no_such_run"


class ConfigError(LabflowError):
    kind = "config"
