"""Directed-graph workflow engine with routing, retries, events, checkpoints."""

from .checkpoint import checkpoint_restore, checkpoint_save, load_checkpoint
from .events import EventRecord, decode_log, digest_sequence, encode_log
from .graph import GraphBuilder, NodeSpec, RouterBinding, WorkflowGraph, build_graph
from .runner import EPOCH_ISO, RetryPolicy, RunContext, RunLimits, run, step
from .state import (
    STOP,
    Artifact,
    ArtifactId,
    Message,
    NodeId,
    RouterDecision,
    RunStatus,
    SharedState,
    Verdict,
)
from .store import ArtifactStore

__all__ = [
    "Artifact",
    "ArtifactId",
    "ArtifactStore",
    "EPOCH_ISO",
    "EventRecord",
    "GraphBuilder",
    "Message",
    "NodeId",
    "NodeSpec",
    "RetryPolicy",
    "RouterBinding",
    "RouterDecision",
    "RunContext",
    "RunLimits",
    "RunStatus",
    "STOP",
    "SharedState",
    "Verdict",
    "WorkflowGraph",
    "build_graph",
    "checkpoint_restore",
    "checkpoint_save",
    "decode_log",
    "digest_sequence",
    "encode_log",
    "load_checkpoint",
    "run",
    "step",
]
