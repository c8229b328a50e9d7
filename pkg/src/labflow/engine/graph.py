"""Directed workflow graphs with conditional routing.

A node is a callable over the shared state; control flow leaves a node
either through exactly one unconditional edge, through exactly one router
binding (a decision callable plus a verdict->target map), or not at all
(exit nodes). ``build_graph`` validates the whole structure up front so no
partial graph ever reaches the runner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Mapping

from ..errors import GraphFinding, GraphValidationError
from .state import STOP, NodeId, RouterDecision, SharedState

if TYPE_CHECKING:  # pragma: no cover
    from .runner import RunContext

NodeFn = Callable[[SharedState, "RunContext"], None]
DecideFn = Callable[[SharedState, "RunContext"], RouterDecision]


@dataclass(frozen=True)
class NodeSpec:
    name: NodeId
    fn: NodeFn


@dataclass(frozen=True)
class RouterBinding:
    """Conditional edge: ``decide`` yields a verdict, ``targets`` maps each
    expected verdict value to the next node (or STOP)."""

    node: NodeId
    decide: DecideFn
    targets: Mapping[str, NodeId]


@dataclass(frozen=True)
class WorkflowGraph:
    nodes: Mapping[NodeId, NodeSpec]
    edges: Mapping[NodeId, NodeId]
    routers: Mapping[NodeId, RouterBinding]
    entry: NodeId
    exits: frozenset[NodeId]

    def __len__(self) -> int:
        return len(self.nodes)


def build_graph(
    specs: Iterable[NodeSpec],
    edges: Iterable[tuple[NodeId, NodeId]],
    routers: Iterable[RouterBinding] = (),
    *,
    entry: NodeId,
    exits: Iterable[NodeId],
) -> WorkflowGraph:
    """Validate and assemble a workflow graph.

    Raises GraphValidationError collecting every finding: duplicate nodes,
    dangling edge endpoints or router targets, conflicting edge kinds,
    non-exit dead ends, and nodes unreachable from the entry.
    """
    findings: list[GraphFinding] = []

    nodes: dict[NodeId, NodeSpec] = {}
    for spec in specs:
        if spec.name in nodes:
            findings.append(GraphFinding("duplicate_node", spec.name))
        nodes[spec.name] = spec
    if not nodes:
        raise GraphValidationError([GraphFinding("no_entry", entry, "graph has no nodes")])

    exit_set = frozenset(exits)
    if entry not in nodes:
        findings.append(GraphFinding("no_entry", entry, "entry is not a node"))
    for ex in exit_set:
        if ex not in nodes:
            findings.append(GraphFinding("dangling_edge", ex, "exit is not a node"))

    edge_map: dict[NodeId, NodeId] = {}
    for src, dst in edges:
        for endpoint in (src, dst):
            if endpoint not in nodes:
                findings.append(GraphFinding("dangling_edge", endpoint))
        if src in edge_map:
            findings.append(GraphFinding("conflicting_edges", src, "two unconditional edges"))
        edge_map[src] = dst

    router_map: dict[NodeId, RouterBinding] = {}
    for binding in routers:
        if binding.node not in nodes:
            findings.append(GraphFinding("dangling_edge", binding.node, "router on unknown node"))
        if binding.node in router_map:
            findings.append(GraphFinding("conflicting_edges", binding.node, "two router bindings"))
        if binding.node in edge_map:
            findings.append(
                GraphFinding("conflicting_edges", binding.node, "edge and router on same node")
            )
        for verdict, target in binding.targets.items():
            if target != STOP and target not in nodes:
                findings.append(
                    GraphFinding("dangling_edge", target, f"router target for {verdict!r}")
                )
        router_map[binding.node] = binding

    for name in nodes:
        if name not in exit_set and name not in edge_map and name not in router_map:
            findings.append(GraphFinding("dead_end", name, "non-exit node with no outgoing edge"))

    if not findings:
        reachable = {entry}
        frontier = [entry]
        while frontier:
            current = frontier.pop()
            nexts: list[NodeId] = []
            if current in edge_map:
                nexts.append(edge_map[current])
            if current in router_map:
                nexts.extend(t for t in router_map[current].targets.values() if t != STOP)
            for nxt in nexts:
                if nxt not in reachable:
                    reachable.add(nxt)
                    frontier.append(nxt)
        for name in nodes:
            if name not in reachable:
                findings.append(GraphFinding("unreachable_node", name))

    if findings:
        raise GraphValidationError(findings)
    return WorkflowGraph(
        nodes=nodes, edges=edge_map, routers=router_map, entry=entry, exits=exit_set
    )


@dataclass
class GraphBuilder:
    """Incremental assembly helper used by the pipeline composers."""

    specs: list[NodeSpec] = field(default_factory=list)
    edges: list[tuple[NodeId, NodeId]] = field(default_factory=list)
    routers: list[RouterBinding] = field(default_factory=list)
    entry: NodeId | None = None
    exits: list[NodeId] = field(default_factory=list)

    def add_node(self, name: NodeId, fn: NodeFn) -> NodeId:
        self.specs.append(NodeSpec(name, fn))
        return name

    def add_edge(self, src: NodeId, dst: NodeId) -> None:
        self.edges.append((src, dst))

    def add_router(self, node: NodeId, decide: DecideFn, targets: Mapping[str, NodeId]) -> None:
        self.routers.append(RouterBinding(node, decide, dict(targets)))

    def set_entry(self, name: NodeId) -> None:
        self.entry = name

    def add_exit(self, name: NodeId) -> None:
        self.exits.append(name)

    def build(self) -> WorkflowGraph:
        if self.entry is None:
            raise GraphValidationError([GraphFinding("no_entry", "", "entry never designated")])
        return build_graph(
            self.specs, self.edges, self.routers, entry=self.entry, exits=self.exits
        )
