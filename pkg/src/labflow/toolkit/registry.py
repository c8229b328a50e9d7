"""Tool registry: schema-validated invocation with artifact-backed results.

Every successful invoke stores its payload as a content-addressed artifact
and increments the run's ``tool_calls`` counter by exactly one, which is
the accounting the literature loop's stopping criterion reads.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Optional

from ..errors import ArgValidation, DuplicateToolName, UnknownTool
from ..jsonutil import canonical_dumps
from ..engine.state import Artifact, SharedState
from ..engine.store import ArtifactStore
from ..providers.base import ToolCallRequest

_TYPE_CHECKS: dict[str, tuple[type, ...]] = {
    "string": (str,),
    "integer": (int,),
    "number": (int, float),
    "boolean": (bool,),
    "array": (list,),
    "object": (dict,),
}


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str = "string"
    required: bool = True


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    params: tuple[ToolParam, ...] = ()
    side_effects: str = "none"  # none | filesystem | network


@dataclass
class ToolResult:
    tool: str
    args: dict[str, Any]
    payload: Any
    artifact: Artifact


ToolImpl = Callable[[dict[str, Any]], Any]


@dataclass
class _Registered:
    schema: ToolSchema
    impl: ToolImpl


class ToolRegistry:
    def __init__(self) -> None:
        self._tools: dict[str, _Registered] = {}
        self._lock = threading.Lock()

    def register(self, schema: ToolSchema, impl: ToolImpl) -> "ToolRegistry":
        with self._lock:
            if schema.name in self._tools:
                raise DuplicateToolName(schema.name)
            self._tools[schema.name] = _Registered(schema=schema, impl=impl)
        return self

    def schemas(self) -> list[ToolSchema]:
        return [t.schema for t in self._tools.values()]

    def schema(self, name: str) -> Optional[ToolSchema]:
        reg = self._tools.get(name)
        return reg.schema if reg else None

    def validate_args(self, schema: ToolSchema, args: dict[str, Any]) -> None:
        known = {p.name: p for p in schema.params}
        for name in args:
            if name not in known:
                raise ArgValidation(f"unknown argument {name!r} for tool {schema.name}")
        for param in schema.params:
            if param.name not in args:
                if param.required:
                    raise ArgValidation(
                        f"missing required argument {param.name!r} for tool {schema.name}"
                    )
                continue
            expected = _TYPE_CHECKS.get(param.type)
            if expected and not isinstance(args[param.name], expected):
                raise ArgValidation(
                    f"argument {param.name!r} of tool {schema.name} must be {param.type}"
                )

    def invoke(self, call: ToolCallRequest, state: SharedState, store: ArtifactStore) -> ToolResult:
        reg = self._tools.get(call.name)
        if reg is None:
            raise UnknownTool(call.name)
        self.validate_args(reg.schema, call.args)
        payload = reg.impl(call.args)
        content = canonical_dumps({"tool": call.name, "args": call.args, "payload": payload})
        artifact = store.put(
            content.encode("utf-8"),
            kind="tool_result",
            name=f"tool:{call.name}",
            media_type="application/json",
        )
        state.add_artifact(artifact)
        state.bump("tool_calls")
        return ToolResult(tool=call.name, args=call.args, payload=payload, artifact=artifact)
