"""Tool registry, fixture search tools, code sandbox, report persistence."""

from .registry import ToolParam, ToolRegistry, ToolResult, ToolSchema
from .reports import persist_report
from .sandbox import CodeTask, ExecutionResult, sandbox_execute, snapshot_files
from .search import (
    SEARCH_TOOL_NAMES,
    FixtureSearchTool,
    SearchResult,
    normalize_query,
    register_search_tools,
    search_tool_schema,
)

__all__ = [
    "CodeTask",
    "ExecutionResult",
    "FixtureSearchTool",
    "SEARCH_TOOL_NAMES",
    "SearchResult",
    "ToolParam",
    "ToolRegistry",
    "ToolResult",
    "ToolSchema",
    "normalize_query",
    "persist_report",
    "register_search_tools",
    "sandbox_execute",
    "search_tool_schema",
    "snapshot_files",
]
