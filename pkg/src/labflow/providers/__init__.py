"""Model gateways: role indirection, budgets, scripted mocks, vision review."""

from .base import (
    DEFAULT_VISION_RUBRIC,
    CallBudget,
    ChatExchange,
    ChatRequest,
    ChatResponse,
    Gateway,
    Role,
    RoleConfig,
    ToolCallRequest,
    VisionIssue,
    VisionVerdict,
    call_counter,
    parse_decision,
    request_decision,
)
from .live import HttpGateway
from .script import ProviderScript, ScriptedGateway, ScriptEntry, dump_script, load_script

__all__ = [
    "CallBudget",
    "ChatExchange",
    "ChatRequest",
    "ChatResponse",
    "DEFAULT_VISION_RUBRIC",
    "Gateway",
    "HttpGateway",
    "ProviderScript",
    "Role",
    "RoleConfig",
    "ScriptEntry",
    "ScriptedGateway",
    "ToolCallRequest",
    "VisionIssue",
    "VisionVerdict",
    "call_counter",
    "dump_script",
    "load_script",
    "parse_decision",
    "request_decision",
]
