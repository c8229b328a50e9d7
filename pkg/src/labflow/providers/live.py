"""Thin HTTP gateway for live endpoints.

Kept deliberately small: deterministic decoding settings, base64 image
payloads, API keys only from environment variables. The deterministic test
suite never touches this path; scripted gateways stand in for it.
"""

from __future__ import annotations

import base64
import os
from typing import Optional

import httpx

from ..errors import MalformedResponse, TransportError
from ..engine.state import Artifact, SharedState
from ..engine.store import ArtifactStore
from .base import (
    CallBudget,
    ChatRequest,
    ChatResponse,
    Gateway,
    Role,
    RoleConfig,
    ToolCallRequest,
    VisionIssue,
    VisionVerdict,
)

_DECODING = {"temperature": 0.0, "top_p": 1.0}


class HttpGateway(Gateway):
    def __init__(
        self,
        roles: dict[Role, RoleConfig],
        store: ArtifactStore,
        budgets: Optional[dict[Role, CallBudget]] = None,
        timeout_s: float = 60.0,
    ) -> None:
        super().__init__(budgets or {r: c.budget for r, c in roles.items()})
        self.roles = dict(roles)
        self.store = store
        self.timeout_s = timeout_s

    def _headers(self, cfg: RoleConfig) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if cfg.api_key_env:
            key = os.environ.get(cfg.api_key_env, "")
            if key:
                headers["authorization"] = f"Bearer {key}"
        return headers

    def _post(self, cfg: RoleConfig, payload: dict) -> dict:
        try:
            reply = httpx.post(
                cfg.endpoint, json=payload, headers=self._headers(cfg), timeout=self.timeout_s
            )
            reply.raise_for_status()
            return reply.json()
        except httpx.HTTPError as exc:
            raise TransportError(f"endpoint {cfg.endpoint}: {exc}") from exc

    def _complete(
        self, state: SharedState, role: Role, request: ChatRequest
    ) -> tuple[ChatResponse, dict[str, int]]:
        cfg = self.roles.get(role)
        if cfg is None or not cfg.endpoint:
            raise TransportError(f"no endpoint configured for role {role.value}")
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "system", "content": request.system}, *request.messages],
            "tools": [
                {
                    "name": t.name,
                    "description": t.description,
                    "parameters": [p.name for p in t.params],
                }
                for t in request.tools_offered
            ],
            **_DECODING,
        }
        body = self._post(cfg, payload)
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected completion payload: {exc}") from exc
        tool_calls = [
            ToolCallRequest(name=c["name"], args=c.get("arguments", {}))
            for c in message.get("tool_calls", ())
        ]
        response = ChatResponse(text=message.get("content") or "", tool_calls=tool_calls)
        usage = {k: int(v) for k, v in body.get("usage", {}).items()}
        return response, usage

    def _review(self, state: SharedState, artifact: Artifact, rubric: str) -> VisionVerdict:
        cfg = self.roles.get(Role.VISION)
        if cfg is None or not cfg.endpoint:
            raise TransportError("no endpoint configured for role vision")
        image_b64 = base64.b64encode(self.store.get_bytes(artifact)).decode("ascii")
        body = self._post(
            cfg,
            {
                "model": cfg.model_name,
                "messages": [
                    {"role": "system", "content": rubric},
                    {
                        "role": "user",
                        "content": [
                            {"type": "image", "media_type": artifact.media_type, "data": image_b64}
                        ],
                    },
                ],
                **_DECODING,
            },
        )
        issues = tuple(
            VisionIssue(severity=i.get("severity", "minor"), description=i.get("description", ""))
            for i in body.get("issues", ())
        )
        return VisionVerdict.from_issues(issues, artifact.id)
