"""Run configuration: TOML file + flag overrides (flags win).

Scripted mode — the CI default — requires a script path for every model
role the pipeline uses; missing ones are a configuration error (CLI exit
code 2). Relative paths are resolved against the config file's directory
so run directories can be relocated.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):  # pragma: no cover
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .providers.base import Role

ROLES_USED = (Role.SEARCH, Role.WRITE, Role.BASE, Role.ROUTER, Role.VISION)

DEFAULT_LIMITS = {
    "k_min": 3,
    "k_max": 0,  # 0 -> derived as 3 * k_min
    "max_refinements": 2,
    "max_polish": 2,
    "max_total_steps": 200,
    "sandbox_timeout_s": 30.0,
    "analyzer_loop_cap": 4,
    "latex_timeout_s": 120.0,
}

CONFIG_SNAPSHOT = "config.json"


@dataclass
class RunConfig:
    idea: str
    dataset_paths: list[str] = field(default_factory=list)
    constraints: str = ""
    mode: str = "scripted"
    run_id: str = "run"
    limits: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_LIMITS))
    script_paths: dict[str, str] = field(default_factory=dict)
    tool_fixtures: dict[str, str] = field(default_factory=dict)
    registry_fixtures: dict[str, str] = field(default_factory=dict)
    providers: dict[str, dict[str, str]] = field(default_factory=dict)
    budgets: dict[str, int] = field(default_factory=dict)
    latex_command: Optional[str] = None

    def limit(self, name: str) -> Any:
        return self.limits.get(name, DEFAULT_LIMITS[name])

    def k_max(self) -> int:
        explicit = int(self.limit("k_max"))
        return explicit if explicit > 0 else 3 * int(self.limit("k_min"))

    def validate(self) -> None:
        if not self.idea.strip():
            raise ConfigError("idea must be non-empty")
        if self.mode not in ("scripted", "live"):
            raise ConfigError(f"mode must be scripted or live, got {self.mode!r}")
        for name in ("k_min", "max_refinements", "max_polish", "max_total_steps"):
            if int(self.limit(name)) <= 0 and name != "max_refinements" and name != "max_polish":
                raise ConfigError(f"limit {name} must be positive")
            if int(self.limit(name)) < 0:
                raise ConfigError(f"limit {name} must be non-negative")
        if float(self.limit("sandbox_timeout_s")) <= 0:
            raise ConfigError("sandbox_timeout_s must be positive")
        if self.mode == "scripted":
            missing = [r.value for r in ROLES_USED if r.value not in self.script_paths]
            if missing:
                raise ConfigError(
                    f"scripted mode requires script paths for roles: {', '.join(missing)}"
                )
        for path in self.dataset_paths:
            if not Path(path).is_file():
                raise ConfigError(f"dataset file not found: {path}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "idea": self.idea,
            "dataset_paths": self.dataset_paths,
            "constraints": self.constraints,
            "mode": self.mode,
            "run_id": self.run_id,
            "limits": self.limits,
            "script_paths": self.script_paths,
            "tool_fixtures": self.tool_fixtures,
            "registry_fixtures": self.registry_fixtures,
            "providers": self.providers,
            "budgets": self.budgets,
            "latex_command": self.latex_command,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        cfg = cls(idea=d.get("idea", ""))
        for name in (
            "dataset_paths",
            "constraints",
            "mode",
            "run_id",
            "script_paths",
            "tool_fixtures",
            "registry_fixtures",
            "providers",
            "budgets",
            "latex_command",
        ):
            if name in d and d[name] is not None:
                setattr(cfg, name, d[name])
        cfg.limits = {**DEFAULT_LIMITS, **d.get("limits", {})}
        return cfg


def _resolve_paths(cfg: RunConfig, base: Path) -> None:
    def resolve(p: str) -> str:
        path = Path(p)
        return str(path if path.is_absolute() else (base / path).resolve())

    cfg.dataset_paths = [resolve(p) for p in cfg.dataset_paths]
    cfg.script_paths = {k: resolve(v) for k, v in cfg.script_paths.items()}
    cfg.tool_fixtures = {k: resolve(v) for k, v in cfg.tool_fixtures.items()}
    cfg.registry_fixtures = {k: resolve(v) for k, v in cfg.registry_fixtures.items()}


def load_config(path: Optional[Path], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    data: dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
        base = Path(path).resolve().parent

    idea = data.get("idea", "")
    if not idea and data.get("idea_file"):
        idea_path = Path(data["idea_file"])
        if not idea_path.is_absolute():
            idea_path = base / idea_path
        idea = idea_path.read_text(encoding="utf-8").strip()

    latex = data.get("latex", {})
    cfg = RunConfig(
        idea=idea,
        dataset_paths=list(data.get("dataset_paths", ())),
        constraints=data.get("constraints", ""),
        mode=data.get("mode", "scripted"),
        run_id=data.get("run_id", "run"),
        limits={**DEFAULT_LIMITS, **data.get("limits", {})},
        script_paths=dict(data.get("scripts", {})),
        tool_fixtures=dict(data.get("tool_fixtures", {})),
        registry_fixtures=dict(data.get("registry_fixtures", {})),
        providers=dict(data.get("providers", {})),
        budgets={k: int(v) for k, v in data.get("budgets", {}).items()},
        latex_command=latex.get("command"),
    )
    _resolve_paths(cfg, base)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in DEFAULT_LIMITS:
            cfg.limits[key] = value
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config override {key!r}")
    cfg.validate()
    return cfg


def save_snapshot(cfg: RunConfig, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / CONFIG_SNAPSHOT).write_text(
        json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8"
    )


def load_snapshot(run_dir: Path) -> RunConfig:
    path = Path(run_dir) / CONFIG_SNAPSHOT
    if not path.is_file():
        raise ConfigError(f"no config snapshot at {path}")
    cfg = RunConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))
    cfg.validate()
    return cfg
