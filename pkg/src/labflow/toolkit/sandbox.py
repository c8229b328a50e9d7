"""Process-level code execution sandbox.

Contract: run the task's script in its own workspace with a wall-clock
timeout and a stripped environment, then enumerate produced files by
diffing the workspace state before and after. ``validated`` means the
script exited 0 *and* every declared output was actually produced. A
non-zero exit is captured in the result, never raised; only timeouts and a
missing interpreter raise.
"""

from __future__ import annotations

import os
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from ..errors import SandboxTimeout, SandboxUnavailable
from ..jsonutil import digest_file

TAIL_LIMIT = 16 * 1024  # bytes kept from each stream
_SCRIPT_NAME = "__task__.py"


@dataclass(frozen=True)
class CodeTask:
    instructions: str
    workspace: Path
    declared_inputs: tuple[str, ...] = ()
    declared_outputs: tuple[str, ...] = ()
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if not self.instructions.strip():
            raise ValueError("code task instructions must be non-empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        for declared in (*self.declared_inputs, *self.declared_outputs):
            p = Path(declared)
            if p.is_absolute() or ".." in p.parts:
                raise ValueError(f"declared path must be workspace-relative: {declared}")


@dataclass(frozen=True)
class ExecutionResult:
    exit_status: int
    stdout_tail: str
    stderr_tail: str
    produced_files: tuple[tuple[str, str], ...]  # (relative path, sha256)
    duration: float
    validated: bool

    def to_dict(self) -> dict:
        """Digest-stable projection: excludes wall-clock duration."""
        return {
            "exit_status": self.exit_status,
            "stdout_tail": self.stdout_tail,
            "stderr_tail": self.stderr_tail,
            "produced_files": [list(p) for p in self.produced_files],
            "validated": self.validated,
        }


def _tail(data: bytes) -> str:
    return data[-TAIL_LIMIT:].decode("utf-8", errors="replace")


def snapshot_files(workspace: Path) -> dict[str, str]:
    """Relative path -> content digest for every regular file under root."""
    manifest: dict[str, str] = {}
    for path in sorted(workspace.rglob("*")):
        if path.is_file() and path.name != _SCRIPT_NAME:
            manifest[path.relative_to(workspace).as_posix()] = digest_file(path)
    return manifest


def _diff(before: dict[str, str], after: dict[str, str]) -> tuple[tuple[str, str], ...]:
    produced = [
        (path, digest)
        for path, digest in after.items()
        if before.get(path) != digest
    ]
    return tuple(sorted(produced))


def sandbox_execute(task: CodeTask) -> ExecutionResult:
    workspace = Path(task.workspace)
    if not workspace.is_dir():
        raise SandboxUnavailable(f"workspace {workspace} does not exist")

    before = snapshot_files(workspace)
    script = workspace / _SCRIPT_NAME
    script.write_text(task.instructions, encoding="utf-8")

    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": str(workspace),
        "LANG": os.environ.get("LANG", "C.UTF-8"),
        "PYTHONDONTWRITEBYTECODE": "1",
    }
    import time as _time

    started = _time.monotonic()
    try:
        completed = subprocess.run(
            [sys.executable, "-I", _SCRIPT_NAME],
            cwd=workspace,
            env=env,
            capture_output=True,
            timeout=task.timeout,
        )
    except subprocess.TimeoutExpired as exc:
        partial = _diff(before, snapshot_files(workspace))
        raise SandboxTimeout(
            f"script exceeded {task.timeout}s",
            partial_files=[p for p, _ in partial],
        ) from exc
    except OSError as exc:
        raise SandboxUnavailable(f"cannot launch interpreter: {exc}") from exc
    finally:
        try:
            script.unlink()
        except OSError:
            pass
    duration = _time.monotonic() - started

    produced = _diff(before, snapshot_files(workspace))
    produced_paths = {p for p, _ in produced}
    validated = completed.returncode == 0 and all(
        out in produced_paths for out in task.declared_outputs
    )
    return ExecutionResult(
        exit_status=completed.returncode,
        stdout_tail=_tail(completed.stdout),
        stderr_tail=_tail(completed.stderr),
        produced_files=produced,
        duration=duration,
        validated=validated,
    )
