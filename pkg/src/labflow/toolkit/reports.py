"""Report persistence: consolidated documents land in the artifact store
and are linked into the shared state for downstream consumption."""

from __future__ import annotations

from ..engine.state import ArtifactId, SharedState
from ..engine.store import ArtifactStore

REPORT_KINDS = ("literature", "analysis")


def persist_report(
    state: SharedState,
    store: ArtifactStore,
    report: str,
    kind: str,
    *,
    name: str = "",
    provenance: tuple[ArtifactId, ...] = (),
) -> ArtifactId:
    if kind not in REPORT_KINDS:
        raise ValueError(f"report kind must be one of {REPORT_KINDS}, got {kind!r}")
    if not report.strip():
        raise ValueError("report must be non-empty")
    artifact = store.put(
        report.encode("utf-8"),
        kind="report",
        name=name or f"{kind}_report",
        media_type="text/markdown",
        provenance=provenance,
        meta={"report_kind": kind},
    )
    state.add_artifact(artifact)
    return artifact.id
