"""Quality control passes: rigor rules, evidence traceability, citation
verification. ``run_quality_checks`` drives all three over a run directory
and leaves rigor.json, traceability.json, citations.json plus the cleaned
ref.bib (original backed up as ref.bib.orig)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

from ..engine.runner import RunContext
from ..engine.state import SharedState
from .citations import (
    STATUS_CORRECTED,
    STATUS_UNVERIFIABLE,
    STATUS_VERIFIED,
    CitationRecord,
    DoiRegistryClient,
    FixtureRegistryClient,
    PreprintArchiveClient,
    RegistryClient,
    RegistryRecord,
    clean_bibliography,
    normalize,
    title_similarity,
    verify_citations,
)
from .rigor import (
    RULE_DATA_LEAKAGE,
    RULE_FEATURE_TIMING,
    RULE_TEMPORAL_VIOLATION,
    RULE_UNREALISTIC_METRIC,
    RigorFinding,
    RigorReport,
    RunBundle,
    rigor_check,
)
from .trace import (
    TraceabilityReport,
    build_traceability,
    claim_paragraph_count,
    is_claim_paragraph,
    split_paragraphs,
)

__all__ = [
    "CitationRecord",
    "DoiRegistryClient",
    "FixtureRegistryClient",
    "PreprintArchiveClient",
    "RegistryClient",
    "RegistryRecord",
    "RigorFinding",
    "RigorReport",
    "RULE_DATA_LEAKAGE",
    "RULE_FEATURE_TIMING",
    "RULE_TEMPORAL_VIOLATION",
    "RULE_UNREALISTIC_METRIC",
    "RunBundle",
    "STATUS_CORRECTED",
    "STATUS_UNVERIFIABLE",
    "STATUS_VERIFIED",
    "TraceabilityReport",
    "build_traceability",
    "claim_paragraph_count",
    "clean_bibliography",
    "is_claim_paragraph",
    "normalize",
    "rigor_check",
    "run_quality_checks",
    "split_paragraphs",
    "title_similarity",
    "verify_citations",
]


def registry_clients_from_settings(settings: dict) -> list[RegistryClient]:
    fixtures = settings.get("registry_fixtures", {})
    clients: list[RegistryClient] = []
    for source in ("doi_registry", "preprint_archive", "web"):
        path = fixtures.get(source)
        if path:
            clients.append(FixtureRegistryClient(source, Path(path)))
    if not clients and settings.get("mode") == "live":
        clients = [DoiRegistryClient(), PreprintArchiveClient()]
    return clients


def run_quality_checks(
    state: SharedState,
    ctx: RunContext,
    clients: Optional[Sequence[RegistryClient]] = None,
) -> None:
    run_dir = Path(ctx.run_dir) if ctx.run_dir is not None else None
    workspace = Path(ctx.workspace) if ctx.workspace is not None else None
    if run_dir is None or workspace is None:
        return

    report = rigor_check(RunBundle(workspace=workspace, run_dir=run_dir))
    (run_dir / "rigor.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )

    tex_path = run_dir / "paper.tex"
    trace = (
        build_traceability(tex_path.read_text(encoding="utf-8"))
        if tex_path.is_file()
        else TraceabilityReport()
    )
    (run_dir / "traceability.json").write_text(
        json.dumps(trace.to_dict(), indent=2) + "\n", encoding="utf-8"
    )

    if clients is None:
        clients = registry_clients_from_settings(ctx.settings)
    bib_path = run_dir / "ref.bib"
    records: list[CitationRecord] = []
    if bib_path.is_file() and clients:
        original = bib_path.read_text(encoding="utf-8")
        records, cleaned = clean_bibliography(original, clients)
        (run_dir / "ref.bib.orig").write_text(original, encoding="utf-8")
        bib_path.write_text(cleaned, encoding="utf-8")
    (run_dir / "citations.json").write_text(
        json.dumps([r.to_dict() for r in records], indent=2) + "\n", encoding="utf-8"
    )
    state.scratch["quality"] = {
        "rigor_findings": len(report.findings),
        "trace_entries": len(trace.entries),
        "trace_orphans": len(trace.orphans),
        "citations": {r.key: r.status for r in records},
    }
