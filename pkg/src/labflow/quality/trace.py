"""Evidence traceability: map claim-bearing manuscript paragraphs to the
artifacts named in their ``% evidence:`` source annotations.

The claim classifier is deliberately mechanical (a paragraph counts as
claim-bearing when its prose contains a number, a figure/table reference,
or a comparative marker) so the report is reproducible; unannotated claim
paragraphs are the orphans — the signal, not an error. Entries plus
orphans partition the claim paragraphs exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

_EVIDENCE_RE = re.compile(r"^\s*%\s*evidence:\s*(.+)$", re.MULTILINE)
_NUMBER_RE = re.compile(r"\d")
_CITE_ARG_RE = re.compile(r"\\cite[a-z]*\{[^}]*\}")
_FIGTAB_REF_RE = re.compile(r"\\ref\{(?:fig|tab):[^}]*\}")
_COMPARATIVE_RE = re.compile(
    r"\b(higher|lower|greater|better|worse|increase[sd]?|decrease[sd]?|"
    r"significant(ly)?|outperform\w*|improve[sd]?|exceed\w*|correlat\w*|"
    r"more than|less than|compared)\b",
    re.IGNORECASE,
)
_COMMAND_ONLY_RE = re.compile(r"^\\[a-zA-Z]+\*?(\[[^\]]*\])?(\{[^}]*\})*\s*$")


@dataclass(frozen=True)
class Paragraph:
    paragraph_id: str
    text: str
    evidence: tuple[str, ...]


@dataclass
class TraceabilityReport:
    entries: list[dict[str, Any]] = field(default_factory=list)
    orphans: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"entries": self.entries, "orphans": self.orphans}


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def document_body(source: str) -> str:
    start = source.find(r"\begin{document}")
    end = source.find(r"\end{document}")
    if start >= 0:
        start += len(r"\begin{document}")
    else:
        start = 0
    if end < 0:
        end = len(source)
    return source[start:end]


def split_paragraphs(source: str) -> list[Paragraph]:
    """Blank-line separated blocks of the document body, keeping their
    evidence annotations; pure-command blocks (sectioning etc.) are skipped."""
    paragraphs: list[Paragraph] = []
    index = 0
    for block in re.split(r"\n\s*\n", document_body(source)):
        if not block.strip():
            continue
        evidence: list[str] = []
        for match in _EVIDENCE_RE.finditer(block):
            evidence.extend(x.strip() for x in match.group(1).split(",") if x.strip())
        prose = _strip_comments(block).strip()
        if not prose:
            continue
        lines = [ln.strip() for ln in prose.splitlines() if ln.strip()]
        if all(_COMMAND_ONLY_RE.match(ln) for ln in lines):
            continue
        paragraphs.append(
            Paragraph(paragraph_id=f"p{index:03d}", text=prose, evidence=tuple(evidence))
        )
        index += 1
    return paragraphs


def is_claim_paragraph(text: str) -> bool:
    """Deterministic classifier: a number, a figure/table reference, or a
    comparative claim marker makes a paragraph claim-bearing. Citation keys
    are masked first — digits inside \\cite arguments are not results."""
    masked = _CITE_ARG_RE.sub(r"\\cite{}", text)
    return bool(
        _NUMBER_RE.search(masked)
        or _FIGTAB_REF_RE.search(masked)
        or _COMPARATIVE_RE.search(masked)
    )


def build_traceability(manuscript_source: str) -> TraceabilityReport:
    report = TraceabilityReport()
    for paragraph in split_paragraphs(manuscript_source):
        if not is_claim_paragraph(paragraph.text):
            continue
        excerpt = " ".join(paragraph.text.split())[:160]
        if paragraph.evidence:
            report.entries.append(
                {
                    "paragraph_id": paragraph.paragraph_id,
                    "claim_excerpt": excerpt,
                    "evidence": list(paragraph.evidence),
                }
            )
        else:
            report.orphans.append(paragraph.paragraph_id)
    return report


def claim_paragraph_count(manuscript_source: str) -> int:
    return sum(
        1 for p in split_paragraphs(manuscript_source) if is_claim_paragraph(p.text)
    )
