"""Citation verification against registry clients.

Every bibliography entry is resolved in source order — DOI registry, then
preprint archive, then web search. Field comparison folds case, diacritics
and punctuation; titles fuzzy-match at a configurable threshold (0.90
default, logged per record). Entries found but mismatched are corrected to
registry metadata; entries found nowhere are unverifiable and dropped from
the cleaned bibliography. Citation keys are never rewritten.

Fixture-backed clients keep the test suite deterministic; the live DOI /
preprint clients exist but never gate CI.
"""

from __future__ import annotations

import json
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from difflib import SequenceMatcher
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

import httpx

from ..bibtex import BibEntry, emit_bibtex, parse_bibtex
from ..errors import RegistryUnavailable

DEFAULT_TITLE_THRESHOLD = 0.90
DEFAULT_FANOUT = 4

STATUS_VERIFIED = "verified"
STATUS_CORRECTED = "corrected"
STATUS_UNVERIFIABLE = "unverifiable"


def normalize(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    kept = "".join(c if c.isalnum() or c.isspace() else " " for c in stripped.casefold())
    return " ".join(kept.split())


def title_similarity(a: str, b: str) -> float:
    return SequenceMatcher(None, normalize(a), normalize(b)).ratio()


@dataclass(frozen=True)
class RegistryRecord:
    authors: tuple[str, ...]
    title: str
    venue: str
    year: int
    doi: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "authors": list(self.authors),
            "title": self.title,
            "venue": self.venue,
            "year": self.year,
            "doi": self.doi,
        }


class RegistryClient(Protocol):
    source: str

    def lookup(self, entry: BibEntry) -> Optional[RegistryRecord]: ...


class FixtureRegistryClient:
    """Deterministic registry backed by a local JSON file of records."""

    def __init__(self, source: str, path: Path, threshold: float = DEFAULT_TITLE_THRESHOLD) -> None:
        self.source = source
        self.threshold = threshold
        records = json.loads(Path(path).read_text(encoding="utf-8"))
        self._records = [
            RegistryRecord(
                authors=tuple(r.get("authors", ())),
                title=r.get("title", ""),
                venue=r.get("venue", ""),
                year=int(r.get("year", 0)),
                doi=r.get("doi", ""),
            )
            for r in records
        ]

    def lookup(self, entry: BibEntry) -> Optional[RegistryRecord]:
        doi = entry.get("doi").casefold()
        if doi:
            for record in self._records:
                if record.doi.casefold() == doi:
                    return record
        title = entry.get("title")
        best: Optional[RegistryRecord] = None
        best_ratio = 0.0
        for record in self._records:
            ratio = title_similarity(title, record.title)
            if ratio > best_ratio:
                best, best_ratio = record, ratio
        if best is not None and best_ratio >= self.threshold:
            return best
        return None


class DoiRegistryClient:
    """Live DOI registry client (excluded from the deterministic suite)."""

    source = "doi_registry"

    def __init__(self, base_url: str = "https://api.crossref.org/works", timeout_s: float = 15.0):
        self.base_url = base_url
        self.timeout_s = timeout_s

    def lookup(self, entry: BibEntry) -> Optional[RegistryRecord]:
        doi = entry.get("doi")
        if not doi:
            return None
        try:
            reply = httpx.get(f"{self.base_url}/{doi}", timeout=self.timeout_s)
            if reply.status_code == 404:
                return None
            reply.raise_for_status()
            message = reply.json()["message"]
        except httpx.HTTPError as exc:
            raise RegistryUnavailable(f"doi registry: {exc}") from exc
        authors = tuple(
            " ".join(filter(None, (a.get("given"), a.get("family"))))
            for a in message.get("author", ())
        )
        year = 0
        issued = message.get("issued", {}).get("date-parts", [[0]])
        if issued and issued[0]:
            year = int(issued[0][0])
        return RegistryRecord(
            authors=authors,
            title=(message.get("title") or [""])[0],
            venue=(message.get("container-title") or [""])[0],
            year=year,
            doi=doi,
        )


class PreprintArchiveClient:
    """Live preprint archive client (excluded from the deterministic suite)."""

    source = "preprint_archive"

    def __init__(self, base_url: str = "http://export.arxiv.org/api/query", timeout_s: float = 15.0):
        self.base_url = base_url
        self.timeout_s = timeout_s

    def lookup(self, entry: BibEntry) -> Optional[RegistryRecord]:
        title = entry.get("title")
        if not title:
            return None
        try:
            reply = httpx.get(
                self.base_url,
                params={"search_query": f'ti:"{title}"', "max_results": 1},
                timeout=self.timeout_s,
            )
            reply.raise_for_status()
        except httpx.HTTPError as exc:
            raise RegistryUnavailable(f"preprint archive: {exc}") from exc
        import re as _re

        found_title = _re.search(r"<title>(?!ArXiv)([^<]+)</title>", reply.text)
        if not found_title:
            return None
        year_match = _re.search(r"<published>(\d{4})", reply.text)
        authors = tuple(_re.findall(r"<name>([^<]+)</name>", reply.text))
        candidate = RegistryRecord(
            authors=authors,
            title=found_title.group(1).strip(),
            venue="arXiv",
            year=int(year_match.group(1)) if year_match else 0,
        )
        if title_similarity(title, candidate.title) < DEFAULT_TITLE_THRESHOLD:
            return None
        return candidate


@dataclass
class CitationRecord:
    key: str
    claimed: dict[str, Any]
    verified: Optional[dict[str, Any]]
    status: str
    similarity: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "claimed": self.claimed,
            "verified": self.verified,
            "status": self.status,
            "similarity": round(self.similarity, 4),
        }


def _claimed_dict(entry: BibEntry) -> dict[str, Any]:
    return {
        "authors": entry.get("author"),
        "title": entry.get("title"),
        "venue": entry.venue(),
        "year": entry.get("year"),
        "doi": entry.get("doi"),
    }


def _fields_match(entry: BibEntry, record: RegistryRecord, threshold: float) -> bool:
    if title_similarity(entry.get("title"), record.title) < threshold:
        return False
    if entry.get("year") and record.year and int(entry.get("year")) != record.year:
        return False
    if entry.venue() and record.venue and normalize(entry.venue()) != normalize(record.venue):
        return False
    claimed_authors = normalize(entry.get("author").replace(" and ", " "))
    registry_authors = normalize(" ".join(record.authors))
    if claimed_authors and registry_authors and claimed_authors != registry_authors:
        return False
    doi = entry.get("doi")
    if doi and record.doi and doi.casefold() != record.doi.casefold():
        return False
    return True


def _verify_one(
    entry: BibEntry, clients: Sequence[RegistryClient], threshold: float
) -> CitationRecord:
    for client in clients:
        record = client.lookup(entry)
        if record is None:
            continue
        similarity = title_similarity(entry.get("title"), record.title)
        verified = {"source": client.source, "matched": record.to_dict()}
        status = (
            STATUS_VERIFIED if _fields_match(entry, record, threshold) else STATUS_CORRECTED
        )
        return CitationRecord(
            key=entry.key,
            claimed=_claimed_dict(entry),
            verified=verified,
            status=status,
            similarity=similarity,
        )
    return CitationRecord(
        key=entry.key, claimed=_claimed_dict(entry), verified=None, status=STATUS_UNVERIFIABLE
    )


def verify_citations(
    entries: list[BibEntry],
    clients: Sequence[RegistryClient],
    *,
    threshold: float = DEFAULT_TITLE_THRESHOLD,
    fanout: int = DEFAULT_FANOUT,
) -> list[CitationRecord]:
    """Verify entries concurrently (bounded fan-out) and merge the records
    back in input order so the report is deterministic."""
    if not entries:
        return []
    with ThreadPoolExecutor(max_workers=max(1, fanout)) as pool:
        return list(pool.map(lambda e: _verify_one(e, clients, threshold), entries))


def apply_corrections(entry: BibEntry, record: CitationRecord) -> BibEntry:
    """Rewrite entry fields from registry metadata; the key is preserved."""
    assert record.verified is not None
    matched = record.verified["matched"]
    fields = dict(entry.fields)
    fields["author"] = " and ".join(matched["authors"])
    fields["title"] = matched["title"]
    for venue_field in ("journal", "booktitle", "venue"):
        fields.pop(venue_field, None)
    fields["journal"] = matched["venue"]
    fields["year"] = str(matched["year"])
    if matched.get("doi"):
        fields["doi"] = matched["doi"]
    return BibEntry(key=entry.key, entry_type=entry.entry_type, fields=fields)


def clean_bibliography(
    bib_text: str,
    clients: Sequence[RegistryClient],
    *,
    threshold: float = DEFAULT_TITLE_THRESHOLD,
    fanout: int = DEFAULT_FANOUT,
) -> tuple[list[CitationRecord], str]:
    """Verify every entry and emit the cleaned bibliography text: verified
    entries kept as-is, corrected entries rewritten, unverifiable dropped."""
    entries = parse_bibtex(bib_text)
    records = verify_citations(entries, clients, threshold=threshold, fanout=fanout)
    kept: list[BibEntry] = []
    for entry, record in zip(entries, records):
        if record.status == STATUS_VERIFIED:
            kept.append(entry)
        elif record.status == STATUS_CORRECTED:
            kept.append(apply_corrections(entry, record))
    return records, emit_bibtex(kept)
