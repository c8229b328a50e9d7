"""Literature search tools backed by local fixture files.

Fixture format: a JSON array of ``{"query": ..., "results": [SearchResult]}``
entries; lookup normalizes the query (casefold, punctuation stripped) and an
unmatched query yields an empty result list so the search loop can observe
"no results" rather than erroring.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ToolFailure
from .registry import ToolParam, ToolRegistry, ToolSchema

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)
_WS = re.compile(r"\s+")

SEARCH_TOOL_NAMES = ("arxiv_search", "medrxiv_search", "tavily_search")


def normalize_query(query: str) -> str:
    return _WS.sub(" ", _PUNCT.sub("", query.casefold())).strip()


@dataclass(frozen=True)
class SearchResult:
    title: str
    authors: tuple[str, ...]
    venue: str
    year: int
    identifier: dict[str, str]
    abstract: str = ""
    source_tool: str = ""

    def __post_init__(self) -> None:
        if not self.identifier:
            raise ValueError("search result identifier must be non-empty")

    def dedup_key(self) -> str:
        """DOI when present, else the normalized title."""
        doi = self.identifier.get("doi")
        if doi:
            return f"doi:{doi.casefold()}"
        return f"title:{normalize_query(self.title)}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "title": self.title,
            "authors": list(self.authors),
            "venue": self.venue,
            "year": self.year,
            "identifier": self.identifier,
            "abstract": self.abstract,
            "source_tool": self.source_tool,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], source_tool: str = "") -> SearchResult:
        return cls(
            title=d["title"],
            authors=tuple(d.get("authors", ())),
            venue=d.get("venue", ""),
            year=int(d.get("year", 0)),
            identifier=dict(d["identifier"]),
            abstract=d.get("abstract", ""),
            source_tool=d.get("source_tool") or source_tool,
        )


@dataclass
class FixtureSearchTool:
    name: str
    fixture_path: Path
    _index: dict[str, list[dict[str, Any]]] = field(default_factory=dict, repr=False)
    _loaded: bool = False

    def _load(self) -> None:
        if self._loaded:
            return
        try:
            entries = json.loads(Path(self.fixture_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ToolFailure(f"fixture for {self.name} unreadable: {exc}") from exc
        for entry in entries:
            self._index[normalize_query(entry["query"])] = entry.get("results", [])
        self._loaded = True

    def __call__(self, args: dict[str, Any]) -> list[dict[str, Any]]:
        self._load()
        results = self._index.get(normalize_query(args["query"]), [])
        return [
            SearchResult.from_dict(r, source_tool=self.name).to_dict() for r in results
        ]


def search_tool_schema(name: str) -> ToolSchema:
    return ToolSchema(
        name=name,
        description=f"Search {name.split('_')[0]} for candidate papers.",
        params=(ToolParam(name="query", type="string", required=True),),
        side_effects="network",
    )


def register_search_tools(registry: ToolRegistry, fixtures: dict[str, Path]) -> ToolRegistry:
    """Register the fixture-backed search suite; unknown extra tools in the
    fixture map are registered too (the tool set is open-ended)."""
    for name in (*SEARCH_TOOL_NAMES, *(n for n in fixtures if n not in SEARCH_TOOL_NAMES)):
        if name not in fixtures:
            continue
        registry.register(search_tool_schema(name), FixtureSearchTool(name, fixtures[name]))
    return registry
