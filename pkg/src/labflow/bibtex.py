"""Small BibTeX parser/emitter for the bibliographies this pipeline owns.

Handles the subset the writer emits and the citation verifier consumes:
``@type{key, field = {value}, ...}`` with brace- or quote-delimited values
and nested braces. Emission is canonical (fixed field order, one field per
line) so cleaned bibliographies diff predictably.
"""

from __future__ import annotations

from dataclasses import dataclass, field

_FIELD_ORDER = ("author", "title", "journal", "booktitle", "venue", "year", "doi")


@dataclass
class BibEntry:
    key: str
    entry_type: str = "article"
    fields: dict[str, str] = field(default_factory=dict)

    def get(self, name: str, default: str = "") -> str:
        return self.fields.get(name, default)

    def venue(self) -> str:
        for name in ("journal", "booktitle", "venue"):
            if name in self.fields:
                return self.fields[name]
        return ""


class BibParseError(ValueError):
    pass


def _read_braced(text: str, start: int) -> tuple[str, int]:
    depth = 0
    out = []
    i = start
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
            if depth > 1:
                out.append(ch)
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return "".join(out), i + 1
            out.append(ch)
        else:
            out.append(ch)
        i += 1
    raise BibParseError("unbalanced braces in field value")


def _read_value(text: str, i: int) -> tuple[str, int]:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    if i >= len(text):
        raise BibParseError("missing field value")
    if text[i] == "{":
        return _read_braced(text, i)
    if text[i] == '"':
        end = text.index('"', i + 1)
        return text[i + 1 : end], end + 1
    end = i
    while end < len(text) and text[end] not in ",}\n":
        end += 1
    return text[i:end].strip(), end


def parse_bibtex(text: str) -> list[BibEntry]:
    entries: list[BibEntry] = []
    i = 0
    while True:
        at = text.find("@", i)
        if at < 0:
            break
        brace = text.find("{", at)
        if brace < 0:
            raise BibParseError("entry header without body")
        entry_type = text[at + 1 : brace].strip().lower()
        if entry_type == "comment":
            _, i = _read_braced(text, brace)
            continue
        comma = text.find(",", brace)
        if comma < 0:
            raise BibParseError("entry without key")
        key = text[brace + 1 : comma].strip()
        entry = BibEntry(key=key, entry_type=entry_type)
        i = comma + 1
        while True:
            while i < len(text) and text[i] in " \t\r\n,":
                i += 1
            if i >= len(text):
                raise BibParseError(f"entry {key} never closed")
            if text[i] == "}":
                i += 1
                break
            eq = text.find("=", i)
            if eq < 0:
                raise BibParseError(f"malformed field in entry {key}")
            name = text[i:eq].strip().lower()
            value, i = _read_value(text, eq + 1)
            entry.fields[name] = " ".join(value.split())
        entries.append(entry)
    return entries


def emit_bibtex(entries: list[BibEntry]) -> str:
    chunks = []
    for entry in entries:
        ordered = [n for n in _FIELD_ORDER if n in entry.fields]
        ordered += sorted(n for n in entry.fields if n not in _FIELD_ORDER)
        lines = [f"@{entry.entry_type}{{{entry.key},"]
        lines.extend(f"  {name} = {{{entry.fields[name]}}}," for name in ordered)
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + ("\n" if chunks else "")
