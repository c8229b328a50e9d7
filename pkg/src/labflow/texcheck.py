"""Minimal LaTeX checker/renderer used as the default compiler command.

Usage: ``python -m labflow.texcheck paper.tex paper.pdf``

Performs the structural checks a real compiler would fail on — balanced
environments, includegraphics targets present on disk, \\ref targets
labelled — and on success writes a small but well-formed PDF whose page
count equals the number of top-level sections. Failures print
``! LaTeX Error:`` lines and exit 1, mimicking engine logs closely enough
for error-line extraction. The real toolchain can be swapped in through
the ``latex.command`` config key.
"""

from __future__ import annotations

import re
import sys
from pathlib import Path

_BEGIN_RE = re.compile(r"\\begin\{([A-Za-z*]+)\}")
_END_RE = re.compile(r"\\end\{([A-Za-z*]+)\}")
_INCLUDE_RE = re.compile(r"\\includegraphics(?:\[[^\]]*\])?\{([^}]+)\}")
_LABEL_RE = re.compile(r"\\label\{([^}]+)\}")
_REF_RE = re.compile(r"\\ref\{([^}]+)\}")
_SECTION_RE = re.compile(r"^\\section\{", re.MULTILINE)


def strip_comments(source: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in source.splitlines())


def check_source(source: str, base_dir: Path) -> list[str]:
    """Return LaTeX-style error lines; empty means the source compiles."""
    errors: list[str] = []
    body = strip_comments(source)

    stack: list[str] = []
    tokens = sorted(
        [(m.start(), "begin", m.group(1)) for m in _BEGIN_RE.finditer(body)]
        + [(m.start(), "end", m.group(1)) for m in _END_RE.finditer(body)]
    )
    for _pos, kind, env in tokens:
        if kind == "begin":
            stack.append(env)
        elif not stack:
            errors.append(f"! LaTeX Error: \\end{{{env}}} without matching \\begin.")
        else:
            opened = stack.pop()
            if opened != env:
                errors.append(
                    f"! LaTeX Error: \\begin{{{opened}}} ended by \\end{{{env}}}."
                )
    for env in stack:
        errors.append(f"! LaTeX Error: \\begin{{{env}}} is never closed.")

    for match in _INCLUDE_RE.finditer(body):
        target = match.group(1)
        if not (base_dir / target).is_file():
            errors.append(f"! LaTeX Error: File `{target}' not found.")

    labels = set(_LABEL_RE.findall(body))
    for ref in _REF_RE.findall(body):
        if ref not in labels:
            errors.append(f"! LaTeX Error: Reference `{ref}' undefined.")
    return errors


def build_pdf(pages: int) -> bytes:
    """Assemble a valid single-stream PDF with the requested page count."""
    pages = max(1, pages)
    objects: list[bytes] = []
    kids = " ".join(f"{3 + i} 0 R" for i in range(pages))
    objects.append(b"<< /Type /Catalog /Pages 2 0 R >>")
    objects.append(f"<< /Type /Pages /Kids [{kids}] /Count {pages} >>".encode("ascii"))
    for _ in range(pages):
        objects.append(b"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] >>")

    out = bytearray(b"%PDF-1.4\n")
    offsets = [0]
    for index, body in enumerate(objects, start=1):
        offsets.append(len(out))
        out += f"{index} 0 obj\n".encode("ascii") + body + b"\nendobj\n"
    xref_at = len(out)
    out += f"xref\n0 {len(objects) + 1}\n".encode("ascii")
    out += b"0000000000 65535 f \n"
    for offset in offsets[1:]:
        out += f"{offset:010d} 00000 n \n".encode("ascii")
    out += (
        f"trailer\n<< /Size {len(objects) + 1} /Root 1 0 R >>\n"
        f"startxref\n{xref_at}\n%%EOF\n"
    ).encode("ascii")
    return bytes(out)


def count_pdf_pages(data: bytes) -> int:
    match = re.search(rb"/Count (\d+)", data)
    if match:
        return int(match.group(1))
    return max(1, data.count(b"/Type /Page") - data.count(b"/Type /Pages"))


def main(argv: list[str] | None = None) -> int:
    args = argv if argv is not None else sys.argv[1:]
    if len(args) != 2:
        print("usage: python -m labflow.texcheck <source.tex> <output.pdf>", file=sys.stderr)
        return 2
    tex_path, pdf_path = Path(args[0]), Path(args[1])
    try:
        source = tex_path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"! LaTeX Error: cannot read {tex_path}: {exc}")
        return 1
    errors = check_source(source, tex_path.parent)
    if errors:
        for line in errors:
            print(line)
        return 1
    pages = len(_SECTION_RE.findall(strip_comments(source))) or 1
    pdf_path.write_bytes(build_pdf(pages))
    print(f"Output written on {pdf_path.name} ({pages} pages).")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
