"""Versioned tab-separated artifact files.

Every file starts with ``#groupsleuth-<kind> v1``; optional ``#key=value``
lines carry metadata. Readers refuse files whose header does not match.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

VERSION = "v1"


class ArtifactError(ValueError):
    pass


def header(kind: str) -> str:
    return f"#groupsleuth-{kind} {VERSION}"


def fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def write_tsv(path, kind: str, rows: Iterable[Sequence], columns: Sequence[str] | None = None,
              meta: dict | None = None) -> None:
    lines = [header(kind)]
    for k, v in (meta or {}).items():
        lines.append(f"#{k}={fmt(v)}")
    if columns:
        lines.append("#" + "\t".join(columns))
    for row in rows:
        lines.append("\t".join(fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tsv(path, kind: str) -> tuple[list[list[str]], dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != header(kind):
        found = lines[0] if lines else "<empty>"
        raise ArtifactError(f"{path}: expected header {header(kind)!r}, found {found!r}")
    rows, meta = [], {}
    for line in lines[1:]:
        if not line:
            continue
        if line.startswith("#"):
            if "=" in line and "\t" not in line:
                k, v = line[1:].split("=", 1)
                meta[k] = v
            continue
        rows.append(line.split("\t"))
    return rows, meta
