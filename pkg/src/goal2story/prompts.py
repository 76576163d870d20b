"""Prompt template assets.

Templates are versioned text files with ``{{name}}`` placeholders, one file
per agent plus shared fragments (reasoning scaffold, per-role personas, the
JSON repair prompt). Agent files are split into ``[section]`` blocks. A
custom template directory can be supplied to override any asset.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Mapping

from .errors import TemplateError

TEMPLATE_DIR = Path(__file__).parent / "templates"

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")
_SECTION = re.compile(r"^\[([a-z_]+)\]\s*$")


def load_asset(name: str, template_dir: Path | None = None) -> str:
    path = Path(template_dir or TEMPLATE_DIR) / f"{name}.txt"
    if not path.is_file():
        raise TemplateError(f"missing template asset: {path}")
    return path.read_text(encoding="utf-8").strip()


def parse_sections(text: str) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        header = _SECTION.match(line)
        if header:
            current = header.group(1)
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return {name: "\n".join(lines).strip() for name, lines in sections.items()}


def load_sections(name: str, template_dir: Path | None = None,
                  required: tuple[str, ...] = ()) -> dict[str, str]:
    sections = parse_sections(load_asset(name, template_dir))
    for key in required:
        if key not in sections:
            raise TemplateError(f"template {name!r} is missing section [{key}]")
    return sections


def render(text: str, values: Mapping[str, str], where: str = "template") -> str:
    def substitute(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise TemplateError(f"unresolved placeholder {{{{{key}}}}} in {where}")
        return str(values[key])

    return _PLACEHOLDER.sub(substitute, text)
