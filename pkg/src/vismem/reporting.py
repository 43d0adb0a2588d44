"""Result emission: aligned text tables or JSONL records."""

from __future__ import annotations

import json
import sys


def _format_value(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_table(records) -> str:
    """Align a list of homogeneous dicts into a text table."""
    records = list(records)
    if not records:
        return "(no rows)\n"
    columns = list(records[0].keys())
    cells = [[_format_value(r.get(c, "")) for c in columns] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    for row in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def format_records(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def emit(records, fmt: str = "table", out=None, path=None) -> None:
    """Print records in the chosen format; also write them to path if given."""
    text = format_records(records) if fmt == "records" else format_table(records)
    (out or sys.stdout).write(text)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_records(records))
