"""meanfieldnet.io

Writers for the tables and documents the package emits. CSV files carry
optional ``#`` header comments documenting their columns; JSON documents are
written with sorted keys so repeated runs produce identical bytes.

Key Functions:
- create_directory: create an output directory (and parents) when missing.
- write_file: write text content to a file.
- write_csv: write a header comment block, a column row and data rows.
- write_json: write a JSON document.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

logger = logging.getLogger(__name__)


def create_directory(path: Path) -> None:
    """Create a directory if it does not exist.

    Args:
        path (Path):
            The directory to create, parents included.
    """
    if not path.exists():
        path.mkdir(parents=True, exist_ok=True)
        logger.info("Created directory: %s", path)
    else:
        logger.debug("Directory already exists: %s", path)


def write_file(file_path: Path, content: str) -> None:
    """Write content to a file, overwriting it, creating parent directories first."""
    create_directory(file_path.parent)
    with file_path.open("w", encoding="utf-8", newline="") as f:
        f.write(content)
    logger.info("Wrote to file: %s", file_path)


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    comments: Optional[Sequence[str]] = None,
) -> str:
    buffer = io.StringIO()
    for line in comments or []:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(value) for value in row])
    return buffer.getvalue()


def write_csv(
    file_path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    comments: Optional[Sequence[str]] = None,
) -> None:
    write_file(file_path, csv_text(columns, rows, comments))


def write_json(file_path: Path, payload: Any) -> None:
    write_file(file_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
