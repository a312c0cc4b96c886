"""CSV emission shared by every report writer."""
from __future__ import annotations

import csv
import io
import math
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterable, Sequence, Union

Target = Union[str, Path, IO[str], None]


def fmt(value) -> str:
    """17 significant digits in scientific notation; empty cell for ``None``."""
    if value is None:
        return ""
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.16e}"


@contextmanager
def _open(target: Target):
    if target is None:
        yield io.StringIO()
    elif isinstance(target, (str, Path)):
        with open(target, "w", newline="") as fh:
            yield fh
    else:
        yield target


def write_csv(header: Sequence[str], rows: Iterable[Sequence], target: Target = None) -> str:
    """Write rows to ``target`` (path, open file or None) and return the CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    with _open(target) as fh:
        fh.write(text)
    return text
