"""Count-matrix files and colour-label normalisation.

Counts file (UTF-8 CSV)::

    state,<label_1>,...,<label_M>
    <label_1>,<int>,...,<int>
    ...

Data rows may appear in any order but must cover exactly the header labels.
The colour map is a CSV with columns ``name,wgsn_code,wgsn_name``; a raw
label is replaced by its ``wgsn_name`` (or kept as is when that is empty)
and states that collapse onto the same name are merged by summing their
rows and columns.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import NegativeCount, NonSquare, ParseError
from .markov import CountMatrix

BUNDLED_COLOUR_MAP = "wgsn_colours.csv"


def _read_text(source) -> str:
    if isinstance(source, (str, Path)) and Path(source).exists():
        return Path(source).read_text(encoding="utf-8")
    if isinstance(source, Path):
        raise FileNotFoundError(source)
    return str(source)


def parse_counts(text: str) -> CountMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError("empty counts file", 1)
    line, header = rows[0]
    header = [h.strip() for h in header]
    if header[0] != "state" or len(header) < 3:
        raise ParseError("header must be 'state,<label_1>,...,<label_M>'", line)
    labels = header[1:]
    if len(set(labels)) != len(labels):
        raise ParseError("duplicate column label", line)
    position = {lab: k for k, lab in enumerate(labels)}
    M = len(labels)
    counts = np.zeros((M, M), dtype=np.int64)
    seen: set[str] = set()
    for line, row in rows[1:]:
        if len(row) != M + 1:
            raise ParseError(f"expected {M + 1} fields, found {len(row)}", line)
        label = row[0].strip()
        if label not in position:
            raise ParseError(f"row label {label!r} is not a column label", line)
        if label in seen:
            raise ParseError(f"duplicate row for {label!r}", line)
        seen.add(label)
        for k, cell in enumerate(row[1:]):
            try:
                value = int(cell.strip())
            except ValueError:
                raise ParseError(f"non-integer count {cell!r} in column {labels[k]!r}", line) from None
            if value < 0:
                raise NegativeCount(f"line {line}: negative count {value} in column {labels[k]!r}")
            counts[position[label], k] = value
    if len(seen) != M:
        missing = [lab for lab in labels if lab not in seen]
        raise NonSquare(f"{len(seen)} rows for {M} columns (missing rows: {', '.join(missing)})")
    return CountMatrix(tuple(labels), counts)


def read_counts(source) -> CountMatrix:
    return parse_counts(_read_text(source))


def format_counts(c: CountMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", *c.labels])
    for label, row in zip(c.labels, c.counts):
        w.writerow([label, *(int(x) for x in row)])
    return buf.getvalue()


def write_counts(c: CountMatrix, path) -> None:
    Path(path).write_text(format_counts(c), encoding="utf-8")


@dataclass(frozen=True)
class ColourEntry:
    code: str
    group: str


def load_colour_map(source=None) -> dict[str, ColourEntry]:
    if source is None:
        text = resources.files("qmarkov").joinpath("data").joinpath(BUNDLED_COLOUR_MAP).read_text(encoding="utf-8")
    else:
        text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"name", "wgsn_code", "wgsn_name"} <= set(reader.fieldnames):
        raise ParseError("colour map needs columns name,wgsn_code,wgsn_name", 1)
    out: dict[str, ColourEntry] = {}
    for i, row in enumerate(reader, start=2):
        name = (row["name"] or "").strip().lower()
        if not name:
            raise ParseError("empty colour name", i)
        code = "".join((row["wgsn_code"] or "").split())
        group = (row["wgsn_name"] or "").strip() or name
        out[name] = ColourEntry(code, group)
    return out


@dataclass(frozen=True)
class NormalisedCounts:
    counts: CountMatrix
    unmapped: tuple[str, ...]
    merged: dict[str, tuple[str, ...]]


def normalise_labels(c: CountMatrix, cmap: dict[str, ColourEntry]) -> NormalisedCounts:
    groups: list[str] = []
    members: dict[str, list[str]] = {}
    unmapped: list[str] = []
    target = []
    for label in c.labels:
        entry = cmap.get(label.strip().lower())
        if entry is None:
            unmapped.append(label)
            group = label
        else:
            group = entry.group
        if group not in members:
            members[group] = []
            groups.append(group)
        members[group].append(label)
        target.append(groups.index(group))
    G = len(groups)
    S = np.zeros((c.size, G), dtype=np.int64)
    S[np.arange(c.size), target] = 1
    merged_counts = S.T @ c.counts @ S
    merged = {g: tuple(m) for g, m in members.items() if len(m) > 1}
    return NormalisedCounts(CountMatrix(tuple(groups), merged_counts), tuple(unmapped), merged)
