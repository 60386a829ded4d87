"""Tabular ingestion (CSV, or JSONL on request) and atomic file output."""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from cfbary.partition import Dataset, IngestionError

__all__ = ["Table", "read_table", "to_dataset", "atomic_write", "MAX_GROUPS"]

MAX_GROUPS = 64
REQUIRED = ("v", "s")


@dataclass(frozen=True, eq=False)
class Table:
    """Raw string cells plus the source line of each row (for error messages)."""

    header: list[str]
    rows: list[list[str]]
    lines: list[int]
    source: str

    def column(self, name: str) -> list[str]:
        if name not in self.header:
            raise IngestionError(f"{self.source}: missing column {name!r} (have {', '.join(self.header)})")
        j = self.header.index(name)
        return [r[j] for r in self.rows]

    def has(self, name: str) -> bool:
        return name in self.header


def _read_csv(path: str) -> Table:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file, expected a header line") from None
        if len(set(header)) != len(header):
            raise IngestionError(f"{path}: duplicate column names in header")
        rows, lines = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(row)
            lines.append(reader.line_num)
    return Table(header, rows, lines, path)


def _read_jsonl(path: str) -> Table:
    header: list[str] | None = None
    rows, lines = [], []
    with open(path) as fh:
        for lineno, text in enumerate(fh, 1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise IngestionError(f"{path}: line {lineno}: expected an object")
            if header is None:
                header = list(obj)
            if set(obj) != set(header):
                raise IngestionError(f"{path}: line {lineno}: keys differ from the first record")
            rows.append(["" if obj[k] is None else str(obj[k]) for k in header])
            lines.append(lineno)
    if header is None:
        raise IngestionError(f"{path}: no records")
    return Table(header, rows, lines, path)


def read_table(path: str, jsonl: bool = False) -> Table:
    try:
        return _read_jsonl(path) if jsonl else _read_csv(path)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from None


def _floats(table: Table, name: str, finite: bool = True) -> np.ndarray:
    out = np.empty(len(table.rows))
    for i, cell in enumerate(table.column(name)):
        try:
            x = float(cell)
        except ValueError:
            raise IngestionError(f"{table.source}: line {table.lines[i]}: column {name!r} is not a number: {cell!r}") from None
        if finite and not math.isfinite(x):
            raise IngestionError(f"{table.source}: line {table.lines[i]}: column {name!r} is not finite")
        out[i] = x
    return out


def to_dataset(
    table: Table,
    score_column: str = "score",
    labels: Sequence[str] | None = None,
    allow_unseen: bool = False,
    features: bool = False,
) -> tuple[Dataset, np.ndarray]:
    """Validate ``table`` and build a Dataset.

    Labels map to codes in first-appearance order unless ``labels`` is given.
    With ``allow_unseen``, rows whose label is not in ``labels`` get code 0 and
    are flagged in the returned mask instead of raising.
    """
    for name in (*REQUIRED, score_column):
        table.column(name)
    if not table.rows:
        raise IngestionError(f"{table.source}: no data rows")
    v = _floats(table, "v")
    bad = np.flatnonzero(~((v >= 0.0) & (v <= 1.0)))
    if bad.size:
        i = bad[0]
        raise IngestionError(f"{table.source}: line {table.lines[i]}: v={float(v[i])!r} outside [0, 1]")
    score = _floats(table, score_column)
    raw = [x.strip() for x in table.column("s")]
    unseen = np.zeros(len(raw), dtype=bool)
    if labels is None:
        codes_of: dict[str, int] = {}
        for i, lab in enumerate(raw):
            if lab not in codes_of:
                if len(codes_of) == MAX_GROUPS:
                    raise IngestionError(f"{table.source}: line {table.lines[i]}: more than {MAX_GROUPS} groups")
                codes_of[lab] = len(codes_of)
        labels = tuple(codes_of)
    else:
        labels = tuple(labels)
        codes_of = {lab: k for k, lab in enumerate(labels)}
    s = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        k = codes_of.get(lab)
        if k is None:
            if not allow_unseen:
                raise IngestionError(f"{table.source}: line {table.lines[i]}: group {lab!r} not seen at fit time")
            unseen[i] = True
            k = 0
        s[i] = k
    y = _floats(table, "y") if table.has("y") else None
    feats = {}
    if features:
        for name in table.header:
            if name not in ("v", "s", "y", score_column):
                feats[name] = _floats(table, name, finite=False)
    return Dataset(v=v, s=s, score=score, y=y, labels=labels, features=feats), unseen


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path``, then rename it into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
