"""
CSV and JSON input for datasets, linear systems and training sets.

CSV files may start with a header row. A first header cell named ``label``
marks a labeled file; the other cells name the feature columns. Blank lines
and lines starting with ``#`` are skipped. Line numbers in errors count
from 1 over the raw file.
"""

import csv
import json
from pathlib import Path
from typing import Literal

import numpy as np

from qmldesk.boltzmann import BinaryDataset
from qmldesk.distance import LabeledDataset
from qmldesk.errors import ParseError
from qmldesk.hhl import LinearSystem
from qmldesk.perceptron import PerceptronTrainingSet

LABEL_COLUMN = "label"
RHS_COLUMN = "b"


def _number(cell: str, line: int, column: int) -> complex | float:
    text = cell.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise ParseError(f"line {line}: column {column + 1} is not a number: {cell!r}", line=line) from None


def _is_number(cell: str) -> bool:
    try:
        _number(cell, 0, 0)
    except ParseError:
        return False
    return True


def read_table(path: Path | str) -> tuple[list[str] | None, list[tuple[int, list[str]]]]:
    """
    Split a CSV file into its header (if any) and numbered data rows.

    Raises:
        ParseError: For a missing file, ragged rows or an empty table
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"No such file: {path}")
    header = None
    rows: list[tuple[int, list[str]]] = []
    with path.open(newline="", encoding="utf-8") as f:
        for line, cells in enumerate(csv.reader(f), start=1):
            if not cells or not "".join(cells).strip() or cells[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in cells]
            if header is None and not rows and not all(_is_number(c) for c in cells[1:] or cells):
                header = cells
                continue
            width = len(header) if header is not None else len(rows[0][1]) if rows else len(cells)
            if len(cells) != width:
                raise ParseError(f"line {line}: expected {width} columns, found {len(cells)}", line=line)
            rows.append((line, cells))
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    return header, rows


def _has_label(header: list[str] | None, rows: list[tuple[int, list[str]]]) -> bool:
    if header is not None:
        return header[0].lower() == LABEL_COLUMN
    return not _is_number(rows[0][1][0])


def _real_rows(rows: list[tuple[int, list[str]]], start: int = 0) -> np.ndarray:
    values = []
    for line, cells in rows:
        row = []
        for column, cell in enumerate(cells[start:], start=start):
            value = _number(cell, line, column)
            if isinstance(value, complex):
                raise ParseError(f"line {line}: column {column + 1} must be real: {cell!r}", line=line)
            row.append(value)
        values.append(row)
    return np.array(values, dtype=float)


def load_labeled(path: Path | str) -> LabeledDataset:
    """Labeled feature vectors; the label column is required."""
    header, rows = read_table(path)
    if not _has_label(header, rows):
        raise ParseError(f"{path}: expected a '{LABEL_COLUMN}' column first")
    return LabeledDataset(_real_rows(rows, start=1), tuple(cells[0] for _, cells in rows))


def load_matrix(path: Path | str) -> np.ndarray:
    """Unlabeled numeric rows; a label column, if present, is dropped."""
    header, rows = read_table(path)
    start = 1 if _has_label(header, rows) else 0
    values = [[_number(cell, line, column) for column, cell in enumerate(cells[start:], start=start)] for line, cells in rows]
    if any(isinstance(v, complex) for row in values for v in row):
        return np.array(values, dtype=np.complex128)
    return np.array(values, dtype=float)


def load_binary(path: Path | str) -> BinaryDataset:
    """Binary visible patterns, duplicates merged into weights."""
    header, rows = read_table(path)
    start = 1 if _has_label(header, rows) else 0
    patterns = _real_rows(rows, start)
    for row, (line, _) in zip(patterns, rows, strict=True):
        if not np.isin(row, (0.0, 1.0)).all():
            raise ParseError(f"line {line}: patterns may only contain 0 and 1", line=line)
    return BinaryDataset.from_patterns(patterns)


def load_dataset(path: Path | str, kind: Literal["labeled", "binary", "matrix"] = "labeled"):
    """
    Load a CSV file as a labeled dataset, binary patterns or a plain matrix.

    Raises:
        ParseError: With the offending line number
        ZeroVector: With the offending row index, for labeled data
    """
    loaders = {"labeled": load_labeled, "binary": load_binary, "matrix": load_matrix}
    if kind not in loaders:
        raise ValueError(f"Unknown dataset kind {kind!r}")
    return loaders[kind](path)


def load_training_set(path: Path | str, bias: float = 0.0) -> PerceptronTrainingSet:
    """Perceptron instances: a 0/1 label column followed by 0/1 inputs."""
    header, rows = read_table(path)
    if not _has_label(header, rows) and header is not None:
        raise ParseError(f"{path}: expected a '{LABEL_COLUMN}' column first")
    values = _real_rows(rows)
    return PerceptronTrainingSet(values[:, 1:], values[:, 0], bias)


def load_linear_system(path: Path | str) -> LinearSystem:
    """
    Read A and b from JSON ``{"A": [[...]], "b": [...]}`` or from CSV.

    In CSV form every row is a row of A followed by its entry of b; a header
    may name the last column ``b``. Complex entries are written like ``1+2j``
    (JSON also accepts ``[re, im]`` pairs).
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            matrix = [[_json_number(v) for v in row] for row in payload["A"]]
            rhs = [_json_number(v) for v in payload["b"]]
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{path}: {e}") from e
        return LinearSystem(np.array(matrix), np.array(rhs))

    values = load_matrix(path)
    if values.shape[1] < 2:
        raise ParseError(f"{path}: a linear system needs at least one column of A and the b column")
    return LinearSystem(values[:, :-1], values[:, -1])


def _json_number(value) -> complex:
    if isinstance(value, list | tuple):
        re, im = value
        return complex(float(re), float(im))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(float(value))


def write_dataset(path: Path | str, dataset: LabeledDataset) -> Path:
    """Write a labeled dataset so that ``load_labeled`` reads back identical values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([LABEL_COLUMN] + [f"f{i + 1}" for i in range(dataset.num_features)])
        for label, row in zip(dataset.labels, dataset.features, strict=True):
            writer.writerow([label] + [repr(float(v)) for v in row])
    return path


def write_patterns(path: Path | str, patterns) -> Path:
    """Write binary patterns, one row per pattern."""
    path = Path(path)
    patterns = np.atleast_2d(np.asarray(patterns, dtype=int))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([f"v{i + 1}" for i in range(patterns.shape[1])])
        writer.writerows(patterns.tolist())
    return path
