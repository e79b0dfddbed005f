"""Text formats for operators and grid functions.

Operator files: the first content line holds the dimension, followed by one
line of whitespace-separated decimals per matrix row. Lines starting with
``#`` and blank lines are ignored.

Grid CSV files: header ``t,v0,...,v{d-1}`` and one row per grid point.
"""

import csv
import math
import os
from typing import List, Optional, Tuple

import numpy as np

from modules.errors import FormatError
from modules.semigroups import GridFunction
from modules.spectral_core import DEFAULT_SYM_TOL, HermitianOperator


def _content_lines(text: str) -> List[Tuple[int, str]]:
    lines = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lines.append((number, raw))
    return lines


def _tokens(raw: str) -> List[Tuple[int, str]]:
    """Whitespace-separated tokens with their 1-based columns."""
    tokens = []
    column = 0
    for token in raw.split():
        column = raw.index(token, column)
        tokens.append((column + 1, token))
        column += len(token)
    return tokens


def _parse_number(token: str, path: Optional[str], line: int, column: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"'{token}' is not a decimal number", path, line, column)
    if not math.isfinite(value):
        raise FormatError(f"'{token}' is not finite", path, line, column)
    return value


def parse_operator_text(text: str, path: Optional[str] = None, sym_tol: float = DEFAULT_SYM_TOL) -> HermitianOperator:
    """Parse operator text into a validated HermitianOperator.

    Raises:
        FormatError: With line and column of the offending token
        NonSymmetric: If the matrix is not symmetric within sym_tol
    """
    lines = _content_lines(text)
    if not lines:
        raise FormatError("Operator file is empty", path)

    number, raw = lines[0]
    header = _tokens(raw)
    if len(header) != 1:
        raise FormatError("First line must hold only the dimension", path, number, header[1][0] if header else 1)
    column, token = header[0]
    try:
        dim = int(token)
    except ValueError:
        raise FormatError(f"Dimension '{token}' is not an integer", path, number, column)
    if dim < 1:
        raise FormatError(f"Dimension must be positive, got {dim}", path, number, column)

    rows = lines[1:]
    if len(rows) < dim:
        last = rows[-1][0] if rows else number
        raise FormatError(f"Expected {dim} matrix rows, found {len(rows)}", path, last + 1)
    if len(rows) > dim:
        raise FormatError(f"Unexpected content after {dim} matrix rows", path, rows[dim][0], 1)

    matrix = np.empty((dim, dim))
    for i, (number, raw) in enumerate(rows):
        tokens = _tokens(raw)
        if len(tokens) != dim:
            column = tokens[dim][0] if len(tokens) > dim else len(raw.rstrip()) + 1
            raise FormatError(f"Row {i + 1} has {len(tokens)} entries, expected {dim}", path, number, column)
        for j, (column, token) in enumerate(tokens):
            matrix[i, j] = _parse_number(token, path, number, column)

    return HermitianOperator(matrix, sym_tol)


def parse_operator_file(path: str, sym_tol: float = DEFAULT_SYM_TOL) -> HermitianOperator:
    """Read and validate an operator file.

    Raises:
        OSError: If the file cannot be read
        FormatError: With line and column of the offending token
        NonSymmetric: If the matrix is not symmetric within sym_tol
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_operator_text(text, path, sym_tol)


def format_operator(A: HermitianOperator, comment: Optional[str] = None) -> str:
    lines = [f"# {comment}"] if comment else []
    lines.append(str(A.dim))
    for row in A.entries:
        lines.append(" ".join(repr(float(value)) for value in row))
    return "\n".join(lines) + "\n"


def write_operator_file(A: HermitianOperator, path: str, comment: Optional[str] = None) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_operator(A, comment))
    return path


def write_grid_csv(g: GridFunction, path: str) -> str:
    """Write a grid function as CSV with header t,v0,...,v{d-1}."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t"] + [f"v{k}" for k in range(g.dim)])
        for t, sample in zip(g.times, g.samples):
            writer.writerow([repr(float(t))] + [repr(float(value)) for value in sample])
    return path


def read_grid_csv(path: str) -> GridFunction:
    """Read a grid function written by write_grid_csv.

    The step is taken from the second time stamp (1.0 for a single sample);
    every time stamp must sit on that grid.

    Raises:
        FormatError: On a bad header, ragged rows or off-grid time stamps
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError("Grid file is empty", path)

    header = [cell.strip() for cell in rows[0]]
    dim = len(header) - 1
    if dim < 1 or header[0] != "t" or header[1:] != [f"v{k}" for k in range(dim)]:
        raise FormatError("Header must be t,v0,...,v{d-1}", path, 1, 1)

    times = []
    samples = []
    for number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise FormatError(f"Row has {len(row)} fields, expected {dim + 1}", path, number)
        values = [_parse_number(cell.strip(), path, number, k + 1) for k, cell in enumerate(row)]
        times.append(values[0])
        samples.append(values[1:])
    if not samples:
        raise FormatError("Grid file has no samples", path)

    step = times[1] - times[0] if len(times) > 1 else 1.0
    if not step > 0:
        raise FormatError("Time stamps must increase", path, 3)
    for k, t in enumerate(times):
        if abs(t - k * step) > 1e-9 * max(1.0, abs(t)):
            raise FormatError(f"Time stamp {t} is off the grid of step {step}", path, k + 2, 1)
    return GridFunction(step, np.array(samples))
