"""Bit-stable text serialization of result tables.

Floats are written with 17 significant digits in exponent form so that a
value survives a write/read round trip unchanged and identical runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.16e}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_dat(path, header, rows) -> Path:
    """Whitespace-separated columns with a '#' header line, for gnuplot and friends."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(format_value(v) for v in row) + "\n")
    return path


def write_matrix_csv(path, A) -> Path:
    """Complex matrix as rows of re,im pairs."""
    A = np.asarray(A, dtype=complex)
    header = [f"{p}{j}" for j in range(A.shape[1]) for p in ("re", "im")]
    rows = [[x for z in r for x in (z.real, z.imag)] for r in A]
    return write_csv(path, header, rows)
