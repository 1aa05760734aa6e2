"""CSV schemas consumed by the figure kinds, with column-level validation.

Each schema names its columns in order and a parser per column. Validation
collects *all* problems (missing columns, unexpected columns, first bad cell
per column) so the error message pinpoints what to fix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

NOT_ACHIEVED = "NA"


class SchemaError(Exception):
    """CSV does not match the expected schema; message lists per-column issues."""


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _str(text: str) -> str:
    return text


def _int_or_na(text: str):
    return None if text == NOT_ACHIEVED else int(text)


def _float_or_na(text: str):
    return None if text == NOT_ACHIEVED else float(text)


@dataclass(frozen=True)
class Schema:
    name: str
    columns: dict  # column name -> cell parser


SWEEP_SUMMARY = Schema("sweep_summary", {
    "L": _int, "p": _float, "chi_mean": _float, "chi_std": _float,
    "n_circuits": _int,
})

CURVE = Schema("curve", {
    "M": _int, "chi": _float, "epsilon": _float, "estimator": _str,
    "ref_kind": _str,
})

DELTA_M = Schema("deltam", {
    "epsilon": _float, "Mmin_hist": _int_or_na, "Mmin_rnn": _int_or_na,
    "deltaM": _int_or_na,
})

ENTROPY = Schema("entropy", {
    "L": _int, "p": _float, "layer": _int, "S_mean": _float, "S_sem": _float,
    "n_circuits": _int,
})


def load_rows(path, schema: Schema) -> list[dict]:
    """Parse `path` against `schema`, returning typed row dicts.

    Raises SchemaError with one diagnostic line per offending column.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc

    problems = []
    if not rows:
        raise SchemaError(f"{path}: empty file, expected header {list(schema.columns)}")
    header = rows[0]
    expected = list(schema.columns)
    for col in expected:
        if col not in header:
            problems.append(f"missing column {col!r}")
    for col in header:
        if col not in schema.columns:
            problems.append(f"unexpected column {col!r}")
    if len(rows) == 1 and not problems:
        problems.append("no data rows")

    parsed = []
    if not problems:
        index = {col: header.index(col) for col in expected}
        bad_columns = set()
        for rownum, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                problems.append(f"row {rownum}: {len(row)} cells, header has {len(header)}")
                break
            out = {}
            for col, parse in schema.columns.items():
                cell = row[index[col]]
                try:
                    out[col] = parse(cell)
                except ValueError:
                    if col not in bad_columns:  # first offender per column
                        bad_columns.add(col)
                        problems.append(f"column {col!r}, row {rownum}: cannot parse {cell!r}")
            parsed.append(out)

    if problems:
        details = "; ".join(problems)
        raise SchemaError(f"{path} does not match the {schema.name} schema: {details}")
    return parsed
