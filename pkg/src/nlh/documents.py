"""Curve documents: CSV and JSON serialisation of NLH curves with metadata.

A CSV document starts with ``#``-prefixed lines, the first holding the
metadata as one JSON object, followed by the table
``t,d_n,kappa,nlh,defined``.  Floats are written with ``repr`` so both
formats round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import NlhCurve

__all__ = ["SCHEMA_VERSION", "CurveDocument", "curve_document", "write_curve_csv", "read_curve_csv", "write_curves_json", "read_curves_json"]

SCHEMA_VERSION = "1"
COLUMNS = ("t", "d_n", "kappa", "nlh", "defined")


@dataclass
class CurveDocument:
    """Metadata plus the evaluated curve table."""

    metadata: dict
    t: np.ndarray
    d_n: np.ndarray
    kappa: np.ndarray
    nlh: np.ndarray
    defined: np.ndarray

    def as_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "table": {
                "t": [float(v) for v in self.t],
                "d_n": [float(v) for v in self.d_n],
                "kappa": [float(v) for v in self.kappa],
                "nlh": [_json_float(v) for v in self.nlh],
                "defined": [bool(v) for v in self.defined],
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CurveDocument":
        table = doc["table"]
        return cls(
            dict(doc["metadata"]),
            np.asarray(table["t"], dtype=float),
            np.asarray(table["d_n"], dtype=float),
            np.asarray(table["kappa"], dtype=float),
            np.array([math.nan if v is None else v for v in table["nlh"]], dtype=float),
            np.asarray(table["defined"], dtype=bool),
        )


def _json_float(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def curve_document(curve: NlhCurve, names=None, std_errors=None, version: str | None = None) -> CurveDocument:
    """Wrap a curve with its fit summary for output."""
    from . import __version__

    meta = {"schema_version": SCHEMA_VERSION, "software_version": version or __version__}
    meta.update(curve.metadata())
    if names is not None:
        meta["parameters"] = list(names)
    if std_errors is not None:
        meta["std_errors"] = [float(v) for v in std_errors]
    nlh = np.where(curve.defined, curve.nlh, np.nan)
    return CurveDocument(meta, curve.times.copy(), curve.d_n.copy(), curve.kappa.copy(), nlh, curve.defined.copy())


def write_curve_csv(doc: CurveDocument, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        fh.write("# " + json.dumps(doc.metadata, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in zip(doc.t, doc.d_n, doc.kappa, doc.nlh, doc.defined):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), int(row[4])])


def read_curve_csv(path) -> CurveDocument:
    meta: dict = {}
    rows = []
    with open(Path(path), newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                if not meta:
                    try:
                        meta = json.loads(line[1:])
                    except json.JSONDecodeError as exc:
                        raise ValueError(f"{path}:{lineno}: bad metadata line: {exc}") from None
                continue
            rows.append((lineno, line))
    reader = csv.reader([r[1] for r in rows])
    table = list(reader)
    if not table or tuple(table[0]) != COLUMNS:
        raise ValueError(f"{path}: expected columns {','.join(COLUMNS)}")
    cols = [[] for _ in COLUMNS]
    for (lineno, _), row in zip(rows[1:], table[1:]):
        if len(row) != len(COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(COLUMNS)} fields")
        try:
            for col, cell in zip(cols[:4], row[:4]):
                col.append(float(cell))
            cols[4].append(bool(int(row[4])))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
    return CurveDocument(meta, *(np.asarray(c, dtype=float) for c in cols[:4]), np.asarray(cols[4], dtype=bool))


def write_curves_json(docs: list[CurveDocument], path, fit: dict | None = None) -> None:
    out = {"schema_version": SCHEMA_VERSION, "fit": fit, "curves": [d.as_dict() for d in docs]}
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def read_curves_json(path) -> tuple[list[CurveDocument], dict | None]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {doc.get('schema_version')!r}")
    return [CurveDocument.from_dict(c) for c in doc["curves"]], doc.get("fit")
