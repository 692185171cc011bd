"""Plain-text artifact helpers: CSV tables with a schema comment, JSON sidecars.

Floats are written with ``repr`` (shortest round-trip form) so files are
byte-identical for identical inputs and reload without loss.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ArtifactError

SCHEMA_VERSION = 1


def _fmt(col):
    col = np.asarray(col)
    if col.dtype.kind in "iub":
        return [str(int(v)) for v in col]
    return [repr(float(v)) for v in col]


def write_table(path, schema: str, columns: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [_fmt(columns[k]) for k in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"ragged columns for {path.name}: {lengths}")
    lines = [f"# schema: msirl/{schema}/{SCHEMA_VERSION}", ",".join(names)]
    lines.extend(",".join(row) for row in zip(*cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"missing artifact: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ArtifactError(f"empty artifact: {path}")
    names = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    out = {}
    for j, name in enumerate(names):
        raw = [r[j] for r in rows]
        try:
            out[name] = np.array([int(v) for v in raw], dtype=np.int64)
        except ValueError:
            out[name] = np.array([float(v) for v in raw], dtype=float)
    return out


def write_json(path, schema: str, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema": f"msirl/{schema}/{SCHEMA_VERSION}", **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"missing artifact: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"malformed JSON in {path}: {exc}") from exc


def write_triplets(path, schema: str, M) -> Path:
    """Store a matrix as ``row,col,value`` (zeros omitted, row-major order)."""
    M = sp.coo_matrix(M)
    M.sum_duplicates()
    order = np.lexsort((M.col, M.row))
    keep = M.data[order] != 0
    return write_table(path, schema, {
        "row": M.row[order][keep].astype(np.int64),
        "col": M.col[order][keep].astype(np.int64),
        "value": M.data[order][keep].astype(float),
    })


def read_triplets(path, shape) -> sp.csr_matrix:
    t = read_table(path)
    if not t:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((t["value"].astype(float), (t["row"], t["col"])), shape=shape)
