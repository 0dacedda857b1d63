"""Plain-text serialization for matrices, atom lists, leaf paths and correlation records.

Floats are written with 17 significant digits so doubles round-trip.
Readers skip blank lines and ``#`` comment lines before the format header.
"""

from __future__ import annotations

import io as _io
from typing import Iterable, List, TextIO

import numpy as np
import scipy.sparse as sp

from .correlations import CorrelationRecord
from .fiber import AtomicMeasure
from .skew import LeafPath
from .transfer1d import GridDensity, UlamMatrix

FLOAT_FMT = "{:.17g}"


def fmt(v: float) -> str:
    return FLOAT_FMT.format(float(v))


def _lines(stream: TextIO) -> List[str]:
    return [ln.rstrip("\n") for ln in stream]


def _strip_comments(lines: Iterable[str]) -> List[str]:
    out = [ln for ln in lines if ln.strip()]
    k = 0
    while k < len(out) and out[k].startswith("#"):
        k += 1
    return out[k:]


def _fields(header: str, keyword: str) -> dict:
    parts = header.split()
    if not parts or parts[0] != keyword:
        raise ValueError(f"expected a '{keyword}' header, got {header!r}")
    out = {}
    for p in parts[1:]:
        key, _, val = p.partition("=")
        out[key] = val
    return out


# Ulam matrices

def write_ulam(M: UlamMatrix, stream: TextIO) -> None:
    coo = M.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    stream.write(f"ulam n_bins={M.n_bins} map={M.map_name}\n")
    for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        stream.write(f"{i} {j} {fmt(v)}\n")


def read_ulam(stream: TextIO) -> UlamMatrix:
    lines = _strip_comments(_lines(stream))
    head = _fields(lines[0], "ulam")
    n = int(head["n_bins"])
    if len(lines) > 1:
        data = np.array([ln.split() for ln in lines[1:]], dtype=float)
        rows, cols, vals = data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return UlamMatrix(mat, head.get("map", ""), 0, 0.0, {"source": "file"})


# atom lists

def write_atoms(mu: AtomicMeasure, stream: TextIO) -> None:
    stream.write(f"# atoms={mu.n_atoms} mass={fmt(mu.total_mass)}\n")
    for x, w in zip(mu.positions, mu.weights):
        stream.write(f"{fmt(x)},{fmt(w)}\n")


def read_atoms(stream: TextIO) -> AtomicMeasure:
    rows = [ln for ln in _lines(stream) if ln.strip() and not ln.startswith("#")]
    if not rows:
        return AtomicMeasure.zero()
    data = np.array([r.split(",") for r in rows], dtype=float)
    return AtomicMeasure(data[:, 0], data[:, 1])


# leaf paths

def write_leafpath(P: LeafPath, stream: TextIO) -> None:
    tag = str(P.tag).replace(" ", "_") or "-"
    stream.write(f"leafpath n_leaves={P.n_leaves} meta={tag}\n")
    for j in range(P.n_leaves):
        stream.write(f"--- leaf {j}\n")
        a, b = P.ptr[j], P.ptr[j + 1]
        for x, w in zip(P.positions[a:b], P.weights[a:b]):
            stream.write(f"{fmt(x)},{fmt(w)}\n")


def read_leafpath(stream: TextIO) -> LeafPath:
    lines = _strip_comments(_lines(stream))
    head = _fields(lines[0], "leafpath")
    n = int(head["n_leaves"])
    leaves: List[List[str]] = []
    for ln in lines[1:]:
        if ln.startswith("--- leaf"):
            j = int(ln.split()[2])
            if j != len(leaves):
                raise ValueError(f"leaf blocks out of order at {ln!r}")
            leaves.append([])
        else:
            if not leaves:
                raise ValueError("atom line before the first leaf block")
            leaves[-1].append(ln)
    if len(leaves) != n:
        raise ValueError(f"expected {n} leaf blocks, found {len(leaves)}")
    measures = []
    for rows in leaves:
        if rows:
            data = np.array([r.split(",") for r in rows], dtype=float)
            measures.append(AtomicMeasure(data[:, 0], data[:, 1]))
        else:
            measures.append(AtomicMeasure.zero())
    return LeafPath.from_leaves(measures, {"tag": head.get("meta", "")})


# densities and correlation records

def write_density(h: GridDensity, stream: TextIO) -> None:
    stream.write("bin_midpoint,value\n")
    for x, v in zip(h.midpoints(), h.values):
        stream.write(f"{fmt(x)},{fmt(v)}\n")


def write_correlation(rec: CorrelationRecord, stream: TextIO) -> None:
    stream.write("n,value,stderr\n")
    for n, (v, e) in enumerate(zip(rec.values, rec.stderr)):
        stream.write(f"{n},{fmt(v)},{fmt(e)}\n")
    stream.write(f"# fit A={fmt(rec.amplitude)} lambda={fmt(rec.rate)} residual={fmt(rec.residual)}\n")


def read_correlation(stream: TextIO) -> CorrelationRecord:
    lines = [ln for ln in _lines(stream) if ln.strip()]
    body = [ln for ln in lines if not ln.startswith("#") and not ln.startswith("n,")]
    footer = [ln for ln in lines if ln.startswith("# fit")]
    data = np.array([ln.split(",") for ln in body], dtype=float).reshape(-1, 3)
    fit = _fields(footer[-1][2:], "fit") if footer else {}
    return CorrelationRecord(data[:, 1], data[:, 2], float(fit.get("A", "nan")),
                             float(fit.get("lambda", "nan")), float(fit.get("residual", "nan")), "file")


def to_text(writer, obj) -> str:
    buf = _io.StringIO()
    writer(obj, buf)
    return buf.getvalue()
