"""Readers and writers for measurement files and pipeline artifacts.

Measurements are JSON lines. Vectors and matrices are CSV with a header row;
their shape metadata (serving cell, id order, report/record counts) lives in
a ``<name>.meta.json`` sidecar so that empty blocks survive a round trip.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .cirsp import SpMatrix
from .icdm import Icdm
from .source_data import DtMatrix, DtRecord, MmrReport, MmrsVector

SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_json(path: str | Path, payload: dict) -> None:
    body = {"schema": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from exc


def _rx(v: float) -> float:
    return round(float(v), 1)


def write_mmrs_jsonl(path: str | Path, reports: Iterable[MmrReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps({
                "serving_id": r.serving_id,
                "serving_rxlev": _rx(r.serving_rxlev),
                "neighbors": [{"id": i, "rxlev": _rx(v)} for i, v in r.neighbors],
            }) + "\n")


def _jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc.msg}") from exc


def read_mmrs_jsonl(path: str | Path) -> list[MmrReport]:
    path = Path(path)
    out = []
    for lineno, obj in _jsonl(path):
        try:
            out.append(MmrReport(
                obj["serving_id"], obj["serving_rxlev"],
                tuple((n["id"], n["rxlev"]) for n in obj.get("neighbors", [])),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad MMR report ({exc})") from exc
    return out


def write_dt_jsonl(path: str | Path, records: Iterable[DtRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "x": r.x,
                "y": r.y,
                "readings": [{"id": i, "rxlev": _rx(v)} for i, v in r.readings],
            }) + "\n")


def read_dt_jsonl(path: str | Path) -> list[DtRecord]:
    path = Path(path)
    out = []
    for lineno, obj in _jsonl(path):
        try:
            out.append(DtRecord(
                float(obj["x"]), float(obj["y"]),
                tuple((n["id"], n["rxlev"]) for n in obj["readings"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad DT record ({exc})") from exc
    return out


def write_mmrs_vector(path: str | Path, mmrs: MmrsVector, **extra_meta) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["neighbor_id", "q", "count"])
        mat = mmrs.matrix()
        for j, cid in enumerate(mmrs.neighbor_ids):
            for q in range(mmrs.Q):
                w.writerow([cid, q + 1, int(mat[j, q])])
    write_json(_meta_path(path), {
        "serving_id": mmrs.serving_id,
        "neighbor_ids": list(mmrs.neighbor_ids),
        "Q": mmrs.Q,
        "total_reports": mmrs.total_reports,
        **extra_meta,
    })


def _csv_rows(path: Path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise FormatError(f"{path}:1: expected header {header}, got {first}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def read_mmrs_vector(path: str | Path) -> MmrsVector:
    path = Path(path)
    meta = read_json(_meta_path(path))
    ids = meta["neighbor_ids"]
    Q = int(meta["Q"])
    row = {cid: j for j, cid in enumerate(ids)}
    counts = np.zeros(len(ids) * Q, dtype=np.int64)
    for lineno, (cid, q, count) in _csv_rows(path, ["neighbor_id", "q", "count"]):
        try:
            counts[row[cid] * Q + int(q) - 1] = int(count)
        except (KeyError, ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{lineno}: bad MMRs entry ({exc})") from exc
    return MmrsVector(meta["serving_id"], tuple(ids), counts, int(meta["total_reports"]), Q)


def write_dt_matrix(path: str | Path, dt: DtMatrix, **extra_meta) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["neighbor_id", "record_index", "cir_db"])
        for i, cid in enumerate(dt.neighbor_ids):
            for m in np.flatnonzero(dt.detected[i]):
                w.writerow([cid, int(m), repr(float(dt.values[i, m]))])
    write_json(_meta_path(path), {
        "serving_id": dt.serving_id,
        "neighbor_ids": list(dt.neighbor_ids),
        "M": dt.M,
        **extra_meta,
    })


def read_dt_matrix(path: str | Path) -> DtMatrix:
    path = Path(path)
    meta = read_json(_meta_path(path))
    ids = meta["neighbor_ids"]
    row = {cid: i for i, cid in enumerate(ids)}
    values = np.full((len(ids), int(meta["M"])), np.nan)
    for lineno, (cid, m, v) in _csv_rows(path, ["neighbor_id", "record_index", "cir_db"]):
        try:
            values[row[cid], int(m)] = float(v)
        except (KeyError, ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{lineno}: bad DT entry ({exc})") from exc
    return DtMatrix(meta["serving_id"], tuple(ids), values)


def write_sp_matrix(path: str | Path, sp: SpMatrix) -> None:
    rows, cols = np.nonzero(sp.data)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for r, c in zip(rows, cols):
            w.writerow([int(r), int(c), 1])


def write_icdm(path: str | Path, *rows: Icdm) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["serving_id", "neighbor_id", "probability"])
        for icdm in rows:
            for cid, p in icdm.entries.items():
                w.writerow([icdm.serving_id, cid, f"{p:.6f}"])


def read_icdm(path: str | Path) -> list[Icdm]:
    """All rows of an ICDM CSV, one :class:`Icdm` per serving cell, in file order."""
    path = Path(path)
    rows: dict[str, dict[str, float]] = {}
    for lineno, (sid, cid, p) in _csv_rows(path, ["serving_id", "neighbor_id", "probability"]):
        try:
            value = float(p)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad probability {p!r}") from exc
        if not 0.0 <= value <= 1.0:
            raise FormatError(f"{path}:{lineno}: probability {value} outside [0, 1]")
        entries = rows.setdefault(sid, {})
        if cid in entries:
            raise FormatError(f"{path}:{lineno}: duplicate entry for {sid}->{cid}")
        entries[cid] = value
    return [Icdm(sid, e) for sid, e in rows.items()]


def read_single_icdm(path: str | Path) -> Icdm:
    rows = read_icdm(path)
    if len(rows) != 1:
        raise FormatError(f"{path}: expected one serving cell, found {len(rows)}")
    return rows[0]
