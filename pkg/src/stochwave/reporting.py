"""Result serialization: CSV and JSON-lines with a self-describing header.

Both formats carry the config echo, its content hash, the package version,
the summary, and typed column metadata, so ``parse_results(write_results())``
recovers the record field-for-field.  Numbers are written with 17
significant digits (shortest-round-trip precision for binary64), making
files byte-for-byte reproducible under identical (config, seed) pairs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

from . import __version__
from .errors import ConfigurationError
from .experiments import StudyReport

__all__ = ["ResultRecord", "record_from_study", "write_results", "parse_results",
           "config_hash", "FORMATS"]

FORMATS = ("csv", "json-lines")

_MAGIC = "stochwave-result"


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(echo: dict) -> str:
    return hashlib.sha256(_canonical_json(echo).encode()).hexdigest()[:16]


def _format_number(x: float) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def _cell_type(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    return "str"


def _parse_cell(text: str, type_name: str):
    if type_name == "float":
        return float(text)
    if type_name == "int":
        return int(text)
    if type_name == "bool":
        return text == "true"
    return text


@dataclass
class ResultRecord:
    """Serializable study output: metadata plus a homogeneous row table."""

    kind: str
    config: dict
    summary: dict
    rows: list[dict]
    seed: int
    version: str = __version__
    columns: list[str] = field(default_factory=list)
    column_types: list[str] = field(default_factory=list)
    config_digest: str = ""

    def __post_init__(self):
        if not self.columns:
            seen: dict[str, None] = {}
            for row in self.rows:
                for key in row:
                    seen.setdefault(key)
            self.columns = list(seen)
        if not self.column_types:
            self.column_types = [
                next((_cell_type(row[c]) for row in self.rows if c in row), "str")
                for c in self.columns
            ]
        if not self.config_digest:
            self.config_digest = config_hash(self.config)

    def meta(self) -> dict:
        return {
            "record_type": "meta",
            "magic": _MAGIC,
            "version": self.version,
            "kind": self.kind,
            "seed": self.seed,
            "config_hash": self.config_digest,
            "config": self.config,
            "summary": self.summary,
            "columns": self.columns,
            "column_types": self.column_types,
        }


def record_from_study(report: StudyReport, config_echo: dict | None = None) -> ResultRecord:
    """Wrap a study report for serialization.

    The study's parameter echo stands in when no file-level config echo is
    available; wall-clock time is intentionally dropped so reruns with the
    same seed serialize identically.
    """
    return ResultRecord(
        kind=report.kind,
        config=config_echo if config_echo is not None else report.inputs,
        summary=report.summary,
        rows=report.rows,
        seed=report.seed,
    )


def _write_csv(record: ResultRecord, fh):
    meta = record.meta()
    fh.write(f"# {_MAGIC} version={record.version} kind={record.kind} "
             f"seed={record.seed} config-hash={record.config_digest}\n")
    fh.write(f"# config: {_canonical_json(record.config)}\n")
    fh.write(f"# summary: {_canonical_json(_jsonable(record.summary))}\n")
    fh.write(f"# column-types: {_canonical_json(record.column_types)}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(record.columns)
    for row in record.rows:
        out = []
        for col, type_name in zip(record.columns, record.column_types):
            value = row.get(col, "")
            if type_name == "float" and value != "":
                out.append(_format_number(float(value)))
            elif type_name == "bool" and value != "":
                out.append("true" if value else "false")
            else:
                out.append(str(value))
        writer.writerow(out)


def _jsonable(obj):
    """Coerce numpy scalars and containers into plain JSON-ready values."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_jsonl(record: ResultRecord, fh):
    fh.write(_canonical_json(_jsonable(record.meta())) + "\n")
    for row in record.rows:
        body = {"record_type": "row"}
        body.update({c: _jsonable(row[c]) for c in record.columns if c in row})
        fh.write(_canonical_json(body) + "\n")


def write_results(record: ResultRecord, path: str, fmt: str = "csv"):
    """Write a record, overwriting any existing file at ``path``."""
    if fmt not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}, got {fmt!r}")
    buf = io.StringIO()
    if fmt == "csv":
        _write_csv(record, buf)
    else:
        _write_jsonl(record, buf)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as err:
        raise OSError(f"cannot write results to {path!r}: {err}") from err


def parse_results(path: str) -> ResultRecord:
    """Read back a CSV or JSON-lines record (format sniffed from content)."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        fh.seek(0)
        if first.startswith("{"):
            return _parse_jsonl(fh)
        if first.startswith(f"# {_MAGIC}"):
            return _parse_csv(fh)
    raise ConfigurationError(f"{path!r} is not a stochwave result file")


def _parse_csv(fh) -> ResultRecord:
    header = fh.readline().strip()
    fields = dict(part.split("=", 1) for part in header[2:].split()[1:])
    config = json.loads(fh.readline().split(": ", 1)[1])
    summary = json.loads(fh.readline().split(": ", 1)[1])
    column_types = json.loads(fh.readline().split(": ", 1)[1])
    reader = csv.reader(fh)
    columns = next(reader)
    rows = []
    for raw in reader:
        row = {}
        for col, type_name, cell in zip(columns, column_types, raw):
            if cell != "":
                row[col] = _parse_cell(cell, type_name)
        rows.append(row)
    return ResultRecord(
        kind=fields["kind"], config=config, summary=summary, rows=rows,
        seed=int(fields["seed"]), version=fields["version"],
        columns=columns, column_types=column_types,
        config_digest=fields["config-hash"],
    )


def _parse_jsonl(fh) -> ResultRecord:
    meta = json.loads(fh.readline())
    if meta.get("magic") != _MAGIC:
        raise ConfigurationError("missing meta line in JSON-lines record")
    rows = []
    for line in fh:
        if not line.strip():
            continue
        body = json.loads(line)
        body.pop("record_type", None)
        rows.append(body)
    return ResultRecord(
        kind=meta["kind"], config=meta["config"], summary=meta["summary"],
        rows=rows, seed=meta["seed"], version=meta["version"],
        columns=meta["columns"], column_types=meta["column_types"],
        config_digest=meta["config_hash"],
    )
