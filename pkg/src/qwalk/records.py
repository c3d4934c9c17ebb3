"""Results persistence: append-only structured records, CSV matrices, and
run manifests.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = ["ResultRecord", "RecordWriter", "RunManifest", "write_csv_matrix", "read_records"]

RECORD_SCHEMA_VERSION = 1

RECORD_KINDS = (
    "populations",
    "correlation",
    "front_fit",
    "velocity",
    "fringe_grid",
    "fit",
    "calibration_step",
    "shots",
    "error",
)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class ResultRecord:
    kind: str
    payload: dict
    coords: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}")

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "schema_version": RECORD_SCHEMA_VERSION,
            "coords": _jsonable(self.coords),
            "payload": _jsonable(self.payload),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class RecordWriter:
    """Line-delimited JSON sink; records land in deterministic call order."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")
        self.n_written = 0

    def write(self, record: ResultRecord) -> None:
        self._fh.write(record.to_json() + "\n")
        self.n_written += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_records(path) -> list[ResultRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        out.append(ResultRecord(doc["kind"], doc["payload"], doc.get("coords", {})))
    return out


def write_csv_matrix(path, matrix, row_labels=None, col_labels=None, corner: str = "") -> None:
    matrix = np.asarray(matrix)
    lines = []
    if col_labels is not None:
        lines.append(corner + "," + ",".join(str(c) for c in col_labels))
    for i, row in enumerate(matrix):
        cells = ",".join(repr(float(x)) for x in row)
        if row_labels is not None:
            lines.append(f"{row_labels[i]},{cells}")
        else:
            lines.append(cells)
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class RunManifest:
    """Written before the run starts, finalized after it ends. Timestamps are
    wall-clock metadata and deliberately excluded from determinism checks."""

    scenario: str
    seed: int
    code_version: str
    out_dir: str
    overrides: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "running"
    started_at: str = ""
    finished_at: str = ""

    def path(self) -> Path:
        return Path(self.out_dir) / "manifest.json"

    def start(self) -> None:
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.status = "running"
        self._dump()

    def finish(self, status: str = "done") -> None:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.status = status
        self._dump()

    def add_output(self, name: str) -> None:
        if name not in self.outputs:
            self.outputs.append(name)

    def _dump(self) -> None:
        doc = {
            "schema_version": 1,
            "scenario": self.scenario,
            "seed": self.seed,
            "code_version": self.code_version,
            "overrides": _jsonable(self.overrides),
            "outputs": list(self.outputs),
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        self.path().write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    @staticmethod
    def validate_file(path) -> dict:
        doc = json.loads(Path(path).read_text())
        required = {"schema_version", "scenario", "seed", "code_version", "outputs", "status", "started_at"}
        missing = required - doc.keys()
        if missing:
            raise ValueError(f"manifest missing fields: {sorted(missing)}")
        if doc["schema_version"] != 1:
            raise ValueError(f"unsupported manifest schema version {doc['schema_version']!r}")
        return doc
