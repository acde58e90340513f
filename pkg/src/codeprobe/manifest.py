"""Run manifests and report CSV output."""

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional

from . import __version__

CSV_HEADER = ("run_id", "metric", "input_kind", "config", "seed", "n", "value")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything that determines a run's report rows.

    ``run_id`` hashes the subcommand, input contents, flags, seeds and tool
    version. Paths and wall-clock time are recorded but not hashed.
    """

    subcommand: str
    inputs: Dict[str, str] = field(default_factory=dict)
    input_hashes: Dict[str, str] = field(default_factory=dict)
    flags: Dict[str, object] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    version: str = __version__
    duration_seconds: Optional[float] = None

    def add_input(self, role: str, path) -> None:
        self.inputs[role] = str(path)
        self.input_hashes[role] = file_sha256(path)

    @property
    def run_id(self) -> str:
        payload = json.dumps(
            {"subcommand": self.subcommand, "inputs": self.input_hashes, "flags": self.flags,
             "seeds": self.seeds, "version": self.version},
            sort_keys=True, default=str,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps({"run_id": self.run_id, **asdict(self)}, indent=2, sort_keys=True,
                          default=str) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def format_value(v: float) -> str:
    return format(float(v), ".12g")


def render_csv(run_id: str, rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow((run_id, r.metric, r.input_kind, r.config, r.seed, r.n, format_value(r.value)))
    return buf.getvalue()


def read_report(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: not a report CSV (header {reader.fieldnames})")
        return list(reader)
