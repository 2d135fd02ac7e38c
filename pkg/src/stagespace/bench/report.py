"""CSV benchmark reports with fixed schemas.

Three report kinds exist, each with an exact header:

- ``devbench``: ``pattern,rw,bs,jobs,qd,direct,mib_per_s,iops,mean_lat_us,p99_lat_us``
- ``scaling``:  ``mode,role,clients,servers,timestep,bytes,response_time_s,status``
- ``kernelbench``: ``backend,op,bytes,elapsed_s,mib_per_s``

Emission is deterministic (re-emitting a report reproduces the file byte for
byte) and :func:`parse_report` round-trips a written file back to equal rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from ..errors import ConfigError

DEVBENCH_COLUMNS = ("pattern", "rw", "bs", "jobs", "qd", "direct",
                    "mib_per_s", "iops", "mean_lat_us", "p99_lat_us")
SCALING_COLUMNS = ("mode", "role", "clients", "servers", "timestep",
                   "bytes", "response_time_s", "status")
KERNELBENCH_COLUMNS = ("backend", "op", "bytes", "elapsed_s", "mib_per_s")

_SCHEMAS = {"devbench": DEVBENCH_COLUMNS, "scaling": SCALING_COLUMNS,
            "kernelbench": KERNELBENCH_COLUMNS}

# Column parsers for round-tripping; "timestep" stays a string because the
# summary row uses the literal "mean".
_INT_COLUMNS = {"bs", "jobs", "qd", "direct", "clients", "servers", "bytes"}
_FLOAT_COLUMNS = {"mib_per_s", "iops", "mean_lat_us", "p99_lat_us",
                  "response_time_s", "elapsed_s"}


@dataclass
class BenchReport:
    kind: str  # "devbench" | "scaling" | "kernelbench"
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in _SCHEMAS:
            raise ConfigError(f"unknown report kind {self.kind!r}")

    @property
    def columns(self) -> tuple[str, ...]:
        return _SCHEMAS[self.kind]

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"{self.kind} rows have {len(self.columns)} "
                             f"columns, got {len(values)}")
        self.rows.append(tuple(values))

    def extend(self, other: "BenchReport"):
        if other.kind != self.kind:
            raise ValueError("cannot merge reports of different kinds")
        self.rows.extend(other.rows)


def render_report(report: BenchReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow(row)
    return out.getvalue()


def emit_report(report: BenchReport, path: str):
    """Write the report CSV, replacing any previous file at path."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_report(report))


def parse_report(path: str) -> BenchReport:
    """Read a CSV produced by :func:`emit_report` back into typed rows."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ConfigError(f"{path}: empty report file") from None
        for kind, columns in _SCHEMAS.items():
            if header == columns:
                break
        else:
            raise ConfigError(f"{path}: unrecognized header {header!r}")
        report = BenchReport(kind)
        for row in reader:
            if len(row) != len(columns):
                raise ConfigError(f"{path}: row has {len(row)} columns")
            report.add(*(_convert(col, cell)
                         for col, cell in zip(columns, row)))
    return report


def _convert(column: str, cell: str):
    if column in _INT_COLUMNS:
        return int(cell)
    if column in _FLOAT_COLUMNS:
        return float(cell)
    return cell
