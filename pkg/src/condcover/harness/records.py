"""Trial records, the versioned results CSV, and summaries."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import tempfile
from collections import defaultdict
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

SCHEMA_VERSION = 1

RESULT_FIELDS = [
    "schema_version", "experiment", "setting", "trial_id", "method", "correction",
    "group", "covered_count", "total", "rate", "width_mean", "width_median",
]


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    setting: str
    trial_id: int
    method: str
    correction: str
    group: str
    covered_count: int
    total: int
    rate: float | None
    width_mean: float | None = None
    width_median: float | None = None
    fit_millis: float = 0.0

    def __post_init__(self):
        if not (0 <= self.covered_count <= self.total):
            raise ValueError(f"covered_count {self.covered_count} outside [0, {self.total}]")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def records_to_csv(records) -> str:
    """Deterministic CSV text. Timings are left out; they go to the metadata files."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in records:
        row = asdict(r)
        row["schema_version"] = SCHEMA_VERSION
        w.writerow([_fmt(row[f]) for f in RESULT_FIELDS])
    return buf.getvalue()


def read_records_csv(path) -> list[TrialRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["schema_version"]) != SCHEMA_VERSION:
                raise ValueError(f"unsupported schema version {row['schema_version']}")
            opt = lambda v: None if v == "" else float(v)  # noqa: E731
            out.append(TrialRecord(
                row["experiment"], row["setting"], int(row["trial_id"]), row["method"],
                row["correction"], row["group"], int(row["covered_count"]), int(row["total"]),
                opt(row["rate"]), opt(row["width_mean"]), opt(row["width_median"]),
            ))
    return out


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(path, records, config: dict | None = None) -> None:
    """Results CSV plus ``<path>.meta.json`` (timestamp, config) and ``<path>.timings.csv``."""
    path = Path(path)
    atomic_write(path, records_to_csv(records))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "records": len(records),
        "config": config or {},
    }
    atomic_write(path.with_name(path.name + ".meta.json"), json.dumps(meta, indent=2, default=str))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "trial_id", "method", "correction", "fit_millis"])
    seen = set()
    for r in records:
        key = (r.setting, r.trial_id, r.method, r.correction)
        if key not in seen:
            seen.add(key)
            w.writerow([r.setting, r.trial_id, r.method, r.correction, repr(r.fit_millis)])
    atomic_write(path.with_name(path.name + ".timings.csv"), buf.getvalue())


@dataclass(frozen=True)
class SummaryRow:
    setting: str
    method: str
    correction: str
    group: str
    metric: str
    mean: float
    std: float
    median: float
    count: int


def emit_summary(records) -> list[SummaryRow]:
    """Mean, std and median of rate and widths per (setting, method, correction, group)."""
    records = list(records)
    if not records:
        raise ValueError("cannot summarize an empty result table")
    cells: dict[tuple, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        key = (r.setting, r.method, r.correction, r.group)
        for metric in ("rate", "width_mean", "width_median"):
            v = getattr(r, metric)
            if v is not None and not math.isnan(v):
                cells[key][metric].append(v)
    out = []
    for key in sorted(cells, key=_sort_key):
        for metric in ("rate", "width_mean", "width_median"):
            vals = cells[key][metric]
            if not vals:
                continue
            mean = math.fsum(vals) / len(vals)
            std = statistics.pstdev(vals) if len(vals) > 1 else 0.0
            out.append(SummaryRow(*key, metric, mean, std, statistics.median(vals), len(vals)))
    return out


def _sort_key(key):
    setting, method, correction, group = key
    num = "".join(ch for ch in setting if ch.isdigit() or ch == ".")
    try:
        lead = float(num)
    except ValueError:
        lead = math.inf
    return (lead, setting, method, correction, group != "marginal", group)


def summary_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "method", "correction", "group", "metric", "mean", "std", "median", "count"])
    for r in rows:
        w.writerow([r.setting, r.method, r.correction, r.group, r.metric, repr(r.mean), repr(r.std),
                    repr(r.median), r.count])
    return buf.getvalue()


def summary_lookup(rows, setting: str, method: str, correction: str, group: str = "marginal",
                   metric: str = "rate") -> SummaryRow:
    for r in rows:
        if (r.setting, r.method, r.correction, r.group, r.metric) == (setting, method, correction, group, metric):
            return r
    raise KeyError((setting, method, correction, group, metric))
