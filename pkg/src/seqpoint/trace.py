"""Per-iteration trace data model, file formats, and per-SL summaries.

A trace holds one training epoch of a sequence-based workload under one
hardware/software configuration: one record per iteration, keyed by the
iteration's padded batch sequence length (SL). Two interchange formats are
supported:

* CSV with header ``index,seq_len,runtime_s[,metric:<name>]*`` (records only;
  trace metadata is supplied by the caller), and
* JSON with keys ``config_id``, ``dataset_id``, ``batch_size``,
  ``vocab_size``, ``records``.

All types are immutable after construction and all functions are pure, so
everything here is safe for concurrent use. Numbers are serialized with full
round-trip precision; parsing identical bytes yields identical traces.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping

from .errors import TraceParseError, TraceValidationError

CSV_REQUIRED_COLUMNS = ("index", "seq_len", "runtime_s")
METRIC_COLUMN_PREFIX = "metric:"

# Stat name under which iteration runtime appears alongside named metrics.
RUNTIME_STAT = "runtime"


def _check_metric_name(name: str) -> None:
    if not name:
        raise TraceValidationError("metric name must be non-empty")
    if name == RUNTIME_STAT:
        raise TraceValidationError(f"metric name {RUNTIME_STAT!r} is reserved")
    if any(ch in name for ch in ",\r\n"):
        raise TraceValidationError(f"metric name {name!r} contains characters unsafe for CSV")


@dataclass(frozen=True)
class IterationRecord:
    """One training iteration: its position, padded batch SL, and runtime."""

    index: int
    seq_len: int
    runtime: float
    metrics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.index < 0:
            raise TraceValidationError(f"index must be >= 0, got {self.index}")
        if self.seq_len < 1:
            raise TraceValidationError(f"seq_len must be >= 1, got {self.seq_len}")
        if not (self.runtime > 0 and math.isfinite(self.runtime)):
            raise TraceValidationError(f"runtime must be > 0, got {self.runtime}")
        for name, value in self.metrics.items():
            _check_metric_name(name)
            if not math.isfinite(value):
                raise TraceValidationError(f"metric {name!r} must be finite, got {value}")


@dataclass(frozen=True)
class EpochTrace:
    """Ordered iteration records for one epoch under one configuration.

    Batch size and vocabulary size are constant for the whole trace; indices
    must be the contiguous range 0..len-1 and every record must carry the
    same set of metric names.
    """

    records: tuple[IterationRecord, ...]
    config_id: str = ""
    batch_size: int = 1
    vocab_size: int = 1
    dataset_id: str = ""

    def __post_init__(self):
        if not self.records:
            raise TraceValidationError("trace must contain at least one record")
        if self.batch_size < 1:
            raise TraceValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.vocab_size < 1:
            raise TraceValidationError(f"vocab_size must be >= 1, got {self.vocab_size}")
        indices = [r.index for r in self.records]
        if len(set(indices)) != len(indices):
            dup = next(i for i in indices if indices.count(i) > 1)
            raise TraceValidationError(f"duplicate iteration index {dup}")
        if indices != list(range(len(indices))):
            raise TraceValidationError("iteration indices must be contiguous 0..len-1 and ordered")
        metric_names = frozenset(self.records[0].metrics)
        for r in self.records:
            if frozenset(r.metrics) != metric_names:
                raise TraceValidationError(
                    f"record {r.index} carries metric set {sorted(r.metrics)}, "
                    f"expected {sorted(metric_names)}"
                )

    @property
    def metric_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.records[0].metrics))

    @property
    def total_runtime(self) -> float:
        return sum(r.runtime for r in self.records)


@dataclass(frozen=True)
class SLHistogram:
    """Count of iterations per observed sequence length."""

    entries: Mapping[int, int]
    min_sl: int
    max_sl: int

    @property
    def total_count(self) -> int:
        return sum(self.entries.values())


@dataclass(frozen=True)
class SLStats:
    """Per-SL iteration counts and arithmetic means of runtime and metrics."""

    mean_runtime: Mapping[int, float]
    count: Mapping[int, int]
    mean_metrics: Mapping[str, Mapping[int, float]]

    def values_at(self, sl: int) -> dict[str, float]:
        """Mean runtime and metric values observed at one SL, keyed by stat name."""
        values = {RUNTIME_STAT: self.mean_runtime[sl]}
        for name, per_sl in self.mean_metrics.items():
            values[name] = per_sl[sl]
        return values


def sl_histogram(trace: EpochTrace) -> SLHistogram:
    """Count iterations per SL. Sum of counts equals the record count."""
    entries: dict[int, int] = {}
    for r in trace.records:
        entries[r.seq_len] = entries.get(r.seq_len, 0) + 1
    entries = dict(sorted(entries.items()))
    return SLHistogram(entries=entries, min_sl=min(entries), max_sl=max(entries))


def sl_stats(trace: EpochTrace) -> SLStats:
    """Arithmetic mean of runtime (and each metric) over iterations sharing an SL."""
    count: dict[int, int] = {}
    runtime_sum: dict[int, float] = {}
    metric_sums: dict[str, dict[int, float]] = {name: {} for name in trace.metric_names}
    for r in trace.records:
        count[r.seq_len] = count.get(r.seq_len, 0) + 1
        runtime_sum[r.seq_len] = runtime_sum.get(r.seq_len, 0.0) + r.runtime
        for name in metric_sums:
            metric_sums[name][r.seq_len] = metric_sums[name].get(r.seq_len, 0.0) + r.metrics[name]
    sls = sorted(count)
    mean_runtime = {sl: runtime_sum[sl] / count[sl] for sl in sls}
    mean_metrics = {
        name: {sl: sums[sl] / count[sl] for sl in sls} for name, sums in metric_sums.items()
    }
    return SLStats(
        mean_runtime=mean_runtime,
        count={sl: count[sl] for sl in sls},
        mean_metrics=mean_metrics,
    )


# --- parsing -----------------------------------------------------------------


def parse_trace(
    source: str | bytes | IO,
    format: str,
    *,
    config_id: str = "",
    dataset_id: str = "",
    batch_size: int = 1,
    vocab_size: int = 1,
) -> EpochTrace:
    """Parse a trace from CSV or JSON text.

    `source` may be a string, bytes, or a readable file object. The CSV format
    carries records only, so `config_id`/`dataset_id`/`batch_size`/`vocab_size`
    supply the trace metadata; for JSON they are ignored (the document carries
    its own). Records are returned ordered by index.

    Raises:
        TraceParseError: malformed input, naming the offending line for CSV.
        TraceValidationError: well-formed input violating a model invariant.
    """
    text = _read_text(source)
    if format == "csv":
        return _parse_csv(
            text,
            config_id=config_id,
            dataset_id=dataset_id,
            batch_size=batch_size,
            vocab_size=vocab_size,
        )
    if format == "json":
        return _parse_json(text)
    raise TraceParseError(f"unknown trace format {format!r} (expected 'csv' or 'json')")


def _read_text(source: str | bytes | IO) -> str:
    if isinstance(source, str):
        return source
    if isinstance(source, bytes):
        return source.decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _parse_csv(text, *, config_id, dataset_id, batch_size, vocab_size) -> EpochTrace:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceParseError("empty input, expected a header row", line=1) from None
    header = [h.strip() for h in header]
    if tuple(header[: len(CSV_REQUIRED_COLUMNS)]) != CSV_REQUIRED_COLUMNS:
        raise TraceParseError(
            f"header must start with {','.join(CSV_REQUIRED_COLUMNS)}, got {','.join(header)}",
            line=1,
        )
    metric_names = []
    for col in header[len(CSV_REQUIRED_COLUMNS) :]:
        if not col.startswith(METRIC_COLUMN_PREFIX):
            raise TraceParseError(f"unexpected column {col!r}", line=1)
        metric_names.append(col[len(METRIC_COLUMN_PREFIX) :])

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TraceParseError(
                f"expected {len(header)} fields, got {len(row)}", line=lineno
            )
        try:
            index = int(row[0])
            seq_len = int(row[1])
            runtime = float(row[2])
            metrics = {
                name: float(value) for name, value in zip(metric_names, row[3:])
            }
        except ValueError as exc:
            raise TraceParseError(f"non-numeric field: {exc}", line=lineno) from None
        try:
            records.append(
                IterationRecord(index=index, seq_len=seq_len, runtime=runtime, metrics=metrics)
            )
        except TraceValidationError as exc:
            raise TraceParseError(str(exc), line=lineno) from None

    records.sort(key=lambda r: r.index)
    return EpochTrace(
        records=tuple(records),
        config_id=config_id,
        dataset_id=dataset_id,
        batch_size=batch_size,
        vocab_size=vocab_size,
    )


def _parse_json(text: str) -> EpochTrace:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise TraceParseError("top-level JSON value must be an object")
    missing = [k for k in ("config_id", "dataset_id", "batch_size", "vocab_size", "records") if k not in doc]
    if missing:
        raise TraceParseError(f"missing required keys: {', '.join(missing)}")
    raw_records = doc["records"]
    if not isinstance(raw_records, list):
        raise TraceParseError("'records' must be an array")
    records = []
    for i, item in enumerate(raw_records):
        if not isinstance(item, dict):
            raise TraceParseError(f"records[{i}] must be an object")
        try:
            records.append(
                IterationRecord(
                    index=int(item["index"]),
                    seq_len=int(item["seq_len"]),
                    runtime=float(item["runtime_s"]),
                    metrics={str(k): float(v) for k, v in item.get("metrics", {}).items()},
                )
            )
        except KeyError as exc:
            raise TraceParseError(f"records[{i}] missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, TraceValidationError):
                raise
            raise TraceParseError(f"records[{i}]: {exc}") from None
    records.sort(key=lambda r: r.index)
    return EpochTrace(
        records=tuple(records),
        config_id=str(doc["config_id"]),
        dataset_id=str(doc["dataset_id"]),
        batch_size=int(doc["batch_size"]),
        vocab_size=int(doc["vocab_size"]),
    )


# --- serialization -----------------------------------------------------------


def serialize_trace(trace: EpochTrace, format: str) -> str:
    """Render a trace in one of the interchange formats with full float precision."""
    if format == "csv":
        return _serialize_csv(trace)
    if format == "json":
        return _serialize_json(trace)
    raise TraceParseError(f"unknown trace format {format!r} (expected 'csv' or 'json')")


def _serialize_csv(trace: EpochTrace) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    metric_names = trace.metric_names
    writer.writerow(list(CSV_REQUIRED_COLUMNS) + [METRIC_COLUMN_PREFIX + n for n in metric_names])
    for r in trace.records:
        writer.writerow(
            [r.index, r.seq_len, repr(r.runtime)] + [repr(r.metrics[n]) for n in metric_names]
        )
    return out.getvalue()


def _serialize_json(trace: EpochTrace) -> str:
    doc = {
        "config_id": trace.config_id,
        "dataset_id": trace.dataset_id,
        "batch_size": trace.batch_size,
        "vocab_size": trace.vocab_size,
        "records": [
            {
                "index": r.index,
                "seq_len": r.seq_len,
                "runtime_s": r.runtime,
                "metrics": {k: r.metrics[k] for k in sorted(r.metrics)},
            }
            for r in trace.records
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def infer_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix == ".json":
        return "json"
    raise TraceParseError(f"cannot infer trace format from {path!r}; pass format explicitly")


def load_trace(path: str | Path, format: str | None = None, **metadata) -> EpochTrace:
    """Read a trace file, inferring the format from the suffix when not given."""
    fmt = format or infer_format(path)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh, fmt, **metadata)


def write_trace(trace: EpochTrace, path: str | Path, format: str | None = None) -> None:
    fmt = format or infer_format(path)
    Path(path).write_text(serialize_trace(trace, fmt), encoding="utf-8")
