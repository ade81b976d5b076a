"""Event-log parsing, vocabularies, prefixes and time-feature quantization.

An event log is a list of traces; every trace is a time-ordered list of events
of one case. Activities and categorical event attributes are stored as indices
into per-feature vocabularies so the rest of the pipeline never touches label
strings. Prefixes (the first k events of a trace) are the prediction unit: the
target of a length-k prefix is the activity of event k+1, or the reserved
end-of-case class for k = |trace|.
"""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError

PAD = 0
UNK = 1
PAD_LABEL = "<PAD>"
UNK_LABEL = "<UNK>"
END_LABEL = "<END>"

XES_ACTIVITY_KEY = "concept:name"
XES_TIMESTAMP_KEY = "time:timestamp"
XES_LIFECYCLE_KEY = "lifecycle:transition"
XES_CASE_KEY = "concept:name"


class Vocab:
    """Bidirectional label <-> index map with reserved PAD (0) and UNK (1) rows."""

    def __init__(self, labels: Sequence[str] = ()):
        self._labels: list[str] = [PAD_LABEL, UNK_LABEL]
        self._index: dict[str, int] = {PAD_LABEL: PAD, UNK_LABEL: UNK}
        for lab in labels:
            self.add(lab)

    def add(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._labels.append(label)
            self._index[label] = idx
        return idx

    def index(self, label: str) -> int:
        """Index of a seen label, UNK for anything else."""
        return self._index.get(label, UNK)

    def label(self, idx: int) -> str:
        return self._labels[idx]

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def to_json(self) -> list[str]:
        return list(self._labels)

    @classmethod
    def from_json(cls, labels: Sequence[str]) -> "Vocab":
        if list(labels[:2]) != [PAD_LABEL, UNK_LABEL]:
            raise ParseError("vocabulary JSON must start with the PAD and UNK rows")
        v = cls()
        for lab in labels[2:]:
            v.add(lab)
        return v


@dataclass(frozen=True)
class Event:
    """One executed activity: vocabulary indices plus an absolute timestamp (POSIX seconds)."""

    activity: int
    case_id: str
    timestamp: int
    attrs: tuple[int, ...] = ()


@dataclass(frozen=True)
class Trace:
    """Non-empty event sequence of a single case, timestamps non-decreasing."""

    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise ParseError("a trace must contain at least one event")
        case = self.events[0].case_id
        prev = self.events[0].timestamp
        for ev in self.events[1:]:
            if ev.case_id != case:
                raise ParseError(f"trace mixes case ids {case!r} and {ev.case_id!r}")
            if ev.timestamp < prev:
                raise ParseError(f"trace {case!r} has decreasing timestamps")
            prev = ev.timestamp

    def __len__(self) -> int:
        return len(self.events)

    @property
    def case_id(self) -> str:
        return self.events[0].case_id


@dataclass
class EventLog:
    """Parsed log: traces plus the vocabularies their indices resolve in."""

    traces: list[Trace]
    activity_vocab: Vocab
    attr_names: tuple[str, ...] = ()
    attr_vocabs: tuple[Vocab, ...] = ()

    @property
    def max_trace_len(self) -> int:
        return max((len(t) for t in self.traces), default=0)

    def activity_labels(self, trace: Trace) -> list[str]:
        return [self.activity_vocab.label(ev.activity) for ev in trace.events]


@dataclass(frozen=True)
class Prefix:
    """First k events of a trace and the index of the activity that follows.

    ``target`` is ``end_of_case_index(vocab)`` when k = |trace|.
    """

    trace: Trace
    k: int
    target: int
    trace_index: int = 0

    @property
    def events(self) -> tuple[Event, ...]:
        return self.trace.events[: self.k]


def end_of_case_index(activity_vocab: Vocab) -> int:
    """Class index used as the target of a full-trace prefix (one past the vocabulary)."""
    return len(activity_vocab)


def n_classes(activity_vocab: Vocab) -> int:
    return len(activity_vocab) + 1


def target_label(activity_vocab: Vocab, idx: int) -> str:
    return END_LABEL if idx == end_of_case_index(activity_vocab) else activity_vocab.label(idx)


# ---------------------------------------------------------------------------
# parsing

def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_iso_timestamp(value: str, where: str) -> int:
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"unparseable timestamp {value!r} at {where}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _finish_log(
    raw_traces: list[list[tuple[str, int, list[str | None]]]],
    case_ids: list[str],
    attr_names: Sequence[str],
) -> EventLog:
    activity_vocab = Vocab()
    attr_vocabs = tuple(Vocab() for _ in attr_names)
    traces: list[Trace] = []
    for case_id, rows in zip(case_ids, raw_traces):
        if not rows:
            continue
        rows = sorted(rows, key=lambda r: r[1])  # stable: file order kept on ties
        events = []
        for label, ts, attr_values in rows:
            attrs = tuple(
                UNK if val is None else attr_vocabs[i].add(val)
                for i, val in enumerate(attr_values)
            )
            events.append(Event(activity_vocab.add(label), case_id, ts, attrs))
        traces.append(Trace(tuple(events)))
    return EventLog(traces, activity_vocab, tuple(attr_names), attr_vocabs)


def parse_xes(data: bytes, attr_keys: Sequence[str] = ()) -> EventLog:
    """Parse an XES document (log/trace/event with string and date attributes).

    ``lifecycle:transition``, when present on an event, is concatenated onto the
    activity label with ``+`` before vocabulary assignment. ``attr_keys`` names
    the event-level string attributes to keep as categorical features.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XES document: {exc}") from exc
    if _strip_ns(root.tag) != "log":
        raise ParseError(f"expected <log> root, found <{_strip_ns(root.tag)}>")

    raw_traces: list[list[tuple[str, int, list[str | None]]]] = []
    case_ids: list[str] = []
    for t_i, trace_el in enumerate(el for el in root if _strip_ns(el.tag) == "trace"):
        case_id = f"trace_{t_i}"
        for child in trace_el:
            if _strip_ns(child.tag) == "string" and child.get("key") == XES_CASE_KEY:
                case_id = child.get("value", case_id)
        rows: list[tuple[str, int, list[str | None]]] = []
        for e_i, event_el in enumerate(el for el in trace_el if _strip_ns(el.tag) == "event"):
            where = f"trace {case_id!r} event {e_i}"
            values: dict[str, str] = {}
            for attr_el in event_el:
                key = attr_el.get("key")
                if key is not None and attr_el.get("value") is not None:
                    values[key] = attr_el.get("value")  # type: ignore[assignment]
            name = values.get(XES_ACTIVITY_KEY)
            if name is None:
                raise ParseError(f"missing {XES_ACTIVITY_KEY} at {where}")
            if XES_TIMESTAMP_KEY not in values:
                raise ParseError(f"missing {XES_TIMESTAMP_KEY} at {where}")
            ts = parse_iso_timestamp(values[XES_TIMESTAMP_KEY], where)
            lifecycle = values.get(XES_LIFECYCLE_KEY)
            label = f"{name}+{lifecycle}" if lifecycle else name
            rows.append((label, ts, [values.get(k) for k in attr_keys]))
        raw_traces.append(rows)
        case_ids.append(case_id)
    return _finish_log(raw_traces, case_ids, attr_keys)


def parse_csv(data: bytes, column_map: dict) -> EventLog:
    """Parse a CSV event log using a column mapping.

    ``column_map`` keys: ``case_col``, ``activity_col``, ``timestamp_col``,
    ``timestamp_fmt`` (strptime format; ISO-8601 when omitted), ``attr_cols``
    (list, optional), ``lifecycle_col`` (optional).
    """
    for required in ("case_col", "activity_col", "timestamp_col"):
        if required not in column_map:
            raise ParseError(f"column_map is missing {required!r}")
    attr_cols: list[str] = list(column_map.get("attr_cols", ()))
    lifecycle_col = column_map.get("lifecycle_col")
    fmt = column_map.get("timestamp_fmt")

    reader = csv.reader(io.StringIO(data.decode("utf-8-sig")))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV document") from None
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise ParseError(f"duplicate header column(s): {', '.join(dupes)}")
    col = {name: i for i, name in enumerate(header)}
    needed = [column_map["case_col"], column_map["activity_col"], column_map["timestamp_col"]]
    needed += attr_cols + ([lifecycle_col] if lifecycle_col else [])
    for name in needed:
        if name not in col:
            raise ParseError(f"unknown column {name!r} (header has: {', '.join(header)})")

    by_case: dict[str, list[tuple[str, int, list[str | None]]]] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {row_no}: expected {len(header)} fields, found {len(row)}")
        case = row[col[column_map["case_col"]]]
        label = row[col[column_map["activity_col"]]]
        ts_text = row[col[column_map["timestamp_col"]]]
        if fmt:
            try:
                dt = datetime.strptime(ts_text, fmt)
            except ValueError as exc:
                raise ParseError(f"row {row_no}: unparseable timestamp {ts_text!r}") from exc
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            ts = int(dt.timestamp())
        else:
            ts = parse_iso_timestamp(ts_text, f"row {row_no}")
        if lifecycle_col:
            lifecycle = row[col[lifecycle_col]]
            if lifecycle:
                label = f"{label}+{lifecycle}"
        attrs: list[str | None] = [row[col[c]] or None for c in attr_cols]
        by_case.setdefault(case, []).append((label, ts, attrs))

    case_ids = list(by_case)
    return _finish_log([by_case[c] for c in case_ids], case_ids, attr_cols)


# ---------------------------------------------------------------------------
# fold re-vocabularies

def subset_log(log: EventLog, trace_indices: Iterable[int]) -> EventLog:
    """New EventLog over a subset of traces, with vocabularies refit on that subset."""
    keep = [log.traces[i] for i in trace_indices]
    acts = Vocab()
    attr_vocabs = tuple(Vocab() for _ in log.attr_names)
    traces = []
    for tr in keep:
        events = []
        for ev in tr.events:
            attrs = tuple(
                attr_vocabs[i].add(log.attr_vocabs[i].label(a)) if a != UNK else UNK
                for i, a in enumerate(ev.attrs)
            )
            events.append(Event(acts.add(log.activity_vocab.label(ev.activity)), ev.case_id, ev.timestamp, attrs))
        traces.append(Trace(tuple(events)))
    return EventLog(traces, acts, log.attr_names, attr_vocabs)


def remap_log(log: EventLog, trace_indices: Iterable[int], activity_vocab: Vocab,
              attr_vocabs: Sequence[Vocab]) -> EventLog:
    """Re-index a subset of traces against externally fitted vocabularies (unseen -> UNK)."""
    traces = []
    for i in trace_indices:
        events = []
        for ev in log.traces[i].events:
            attrs = tuple(
                attr_vocabs[j].index(log.attr_vocabs[j].label(a))
                for j, a in enumerate(ev.attrs)
            )
            events.append(Event(activity_vocab.index(log.activity_vocab.label(ev.activity)),
                                ev.case_id, ev.timestamp, attrs))
        traces.append(Trace(tuple(events)))
    return EventLog(traces, activity_vocab, log.attr_names, tuple(attr_vocabs))


# ---------------------------------------------------------------------------
# prefixes and time features

def extract_prefixes(log: EventLog, include_end: bool = True) -> list[Prefix]:
    """All prefixes of every trace; the k = |trace| prefix targets the end-of-case class."""
    end_idx = end_of_case_index(log.activity_vocab)
    out: list[Prefix] = []
    for t_i, tr in enumerate(log.traces):
        n = len(tr)
        for k in range(1, n + 1):
            if k < n:
                out.append(Prefix(tr, k, tr.events[k].activity, t_i))
            elif include_end:
                out.append(Prefix(tr, k, end_idx, t_i))
    return out


def time_deltas(prefix: Prefix) -> tuple[list[int], list[int]]:
    """Per-event (seconds since previous event, seconds since first event of the prefix)."""
    ts = [ev.timestamp for ev in prefix.events]
    dprev = [0] + [ts[i] - ts[i - 1] for i in range(1, len(ts))]
    dstart = [t - ts[0] for t in ts]
    return dprev, dstart


@dataclass(frozen=True)
class TimeBuckets:
    """Quantizer for one time feature: n-1 ascending edges carve [min, max] into n buckets."""

    kind: str
    boundaries: tuple[float, ...]

    @property
    def n_buckets(self) -> int:
        return len(self.boundaries) + 1

    def to_json(self) -> dict:
        return {"kind": self.kind, "boundaries": list(self.boundaries)}

    @classmethod
    def from_json(cls, obj: dict) -> "TimeBuckets":
        return cls(obj["kind"], tuple(obj["boundaries"]))


def fit_buckets(values: Sequence[float], n: int, kind: str = "", method: str = "width") -> TimeBuckets:
    """Fit n quantization buckets on training values.

    ``method="width"`` uses equal-width edges over [min, max]; ``"quantile"``
    uses equal-frequency edges. All-equal input degenerates to a single
    effective bucket (every value maps to 0).
    """
    if len(values) == 0:
        raise ValueError("cannot fit buckets on an empty value set")
    if n < 2:
        raise ValueError("need at least 2 buckets")
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if method == "width":
        edges = [lo + (hi - lo) * i / n for i in range(1, n)]
    elif method == "quantile":
        edges = [float(q) for q in np.quantile(arr, [i / n for i in range(1, n)])]
    else:
        raise ValueError(f"unknown bucket method {method!r}")
    return TimeBuckets(kind, tuple(edges))


def bucketize(v: float, buckets: TimeBuckets) -> int:
    """Bucket index in [0, n-1]; values outside the fitted range clamp to the ends.

    Buckets are right-closed: a value exactly on an edge falls in the lower
    bucket, so an all-equal fit maps everything to bucket 0.
    """
    idx = 0
    for edge in buckets.boundaries:
        if v > edge:
            idx += 1
        else:
            break
    return min(idx, buckets.n_buckets - 1)


# ---------------------------------------------------------------------------
# serialization

def vocabs_to_json(log_or_vocabs, attr_names=None, attr_vocabs=None) -> str:
    """Canonical JSON for the fitted vocabularies (activity + per-attribute)."""
    if isinstance(log_or_vocabs, EventLog):
        activity = log_or_vocabs.activity_vocab
        attr_names = log_or_vocabs.attr_names
        attr_vocabs = log_or_vocabs.attr_vocabs
    else:
        activity = log_or_vocabs
    obj = {
        "activity": activity.to_json(),
        "attr_names": list(attr_names or ()),
        "attributes": {name: v.to_json() for name, v in zip(attr_names or (), attr_vocabs or ())},
    }
    return json.dumps(obj, sort_keys=True, indent=1)


def vocabs_from_json(text: str) -> tuple[Vocab, tuple[str, ...], tuple[Vocab, ...]]:
    obj = json.loads(text)
    names = tuple(obj["attr_names"])
    return (
        Vocab.from_json(obj["activity"]),
        names,
        tuple(Vocab.from_json(obj["attributes"][n]) for n in names),
    )
