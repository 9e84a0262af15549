"""Event data model: ingestion, validation and preprocessing of dyadic spells.

An observed interaction ("spell") is a sender, a receiver, a start time and
an end time, all in arbitrary continuous time units.  Files are delimited
text with a header row; see `parse_event_history`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class EventDataError(ValueError):
    """Raised when an input file cannot be loaded as a valid event history."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ActorRegistry:
    """Bijective mapping between actor labels and dense indices 0..A-1."""

    def __init__(self, labels=()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for lab in labels:
            self.add(str(lab))

    def add(self, label: str) -> int:
        if label not in self._index:
            self._index[label] = len(self._labels)
            self._labels.append(label)
        return self._index[label]

    def index(self, label: str) -> int:
        return self._index[label]

    def label(self, index: int) -> str:
        return self._labels[index]

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def __len__(self):
        return len(self._labels)

    def __contains__(self, label):
        return label in self._index

    def __iter__(self):
        return iter(self._labels)

    def __eq__(self, other):
        return isinstance(other, ActorRegistry) and self._labels == other._labels


@dataclass(frozen=True)
class DurationEvent:
    """One observed interaction with its start and end times.

    `sender` and `receiver` are dense actor indices; `row` preserves the
    original input position and is used as the deterministic tiebreak key.
    """

    sender: int
    receiver: int
    t_start: float
    t_end: float
    group: str | None = None
    row: int = 0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def actors(self) -> tuple[int, int]:
        return (self.sender, self.receiver)


@dataclass
class EventHistory:
    """An ordered sequence of duration events over a fixed actor set.

    Events are kept sorted by (t_start, row).  Instances are treated as
    immutable after construction and may be shared across workers.
    """

    events: list[DurationEvent]
    actors: ActorRegistry
    observation_end: float | None = None

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: (e.t_start, e.row))

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def n_actors(self) -> int:
        return len(self.actors)

    @property
    def last_end(self) -> float:
        return max((e.t_end for e in self.events), default=0.0)

    def min_positive_duration(self) -> float | None:
        durs = [e.duration for e in self.events if e.duration > 0]
        return min(durs) if durs else None


@dataclass
class CovariateSet:
    """Per-actor attributes and per-dyad tie matrices.

    Attribute vectors have shape (A,); tie matrices have shape (A, A) with a
    zero diagonal.  Categorical attributes are stored as float codes assigned
    in sorted label order (see `load_actor_attributes`).
    """

    actor_attributes: dict[str, np.ndarray] = field(default_factory=dict)
    dyadic_ties: dict[str, np.ndarray] = field(default_factory=dict)

    def attribute(self, name: str) -> np.ndarray:
        if name not in self.actor_attributes:
            raise KeyError(f"unknown actor attribute {name!r}")
        return self.actor_attributes[name]

    def tie(self, name: str) -> np.ndarray:
        if name not in self.dyadic_ties:
            raise KeyError(f"unknown dyadic tie {name!r}")
        return self.dyadic_ties[name]

    @staticmethod
    def empty() -> "CovariateSet":
        return CovariateSet({}, {})


@dataclass
class ValidationReport:
    """Findings from validating an event history.

    An empty `errors` list is the gate for fitting; warnings never block.
    Each finding is a (event row, message) pair; row -1 marks dataset-level
    findings.
    """

    errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, row: int, message: str):
        self.errors.append((row, message))

    def warn(self, row: int, message: str):
        self.warnings.append((row, message))

    def summary(self) -> str:
        lines = [f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)"]
        for row, msg in self.errors:
            lines.append(f"  error   row {row}: {msg}")
        for row, msg in self.warnings:
            lines.append(f"  warning row {row}: {msg}")
        return "\n".join(lines)


DEFAULT_COLUMNS = {
    "sender": "sender",
    "receiver": "receiver",
    "t_start": "t_start",
    "t_end": "t_end",
    "group": "group",
}


def _parse_time(text, what, row, report):
    try:
        value = float(text)
    except (TypeError, ValueError):
        report.error(row, f"unparseable {what} value {text!r}")
        return None
    if not math.isfinite(value):
        report.error(row, f"non-finite {what} value {text!r}")
        return None
    return value


def parse_event_history(path, column_map=None, delimiter=",", observation_end=None):
    """Load a delimited event file into an `EventHistory`.

    `column_map` maps the logical names sender/receiver/t_start/t_end (and
    optionally group) to the file's column names.  Rows failing a hard rule
    (missing value, unparseable or negative time, t_end < t_start, self-loop)
    abort the load with an `EventDataError` carrying the full report.

    Returns (history, report); the report may contain warnings (e.g. one per
    zero-duration row).
    """
    columns = dict(DEFAULT_COLUMNS)
    if column_map:
        columns.update(column_map)
    report = ValidationReport()
    registry = ActorRegistry()
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for logical in ("sender", "receiver", "t_start", "t_end"):
            if columns[logical] not in header:
                raise EventDataError(
                    f"missing column {columns[logical]!r} for {logical}", report
                )
        has_group = columns.get("group") in header
        for row_idx, record in enumerate(reader):
            sender_label = record.get(columns["sender"])
            receiver_label = record.get(columns["receiver"])
            if not sender_label or not receiver_label:
                report.error(row_idx, "missing sender or receiver label")
                continue
            t_start = _parse_time(record.get(columns["t_start"]), "start time", row_idx, report)
            t_end = _parse_time(record.get(columns["t_end"]), "end time", row_idx, report)
            if t_start is None or t_end is None:
                continue
            if t_start < 0:
                report.error(row_idx, f"negative start time {t_start}")
                continue
            if t_end < t_start:
                report.error(row_idx, f"end time {t_end} before start time {t_start}")
                continue
            if sender_label == receiver_label:
                report.error(row_idx, f"self-loop on actor {sender_label!r}")
                continue
            if t_end == t_start:
                report.warn(row_idx, "zero duration")
            group = record.get(columns["group"]) if has_group else None
            events.append(
                DurationEvent(
                    sender=registry.add(sender_label),
                    receiver=registry.add(receiver_label),
                    t_start=t_start,
                    t_end=t_end,
                    group=group or None,
                    row=row_idx,
                )
            )
    if report.errors:
        raise EventDataError(
            f"{len(report.errors)} invalid row(s) in {path}", report
        )
    return EventHistory(events, registry, observation_end=observation_end), report


def write_event_file(history: EventHistory, path, delimiter=","):
    """Serialize a history in the same format `parse_event_history` reads."""
    has_group = any(e.group is not None for e in history.events)
    fields = ["sender", "receiver", "t_start", "t_end"] + (["group"] if has_group else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(fields)
        for e in history.events:
            row = [
                history.actors.label(e.sender),
                history.actors.label(e.receiver),
                repr(e.t_start),
                repr(e.t_end),
            ]
            if has_group:
                row.append(e.group if e.group is not None else "")
            writer.writerow(row)


def _decode_column(raw_values):
    """Parse a column as floats, falling back to deterministic category codes."""
    try:
        return np.array([float(v) for v in raw_values], dtype=float)
    except ValueError:
        levels = {lab: code for code, lab in enumerate(sorted(set(raw_values)))}
        return np.array([levels[v] for v in raw_values], dtype=float)


def load_actor_attributes(path, registry: ActorRegistry, delimiter=",", actor_column="actor"):
    """Load per-actor attributes from `actor,<attr1>,<attr2>,...` delimited text.

    Every registered actor must appear exactly once; non-numeric columns are
    coded as categories in sorted label order.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        if actor_column not in header:
            raise EventDataError(f"missing column {actor_column!r} in {path}")
        rows = list(reader)
    seen = {}
    for record in rows:
        label = record[actor_column]
        if label in seen:
            raise EventDataError(f"duplicate actor {label!r} in {path}")
        seen[label] = record
    missing = [lab for lab in registry if lab not in seen]
    if missing:
        raise EventDataError(f"no attribute row for actor(s) {missing} in {path}")
    attr_names = [c for c in header if c != actor_column]
    attributes = {}
    for name in attr_names:
        raw = [seen[registry.label(i)][name] for i in range(len(registry))]
        if any(v is None or v == "" for v in raw):
            raise EventDataError(f"missing value for attribute {name!r} in {path}")
        attributes[name] = _decode_column(raw)
    return attributes


def load_dyadic_ties(path, registry: ActorRegistry, delimiter=",",
                     a_column="actor_a", b_column="actor_b"):
    """Load long-format dyadic ties `actor_a,actor_b,<tie1>,...`.

    Each row sets the ordered entry (a, b).  If the reverse entry (b, a) is
    never given, the value is mirrored so that undirected lookups on the
    canonical (min, max) pair are always defined.
    """
    n = len(registry)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for col in (a_column, b_column):
            if col not in header:
                raise EventDataError(f"missing column {col!r} in {path}")
        tie_names = [c for c in header if c not in (a_column, b_column)]
        matrices = {name: np.zeros((n, n)) for name in tie_names}
        given = np.zeros((n, n), dtype=bool)
        for record in reader:
            a_label, b_label = record[a_column], record[b_column]
            if a_label not in registry or b_label not in registry:
                continue
            a, b = registry.index(a_label), registry.index(b_label)
            if a == b:
                raise EventDataError(f"tie on self-pair {a_label!r} in {path}")
            for name in tie_names:
                matrices[name][a, b] = float(record[name])
            given[a, b] = True
    mirror = given & ~given.T
    for name in tie_names:
        m = matrices[name]
        m[mirror.T] = m.T[mirror.T]
    return matrices


def validate_history(history: EventHistory, spec=None) -> ValidationReport:
    """Check a history against the model's structural rules.

    Errors: self-loops, negative durations, events ongoing at time 0,
    duplicate identical events, and (when `spec` supplies a directionality)
    time-overlapping events on the same at-risk dyad.  Warnings: zero
    durations and simultaneous transition times.
    """
    report = ValidationReport()
    seen = {}
    for e in history.events:
        if e.sender == e.receiver:
            report.error(e.row, "self-loop")
        if e.t_end < e.t_start:
            report.error(e.row, "negative duration")
        if e.t_start < 0:
            report.error(e.row, "ongoing at time 0")
        key = (e.sender, e.receiver, e.t_start, e.t_end)
        if key in seen:
            report.error(e.row, f"duplicate of row {seen[key]}")
        else:
            seen[key] = e.row
        if e.t_end == e.t_start:
            report.warn(e.row, "zero duration")

    # cross-kind coincidences (an end meeting a start) are resolved by the
    # deterministic tie rule and are not worth a warning; same-kind ties are
    for kind, times in (
        ("start", sorted((e.t_start, e.row) for e in history.events)),
        ("end", sorted((e.t_end, e.row) for e in history.events)),
    ):
        for (t1, r1), (t2, r2) in zip(times, times[1:]):
            if t1 == t2:
                report.warn(r2, f"simultaneous {kind} transition with row {r1} at t={t1}")

    directionality = getattr(spec, "directionality", spec)
    if directionality is not None:
        ordered_collision = (
            directionality.start_mode == "directed"
            and directionality.end_mode == "directed"
        )
        open_until: dict[tuple, tuple[float, int]] = {}
        for e in history.events:
            key = (e.sender, e.receiver) if ordered_collision else (
                min(e.sender, e.receiver), max(e.sender, e.receiver))
            if key in open_until:
                t_end_prev, row_prev = open_until[key]
                if e.t_start < t_end_prev:
                    report.error(
                        e.row,
                        f"dyad starts at {e.t_start} while ongoing since row {row_prev}",
                    )
            if key not in open_until or e.t_end > open_until[key][0]:
                open_until[key] = (e.t_end, e.row)
    return report


def collapse_gaps(history: EventHistory, group_attr="group") -> EventHistory:
    """Remove the idle gaps between consecutive groups (e.g. days).

    Each group after the first is shifted in time so that its first
    transition starts exactly where the previous group's last transition
    ended: inter-group gaps become zero while every within-group time
    difference and every event duration is preserved exactly.

    Groups must be disjoint time blocks; an event of one group starting
    before the previous group has ended is an error.
    """
    if not history.events:
        return history
    if any(e.group is None for e in history.events):
        raise EventDataError("collapse_gaps requires a group label on every event")

    groups: dict[str, list[DurationEvent]] = {}
    for e in history.events:
        groups.setdefault(e.group, []).append(e)
    ordered = sorted(groups.items(), key=lambda kv: min(e.t_start for e in kv[1]))

    shifted = []
    prev_end = None
    total_shift = 0.0
    for label, members in ordered:
        first_start = min(e.t_start for e in members)
        last_end = max(e.t_end for e in members)
        if prev_end is not None:
            if first_start < prev_end:
                raise EventDataError(
                    f"group {label!r} starts at {first_start} before the previous "
                    f"group ends at {prev_end}"
                )
            total_shift += first_start - prev_end
        prev_end = last_end
        for e in members:
            shifted.append(
                DurationEvent(
                    sender=e.sender,
                    receiver=e.receiver,
                    t_start=e.t_start - total_shift,
                    t_end=e.t_end - total_shift,
                    group=e.group,
                    row=e.row,
                )
            )
    observation_end = history.observation_end
    if observation_end is not None:
        observation_end -= total_shift
    return EventHistory(shifted, history.actors, observation_end=observation_end)
