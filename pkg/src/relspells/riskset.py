"""Dual risk set over dyads: who may start an event, who may end one.

At any time every dyad of the universe is either idle (at risk to start) or
ongoing (at risk to end).  Event starts and ends are interleaved into a
single sequence of 2M transitions; the state immediately before each
transition drives both the likelihood and the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventHistory


class RisksetError(ValueError):
    """Raised when an event history is inconsistent with the risk-set rules."""


_MODES = ("directed", "undirected")


@dataclass(frozen=True)
class Directionality:
    """Directed/undirected choice for the start and end rate models."""

    start_mode: str
    end_mode: str

    def __post_init__(self):
        if self.start_mode not in _MODES or self.end_mode not in _MODES:
            raise ValueError(f"modes must be one of {_MODES}")

    @classmethod
    def from_code(cls, code: str) -> "Directionality":
        code = code.upper()
        table = {"DD": ("directed", "directed"), "UU": ("undirected", "undirected"),
                 "DU": ("directed", "undirected"), "UD": ("undirected", "directed")}
        if code not in table:
            raise ValueError(f"directionality must be one of {sorted(table)}, got {code!r}")
        return cls(*table[code])

    @property
    def code(self) -> str:
        return self.start_mode[0].upper() + self.end_mode[0].upper()


DD = Directionality("directed", "directed")
UU = Directionality("undirected", "undirected")
DU = Directionality("directed", "undirected")
UD = Directionality("undirected", "directed")


def canonical_pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def start_dyad(event, directionality: Directionality) -> tuple[int, int]:
    """The event's dyad in the start model's representation."""
    if directionality.start_mode == "directed":
        return (event.sender, event.receiver)
    return canonical_pair(event.sender, event.receiver)


def end_dyad(event, directionality: Directionality) -> tuple[int, int]:
    """The event's dyad in the end model's representation."""
    if directionality.end_mode == "directed":
        return (event.sender, event.receiver)
    return canonical_pair(event.sender, event.receiver)


def dyad_universe(n_actors: int, mode: str) -> list[tuple[int, int]]:
    """All dyads of the given mode in canonical enumeration order."""
    if mode == "directed":
        return [(i, j) for i in range(n_actors) for j in range(n_actors) if i != j]
    return [(i, j) for i in range(n_actors) for j in range(i + 1, n_actors)]


@dataclass(frozen=True)
class Transition:
    """One atomic occurrence: an event start or an event end.

    `m` is the 1-based position in the combined sequence.  `dyad` is in the
    representation of the transition's own side (start or end mode);
    `actors` keeps the event's recorded (sender, receiver) order.
    """

    m: int
    time: float
    dyad: tuple[int, int]
    kind: str  # "start" | "end"
    event_index: int
    actors: tuple[int, int] = (0, 0)


@dataclass
class TransitionSequence:
    """The 2M chronologically ordered transitions derived from M events.

    `inter_times[k]` is the waiting time before transition k+1, measured from
    the previous transition (zero for the first; likelihood code may rebase
    the first interval to the observation start).
    """

    transitions: list[Transition]
    directionality: Directionality
    n_actors: int
    observation_end: float | None = None
    inter_times: np.ndarray = field(init=False)

    def __post_init__(self):
        times = np.array([t.time for t in self.transitions], dtype=float)
        self.inter_times = np.diff(times, prepend=times[0] if len(times) else 0.0)

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    @property
    def times(self) -> np.ndarray:
        return np.array([t.time for t in self.transitions], dtype=float)


def _sort_rank(kind: str, event, time: float) -> int:
    # Ends precede starts at equal timestamps, except a zero-duration event's
    # own end, which must stay after its start.
    if kind == "start":
        return 1
    return 0 if event.t_start < time else 2


def build_transitions(history: EventHistory, directionality: Directionality) -> TransitionSequence:
    """Split every event into its start and end transitions, fully ordered.

    Ordering: by time; at equal timestamps ends-before-starts (zero-duration
    ends after the starts of that instant), then by input row.  Raises
    `RisksetError` if a dyad starts while it is still ongoing under the given
    directionality, or if an end has no matching ongoing event.
    """
    raw = []
    for idx, event in enumerate(history.events):
        raw.append((event.t_start, _sort_rank("start", event, event.t_start), event.row, "start", idx))
        raw.append((event.t_end, _sort_rank("end", event, event.t_end), event.row, "end", idx))
    raw.sort(key=lambda r: (r[0], r[1], r[2]))

    ordered_collision = directionality.code == "DD"
    ongoing: dict[tuple[int, int], int] = {}
    ongoing_pairs: dict[tuple[int, int], int] = {}
    transitions = []
    for m, (time, _, _, kind, idx) in enumerate(raw, start=1):
        event = history.events[idx]
        pair = canonical_pair(event.sender, event.receiver)
        if kind == "start":
            blocked = ((event.sender, event.receiver) in ongoing if ordered_collision
                       else ongoing_pairs.get(pair, 0) > 0)
            if blocked:
                raise RisksetError(
                    f"event row {event.row} starts at t={time} while the same dyad "
                    f"is ongoing ({directionality.code} mode)"
                )
            ongoing[end_dyad(event, directionality)] = idx
            ongoing_pairs[pair] = ongoing_pairs.get(pair, 0) + 1
            dyad = start_dyad(event, directionality)
        else:
            key = end_dyad(event, directionality)
            if ongoing.get(key) != idx:
                raise RisksetError(
                    f"end transition at t={time} for dyad {key} with no matching "
                    f"ongoing event (row {event.row})"
                )
            del ongoing[key]
            ongoing_pairs[pair] -= 1
            dyad = key
        transitions.append(Transition(
            m=m, time=time, dyad=dyad, kind=kind, event_index=idx,
            actors=(event.sender, event.receiver),
        ))
    return TransitionSequence(
        transitions, directionality, history.n_actors,
        observation_end=history.observation_end,
    )


@dataclass(frozen=True)
class RiskSetState:
    """Snapshot of the dual risk set immediately before a transition.

    `at_start` holds dyads in the start mode's representation, `at_end` the
    ongoing dyads in the end mode's representation; `ongoing_since` maps each
    ongoing dyad to its event's start time.
    """

    at_start: frozenset
    at_end: frozenset
    ongoing_since: dict

    @property
    def n_ongoing(self) -> int:
        return len(self.at_end)


def _removed_start_dyads(key: tuple[int, int], directionality: Directionality):
    """Start-universe dyads blocked while `key` (an end-mode dyad) is ongoing."""
    i, j = key
    if directionality.start_mode == "directed":
        if directionality.end_mode == "directed":
            return ((i, j),)
        return ((i, j), (j, i))
    return (canonical_pair(i, j),)


def iter_states(seq: TransitionSequence):
    """Yield (transition, state-before-it) pairs by incremental replay.

    A final (None, state-after-everything) pair closes the stream.
    """
    universe = frozenset(dyad_universe(seq.n_actors, seq.directionality.start_mode))
    ongoing: dict[tuple[int, int], float] = {}

    def snapshot():
        blocked = set()
        for key in ongoing:
            blocked.update(_removed_start_dyads(key, seq.directionality))
        return RiskSetState(
            at_start=universe - blocked,
            at_end=frozenset(ongoing),
            ongoing_since=dict(ongoing),
        )

    mirror_ends = (seq.directionality.start_mode == "undirected"
                   and seq.directionality.end_mode == "directed")
    for tr in seq.transitions:
        yield tr, snapshot()
        i, j = tr.actors
        if tr.kind == "start":
            if seq.directionality.end_mode == "undirected":
                ongoing[canonical_pair(i, j)] = tr.time
            else:
                ongoing[(i, j)] = tr.time
                if mirror_ends:
                    # an undirected-start pair may be ended by either actor
                    ongoing[(j, i)] = tr.time
        else:
            del ongoing[tr.dyad]
            if mirror_ends:
                del ongoing[(tr.dyad[1], tr.dyad[0])]
    yield None, snapshot()


def riskset_at(seq: TransitionSequence, m: int) -> RiskSetState:
    """State immediately before transition m (1-based, 1 <= m <= 2M).

    m = 2M + 1 returns the state after the final transition.
    """
    if not 1 <= m <= len(seq) + 1:
        raise IndexError(f"transition index {m} out of range 1..{len(seq) + 1}")
    for tr, state in iter_states(seq):
        if tr is None or tr.m == m:
            return state
    raise AssertionError("unreachable")


def riskset_timeline(seq: TransitionSequence):
    """Table-style timeline: the state before each distinct transition time,
    plus the final state (timestamped at observation_end when known).

    Returns a list of (time, at_start dyads, at_end dyads) with dyads sorted.
    """
    rows = []
    seen_times = set()
    final_state = None
    for tr, state in iter_states(seq):
        if tr is None:
            final_state = state
            break
        if tr.time not in seen_times:
            seen_times.add(tr.time)
            rows.append((tr.time, sorted(state.at_start), sorted(state.at_end)))
    last_time = seq.transitions[-1].time if len(seq) else 0.0
    final_time = seq.observation_end if seq.observation_end is not None else last_time
    rows.append((final_time, sorted(final_state.at_start), sorted(final_state.at_end)))
    return rows


def format_timeline(seq: TransitionSequence, labels=None) -> str:
    """Render `riskset_timeline` as aligned text for the CLI."""
    def fmt_dyad(d):
        i, j = d
        a = labels[i] if labels else str(i)
        b = labels[j] if labels else str(j)
        sep = ">" if seq.directionality.start_mode == "directed" else "~"
        return f"{a}{sep}{b}"

    def fmt_end(d):
        i, j = d
        a = labels[i] if labels else str(i)
        b = labels[j] if labels else str(j)
        sep = ">" if seq.directionality.end_mode == "directed" else "~"
        return f"{a}{sep}{b}"

    lines = [f"{'time':>12}  {'at risk to start':<40} at risk to end"]
    for time, at_start, at_end in riskset_timeline(seq):
        s = "{" + ", ".join(fmt_dyad(d) for d in at_start) + "}"
        e = "{" + ", ".join(fmt_end(d) for d in at_end) + "}"
        lines.append(f"{time:>12g}  {s:<40} {e}")
    return "\n".join(lines)
