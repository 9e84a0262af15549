"""History statistics and the per-transition design array.

Weighted statistics are built from the dyad-level accumulator a(t, i, j):
the weighted sum of past events on the dyad, with duration and memory
weights applied per model side.  Unweighted statistics (participation
shifts, recency, ranks, exogenous covariates, concurrency) follow their
closed-form definitions.

Design rows for transition m are evaluated at the previous transition time
t_{m-1} from the first m-1 transitions only, so rates are piecewise
constant and nothing after t_{m-1} can influence the row values (events
still open at evaluation time enter start-side sums with their elapsed,
not final, duration).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .events import CovariateSet, EventHistory
from .riskset import (
    Directionality,
    Transition,
    TransitionSequence,
    canonical_pair,
    dyad_universe,
)
from .weights import WeightParams, duration_weight, memory_weight

NEVER = -math.inf


class UnknownStatisticError(KeyError):
    """A statistic name outside the catalog, or invalid for the side's mode."""


class StatisticSpecError(ValueError):
    """A statistic specification inconsistent with the model or covariates."""


class DesignOverflowError(FloatingPointError):
    """Non-finite value produced while building the design array."""


# --------------------------------------------------------------------------
# Catalog
# --------------------------------------------------------------------------

DIRECTED = frozenset({"directed"})
UNDIRECTED = frozenset({"undirected"})
BOTH = frozenset({"directed", "undirected"})


@dataclass(frozen=True)
class StatDef:
    name: str
    modes: frozenset
    needs: str | None = None  # None | "attribute" | "tie"
    weighted: bool = False    # reads the a(t, i, j) accumulator


_DEFS = [
    # weighted, directed
    StatDef("inertia", BOTH, weighted=True),
    StatDef("reciprocity", DIRECTED, weighted=True),
    StatDef("indegreesender", DIRECTED, weighted=True),
    StatDef("indegreereceiver", DIRECTED, weighted=True),
    StatDef("outdegreesender", DIRECTED, weighted=True),
    StatDef("outdegreereceiver", DIRECTED, weighted=True),
    StatDef("totaldegreesender", DIRECTED, weighted=True),
    StatDef("totaldegreereceiver", DIRECTED, weighted=True),
    StatDef("itp", DIRECTED, weighted=True),
    StatDef("otp", DIRECTED, weighted=True),
    StatDef("isp", DIRECTED, weighted=True),
    StatDef("osp", DIRECTED, weighted=True),
    # weighted, undirected
    StatDef("totaldegreeDyad", UNDIRECTED, weighted=True),
    StatDef("degreeMin", UNDIRECTED, weighted=True),
    StatDef("degreeMax", UNDIRECTED, weighted=True),
    StatDef("degreeDiff", UNDIRECTED, weighted=True),
    StatDef("sp", UNDIRECTED, weighted=True),
    # participation shifts
    StatDef("psABBA", DIRECTED),
    StatDef("psABAY", BOTH),
    StatDef("psABBY", DIRECTED),
    StatDef("psABXA", DIRECTED),
    StatDef("psABXB", DIRECTED),
    StatDef("psABXY", DIRECTED),
    StatDef("psABAB", UNDIRECTED),
    # recency and ranks
    StatDef("rranksend", DIRECTED),
    StatDef("rrankreceive", DIRECTED),
    StatDef("recencysendsender", DIRECTED),
    StatDef("recencysendreceiver", DIRECTED),
    StatDef("recencyreceivesender", DIRECTED),
    StatDef("recencyreceivereceiver", DIRECTED),
    StatDef("recencycontinue", BOTH),
    # exogenous
    StatDef("send", DIRECTED, needs="attribute"),
    StatDef("receive", DIRECTED, needs="attribute"),
    StatDef("same", BOTH, needs="attribute"),
    StatDef("difference", BOTH, needs="attribute"),
    StatDef("average", BOTH, needs="attribute"),
    StatDef("minimum", BOTH, needs="attribute"),
    StatDef("maximum", BOTH, needs="attribute"),
    StatDef("tie", BOTH, needs="tie"),
    # concurrency
    StatDef("engaged_actor", BOTH),
]

CATALOG = {d.name.lower(): d for d in _DEFS}


def stat_def(name: str) -> StatDef:
    try:
        return CATALOG[name.lower()]
    except KeyError:
        raise UnknownStatisticError(f"unknown statistic {name!r}") from None


@dataclass(frozen=True)
class StatisticSpec:
    """One requested design column: a catalog statistic bound to a side.

    `covariate` names the actor attribute or tie matrix for exogenous
    statistics; `standardize` requests per-transition scaling of the column.
    """

    name: str
    side: str
    covariate: str | None = None
    standardize: bool = False

    def __post_init__(self):
        d = stat_def(self.name)
        object.__setattr__(self, "name", d.name)
        if self.side not in ("start", "end"):
            raise StatisticSpecError(f"side must be 'start' or 'end', got {self.side!r}")
        if d.needs and not self.covariate:
            raise StatisticSpecError(f"statistic {d.name!r} requires a covariate name")
        if not d.needs and self.covariate:
            raise StatisticSpecError(f"statistic {d.name!r} takes no covariate")

    @property
    def label(self) -> str:
        return self.name if not self.covariate else f"{self.name}:{self.covariate}"


@dataclass(frozen=True)
class Options:
    """Behaviour switches for statistic construction and the likelihood.

    pshift_reference: which transition counts as the "previous event" for
        participation shifts ("starts_only" or "any_transition").
    recency_empty: value of recency statistics before any qualifying event
        ("zero" or "reciprocal" for 1/(t+1)).
    engaged_mode: "count" or "binary".
    t0: origin of the first waiting interval ("first_event" or "zero").
    censor_tail: add the survival term for the interval after the final
        transition up to observation_end.
    """

    pshift_reference: str = "starts_only"
    recency_empty: str = "zero"
    engaged_mode: str = "count"
    t0: str = "first_event"
    censor_tail: bool = False

    def __post_init__(self):
        if self.pshift_reference not in ("starts_only", "any_transition"):
            raise ValueError(f"bad pshift_reference {self.pshift_reference!r}")
        if self.recency_empty not in ("zero", "reciprocal"):
            raise ValueError(f"bad recency_empty {self.recency_empty!r}")
        if self.engaged_mode not in ("count", "binary"):
            raise ValueError(f"bad engaged_mode {self.engaged_mode!r}")
        if self.t0 not in ("first_event", "zero"):
            raise ValueError(f"bad t0 {self.t0!r}")


@dataclass
class ModelSpec:
    """Full specification of one model: directionality, columns, switches."""

    directionality: Directionality
    start_stats: list[StatisticSpec] = field(default_factory=list)
    end_stats: list[StatisticSpec] = field(default_factory=list)
    options: Options = field(default_factory=Options)

    def __post_init__(self):
        for spec in self.start_stats:
            _check_side(spec, "start", self.directionality.start_mode)
        for spec in self.end_stats:
            _check_side(spec, "end", self.directionality.end_mode)

    def stats(self, side: str) -> list[StatisticSpec]:
        return self.start_stats if side == "start" else self.end_stats

    def column_labels(self, side: str) -> list[str]:
        return ["baseline"] + [s.label for s in self.stats(side)]

    def validate_covariates(self, covariates: CovariateSet | None):
        cov = covariates or CovariateSet.empty()
        for spec in self.start_stats + self.end_stats:
            d = stat_def(spec.name)
            if d.needs == "attribute" and spec.covariate not in cov.actor_attributes:
                raise StatisticSpecError(
                    f"{spec.label!r} needs actor attribute {spec.covariate!r}, not provided"
                )
            if d.needs == "tie" and spec.covariate not in cov.dyadic_ties:
                raise StatisticSpecError(
                    f"{spec.label!r} needs dyadic tie {spec.covariate!r}, not provided"
                )


def _check_side(spec: StatisticSpec, side: str, mode: str):
    if spec.side != side:
        raise StatisticSpecError(f"{spec.label!r} declared for side {spec.side!r} used as {side!r}")
    d = stat_def(spec.name)
    if mode not in d.modes:
        raise UnknownStatisticError(f"statistic {d.name!r} is not defined for {mode} dyads")


# --------------------------------------------------------------------------
# Per-side incremental state
# --------------------------------------------------------------------------


class _SideState:
    """Accumulator and recency anchors for one model side.

    `a_closed` holds contributions of fully observed events, decayed to
    `t_ref` when a memory half-life is active.
    """

    def __init__(self, mode: str, psi: float, tau, floor: float, n_actors: int):
        self.mode = mode
        self.psi = psi
        self.kappa = None if tau is None else math.log(2.0) / tau
        self.floor = floor
        self.n = n_actors
        self.a_closed = np.zeros((n_actors, n_actors))
        self.t_ref = 0.0
        self.last = np.full((n_actors, n_actors), NEVER)
        self.last_send = np.full(n_actors, NEVER)
        self.last_receive = np.full(n_actors, NEVER)

    def roll_to(self, t: float):
        if self.kappa is not None and t > self.t_ref:
            self.a_closed *= math.exp(-self.kappa * (t - self.t_ref))
        self.t_ref = max(self.t_ref, t)

    def weight_at(self, duration: float, elapsed: float) -> float:
        w = duration_weight(duration, self.psi, self.floor)
        if self.kappa is not None:
            w *= math.exp(-self.kappa * elapsed) * self.kappa
        return w

    def add_closed(self, i: int, j: int, anchor: float, duration: float, t_now: float):
        self.roll_to(t_now)
        w = self.weight_at(duration, t_now - anchor)
        self.a_closed[i, j] += w
        if self.mode == "undirected":
            self.a_closed[j, i] += w

    def record(self, i: int, j: int, t: float):
        self.last[i, j] = max(self.last[i, j], t)
        if self.mode == "undirected":
            self.last[j, i] = max(self.last[j, i], t)
        else:
            self.last_send[i] = max(self.last_send[i], t)
            self.last_receive[j] = max(self.last_receive[j], t)

    def dyad(self, sender: int, receiver: int) -> tuple[int, int]:
        if self.mode == "directed":
            return (sender, receiver)
        return canonical_pair(sender, receiver)


@dataclass
class WeightedAdjacency:
    """Snapshot of the weighted accumulator at one evaluation time.

    With psi = 0 and no half-life, `a` is the integer count of qualifying
    past events.  `last*` hold the most recent anchor times (-inf if none).
    """

    t: float
    model: str
    mode: str
    a: np.ndarray
    last: np.ndarray
    last_send: np.ndarray
    last_receive: np.ndarray

    @property
    def row_sums(self) -> np.ndarray:
        return self.a.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.a.sum(axis=0)


def accumulate(history: EventHistory, t: float, params: WeightParams, model: str,
               directionality: Directionality, open_durations: str = "full") -> WeightedAdjacency:
    """From-scratch weighted sums over qualifying past events at time `t`.

    The start model sums events with t_start < t, the end model events with
    t_end < t.  Events still open at `t` enter the start model with their
    full recorded duration by default; `open_durations="elapsed"` truncates
    them at `t`, matching the no-lookahead design construction.
    """
    if model not in ("start", "end"):
        raise ValueError(f"model must be 'start' or 'end', got {model!r}")
    if open_durations not in ("full", "elapsed"):
        raise ValueError(f"open_durations must be 'full' or 'elapsed'")
    mode = directionality.start_mode if model == "start" else directionality.end_mode
    psi = params.psi(model)
    state = _SideState(mode, psi, params.tau, params.duration_floor, history.n_actors)
    for e in history.events:
        anchor = e.t_start if model == "start" else e.t_end
        if not anchor < t:
            continue
        duration = e.duration
        if model == "start" and open_durations == "elapsed":
            duration = min(e.t_end, t) - e.t_start
        i, j = state.dyad(e.sender, e.receiver)
        w = state.weight_at(duration, t - anchor)
        state.a_closed[i, j] += w
        if mode == "undirected":
            state.a_closed[j, i] += w
        state.record(i, j, anchor)
    return WeightedAdjacency(
        t=t, model=model, mode=mode, a=state.a_closed,
        last=state.last, last_send=state.last_send, last_receive=state.last_receive,
    )


# --------------------------------------------------------------------------
# Statistic evaluation over gathered dyad rows
# --------------------------------------------------------------------------


class _EvalContext:
    """Read-only view of one side's state at one transition."""

    def __init__(self, side_state: _SideState, t: float, open_events, prev_event,
                 busy, pair_open, covariates: CovariateSet, options: Options):
        self._state = side_state
        self.mode = side_state.mode
        self.t = t
        self._open_events = open_events
        self.prev_event = prev_event
        self.busy = busy
        self.pair_open = pair_open
        self.covariates = covariates
        self.options = options
        self._a = None
        self._row_sums = None
        self._col_sums = None
        self._rank_send = None
        self._rank_receive = None

    @property
    def a(self) -> np.ndarray:
        if self._a is None:
            state = self._state
            state.roll_to(self.t)
            if self._open_events:
                a = state.a_closed.copy()
                for (i, j, t_start) in self._open_events:
                    w = state.weight_at(self.t - t_start, self.t - t_start)
                    ii, jj = state.dyad(i, j)
                    a[ii, jj] += w
                    if state.mode == "undirected":
                        a[jj, ii] += w
                self._a = a
            else:
                self._a = state.a_closed
        return self._a

    @property
    def row_sums(self):
        if self._row_sums is None:
            self._row_sums = self.a.sum(axis=1)
        return self._row_sums

    @property
    def col_sums(self):
        if self._col_sums is None:
            self._col_sums = self.a.sum(axis=0)
        return self._col_sums

    @property
    def last(self):
        return self._state.last

    @property
    def last_send(self):
        return self._state.last_send

    @property
    def last_receive(self):
        return self._state.last_receive

    def _recency(self, anchors):
        known = anchors > NEVER
        if self.options.recency_empty == "reciprocal":
            base = np.where(known, anchors, 0.0)
            return 1.0 / (self.t - base + 1.0)
        return np.where(known, 1.0 / (self.t - np.where(known, anchors, 0.0) + 1.0), 0.0)

    @staticmethod
    def _rank_reciprocal(last_rows):
        # rank of column j within row i by recency; ties share the better rank
        counts = (last_rows[:, :, None] > last_rows[:, None, :]).sum(axis=1)
        with np.errstate(divide="ignore"):
            return np.where(last_rows > NEVER, 1.0 / (1.0 + counts), 0.0)

    @property
    def rank_send(self):
        if self._rank_send is None:
            self._rank_send = self._rank_reciprocal(self.last)
        return self._rank_send

    @property
    def rank_receive(self):
        if self._rank_receive is None:
            self._rank_receive = self._rank_reciprocal(self.last.T)
        return self._rank_receive


def _prev_pair(ctx):
    if ctx.prev_event is None:
        return None
    a, b = ctx.prev_event
    return canonical_pair(a, b)


def _eval_stat(spec: StatisticSpec, ctx: _EvalContext, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    name = spec.name
    a = None  # fetched lazily per statistic
    if name == "inertia":
        return ctx.a[ii, jj]
    if name == "reciprocity":
        return ctx.a[jj, ii]
    if name == "indegreesender":
        return ctx.col_sums[ii]
    if name == "indegreereceiver":
        return ctx.col_sums[jj]
    if name == "outdegreesender":
        return ctx.row_sums[ii]
    if name == "outdegreereceiver":
        return ctx.row_sums[jj]
    if name == "totaldegreesender":
        return ctx.row_sums[ii] + ctx.col_sums[ii]
    if name == "totaldegreereceiver":
        return ctx.row_sums[jj] + ctx.col_sums[jj]
    if name == "itp":
        a = ctx.a
        return np.minimum(a[jj, :], a[:, ii].T).sum(axis=1)
    if name == "otp":
        a = ctx.a
        return np.minimum(a[ii, :], a[:, jj].T).sum(axis=1)
    if name == "isp":
        a = ctx.a
        return np.minimum(a[:, ii].T, a[:, jj].T).sum(axis=1)
    if name == "osp":
        a = ctx.a
        return np.minimum(a[ii, :], a[jj, :]).sum(axis=1)
    if name == "totaldegreeDyad":
        return ctx.row_sums[ii] + ctx.row_sums[jj]
    if name == "degreeMin":
        return np.minimum(ctx.row_sums[ii], ctx.row_sums[jj])
    if name == "degreeMax":
        return np.maximum(ctx.row_sums[ii], ctx.row_sums[jj])
    if name == "degreeDiff":
        return np.abs(ctx.row_sums[ii] - ctx.row_sums[jj])
    if name == "sp":
        a = ctx.a
        return np.minimum(a[ii, :], a[jj, :]).sum(axis=1)

    if name.startswith("ps"):
        if ctx.prev_event is None:
            return np.zeros(len(ii))
        if ctx.mode == "undirected":
            pa, pb = _prev_pair(ctx)
            in_prev = ((ii == pa) | (ii == pb)).astype(int) + ((jj == pa) | (jj == pb)).astype(int)
            if name == "psABAB":
                return ((ii == pa) & (jj == pb)).astype(float)
            if name == "psABAY":
                return (in_prev == 1).astype(float)
            raise UnknownStatisticError(f"{name} is not defined for undirected dyads")
        pa, pb = ctx.prev_event
        i_new = (ii != pa) & (ii != pb)
        j_new = (jj != pa) & (jj != pb)
        if name == "psABBA":
            return ((ii == pb) & (jj == pa)).astype(float)
        if name == "psABAY":
            return ((ii == pa) & j_new).astype(float)
        if name == "psABBY":
            return ((ii == pb) & j_new).astype(float)
        if name == "psABXA":
            return ((jj == pa) & i_new).astype(float)
        if name == "psABXB":
            return ((jj == pb) & i_new).astype(float)
        if name == "psABXY":
            return (i_new & j_new).astype(float)

    if name == "rranksend":
        return ctx.rank_send[ii, jj]
    if name == "rrankreceive":
        return ctx.rank_receive[ii, jj]
    if name == "recencysendsender":
        return ctx._recency(ctx.last_send[ii])
    if name == "recencysendreceiver":
        return ctx._recency(ctx.last_send[jj])
    if name == "recencyreceivesender":
        return ctx._recency(ctx.last_receive[ii])
    if name == "recencyreceivereceiver":
        return ctx._recency(ctx.last_receive[jj])
    if name == "recencycontinue":
        return ctx._recency(ctx.last[ii, jj])

    if name == "send":
        return ctx.covariates.attribute(spec.covariate)[ii]
    if name == "receive":
        return ctx.covariates.attribute(spec.covariate)[jj]
    if name == "same":
        c = ctx.covariates.attribute(spec.covariate)
        return (c[ii] == c[jj]).astype(float)
    if name == "difference":
        c = ctx.covariates.attribute(spec.covariate)
        return np.abs(c[ii] - c[jj])
    if name == "average":
        c = ctx.covariates.attribute(spec.covariate)
        return 0.5 * (c[ii] + c[jj])
    if name == "minimum":
        c = ctx.covariates.attribute(spec.covariate)
        return np.minimum(c[ii], c[jj])
    if name == "maximum":
        c = ctx.covariates.attribute(spec.covariate)
        return np.maximum(c[ii], c[jj])
    if name == "tie":
        return ctx.covariates.tie(spec.covariate)[ii, jj]

    if name == "engaged_actor":
        values = ctx.busy[ii] + ctx.busy[jj] - 2.0 * ctx.pair_open[ii, jj]
        if ctx.options.engaged_mode == "binary":
            return (values > 0).astype(float)
        return values

    raise UnknownStatisticError(f"unknown statistic {name!r}")


def compute_statistic(spec: StatisticSpec, dyad: tuple[int, int],
                      adjacency: WeightedAdjacency, covariates: CovariateSet | None = None,
                      prev_event: tuple[int, int] | None = None,
                      options: Options | None = None) -> float:
    """Evaluate one catalog statistic for one dyad from an adjacency snapshot.

    `prev_event` is the reference (sender, receiver) for participation
    shifts.  The concurrency statistic needs live open-event state and is
    served by `engaged_actor` instead.
    """
    if spec.name == "engaged_actor":
        raise StatisticSpecError("use engaged_actor(dyad, m, seq) for the concurrency statistic")
    state = _SideState.__new__(_SideState)
    state.mode = adjacency.mode
    state.a_closed = adjacency.a
    state.kappa = None
    state.t_ref = adjacency.t
    state.last = adjacency.last
    state.last_send = adjacency.last_send
    state.last_receive = adjacency.last_receive
    ctx = _EvalContext(
        state, adjacency.t, open_events=(), prev_event=prev_event,
        busy=None, pair_open=None,
        covariates=covariates or CovariateSet.empty(),
        options=options or Options(),
    )
    i, j = dyad
    if adjacency.mode == "undirected":
        i, j = canonical_pair(i, j)
    value = _eval_stat(spec, ctx, np.array([i]), np.array([j]))
    return float(value[0])


def engaged_actor(dyad: tuple[int, int], m: int, seq: TransitionSequence,
                  mode: str = "count") -> float:
    """Ongoing events just before transition m involving exactly one member
    of `dyad` together with a third actor.

    `m` is 1-based; m = 2M + 1 gives the state after the final transition.
    `mode="binary"` returns an indicator instead of the count.
    """
    if not 1 <= m <= len(seq) + 1:
        raise IndexError(f"transition index {m} out of range 1..{len(seq) + 1}")
    i, j = dyad
    members = {i, j}
    count = 0
    open_actors: dict[int, set[int]] = {}
    for tr in seq.transitions:
        if tr.m >= m:
            break
        if tr.kind == "start":
            open_actors[tr.event_index] = set(tr.actors)
        else:
            open_actors.pop(tr.event_index, None)
    for actors in open_actors.values():
        if len(actors & members) == 1:
            count += 1
    if mode == "binary":
        return float(count > 0)
    return float(count)


# --------------------------------------------------------------------------
# Incremental engine shared by the design builder and the simulator
# --------------------------------------------------------------------------


class DesignEngine:
    """Replays transitions and evaluates per-side design blocks.

    The same engine drives design construction for the likelihood and state
    updates inside the simulator, which keeps the two in exact agreement.
    """

    def __init__(self, model_spec: ModelSpec, n_actors: int, params: WeightParams,
                 covariates: CovariateSet | None = None):
        model_spec.validate_covariates(covariates)
        self.spec = model_spec
        self.dir = model_spec.directionality
        self.n = n_actors
        self.params = params
        self.covariates = covariates or CovariateSet.empty()
        self.options = model_spec.options
        self.t_now = 0.0
        self.sides = {
            "start": _SideState(self.dir.start_mode, params.psi_s, params.tau,
                                params.duration_floor, n_actors),
            "end": _SideState(self.dir.end_mode, params.psi_e, params.tau,
                              params.duration_floor, n_actors),
        }
        universe = dyad_universe(n_actors, self.dir.start_mode)
        self._universe_i = np.array([d[0] for d in universe], dtype=np.intp)
        self._universe_j = np.array([d[1] for d in universe], dtype=np.intp)
        self._pos = {d: k for k, d in enumerate(universe)}
        self._active = np.ones(len(universe), dtype=bool)
        self.open_events: dict[int, tuple[int, int, float]] = {}
        self.ongoing: dict[tuple[int, int], int] = {}
        self.busy = np.zeros(n_actors)
        self.pair_open = np.zeros((n_actors, n_actors))
        self.prev_event: tuple[int, int] | None = None

    # -- state updates ------------------------------------------------------

    def _blocked_positions(self, sender: int, receiver: int):
        if self.dir.start_mode == "directed":
            if self.dir.end_mode == "directed":
                return (self._pos[(sender, receiver)],)
            return (self._pos[(sender, receiver)], self._pos[(receiver, sender)])
        return (self._pos[canonical_pair(sender, receiver)],)

    @property
    def _mirror_ends(self) -> bool:
        # undirected starts with directed ends: either actor may end the pair
        return self.dir.start_mode == "undirected" and self.dir.end_mode == "directed"

    def apply_start(self, sender: int, receiver: int, t: float, event_index: int):
        start_side = self.sides["start"]
        i, j = start_side.dyad(sender, receiver)
        start_side.record(i, j, t)
        self.open_events[event_index] = (sender, receiver, t)
        self.ongoing[self.sides["end"].dyad(sender, receiver)] = event_index
        if self._mirror_ends:
            self.ongoing[(receiver, sender)] = event_index
        for pos in self._blocked_positions(sender, receiver):
            self._active[pos] = False
        self.busy[sender] += 1
        self.busy[receiver] += 1
        p, q = canonical_pair(sender, receiver)
        self.pair_open[p, q] += 1
        self.pair_open[q, p] += 1
        self.prev_event = (sender, receiver)
        self.t_now = t

    def apply_end(self, event_index: int, t: float, end_dyad: tuple[int, int] | None = None):
        """Close an open event; `end_dyad` overrides the recorded order when
        the terminating actor differs (undirected starts, directed ends)."""
        sender, receiver, t_start = self.open_events.pop(event_index)
        end_side = self.sides["end"]
        start_side = self.sides["start"]
        duration = t - t_start
        start_side.add_closed(*start_side.dyad(sender, receiver), anchor=t_start,
                              duration=duration, t_now=t)
        ei, ej = end_dyad if end_dyad is not None else end_side.dyad(sender, receiver)
        end_side.add_closed(ei, ej, anchor=t, duration=duration, t_now=t)
        end_side.record(ei, ej, t)
        del self.ongoing[(ei, ej)]
        if self._mirror_ends:
            del self.ongoing[(ej, ei)]
        for pos in self._blocked_positions(sender, receiver):
            self._active[pos] = True
        self.busy[sender] -= 1
        self.busy[receiver] -= 1
        p, q = canonical_pair(sender, receiver)
        self.pair_open[p, q] -= 1
        self.pair_open[q, p] -= 1
        if self.options.pshift_reference == "any_transition":
            self.prev_event = (ei, ej) if self.dir.end_mode == "directed" else (sender, receiver)
        self.t_now = t

    def apply(self, tr: Transition, history: EventHistory):
        event = history.events[tr.event_index]
        if tr.kind == "start":
            self.apply_start(event.sender, event.receiver, tr.time, tr.event_index)
        else:
            self.apply_end(tr.event_index, tr.time, end_dyad=tr.dyad)

    # -- evaluation ---------------------------------------------------------

    def start_rows(self) -> tuple[np.ndarray, np.ndarray]:
        return self._universe_i[self._active], self._universe_j[self._active]

    def end_rows(self) -> tuple[np.ndarray, np.ndarray, list]:
        keys = sorted(self.ongoing)
        ii = np.array([k[0] for k in keys], dtype=np.intp)
        jj = np.array([k[1] for k in keys], dtype=np.intp)
        return ii, jj, keys

    def start_row_offset(self, dyad: tuple[int, int]) -> int:
        pos = self._pos[dyad]
        if not self._active[pos]:
            raise LookupError(f"dyad {dyad} is not at risk to start")
        return int(self._active[:pos].sum())

    def _context(self, side: str) -> _EvalContext:
        open_list = () if side == "end" else tuple(self.open_events.values())
        return _EvalContext(
            self.sides[side], self.t_now, open_list, self.prev_event,
            self.busy, self.pair_open, self.covariates, self.options,
        )

    def design_block(self, side: str, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
        """Design rows (intercept first) for the given dyads at the current time."""
        specs = self.spec.stats(side)
        block = np.empty((len(ii), 1 + len(specs)))
        block[:, 0] = 1.0
        if len(ii):
            ctx = self._context(side)
            for k, stat in enumerate(specs):
                block[:, 1 + k] = _eval_stat(stat, ctx, ii, jj)
            for k, stat in enumerate(specs):
                if stat.standardize:
                    col = block[:, 1 + k]
                    sd = col.std()
                    if sd > 0:
                        block[:, 1 + k] = (col - col.mean()) / sd
        return block


# --------------------------------------------------------------------------
# Design array
# --------------------------------------------------------------------------


@dataclass
class DesignArray:
    """Per-transition, per-at-risk-dyad, per-statistic values.

    Rows are grouped per transition via `start_ptr`/`end_ptr` (CSR offsets,
    one slot per transition plus a final bound; a censoring tail block, when
    present, occupies the extra last slot with `obs_side = -1`).  `obs_row`
    indexes the observed transition's row within its side's arrays.
    """

    start_cols: list[str]
    end_cols: list[str]
    X_start: np.ndarray
    X_end: np.ndarray
    start_ptr: np.ndarray
    end_ptr: np.ndarray
    start_dyads: np.ndarray
    end_dyads: np.ndarray
    obs_side: np.ndarray
    obs_row: np.ndarray
    dt: np.ndarray
    times: np.ndarray
    kinds: list[str]
    directionality: Directionality
    params: WeightParams
    n_actors: int
    n_transitions: int

    @property
    def has_tail(self) -> bool:
        return len(self.dt) > self.n_transitions

    def start_slice(self, m: int) -> slice:
        return slice(self.start_ptr[m - 1], self.start_ptr[m])

    def end_slice(self, m: int) -> slice:
        return slice(self.end_ptr[m - 1], self.end_ptr[m])

    def block_count(self, m: int) -> int:
        return (self.start_ptr[m] - self.start_ptr[m - 1]) + (self.end_ptr[m] - self.end_ptr[m - 1])


def write_design_long(design: DesignArray, path, labels=None) -> None:
    """Export the design as long-format delimited text.

    One row per at-risk dyad per transition: `m,time,kind,dyad,side` followed
    by the start-model columns and the end-model columns (cells of the
    opposite side are empty).  `labels` maps actor indices to names.
    """
    def name(k):
        return labels[k] if labels else str(k)

    sep_start = ">" if design.directionality.start_mode == "directed" else "~"
    sep_end = ">" if design.directionality.end_mode == "directed" else "~"
    header = (["m", "time", "kind", "dyad", "side"]
              + [f"start:{c}" for c in design.start_cols]
              + [f"end:{c}" for c in design.end_cols])
    n_s, n_e = len(design.start_cols), len(design.end_cols)
    lines = [",".join(header)]
    for m in range(1, len(design.dt) + 1):
        time = design.times[m - 1]
        kind = design.kinds[m - 1]
        sl = design.start_slice(m)
        for row in range(sl.start, sl.stop):
            i, j = design.start_dyads[row]
            cells = [str(m), repr(float(time)), kind, f"{name(i)}{sep_start}{name(j)}", "start"]
            cells += [repr(float(v)) for v in design.X_start[row]]
            cells += [""] * n_e
            lines.append(",".join(cells))
        el = design.end_slice(m)
        for row in range(el.start, el.stop):
            i, j = design.end_dyads[row]
            cells = [str(m), repr(float(time)), kind, f"{name(i)}{sep_end}{name(j)}", "end"]
            cells += [""] * n_s
            cells += [repr(float(v)) for v in design.X_end[row]]
            lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def build_design(seq: TransitionSequence, model_spec: ModelSpec, history: EventHistory,
                 covariates: CovariateSet | None = None,
                 params: WeightParams | None = None) -> DesignArray:
    """Construct the full design array for a transition sequence.

    Rows for transition m are evaluated at t_{m-1} from transitions 1..m-1
    (sequence order); see the module docstring for the open-event rule.
    Raises `DesignOverflowError` when a statistic value is non-finite.
    """
    params = params or WeightParams()
    engine = DesignEngine(model_spec, seq.n_actors, params, covariates)
    n = len(seq)
    options = model_spec.options

    X_start_blocks, X_end_blocks = [], []
    sd_blocks, ed_blocks = [], []
    start_counts = np.zeros(0, dtype=np.intp)
    obs_side = np.zeros(n, dtype=np.intp)
    obs_offset = np.zeros(n, dtype=np.intp)
    start_sizes, end_sizes = [], []
    dt = np.zeros(n)
    prev_time = 0.0 if options.t0 == "zero" else (seq.transitions[0].time if n else 0.0)
    engine.t_now = prev_time

    for k, tr in enumerate(seq.transitions):
        sii, sjj = engine.start_rows()
        eii, ejj, ekeys = engine.end_rows()
        sblock = engine.design_block("start", sii, sjj)
        eblock = engine.design_block("end", eii, ejj)
        for side_name, block in (("start", sblock), ("end", eblock)):
            if block.size and not np.isfinite(block).all():
                bad = np.flatnonzero(~np.isfinite(block).all(axis=0))
                labels = [model_spec.column_labels(side_name)[b] for b in bad]
                psi = params.psi_s if side_name == "start" else params.psi_e
                raise DesignOverflowError(
                    f"non-finite {side_name} design value at transition {tr.m} "
                    f"(t={tr.time}) in column(s) {labels} with psi={psi}"
                )
        X_start_blocks.append(sblock)
        X_end_blocks.append(eblock)
        sd_blocks.append(np.column_stack([sii, sjj]) if len(sii) else np.zeros((0, 2), dtype=np.intp))
        ed_blocks.append(np.column_stack([eii, ejj]) if len(eii) else np.zeros((0, 2), dtype=np.intp))
        start_sizes.append(len(sii))
        end_sizes.append(len(eii))
        if tr.kind == "start":
            obs_side[k] = 0
            obs_offset[k] = engine.start_row_offset(tr.dyad)
        else:
            obs_side[k] = 1
            obs_offset[k] = ekeys.index(tr.dyad)
        dt[k] = tr.time - prev_time
        prev_time = tr.time
        engine.apply(tr, history)

    times = list(seq.times)
    kinds = [tr.kind for tr in seq.transitions]
    if options.censor_tail:
        if seq.observation_end is None:
            raise ValueError("censor_tail requires an observation_end on the history")
        if n and seq.observation_end < prev_time:
            raise ValueError("observation_end precedes the final transition")
        sii, sjj = engine.start_rows()
        eii, ejj, _ = engine.end_rows()
        X_start_blocks.append(engine.design_block("start", sii, sjj))
        X_end_blocks.append(engine.design_block("end", eii, ejj))
        sd_blocks.append(np.column_stack([sii, sjj]) if len(sii) else np.zeros((0, 2), dtype=np.intp))
        ed_blocks.append(np.column_stack([eii, ejj]) if len(eii) else np.zeros((0, 2), dtype=np.intp))
        start_sizes.append(len(sii))
        end_sizes.append(len(eii))
        dt = np.append(dt, seq.observation_end - prev_time)
        times.append(seq.observation_end)
        kinds.append("tail")
        obs_side = np.append(obs_side, -1)
        obs_offset = np.append(obs_offset, -1)

    start_ptr = np.concatenate([[0], np.cumsum(start_sizes)]).astype(np.intp)
    end_ptr = np.concatenate([[0], np.cumsum(end_sizes)]).astype(np.intp)
    p_s = 1 + len(model_spec.start_stats)
    p_e = 1 + len(model_spec.end_stats)
    X_start = (np.concatenate(X_start_blocks, axis=0) if X_start_blocks
               else np.zeros((0, p_s)))
    X_end = (np.concatenate(X_end_blocks, axis=0) if X_end_blocks
             else np.zeros((0, p_e)))
    obs_row = np.where(
        obs_side == 0,
        start_ptr[: len(obs_side)] + obs_offset,
        end_ptr[: len(obs_side)] + obs_offset,
    ).astype(np.intp)
    obs_row[obs_side == -1] = -1

    return DesignArray(
        start_cols=model_spec.column_labels("start"),
        end_cols=model_spec.column_labels("end"),
        X_start=X_start,
        X_end=X_end,
        start_ptr=start_ptr,
        end_ptr=end_ptr,
        start_dyads=(np.concatenate(sd_blocks, axis=0) if sd_blocks else np.zeros((0, 2), dtype=np.intp)),
        end_dyads=(np.concatenate(ed_blocks, axis=0) if ed_blocks else np.zeros((0, 2), dtype=np.intp)),
        obs_side=obs_side,
        obs_row=obs_row,
        dt=dt,
        times=np.array(times, dtype=float),
        kinds=kinds,
        directionality=model_spec.directionality,
        params=params,
        n_actors=seq.n_actors,
        n_transitions=n,
    )
