"""Independent brute-force reference implementations for the tests.

Everything here recomputes from scratch with plain Python loops and dicts:
no incremental state, no shared code with the package's vectorized paths.
Semantics mirror the documented contracts: design rows for transition m are
evaluated at t_{m-1} over the first m-1 transitions, open events enter
start-side sums with elapsed durations, recency anchors follow each side's
cutoff times.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

NEG_INF = -math.inf


def dur_weight(duration, psi, floor):
    return max(duration, floor) ** psi


def mem_weight(elapsed, tau):
    if tau is None:
        return 1.0
    rate = math.log(2.0) / tau
    return math.exp(-elapsed * rate) * rate


def repr_dyad(sender, receiver, mode):
    if mode == "directed":
        return (sender, receiver)
    return (min(sender, receiver), max(sender, receiver))


class OracleState:
    """Everything known after applying the first `k` transitions."""

    def __init__(self, history, seq, k, t_eval, options):
        self.history = history
        self.seq = seq
        self.options = options
        self.t = t_eval
        applied = seq.transitions[:k]
        self.started = []   # (event, start transition)
        self.ended = []     # (event, end transition)
        open_idx = set()
        self.prev_event = None
        for tr in applied:
            ev = history.events[tr.event_index]
            if tr.kind == "start":
                self.started.append((ev, tr))
                open_idx.add(tr.event_index)
                self.prev_event = (ev.sender, ev.receiver)
            else:
                self.ended.append((ev, tr))
                open_idx.discard(tr.event_index)
                if options.pshift_reference == "any_transition":
                    if seq.directionality.end_mode == "directed":
                        self.prev_event = tr.dyad
                    else:
                        self.prev_event = (ev.sender, ev.receiver)
        self.open = [(history.events[i], i) for i in sorted(open_idx)]


class OracleSideView:
    """Adjacency, anchors and rank tables for one side at one transition."""

    def __init__(self, state: OracleState, side, psi, tau, floor, mode,
                 covariates=None):
        self.state = state
        self.side = side
        self.mode = mode
        self.t = state.t
        self.covariates = covariates
        self.options = state.options
        self.n = state.history.n_actors

        a = defaultdict(float)
        last = defaultdict(lambda: NEG_INF)
        last_send = defaultdict(lambda: NEG_INF)
        last_receive = defaultdict(lambda: NEG_INF)
        if side == "start":
            ended_idx = {tr.event_index for _, tr in state.ended}
            for ev, tr in state.started:
                d = repr_dyad(ev.sender, ev.receiver, mode)
                if tr.event_index in ended_idx:
                    duration = ev.t_end - ev.t_start
                else:
                    duration = self.t - ev.t_start
                a[d] += dur_weight(duration, psi, floor) * mem_weight(self.t - ev.t_start, tau)
                self._anchor(last, last_send, last_receive, ev.sender, ev.receiver,
                             ev.t_start, mode)
        else:
            for ev, tr in state.ended:
                if state.seq.directionality.end_mode == "directed":
                    s, r = tr.dyad
                else:
                    s, r = ev.sender, ev.receiver
                d = repr_dyad(s, r, mode)
                a[d] += dur_weight(ev.duration, psi, floor) * mem_weight(self.t - ev.t_end, tau)
                self._anchor(last, last_send, last_receive, s, r, ev.t_end, mode)
        self.a = a
        self.last = last
        self.last_send = last_send
        self.last_receive = last_receive
        self._rowsum = {}
        self._colsum = {}

    @staticmethod
    def _anchor(last, last_send, last_receive, s, r, t, mode):
        d = repr_dyad(s, r, mode)
        last[d] = max(last[d], t)
        if mode == "directed":
            last_send[s] = max(last_send[s], t)
            last_receive[r] = max(last_receive[r], t)

    def adj(self, i, j):
        return self.a[repr_dyad(i, j, self.mode)] if self.mode == "undirected" else self.a[(i, j)]

    def rowsum(self, x):
        if x not in self._rowsum:
            self._rowsum[x] = sum(self.adj(x, k) for k in range(self.n) if k != x)
        return self._rowsum[x]

    def colsum(self, x):
        if x not in self._colsum:
            self._colsum[x] = sum(self.a[(k, x)] for k in range(self.n) if k != x)
        return self._colsum[x]

    def recency(self, anchor):
        if anchor == NEG_INF:
            if self.options.recency_empty == "reciprocal":
                return 1.0 / (self.t + 1.0)
            return 0.0
        return 1.0 / (self.t - anchor + 1.0)

    def statistic(self, name, dyad, covariate=None):
        i, j = dyad
        actors = range(self.n)
        a = self.a
        if name == "inertia":
            return self.adj(i, j)
        if name == "reciprocity":
            return a[(j, i)]
        if name == "indegreesender":
            return self.colsum(i)
        if name == "indegreereceiver":
            return self.colsum(j)
        if name == "outdegreesender":
            return self.rowsum(i)
        if name == "outdegreereceiver":
            return self.rowsum(j)
        if name == "totaldegreesender":
            return self.rowsum(i) + self.colsum(i)
        if name == "totaldegreereceiver":
            return self.rowsum(j) + self.colsum(j)
        if name == "itp":
            return sum(min(a[(j, k)], a[(k, i)]) for k in actors if k not in (i, j))
        if name == "otp":
            return sum(min(a[(i, k)], a[(k, j)]) for k in actors if k not in (i, j))
        if name == "isp":
            return sum(min(a[(k, i)], a[(k, j)]) for k in actors if k not in (i, j))
        if name == "osp":
            return sum(min(a[(i, k)], a[(j, k)]) for k in actors if k not in (i, j))
        if name == "totaldegreeDyad":
            return self.rowsum(i) + self.rowsum(j)
        if name == "degreeMin":
            return min(self.rowsum(i), self.rowsum(j))
        if name == "degreeMax":
            return max(self.rowsum(i), self.rowsum(j))
        if name == "degreeDiff":
            return abs(self.rowsum(i) - self.rowsum(j))
        if name == "sp":
            return sum(min(self.adj(i, k), self.adj(j, k)) for k in actors if k not in (i, j))

        if name.startswith("ps"):
            prev = self.state.prev_event
            if prev is None:
                return 0.0
            pa, pb = prev
            if self.mode == "undirected":
                prev_set = {pa, pb}
                if name == "psABAB":
                    return 1.0 if {i, j} == prev_set else 0.0
                if name == "psABAY":
                    return 1.0 if len({i, j} & prev_set) == 1 else 0.0
            if name == "psABBA":
                return 1.0 if (i, j) == (pb, pa) else 0.0
            if name == "psABAY":
                return 1.0 if i == pa and j not in (pa, pb) else 0.0
            if name == "psABBY":
                return 1.0 if i == pb and j not in (pa, pb) else 0.0
            if name == "psABXA":
                return 1.0 if j == pa and i not in (pa, pb) else 0.0
            if name == "psABXB":
                return 1.0 if j == pb and i not in (pa, pb) else 0.0
            if name == "psABXY":
                return 1.0 if not {i, j} & {pa, pb} else 0.0

        if name == "rranksend":
            if self.last[(i, j)] == NEG_INF:
                return 0.0
            rank = 1 + sum(1 for k in actors if self.last[(i, k)] > self.last[(i, j)])
            return 1.0 / rank
        if name == "rrankreceive":
            if self.last[(j, i)] == NEG_INF:
                return 0.0
            rank = 1 + sum(1 for k in actors if self.last[(k, i)] > self.last[(j, i)])
            return 1.0 / rank
        if name == "recencysendsender":
            return self.recency(self.last_send[i])
        if name == "recencysendreceiver":
            return self.recency(self.last_send[j])
        if name == "recencyreceivesender":
            return self.recency(self.last_receive[i])
        if name == "recencyreceivereceiver":
            return self.recency(self.last_receive[j])
        if name == "recencycontinue":
            d = repr_dyad(i, j, self.mode) if self.mode == "undirected" else (i, j)
            return self.recency(self.last[d])

        if name in ("send", "receive", "same", "difference", "average", "minimum", "maximum"):
            c = self.covariates.actor_attributes[covariate]
            if name == "send":
                return float(c[i])
            if name == "receive":
                return float(c[j])
            if name == "same":
                return 1.0 if c[i] == c[j] else 0.0
            if name == "difference":
                return abs(float(c[i]) - float(c[j]))
            if name == "average":
                return (float(c[i]) + float(c[j])) / 2.0
            if name == "minimum":
                return min(float(c[i]), float(c[j]))
            if name == "maximum":
                return max(float(c[i]), float(c[j]))
        if name == "tie":
            return float(self.covariates.dyadic_ties[covariate][i, j])

        if name == "engaged_actor":
            count = sum(1 for ev, _ in self.state.open
                        if len({ev.sender, ev.receiver} & {i, j}) == 1)
            if self.options.engaged_mode == "binary":
                return 1.0 if count else 0.0
            return float(count)

        raise KeyError(name)


def oracle_statistic(name, dyad, state: OracleState, side, psi, tau, floor,
                     mode, covariates=None, covariate=None):
    view = OracleSideView(state, side, psi, tau, floor, mode, covariates)
    return view.statistic(name, dyad, covariate)


def oracle_risksets(history, seq, k):
    """(at_start, at_end) before transition k+1, from the open-event list."""
    directionality = seq.directionality
    open_idx = set()
    for tr in seq.transitions[:k]:
        if tr.kind == "start":
            open_idx.add(tr.event_index)
        else:
            open_idx.discard(tr.event_index)
    at_end = set()
    blocked = set()
    for i in sorted(open_idx):
        ev = history.events[i]
        if directionality.end_mode == "undirected":
            at_end.add(repr_dyad(ev.sender, ev.receiver, "undirected"))
        else:
            at_end.add((ev.sender, ev.receiver))
            if directionality.start_mode == "undirected":
                at_end.add((ev.receiver, ev.sender))
        if directionality.start_mode == "directed":
            blocked.add((ev.sender, ev.receiver))
            if directionality.end_mode == "undirected":
                blocked.add((ev.receiver, ev.sender))
        else:
            blocked.add(repr_dyad(ev.sender, ev.receiver, "undirected"))
    n = history.n_actors
    if directionality.start_mode == "directed":
        universe = [(i, j) for i in range(n) for j in range(n) if i != j]
    else:
        universe = [(i, j) for i in range(n) for j in range(i + 1, n)]
    at_start = [d for d in universe if d not in blocked]
    return at_start, sorted(at_end)


def count_ongoing_by_intervals(history, t):
    """Events with t_start <= t < t_end (interval overlap at time t)."""
    return sum(1 for e in history.events if e.t_start <= t < e.t_end)


def oracle_design(history, seq, model_spec, covariates, params):
    """Full from-scratch design: {(m, side, dyad): {column: value}} plus dt."""
    options = model_spec.options
    values = {}
    dts = []
    prev_time = 0.0 if options.t0 == "zero" else (seq.transitions[0].time if len(seq) else 0.0)
    for k, tr in enumerate(seq.transitions):
        state = OracleState(history, seq, k, prev_time, options)
        at_start, at_end = oracle_risksets(history, seq, k)
        for side, rows, mode, psi in (
            ("start", at_start, seq.directionality.start_mode, params.psi_s),
            ("end", at_end, seq.directionality.end_mode, params.psi_e),
        ):
            specs = model_spec.stats(side)
            view = OracleSideView(state, side, psi, params.tau, params.duration_floor,
                                  mode, covariates)
            for dyad in rows:
                row = {"baseline": 1.0}
                for spec in specs:
                    row[spec.label] = view.statistic(spec.name, dyad, spec.covariate)
                values[(tr.m, side, dyad)] = row
        dts.append(tr.time - prev_time)
        prev_time = tr.time
    return values, dts


def design_as_dict(design):
    """Flatten a DesignArray into the oracle's {(m, side, dyad): row} shape."""
    out = {}
    for m in range(1, design.n_transitions + 1):
        sl = design.start_slice(m)
        for row in range(sl.start, sl.stop):
            dyad = tuple(int(v) for v in design.start_dyads[row])
            out[(m, "start", dyad)] = dict(zip(design.start_cols, design.X_start[row]))
        el = design.end_slice(m)
        for row in range(el.start, el.stop):
            dyad = tuple(int(v) for v in design.end_dyads[row])
            out[(m, "end", dyad)] = dict(zip(design.end_cols, design.X_end[row]))
    return out


def compare_designs(design, oracle_values, rtol=1e-12, atol=1e-12):
    """Max mismatch across all rows/columns; asserts identical row sets."""
    got = design_as_dict(design)
    assert set(got) == set(oracle_values), (
        f"row sets differ: extra={sorted(set(got) - set(oracle_values))[:5]} "
        f"missing={sorted(set(oracle_values) - set(got))[:5]}"
    )
    worst = 0.0
    for key, row in oracle_values.items():
        for col, expected in row.items():
            actual = got[key][col]
            scale = max(1.0, abs(expected))
            err = abs(actual - expected) / scale
            if err > worst:
                worst = err
            assert err <= max(rtol, atol / scale), (
                f"{key} column {col}: got {actual!r}, oracle {expected!r}"
            )
    return worst


def finite_difference_gradient(fun, theta, h=1e-6):
    g = np.zeros_like(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h * max(1.0, abs(theta[k]))
        g[k] = (fun(theta + e) - fun(theta - e)) / (2 * e[k])
    return g
