import itertools

import numpy as np
import pytest

from relspells import (
    DD,
    DU,
    UD,
    UU,
    ActorRegistry,
    Directionality,
    DurationEvent,
    EventHistory,
    RisksetError,
    build_transitions,
    dyad_universe,
    riskset_at,
    riskset_timeline,
)
from relspells.riskset import iter_states

from conftest import TABLE2_TIMELINE, random_history
from oracles import oracle_risksets


def test_table1_transitions(table1_history):
    seq = build_transitions(table1_history, UU)
    assert [t.time for t in seq] == [10, 20, 50, 50, 70, 90]
    assert [t.kind for t in seq] == ["start", "start", "end", "start", "end", "end"]
    # the end of d1 precedes the start of d3 at t = 50
    assert seq.transitions[2].dyad == (0, 1)
    assert seq.transitions[3].dyad == (1, 2)
    assert list(seq.inter_times) == [0, 10, 30, 0, 20, 20]


def test_table2_timeline_golden(table1_history):
    seq = build_transitions(table1_history, UU)
    timeline = riskset_timeline(seq)
    assert len(timeline) == 6
    for (time, at_start, at_end), (exp_time, exp_start, exp_end) in zip(timeline, TABLE2_TIMELINE):
        assert time == exp_time
        assert set(at_start) == exp_start
        assert set(at_end) == exp_end


def test_riskset_at_worked_rows(table1_history):
    seq = build_transitions(table1_history, UU)
    state2 = riskset_at(seq, 2)  # before t~2 = 20
    assert state2.at_start == {(0, 2), (1, 2)} and state2.at_end == {(0, 1)}
    state3 = riskset_at(seq, 3)  # before t~3 = 50
    assert state3.at_start == {(1, 2)} and state3.at_end == {(0, 1), (0, 2)}
    state1 = riskset_at(seq, 1)
    assert state1.at_end == frozenset()
    assert state1.at_start == set(dyad_universe(3, "undirected"))
    # state before the second transition at t=50 (after d1's end)
    state4 = riskset_at(seq, 4)
    assert state4.at_start == {(0, 1), (1, 2)} and state4.at_end == {(0, 2)}
    assert state4.ongoing_since == {(0, 2): 20.0}


def test_single_event_transitions():
    history = EventHistory([DurationEvent(0, 1, 0.0, 5.0, row=0)], ActorRegistry(["i", "j"]))
    seq = build_transitions(history, DD)
    assert [(t.time, t.kind) for t in seq] == [(0.0, "start"), (5.0, "end")]


def test_overlapping_events_sorted_against_oracle():
    registry = ActorRegistry(["a", "b", "c", "d"])
    events = [
        DurationEvent(0, 1, 1.0, 9.0, row=0),
        DurationEvent(2, 3, 2.0, 8.0, row=1),
    ]
    seq = build_transitions(EventHistory(events, registry), DD)
    expected = sorted([(1.0, "start"), (9.0, "end"), (2.0, "start"), (8.0, "end")])
    assert sorted((t.time, t.kind) for t in seq) == expected
    assert [t.time for t in seq] == sorted(t.time for t in seq)


def test_zero_duration_end_follows_own_start():
    registry = ActorRegistry(["a", "b", "c"])
    events = [
        DurationEvent(0, 1, 1.0, 5.0, row=0),
        DurationEvent(0, 2, 5.0, 5.0, row=1),  # zero duration at the same instant
    ]
    seq = build_transitions(EventHistory(events, registry), DD)
    kinds = [(t.kind, t.event_index) for t in seq if t.time == 5.0]
    assert kinds == [("end", 0), ("start", 1), ("end", 1)]


def test_equal_time_end_before_start(table1_history):
    seq = build_transitions(table1_history, UU)
    at_50 = [(t.kind, t.event_index) for t in seq if t.time == 50]
    assert at_50 == [("end", 0), ("start", 2)]


def test_same_dyad_overlap_rejected():
    registry = ActorRegistry(["a", "b"])
    events = [DurationEvent(0, 1, 0.0, 10.0, row=0), DurationEvent(1, 0, 4.0, 6.0, row=1)]
    history = EventHistory(events, registry)
    with pytest.raises(RisksetError, match="ongoing"):
        build_transitions(history, UU)
    # in DD the reversed dyad is distinct and may overlap
    seq = build_transitions(history, DD)
    assert len(seq) == 4


def test_replay_returns_to_initial(rng):
    for code in ("DD", "UU", "DU", "UD"):
        d = Directionality.from_code(code)
        history = random_history(rng, d, 5, 20)
        seq = build_transitions(history, d)
        final = riskset_at(seq, len(seq) + 1)
        assert final.at_end == frozenset()
        assert final.at_start == frozenset(dyad_universe(5, d.start_mode))


def test_states_match_brute_force_risksets(rng):
    for code in ("DD", "UU", "DU", "UD"):
        d = Directionality.from_code(code)
        history = random_history(rng, d, 5, 25)
        seq = build_transitions(history, d)
        for k, (tr, state) in enumerate(iter_states(seq)):
            at_start, at_end = oracle_risksets(history, seq, k)
            assert state.at_start == set(at_start)
            assert state.at_end == set(at_end)
            if tr is None:
                break


def test_partition_invariant(rng):
    for code in ("DD", "UU", "DU", "UD"):
        d = Directionality.from_code(code)
        history = random_history(rng, d, 5, 25)
        seq = build_transitions(history, d)
        universe = set(dyad_universe(5, d.start_mode))
        for tr, state in iter_states(seq):
            if d.start_mode == "directed" and d.end_mode == "directed":
                blocked = set(state.at_end)
            elif d.end_mode == "undirected" and d.start_mode == "directed":
                blocked = {o for p in state.at_end for o in (p, (p[1], p[0]))}
            elif d.start_mode == "undirected" and d.end_mode == "directed":
                blocked = {(min(p), max(p)) for p in state.at_end}
            else:
                blocked = set(state.at_end)
            assert state.at_start == universe - blocked
            assert not (state.at_start & blocked)
            if tr is None:
                break


def test_at_end_size_matches_interval_overlap(rng):
    for code in ("DD", "UU", "DU", "UD"):
        d = Directionality.from_code(code)
        history = random_history(rng, d, 5, 30, zero_prob=0.0, tie_prob=0.0)
        seq = build_transitions(history, d)
        factor = 2 if code == "UD" else 1
        times = [t.time for t in seq]
        for k in range(len(times) - 1):
            if times[k + 1] <= times[k]:
                continue
            mid = 0.5 * (times[k] + times[k + 1])
            ongoing = sum(1 for e in history.events if e.t_start <= mid < e.t_end)
            state = riskset_at(seq, k + 2)  # state before transition k+2 == state at mid
            assert len(state.at_end) == factor * ongoing


def test_riskset_at_agrees_with_incremental(rng):
    d = Directionality.from_code("DU")
    history = random_history(rng, d, 4, 15)
    seq = build_transitions(history, d)
    states = {tr.m: state for tr, state in iter_states(seq) if tr is not None}
    for m in (1, 3, 7, len(seq)):
        direct = riskset_at(seq, m)
        assert direct.at_start == states[m].at_start
        assert direct.at_end == states[m].at_end


def test_ud_mirror_both_orderings_at_risk():
    registry = ActorRegistry(["a", "b", "c"])
    history = EventHistory([DurationEvent(1, 0, 1.0, 4.0, row=0)], registry)
    seq = build_transitions(history, UD)
    state = riskset_at(seq, 2)
    assert state.at_end == {(0, 1), (1, 0)}
    assert state.at_start == {(0, 2), (1, 2)}


def test_du_removes_both_orderings_from_start():
    registry = ActorRegistry(["a", "b", "c"])
    history = EventHistory([DurationEvent(1, 0, 1.0, 4.0, row=0)], registry)
    seq = build_transitions(history, DU)
    state = riskset_at(seq, 2)
    assert state.at_end == {(0, 1)}
    assert (0, 1) not in state.at_start and (1, 0) not in state.at_start
    assert len(state.at_start) == 4


def test_directionality_codes():
    assert Directionality.from_code("du").code == "DU"
    with pytest.raises(ValueError):
        Directionality.from_code("XX")
    assert len(dyad_universe(4, "directed")) == 12
    assert len(dyad_universe(4, "undirected")) == 6


def test_riskset_at_bounds(table1_history):
    seq = build_transitions(table1_history, UU)
    with pytest.raises(IndexError):
        riskset_at(seq, 0)
    with pytest.raises(IndexError):
        riskset_at(seq, len(seq) + 2)
