"""Shared fixtures: the worked three-dyad example and random instances."""

from __future__ import annotations

import numpy as np
import pytest

from relspells import (
    ActorRegistry,
    CovariateSet,
    Directionality,
    DurationEvent,
    EventHistory,
    ModelSpec,
    Options,
    StatisticSpec,
    UU,
)

DIRECTED_ENDOGENOUS = [
    "inertia", "reciprocity", "indegreesender", "indegreereceiver",
    "outdegreesender", "outdegreereceiver", "totaldegreesender",
    "totaldegreereceiver", "itp", "otp", "isp", "osp",
    "psABBA", "psABAY", "psABBY", "psABXA", "psABXB", "psABXY",
    "rranksend", "rrankreceive", "recencysendsender", "recencysendreceiver",
    "recencyreceivesender", "recencyreceivereceiver", "recencycontinue",
]
UNDIRECTED_ENDOGENOUS = [
    "inertia", "totaldegreeDyad", "degreeMin", "degreeMax", "degreeDiff",
    "sp", "psABAY", "psABAB", "recencycontinue",
]
EXOGENOUS_DIRECTED = ["send", "receive", "same", "difference", "average",
                      "minimum", "maximum"]
EXOGENOUS_UNDIRECTED = ["same", "difference", "average", "minimum", "maximum"]


@pytest.fixture
def table1_history() -> EventHistory:
    """The worked example: three unordered dyads over three actors."""
    registry = ActorRegistry(["a", "b", "c"])
    events = [
        DurationEvent(0, 1, 10.0, 50.0, row=0),   # d1 = {a, b}
        DurationEvent(0, 2, 20.0, 70.0, row=1),   # d2 = {a, c}
        DurationEvent(1, 2, 50.0, 90.0, row=2),   # d3 = {b, c}
    ]
    return EventHistory(events, registry, observation_end=100.0)


TABLE2_TIMELINE = [
    (10.0, {(0, 1), (0, 2), (1, 2)}, set()),
    (20.0, {(0, 2), (1, 2)}, {(0, 1)}),
    (50.0, {(1, 2)}, {(0, 1), (0, 2)}),
    (70.0, {(0, 1)}, {(0, 2), (1, 2)}),
    (90.0, {(0, 1), (0, 2)}, {(1, 2)}),
    (100.0, {(0, 1), (0, 2), (1, 2)}, set()),
]


def random_history(rng: np.random.Generator, directionality: Directionality,
                   n_actors: int, n_events: int, zero_prob: float = 0.08,
                   tie_prob: float = 0.12, gap_mean: float = 0.8) -> EventHistory:
    """A valid random history with overlaps, exact time ties and zero durations."""
    events = []
    open_list = []  # (t_start, t_end, collision key)
    t = 0.0
    for idx in range(n_events):
        t = t + float(rng.exponential(gap_mean))
        pending = sorted(te for _, te, _ in open_list if te >= t)
        if pending and rng.random() < tie_prob:
            t = float(pending[0])
        key = None
        for _ in range(500):
            i, j = (int(v) for v in rng.choice(n_actors, size=2, replace=False))
            cand = (i, j) if directionality.code == "DD" else (min(i, j), max(i, j))
            busy = any(k == cand and (te > t or (te == t and ts == t))
                       for ts, te, k in open_list)
            if not busy:
                key = cand
                break
            t = t + float(rng.exponential(gap_mean * 0.25))
        assert key is not None, "generator failed to place an event"
        duration = 0.0 if rng.random() < zero_prob else float(rng.uniform(0.2, 3.0))
        events.append(DurationEvent(i, j, t, t + duration, row=idx))
        open_list = [(ts, te, k) for ts, te, k in open_list if te > t]
        open_list.append((t, t + duration, key))
    registry = ActorRegistry(f"a{k}" for k in range(n_actors))
    return EventHistory(events, registry)


def random_covariates(rng: np.random.Generator, n_actors: int) -> CovariateSet:
    tie = rng.uniform(0.0, 1.0, size=(n_actors, n_actors))
    np.fill_diagonal(tie, 0.0)
    return CovariateSet(
        actor_attributes={
            "score": rng.normal(0.0, 1.0, size=n_actors),
            "grp": rng.integers(0, 2, size=n_actors).astype(float),
        },
        dyadic_ties={"tie0": tie},
    )


def full_stat_list(mode: str, side: str) -> list[StatisticSpec]:
    """Every catalog statistic valid for one side's mode."""
    names = DIRECTED_ENDOGENOUS if mode == "directed" else UNDIRECTED_ENDOGENOUS
    exo = EXOGENOUS_DIRECTED if mode == "directed" else EXOGENOUS_UNDIRECTED
    specs = [StatisticSpec(n, side) for n in names]
    specs += [StatisticSpec(n, side, covariate="score") for n in exo]
    specs += [StatisticSpec("same", side, covariate="grp"),
              StatisticSpec("tie", side, covariate="tie0"),
              StatisticSpec("engaged_actor", side)]
    return specs


def full_model_spec(directionality: Directionality, options: Options | None = None) -> ModelSpec:
    return ModelSpec(
        directionality=directionality,
        start_stats=full_stat_list(directionality.start_mode, "start"),
        end_stats=full_stat_list(directionality.end_mode, "end"),
        options=options or Options(t0="zero"),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
