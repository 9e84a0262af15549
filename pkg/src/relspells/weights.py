"""Duration and memory weight kernels for past-event influence.

A past event's contribution to a history statistic is the product of a
duration factor, max(duration, floor)^psi, and a memory factor,
exp(-elapsed * ln2 / tau) * ln2 / tau, where `tau` is the half-life of the
decay.  Without a half-life the memory factor is 1.  The start model
anchors elapsed time on event starts, the end model on event ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

LN2 = math.log(2.0)

#: Fallback power-law floor when a history has no positive duration at all.
MIN_FLOOR = 1e-9

#: Ratio of the smallest positive observed duration used as the default floor.
AUTO_FLOOR_RATIO = 1e-3


@dataclass(frozen=True)
class WeightParams:
    """Weighting hyperparameters for one grid point.

    `tau=None` disables the memory effect.  `duration_floor` removes the
    0^psi singularity for zero-duration events; `resolve_floor` supplies the
    data-driven default.
    """

    psi_s: float = 0.0
    psi_e: float = 0.0
    tau: float | None = None
    duration_floor: float = MIN_FLOOR

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.duration_floor > 0:
            raise ValueError(f"duration_floor must be positive, got {self.duration_floor}")

    def psi(self, model: str) -> float:
        _check_model(model)
        return self.psi_s if model == "start" else self.psi_e


def resolve_floor(history, floor="auto") -> float:
    """Duration floor to use for a history: explicit value, or the smallest
    positive observed duration scaled by AUTO_FLOOR_RATIO (MIN_FLOOR if the
    history has no positive duration)."""
    if floor != "auto":
        value = float(floor)
        if not value > 0:
            raise ValueError(f"duration_floor must be positive, got {value}")
        return value
    smallest = history.min_positive_duration()
    if smallest is None:
        return MIN_FLOOR
    return smallest * AUTO_FLOOR_RATIO


def _check_model(model: str):
    if model not in ("start", "end"):
        raise ValueError(f"model must be 'start' or 'end', got {model!r}")


def duration_weight(duration: float, psi: float, floor: float = MIN_FLOOR) -> float:
    """max(duration, floor)^psi; strictly positive for any duration >= 0.

    Values beyond float range come back as inf so the design builder can
    report the offending column instead of dying inside pow().
    """
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    try:
        return max(duration, floor) ** psi
    except OverflowError:
        return math.inf


def memory_weight(elapsed: float, tau: float | None) -> float:
    """Exponential-decay memory factor at `elapsed` time units; 1 if no tau.

    The ln2/tau scaling normalizes the kernel to unit mass over [0, inf).
    """
    if elapsed < 0:
        raise ValueError(f"elapsed time must be non-negative, got {elapsed}")
    if tau is None:
        return 1.0
    rate = LN2 / tau
    return math.exp(-elapsed * rate) * rate


def event_weight(event, t: float, params: WeightParams, model: str) -> float:
    """Total weight of a past event at evaluation time `t` for one model side.

    The start model requires event.t_start < t and measures elapsed time from
    the start; the end model requires event.t_end < t and measures from the
    end.  The duration factor always uses the event's full duration.
    """
    _check_model(model)
    anchor = event.t_start if model == "start" else event.t_end
    if not anchor < t:
        raise ValueError(
            f"event not yet eligible for the {model} model: anchor {anchor} >= t {t}"
        )
    return (
        duration_weight(event.duration, params.psi(model), params.duration_floor)
        * memory_weight(t - anchor, params.tau)
    )
