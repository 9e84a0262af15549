"""Log-likelihood, score and Hessian over the 2M-transition design.

Each transition contributes a multinomial term (which at-risk dyad moved,
over the combined start/end risk set) and an exponential waiting-time term
for the interval before it.  The log normalizers cancel between the two, so
the total is

    sum_m [ eta_obs(m) - dt_m * Lambda_m ],

with eta the linear predictor of the observed row and Lambda_m the summed
rate over all at-risk rows.  The objective is concave in the coefficients;
the Hessian is block-diagonal across the start and end models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import DesignArray


class LikelihoodError(ValueError):
    """Raised for inconsistent coefficient/design combinations."""


@dataclass
class Coefficients:
    """Start- and end-model coefficient vectors, baseline first."""

    beta_s: np.ndarray
    beta_e: np.ndarray

    def __post_init__(self):
        self.beta_s = np.asarray(self.beta_s, dtype=float)
        self.beta_e = np.asarray(self.beta_e, dtype=float)

    @classmethod
    def zeros(cls, design: DesignArray) -> "Coefficients":
        return cls(np.zeros(design.X_start.shape[1]), np.zeros(design.X_end.shape[1]))

    @classmethod
    def from_flat(cls, theta: np.ndarray, design: DesignArray) -> "Coefficients":
        p_s = design.X_start.shape[1]
        return cls(theta[:p_s].copy(), theta[p_s:].copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.beta_s, self.beta_e])

    def check(self, design: DesignArray):
        if len(self.beta_s) != design.X_start.shape[1]:
            raise LikelihoodError(
                f"start coefficients have length {len(self.beta_s)}, design has "
                f"{design.X_start.shape[1]} columns {design.start_cols}"
            )
        if len(self.beta_e) != design.X_end.shape[1]:
            raise LikelihoodError(
                f"end coefficients have length {len(self.beta_e)}, design has "
                f"{design.X_end.shape[1]} columns {design.end_cols}"
            )


@dataclass
class LikelihoodValue:
    """Total log-likelihood, optionally with the per-transition breakdown."""

    loglik: float
    per_transition: np.ndarray | None = None


def _etas(design: DesignArray, coef: Coefficients):
    coef.check(design)
    return design.X_start @ coef.beta_s, design.X_end @ coef.beta_e


def intensities(m: int, design: DesignArray, coef: Coefficients):
    """Rates for all at-risk rows of transition m (1-based).

    Returns (start_rates, end_rates) aligned with the design's row blocks;
    the opposite side of each dyad is implicitly zero by construction.
    """
    eta_s, eta_e = _etas(design, coef)
    lam_s = np.exp(eta_s[design.start_slice(m)])
    lam_e = np.exp(eta_e[design.end_slice(m)])
    for side, lam, dyads in (("start", lam_s, design.start_dyads[design.start_slice(m)]),
                             ("end", lam_e, design.end_dyads[design.end_slice(m)])):
        bad = ~np.isfinite(lam)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise FloatingPointError(
                f"non-finite {side} rate at transition {m} for dyad "
                f"{tuple(dyads[k])}"
            )
    return lam_s, lam_e


def _log_normalizer(eta_block: np.ndarray) -> float:
    """log sum exp with the max-shift guard; -inf for an empty block."""
    if len(eta_block) == 0:
        return -np.inf
    shift = eta_block.max()
    return shift + np.log(np.exp(eta_block - shift).sum())


def transition_log_prob(m: int, design: DesignArray, coef: Coefficients) -> float:
    """Log probability that transition m's observed dyad was the one to move."""
    if design.obs_side[m - 1] < 0:
        raise LikelihoodError(f"block {m} is a censoring tail with no observed transition")
    eta_s, eta_e = _etas(design, coef)
    block = np.concatenate([eta_s[design.start_slice(m)], eta_e[design.end_slice(m)]])
    if len(block) == 0:
        raise AssertionError("empty combined risk set: impossible for a valid history")
    side = design.obs_side[m - 1]
    eta_obs = (eta_s if side == 0 else eta_e)[design.obs_row[m - 1]]
    return float(eta_obs - _log_normalizer(block))


def transition_probabilities(m: int, design: DesignArray, coef: Coefficients) -> np.ndarray:
    """Probabilities over the combined risk set at transition m (sum to 1)."""
    eta_s, eta_e = _etas(design, coef)
    block = np.concatenate([eta_s[design.start_slice(m)], eta_e[design.end_slice(m)]])
    shift = block.max()
    w = np.exp(block - shift)
    return w / w.sum()


def total_rate(m: int, design: DesignArray, coef: Coefficients) -> float:
    """Summed rate over the combined risk set at transition m."""
    lam_s, lam_e = intensities(m, design, coef)
    return float(lam_s.sum() + lam_e.sum())


def interevent_log_density(m: int, design: DesignArray, coef: Coefficients,
                           dt: float | None = None) -> float:
    """Log density of the waiting time before transition m (exponential)."""
    if dt is None:
        dt = float(design.dt[m - 1])
    if dt < 0:
        raise ValueError(f"negative waiting time {dt}")
    rate = total_rate(m, design, coef)
    return float(np.log(rate) - rate * dt)


def _row_weights(design: DesignArray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row dt of the owning block, for the exposure terms."""
    n_blocks = len(design.dt)
    w_start = np.repeat(design.dt, np.diff(design.start_ptr[: n_blocks + 1]))
    w_end = np.repeat(design.dt, np.diff(design.end_ptr[: n_blocks + 1]))
    return w_start, w_end


def log_likelihood(design: DesignArray, coef: Coefficients,
                   per_transition: bool = False) -> LikelihoodValue:
    """Joint log-likelihood of the observed transitions and waiting times.

    Exposure overflow yields -inf; NaN design values raise.  With
    `per_transition` the total is the exact sum of the returned vector (tail
    censoring, when present, is folded into the last entry's exposure).
    """
    eta_s, eta_e = _etas(design, coef)
    if np.isnan(eta_s).any() or np.isnan(eta_e).any():
        bad = int(np.flatnonzero(np.isnan(np.concatenate([eta_s, eta_e])))[0])
        raise FloatingPointError(f"NaN linear predictor at row {bad}")
    w_start, w_end = _row_weights(design)
    with np.errstate(over="ignore"):
        lam_s = np.exp(eta_s)
        lam_e = np.exp(eta_e)
    n = design.n_transitions
    side = design.obs_side[:n]
    row = design.obs_row[:n]
    eta_obs = np.empty(n)
    mask_s = side == 0
    eta_obs[mask_s] = eta_s[row[mask_s]]
    eta_obs[~mask_s] = eta_e[row[~mask_s]]
    if not per_transition:
        loglik = float(eta_obs.sum() - (lam_s * w_start).sum() - (lam_e * w_end).sum())
        return LikelihoodValue(loglik=loglik)
    n_blocks = len(design.dt)
    ids_s = np.repeat(np.arange(n_blocks), np.diff(design.start_ptr))
    ids_e = np.repeat(np.arange(n_blocks), np.diff(design.end_ptr))
    exp_s = np.bincount(ids_s, weights=lam_s * w_start, minlength=n_blocks)
    exp_e = np.bincount(ids_e, weights=lam_e * w_end, minlength=n_blocks)
    contributions = -(exp_s + exp_e)
    contributions[:n] += eta_obs
    if design.has_tail:
        tail = contributions[-1]
        contributions = contributions[:-1]
        if len(contributions):
            contributions[-1] += tail
        else:
            contributions = np.array([tail])
    return LikelihoodValue(loglik=float(contributions.sum()), per_transition=contributions)


def score(design: DesignArray, coef: Coefficients) -> np.ndarray:
    """Exact gradient of the log-likelihood in (beta_s, beta_e), flattened."""
    eta_s, eta_e = _etas(design, coef)
    w_start, w_end = _row_weights(design)
    lam_s = np.exp(eta_s)
    lam_e = np.exp(eta_e)
    n = design.n_transitions
    side = design.obs_side[:n]
    row = design.obs_row[:n]
    g_s = -design.X_start.T @ (lam_s * w_start)
    g_e = -design.X_end.T @ (lam_e * w_end)
    srows = row[side == 0]
    erows = row[side == 1]
    if len(srows):
        g_s += design.X_start[srows].sum(axis=0)
    if len(erows):
        g_e += design.X_end[erows].sum(axis=0)
    return np.concatenate([g_s, g_e])


def hessian(design: DesignArray, coef: Coefficients) -> np.ndarray:
    """Exact Hessian: block-diagonal, negative semidefinite everywhere."""
    eta_s, eta_e = _etas(design, coef)
    w_start, w_end = _row_weights(design)
    lam_s = np.exp(eta_s) * w_start
    lam_e = np.exp(eta_e) * w_end
    h_s = -(design.X_start * lam_s[:, None]).T @ design.X_start
    h_e = -(design.X_end * lam_e[:, None]).T @ design.X_end
    p_s, p_e = h_s.shape[0], h_e.shape[0]
    h = np.zeros((p_s + p_e, p_s + p_e))
    h[:p_s, :p_s] = h_s
    h[p_s:, p_s:] = h_e
    return h
