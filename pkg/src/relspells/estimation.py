"""Coefficient estimation and the grid search over weighting hyperparameters.

For fixed (psi_s, psi_e, tau) the log-likelihood is concave in the
coefficients and is maximized by Newton-Raphson with step-halving.  The
hyperparameters themselves are chosen by profiling: every grid point is fit
independently (optionally in parallel) and the point with the highest
maximized log-likelihood wins.  Results are canonicalized so the outcome is
byte-identical regardless of worker count or grid enumeration order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .events import CovariateSet, EventHistory
from .likelihood import (
    Coefficients,
    hessian,
    log_likelihood,
    score,
)
from .riskset import TransitionSequence, build_transitions
from .stats import DesignArray, DesignOverflowError, ModelSpec, build_design
from .weights import WeightParams, resolve_floor


class EstimationError(RuntimeError):
    """Raised when estimation cannot proceed or no grid point succeeds."""


class SingularDesignError(EstimationError):
    """Singular information matrix; `columns` names the implicated columns."""

    def __init__(self, message, columns):
        super().__init__(message)
        self.columns = columns


@dataclass
class FitDiagnostics:
    iterations: int
    grad_norm: float
    status: str  # "converged" | "max_iter" | "stalled"
    loglik: float


@dataclass(frozen=True)
class OptimSettings:
    """Newton-Raphson controls: sup-norm score tolerance, relative
    log-likelihood change tolerance, iteration cap."""

    tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iter: int = 100


def _column_labels(design: DesignArray) -> list[str]:
    return [f"start:{c}" for c in design.start_cols] + [f"end:{c}" for c in design.end_cols]


def _diagnose_singular(design: DesignArray, neg_hess: np.ndarray) -> list[str]:
    labels = _column_labels(design)
    w, v = np.linalg.eigh(neg_hess)
    null = v[:, 0]
    heavy = np.abs(null) > 0.3 * np.abs(null).max()
    return [labels[k] for k in np.flatnonzero(heavy)]


def fit_beta(design: DesignArray, init: Coefficients | None = None,
             tol: float = 1e-8, max_iter: int = 100,
             rel_tol: float = 1e-10) -> tuple[Coefficients, FitDiagnostics]:
    """Maximize the log-likelihood in the coefficients for a fixed design.

    Newton steps with step-halving; accepted iterations never decrease the
    objective.  Convergence when the score's sup norm falls below `tol` or
    the relative objective change below `rel_tol`.  A singular information
    matrix raises `SingularDesignError` naming the implicated columns.
    """
    n = design.n_transitions
    if n == 0:
        raise EstimationError("cannot fit an empty design")
    sides = design.obs_side[:n]
    if not (sides == 0).any() or not (sides == 1).any():
        raise EstimationError("degenerate design: one side has no observed transitions")
    coef = init if init is not None else Coefficients.zeros(design)
    coef.check(design)
    theta = coef.flat()
    ll = log_likelihood(design, Coefficients.from_flat(theta, design)).loglik
    if not np.isfinite(ll):
        raise EstimationError(f"non-finite log-likelihood {ll} at the initial point")

    status = "max_iter"
    iterations = 0
    grad = score(design, Coefficients.from_flat(theta, design))
    for iterations in range(1, max_iter + 1):
        if np.abs(grad).max() <= tol:
            status = "converged"
            iterations -= 1
            break
        neg_hess = -hessian(design, Coefficients.from_flat(theta, design))
        try:
            chol = np.linalg.cholesky(neg_hess)
        except np.linalg.LinAlgError:
            columns = _diagnose_singular(design, neg_hess)
            raise SingularDesignError(
                f"singular information matrix; collinear column(s): {columns}", columns
            ) from None
        direction = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        step = 1.0
        accepted = False
        while step > 1e-12:
            cand = theta + step * direction
            ll_new = log_likelihood(design, Coefficients.from_flat(cand, design)).loglik
            if np.isfinite(ll_new) and ll_new >= ll:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = "stalled"
            break
        converged_rel = abs(ll_new - ll) <= rel_tol * (abs(ll) + 1.0)
        theta, ll = cand, ll_new
        grad = score(design, Coefficients.from_flat(theta, design))
        if np.abs(grad).max() <= tol or converged_rel:
            status = "converged"
            break
    coef = Coefficients.from_flat(theta, design)
    return coef, FitDiagnostics(
        iterations=iterations,
        grad_norm=float(np.abs(grad).max()),
        status=status,
        loglik=float(ll),
    )


def standard_errors(hess: np.ndarray, beta: np.ndarray):
    """Asymptotic (se, z, p) from the Hessian at the optimum.

    se = sqrt(diag((-H)^-1)); p is the two-sided normal tail.  A
    non-invertible Hessian yields NaN entries and a diagnostic string.
    """
    neg = -np.asarray(hess, dtype=float)
    p_dim = neg.shape[0]
    try:
        np.linalg.cholesky(neg)
        cov = np.linalg.inv(neg)
    except np.linalg.LinAlgError:
        nan = np.full(p_dim, np.nan)
        return nan, nan, nan, "information matrix is not positive definite"
    var = np.diag(cov)
    se = np.sqrt(np.where(var > 0, var, np.nan))
    z = beta / se
    p = np.array([math.erfc(abs(val) / math.sqrt(2.0)) if np.isfinite(val) else np.nan
                  for val in z])
    return se, z, p, None


@dataclass(frozen=True)
class GridSpec:
    """Candidate values for the duration exponents and the memory half-life.

    `tau_values` may include None for the no-memory model.
    """

    psi_s_values: tuple = tuple(float(v) for v in range(-5, 6))
    psi_e_values: tuple = tuple(float(v) for v in range(-5, 6))
    tau_values: tuple = (None,)

    def __post_init__(self):
        for name, values in (("psi_s_values", self.psi_s_values),
                             ("psi_e_values", self.psi_e_values),
                             ("tau_values", self.tau_values)):
            if len(values) == 0:
                raise ValueError(f"{name} must be non-empty")
        for v in list(self.psi_s_values) + list(self.psi_e_values):
            if not math.isfinite(v):
                raise ValueError(f"non-finite psi value {v}")
        for v in self.tau_values:
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"tau values must be positive or None, got {v}")

    def points(self):
        return [
            (float(ps), float(pe), None if tau is None else float(tau))
            for tau in self.tau_values
            for ps in self.psi_s_values
            for pe in self.psi_e_values
        ]


@dataclass
class ProfileRow:
    """One evaluated grid point: hyperparameters, fit outcome, coefficients."""

    psi_s: float
    psi_e: float
    tau: float | None
    loglik: float
    status: str
    coef: np.ndarray | None = None
    iterations: int = 0


@dataclass
class FitResult:
    """Full outcome of a grid-searched maximum likelihood fit."""

    model: ModelSpec
    start_cols: list[str]
    end_cols: list[str]
    coef: Coefficients
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    se_note: str | None
    chosen: tuple
    loglik: float
    grid_profile: list[ProfileRow]
    convergence: FitDiagnostics
    duration_floor: float

    @property
    def coef_flat(self) -> np.ndarray:
        return self.coef.flat()

    def coefficient_rows(self):
        """(side, statistic, estimate, se, z, p) per coefficient."""
        flat = self.coef_flat
        labels = [("start", c) for c in self.start_cols] + [("end", c) for c in self.end_cols]
        for k, (side, stat) in enumerate(labels):
            yield side, stat, flat[k], self.se[k], self.z[k], self.p[k]


def _point_sort_key(row: ProfileRow):
    tau = row.tau
    return (row.psi_s, row.psi_e, tau is not None, tau if tau is not None else 0.0)


def _selection_key(row: ProfileRow):
    # higher loglik first; ties: smaller |psi_s|, then |psi_e|, then no-memory
    tau = row.tau
    return (-row.loglik, abs(row.psi_s), abs(row.psi_e), tau is not None,
            tau if tau is not None else 0.0, row.psi_s, row.psi_e)


@dataclass
class _PointTask:
    seq: TransitionSequence
    history: EventHistory
    covariates: CovariateSet | None
    model: ModelSpec
    floor: float
    optim: OptimSettings

    def run(self, point) -> ProfileRow:
        psi_s, psi_e, tau = point
        params = WeightParams(psi_s=psi_s, psi_e=psi_e, tau=tau, duration_floor=self.floor)
        try:
            design = build_design(self.seq, self.model, self.history, self.covariates, params)
            coef, diag = fit_beta(design, tol=self.optim.tol, max_iter=self.optim.max_iter,
                                  rel_tol=self.optim.rel_tol)
        except (DesignOverflowError, EstimationError, FloatingPointError) as exc:
            return ProfileRow(psi_s, psi_e, tau, float("nan"), f"failed: {exc}")
        return ProfileRow(psi_s, psi_e, tau, diag.loglik, diag.status,
                          coef=coef.flat(), iterations=diag.iterations)


def _run_task(args):
    task, point = args
    return task.run(point)


def _refinement_points(best: ProfileRow, done: set, step: float = 0.25, radius: float = 1.0):
    offsets = [round(k * step - radius, 10) for k in range(int(round(2 * radius / step)) + 1)]
    points = []
    for ds in offsets:
        for de in offsets:
            point = (round(best.psi_s + ds, 10), round(best.psi_e + de, 10), best.tau)
            if point not in done:
                points.append(point)
    return points


def grid_search(history: EventHistory, covariates: CovariateSet | None,
                model_spec: ModelSpec, grid: GridSpec, workers: int = 1,
                optim: OptimSettings | None = None, floor="auto",
                refine: bool = False) -> FitResult:
    """Fit every hyperparameter grid point and return the profile maximum.

    Ties are broken toward smaller |psi_s|, then |psi_e|, then the
    no-memory model.  `refine=True` adds a 0.25-step pass around the coarse
    optimum (same tau).  The result is independent of `workers` and of grid
    enumeration order.
    """
    optim = optim or OptimSettings()
    floor_value = resolve_floor(history, floor)
    seq = build_transitions(history, model_spec.directionality)
    task = _PointTask(seq, history, covariates, model_spec, floor_value, optim)

    def evaluate(points) -> list[ProfileRow]:
        if workers > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_run_task, [(task, p) for p in points]))
        else:
            rows = [task.run(p) for p in points]
        return rows

    rows = evaluate(grid.points())
    succeeded = [r for r in rows if np.isfinite(r.loglik)]
    if not succeeded:
        details = "; ".join(
            f"(psi_s={r.psi_s}, psi_e={r.psi_e}, tau={r.tau}): {r.status}" for r in rows
        )
        raise EstimationError(f"all grid points failed: {details}")
    best = min(succeeded, key=_selection_key)

    if refine:
        done = {(r.psi_s, r.psi_e, r.tau) for r in rows}
        extra = evaluate(_refinement_points(best, done))
        rows.extend(extra)
        succeeded.extend(r for r in extra if np.isfinite(r.loglik))
        best = min(succeeded, key=_selection_key)

    rows.sort(key=_point_sort_key)

    params = WeightParams(psi_s=best.psi_s, psi_e=best.psi_e, tau=best.tau,
                          duration_floor=floor_value)
    design = build_design(seq, model_spec, history, covariates, params)
    coef, diag = fit_beta(design, init=Coefficients.from_flat(best.coef, design),
                          tol=optim.tol, max_iter=optim.max_iter, rel_tol=optim.rel_tol)
    hess = hessian(design, coef)
    se, z, p, note = standard_errors(hess, coef.flat())
    return FitResult(
        model=model_spec,
        start_cols=design.start_cols,
        end_cols=design.end_cols,
        coef=coef,
        se=se,
        z=z,
        p=p,
        se_note=note,
        chosen=(best.psi_s, best.psi_e, best.tau),
        loglik=diag.loglik,
        grid_profile=rows,
        convergence=diag,
        duration_floor=floor_value,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value))


def profile_export(fit: FitResult, path) -> None:
    """Write the grid profile as a long-format delimited table.

    Rows are canonically sorted by (psi_s, psi_e, tau); coefficient columns
    are the per-point estimates, empty for failed points.
    """
    labels = [f"start:{c}" for c in fit.start_cols] + [f"end:{c}" for c in fit.end_cols]
    header = ["psi_s", "psi_e", "tau", "loglik", "status"] + labels
    lines = [",".join(header)]
    for row in sorted(fit.grid_profile, key=_point_sort_key):
        cells = [_fmt(row.psi_s), _fmt(row.psi_e), _fmt(row.tau), _fmt(row.loglik), row.status]
        if row.coef is not None:
            cells += [_fmt(v) for v in row.coef]
        else:
            cells += [""] * len(labels)
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_coefficient_table(fit: FitResult, path) -> None:
    """Write the coefficient table with hyperparameter header lines."""
    psi_s, psi_e, tau = fit.chosen
    lines = [
        f"# psi_s = {_fmt(psi_s)}",
        f"# psi_e = {_fmt(psi_e)}",
        f"# tau = {_fmt(tau) if tau is not None else 'none'}",
        f"# loglik = {_fmt(fit.loglik)}",
        f"# duration_floor = {_fmt(fit.duration_floor)}",
        f"# convergence = {fit.convergence.status} after {fit.convergence.iterations} iterations",
    ]
    if fit.se_note:
        lines.append(f"# se_note = {fit.se_note}")
    lines.append("side,statistic,estimate,se,z,p")
    for side, stat, est, se, z, p in fit.coefficient_rows():
        lines.append(f"{side},{stat},{_fmt(est)},{_fmt(se)},{_fmt(z)},{_fmt(p)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
