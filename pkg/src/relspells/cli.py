"""Command-line interface: validate, stats, fit, profile, simulate.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error, 3 numerical failure.  Every command writes a `manifest.json` into
its output directory recording the inputs, config digest, seed and timing.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .estimation import (
    EstimationError,
    GridSpec,
    grid_search,
    profile_export,
    write_coefficient_table,
)
from .events import (
    CovariateSet,
    EventDataError,
    collapse_gaps,
    load_actor_attributes,
    load_dyadic_ties,
    parse_event_history,
    validate_history,
    write_event_file,
)
from .riskset import RisksetError, build_transitions, dyad_universe, format_timeline
from .simulation import SimulationError, simulate
from .stats import DesignOverflowError, build_design, write_design_long
from .weights import WeightParams, resolve_floor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, args, seed, started: float,
                    extra=None):
    inputs = {}
    for name in ("events", "actors", "ties", "config"):
        path = getattr(args, name, None)
        if path:
            inputs[name] = {"path": str(path), "sha256": _digest(path)}
    manifest = {
        "command": command,
        "tool": "relspells",
        "version": __version__,
        "inputs": inputs,
        "seed": seed,
        "timing_seconds": round(time.monotonic() - started, 3),
    }
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_columns(text):
    mapping = {}
    if not text:
        return mapping
    for pair in text.split(","):
        logical, _, actual = pair.partition("=")
        logical = logical.strip()
        if logical not in ("sender", "receiver", "t_start", "t_end", "group") or not actual:
            raise CliError(f"bad --columns entry {pair!r}", EXIT_USAGE)
        mapping[logical] = actual.strip()
    return mapping


def _load_run_config(args) -> RunConfig:
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_USAGE) from exc


def _load_history(args, run: RunConfig | None):
    column_map = dict(run.data.column_map) if run else {}
    column_map.update(_parse_columns(getattr(args, "columns", None)))
    delimiter = run.data.delimiter if run else ","
    try:
        history, report = parse_event_history(args.events, column_map=column_map,
                                              delimiter=delimiter)
    except EventDataError as exc:
        detail = exc.report.summary() if exc.report else str(exc)
        raise CliError(f"cannot load {args.events}: {exc}\n{detail}", EXIT_VALIDATION) from exc
    except OSError as exc:
        raise CliError(f"cannot read {args.events}: {exc}", EXIT_USAGE) from exc
    if run and run.data.collapse_gaps:
        try:
            history = collapse_gaps(history)
        except EventDataError as exc:
            raise CliError(f"gap collapse failed: {exc}", EXIT_VALIDATION) from exc
    return history, report


def _load_covariates(args, history) -> CovariateSet:
    attributes, ties = {}, {}
    try:
        if getattr(args, "actors", None):
            attributes = load_actor_attributes(args.actors, history.actors)
        if getattr(args, "ties", None):
            ties = load_dyadic_ties(args.ties, history.actors)
    except EventDataError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    except OSError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    return CovariateSet(attributes, ties)


def _single_point(grid: GridSpec):
    points = grid.points()
    if len(points) != 1:
        raise CliError(
            "this command needs a single weight point: give one psi_s, one "
            "psi_e and one tau in [weights]", EXIT_USAGE,
        )
    return points[0]


def cmd_validate(args) -> int:
    started = time.monotonic()
    run = _load_run_config(args) if args.config else None
    history, load_report = _load_history(args, run)
    spec = run.model if run else None
    report = validate_history(history, spec)
    report.warnings = load_report.warnings + report.warnings
    print(f"{len(history)} event(s), {history.n_actors} actor(s)")
    print(report.summary())
    timeline_text = None
    if run is not None and report.ok:
        universe = dyad_universe(history.n_actors, run.directionality.start_mode)
        if len(universe) <= 12:
            try:
                seq = build_transitions(history, run.directionality)
            except RisksetError as exc:
                print(f"risk-set construction failed: {exc}")
                return EXIT_VALIDATION
            timeline_text = format_timeline(seq, labels=history.actors.labels)
            print(timeline_text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "validation.txt", "w") as fh:
            fh.write(report.summary() + "\n")
            if timeline_text:
                fh.write(timeline_text + "\n")
        _write_manifest(out_dir, "validate", args, None, started,
                        extra={"errors": len(report.errors), "warnings": len(report.warnings)})
    return EXIT_OK if report.ok else EXIT_VALIDATION


def _validated_inputs(args):
    run = _load_run_config(args)
    history, _ = _load_history(args, run)
    report = validate_history(history, run.model)
    if not report.ok:
        raise CliError(f"validation failed:\n{report.summary()}", EXIT_VALIDATION)
    covariates = _load_covariates(args, history)
    return run, history, covariates


def cmd_stats(args) -> int:
    started = time.monotonic()
    run, history, covariates = _validated_inputs(args)
    psi_s, psi_e, tau = _single_point(run.grid)
    params = WeightParams(psi_s=psi_s, psi_e=psi_e, tau=tau,
                          duration_floor=resolve_floor(history, run.duration_floor))
    try:
        seq = build_transitions(history, run.directionality)
        design = build_design(seq, run.model, history, covariates, params)
    except (RisksetError, DesignOverflowError) as exc:
        code = EXIT_VALIDATION if isinstance(exc, RisksetError) else EXIT_NUMERICAL
        raise CliError(str(exc), code) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_design_long(design, out_dir / "design.csv", labels=history.actors.labels)
    _write_manifest(out_dir, "stats", args, None, started,
                    extra={"weights": {"psi_s": psi_s, "psi_e": psi_e, "tau": tau,
                                       "duration_floor": params.duration_floor}})
    print(f"wrote {out_dir / 'design.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    started = time.monotonic()
    run, history, covariates = _validated_inputs(args)
    try:
        fit = grid_search(history, covariates, run.model, run.grid,
                          workers=args.workers, optim=run.optim,
                          floor=run.duration_floor, refine=run.refine)
    except (EstimationError, DesignOverflowError, FloatingPointError) as exc:
        raise CliError(f"estimation failed: {exc}", EXIT_NUMERICAL) from exc
    except RisksetError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_coefficient_table(fit, out_dir / "coefficients.csv")
    profile_export(fit, out_dir / "profile.csv")
    figures = []
    if args.plots:
        from . import plots

        figures = [str(p) for p in plots.render_all(fit, out_dir)]
    seed = args.seed if args.seed is not None else run.seed
    _write_manifest(out_dir, "fit", args, seed, started, extra={
        "chosen": {"psi_s": fit.chosen[0], "psi_e": fit.chosen[1], "tau": fit.chosen[2]},
        "loglik": fit.loglik,
        "duration_floor": fit.duration_floor,
        "figures": figures,
    })
    psi_s, psi_e, tau = fit.chosen
    tau_text = "none" if tau is None else f"{tau:g}"
    print(f"selected psi_s={psi_s:g} psi_e={psi_e:g} tau={tau_text} "
          f"loglik={fit.loglik:.6f}")
    print(f"wrote {out_dir / 'coefficients.csv'} and {out_dir / 'profile.csv'}")
    return EXIT_OK


def _read_profile(path):
    from .estimation import ProfileRow

    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    fixed = ["psi_s", "psi_e", "tau", "loglik", "status"]
    if header[: len(fixed)] != fixed:
        raise CliError(f"{path} is not a profile table", EXIT_USAGE)
    coef_labels = header[len(fixed):]
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        values = dict(zip(header, cells))
        coef_cells = cells[len(fixed):]
        coef = (np.array([float(c) for c in coef_cells])
                if coef_cells and all(c != "" for c in coef_cells) else None)
        rows.append(ProfileRow(
            psi_s=float(values["psi_s"]),
            psi_e=float(values["psi_e"]),
            tau=float(values["tau"]) if values["tau"] != "" else None,
            loglik=float(values["loglik"]) if values["loglik"] != "" else float("nan"),
            status=values["status"],
            coef=coef,
        ))
    return rows, coef_labels


def cmd_profile(args) -> int:
    started = time.monotonic()
    fit_dir = Path(args.fit_dir)
    profile_path = fit_dir / "profile.csv"
    if not profile_path.exists():
        raise CliError(f"no profile.csv under {fit_dir}", EXIT_USAGE)
    rows, coef_labels = _read_profile(profile_path)
    finite = [r for r in rows if np.isfinite(r.loglik)]
    if not finite:
        raise CliError("profile has no successful grid points", EXIT_NUMERICAL)
    from .estimation import _point_sort_key, _selection_key

    best = min(finite, key=_selection_key)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["psi_s", "psi_e", "tau", "loglik", "status"] + coef_labels
    lines = [",".join(header)]
    for r in sorted(rows, key=_point_sort_key):
        cells = [repr(r.psi_s), repr(r.psi_e),
                 "" if r.tau is None else repr(r.tau),
                 "" if not np.isfinite(r.loglik) else repr(r.loglik), r.status]
        cells += ([repr(float(v)) for v in r.coef] if r.coef is not None
                  else [""] * len(coef_labels))
        lines.append(",".join(cells))
    with open(out_dir / "profile.csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    figures = []
    if args.plots:
        from types import SimpleNamespace

        from . import plots

        start_cols = [c[len("start:"):] for c in coef_labels if c.startswith("start:")]
        end_cols = [c[len("end:"):] for c in coef_labels if c.startswith("end:")]
        shim = SimpleNamespace(grid_profile=rows, chosen=(best.psi_s, best.psi_e, best.tau),
                               start_cols=start_cols, end_cols=end_cols)
        figures = [str(p) for p in plots.render_profile(shim, out_dir)]
        figures += [str(p) for p in plots.render_coefficient_surfaces(shim, out_dir)]
    _write_manifest(out_dir, "profile", args, None, started,
                    extra={"source": str(profile_path), "figures": figures})
    print(f"wrote {out_dir / 'profile.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.monotonic()
    run = _load_run_config(args)
    if run.sim is None:
        raise CliError("config has no [simulate] section", EXIT_USAGE)
    sim = run.sim
    if args.seed is not None:
        from dataclasses import replace

        sim = replace(sim, seed=args.seed)
    try:
        history = simulate(sim)
    except SimulationError as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_NUMERICAL) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_event_file(history, out_dir / "events.csv")
    written = {"events": str(out_dir / "events.csv")}
    if sim.covariates and sim.covariates.actor_attributes:
        names = sorted(sim.covariates.actor_attributes)
        with open(out_dir / "actors.csv", "w") as fh:
            fh.write(",".join(["actor"] + names) + "\n")
            for idx in range(sim.n_actors):
                cells = [history.actors.label(idx)]
                cells += [repr(float(sim.covariates.actor_attributes[n][idx])) for n in names]
                fh.write(",".join(cells) + "\n")
        written["actors"] = str(out_dir / "actors.csv")
    if sim.covariates and sim.covariates.dyadic_ties:
        names = sorted(sim.covariates.dyadic_ties)
        with open(out_dir / "ties.csv", "w") as fh:
            fh.write(",".join(["actor_a", "actor_b"] + names) + "\n")
            for a in range(sim.n_actors):
                for b in range(sim.n_actors):
                    if a == b:
                        continue
                    cells = [history.actors.label(a), history.actors.label(b)]
                    cells += [repr(float(sim.covariates.dyadic_ties[n][a, b])) for n in names]
                    fh.write(",".join(cells) + "\n")
        written["ties"] = str(out_dir / "ties.csv")
    _write_manifest(out_dir, "simulate", args, sim.seed, started, extra={
        "outputs": written,
        "sim_config": {
            "actors": sim.n_actors,
            "directionality": sim.model.directionality.code,
            "start_statistics": [s.label for s in sim.model.start_stats],
            "end_statistics": [s.label for s in sim.model.end_stats],
            "start_coefficients": [float(v) for v in sim.coef.beta_s],
            "end_coefficients": [float(v) for v in sim.coef.beta_e],
            "psi_s": sim.params.psi_s,
            "psi_e": sim.params.psi_e,
            "tau": sim.params.tau,
            "duration_floor": sim.params.duration_floor,
            "stop_events": sim.stop_events,
            "stop_horizon": sim.stop_horizon,
            "seed": sim.seed,
        },
    })
    print(f"simulated {len(history)} event(s) -> {out_dir / 'events.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relspells",
        description="Joint start/end rate models for dyadic interaction spells.",
    )
    parser.add_argument("--version", action="version", version=f"relspells {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, events=True, config_required=True, out_required=True):
        if events:
            p.add_argument("--events", required=True, help="event file (delimited text)")
            p.add_argument("--actors", help="actor attribute file")
            p.add_argument("--ties", help="dyadic tie file")
            p.add_argument("--columns", help="column mapping, e.g. sender=from,receiver=to")
        p.add_argument("--config", required=config_required, help="INI run configuration")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("validate", help="check an event file and show the risk-set timeline")
    p.add_argument("--events", required=True)
    p.add_argument("--actors", help="actor attribute file")
    p.add_argument("--ties", help="dyadic tie file")
    p.add_argument("--columns", help="column mapping, e.g. sender=from,receiver=to")
    p.add_argument("--config", help="INI run configuration (enables mode-aware checks)")
    p.add_argument("--out", help="output directory for the report")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="export the design array at one weight point")
    add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fit", help="grid-search maximum likelihood fit")
    add_common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel grid workers")
    p.add_argument("--seed", type=int, help="seed recorded in the manifest")
    p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True,
                   help="render profile and weight figures")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("profile", help="re-emit and plot a fit's profile table")
    p.add_argument("--fit-dir", required=True, help="directory written by `fit`")
    p.add_argument("--out", required=True)
    p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (EventDataError, RisksetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
