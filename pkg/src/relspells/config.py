"""Run configuration: an INI file with sections for model, weights, optimizer,
options, data handling and simulation.

Example::

    [model]
    directionality = UU

    [start]
    statistics = inertia, sp, average:social, engaged_actor

    [end]
    statistics = inertia, degreeMax

    [weights]
    psi_s = -2 -1 0 1 2
    psi_e = -2 -1 0 1 2
    tau = none 50
    duration_floor = auto

    [optimizer]
    tol = 1e-8
    max_iter = 100

    [options]
    t0 = first_event
    censor_tail = false

Statistic tokens are `name[:covariate][!std]`; `!std` requests
per-transition standardization of that column.  List values accept commas
or whitespace; `none` marks the no-memory half-life.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .estimation import GridSpec, OptimSettings
from .likelihood import Coefficients
from .riskset import Directionality
from .simulation import SimConfig, generate_covariates, rng_stream
from .stats import ModelSpec, Options, StatisticSpec
from .weights import WeightParams


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""


def _split(text: str) -> list[str]:
    return [tok for tok in text.replace(",", " ").split() if tok]


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in _split(text))
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _taus(text: str) -> tuple:
    values = []
    for tok in _split(text):
        if tok.lower() in ("none", "off", "no", "-"):
            values.append(None)
        else:
            try:
                values.append(float(tok))
            except ValueError as exc:
                raise ConfigError(f"bad tau value {tok!r}") from exc
    return tuple(values)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_stat_token(token: str, side: str) -> StatisticSpec:
    standardize = token.endswith("!std")
    if standardize:
        token = token[: -len("!std")]
    name, _, covariate = token.partition(":")
    try:
        return StatisticSpec(name=name, side=side, covariate=covariate or None,
                             standardize=standardize)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad statistic token {token!r}: {exc}") from exc


def parse_stat_list(text: str, side: str) -> list[StatisticSpec]:
    return [parse_stat_token(tok, side) for tok in _split(text)]


@dataclass
class DataOptions:
    """Event-file handling: column mapping, delimiter, gap collapsing."""

    column_map: dict = field(default_factory=dict)
    delimiter: str = ","
    collapse_gaps: bool = False


@dataclass
class RunConfig:
    """Everything a CLI run needs beyond the input file paths."""

    model: ModelSpec
    grid: GridSpec
    optim: OptimSettings
    duration_floor: object  # "auto" or float
    refine: bool
    seed: int | None
    data: DataOptions
    sim: SimConfig | None

    @property
    def directionality(self) -> Directionality:
        return self.model.directionality


def _model_options(parser: configparser.ConfigParser) -> Options:
    sec = parser["options"] if parser.has_section("options") else {}
    try:
        return Options(
            pshift_reference=sec.get("pshift_reference", "starts_only"),
            recency_empty=sec.get("recency_empty", "zero"),
            engaged_mode=sec.get("engaged_actor", "count"),
            t0=sec.get("t0", "first_event"),
            censor_tail=_bool(sec.get("censor_tail", "false")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _simulation_config(parser, model: ModelSpec, floor, seed) -> SimConfig | None:
    if not parser.has_section("simulate"):
        return None
    sec = parser["simulate"]
    for key in ("actors",):
        if key not in sec:
            raise ConfigError(f"[simulate] requires {key}")
    n_actors = int(sec["actors"])
    beta_s = np.array(_floats(sec.get("start_coefficients", "")))
    beta_e = np.array(_floats(sec.get("end_coefficients", "")))
    if len(beta_s) != 1 + len(model.start_stats):
        raise ConfigError(
            f"start_coefficients needs {1 + len(model.start_stats)} values "
            f"(baseline + statistics), got {len(beta_s)}"
        )
    if len(beta_e) != 1 + len(model.end_stats):
        raise ConfigError(
            f"end_coefficients needs {1 + len(model.end_stats)} values "
            f"(baseline + statistics), got {len(beta_e)}"
        )
    tau_text = sec.get("tau", "none")
    taus = _taus(tau_text)
    if len(taus) != 1:
        raise ConfigError(f"[simulate] tau must be a single value, got {tau_text!r}")
    sim_floor = sec.get("duration_floor", None)
    if sim_floor is None:
        floor_value = 1e-9 if floor == "auto" else float(floor)
    else:
        floor_value = float(sim_floor)
    params = WeightParams(
        psi_s=float(sec.get("psi_s", "0")),
        psi_e=float(sec.get("psi_e", "0")),
        tau=taus[0],
        duration_floor=floor_value,
    )
    stop_events = int(sec["events"]) if "events" in sec else None
    stop_horizon = float(sec["horizon"]) if "horizon" in sec else None
    sim_seed = int(sec.get("seed", seed if seed is not None else 0))

    covariates = None
    if parser.has_section("simulate.covariates"):
        recipes = {}
        for name, text in parser["simulate.covariates"].items():
            tokens = _split(text)
            if tokens and tokens[0] in ("categorical", "normal", "uniform"):
                recipes[name] = tuple(tokens)
            else:
                recipes[name] = [float(t) for t in tokens]
        rng = rng_stream(sim_seed, 987654321)
        covariates = generate_covariates(recipes, n_actors, rng)

    try:
        return SimConfig(
            n_actors=n_actors, model=model, coef=Coefficients(beta_s, beta_e),
            params=params, covariates=covariates, stop_events=stop_events,
            stop_horizon=stop_horizon, seed=sim_seed,
            max_transitions=int(sec["max_transitions"]) if "max_transitions" in sec else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    """Parse an INI run configuration; raises `ConfigError` on any problem."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    if not parser.has_section("model") or "directionality" not in parser["model"]:
        raise ConfigError("config needs [model] directionality = DD|UU|DU|UD")
    try:
        directionality = Directionality.from_code(parser["model"]["directionality"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    start_stats = parse_stat_list(parser.get("start", "statistics", fallback=""), "start")
    end_stats = parse_stat_list(parser.get("end", "statistics", fallback=""), "end")
    options = _model_options(parser)
    try:
        model = ModelSpec(directionality=directionality, start_stats=start_stats,
                          end_stats=end_stats, options=options)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    wsec = parser["weights"] if parser.has_section("weights") else {}
    try:
        grid = GridSpec(
            psi_s_values=_floats(wsec.get("psi_s", "")) or GridSpec.psi_s_values,
            psi_e_values=_floats(wsec.get("psi_e", "")) or GridSpec.psi_e_values,
            tau_values=_taus(wsec.get("tau", "none")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    floor_text = wsec.get("duration_floor", "auto")
    duration_floor = "auto" if floor_text.strip().lower() == "auto" else float(floor_text)
    refine = _bool(wsec.get("refine", "false"))

    osec = parser["optimizer"] if parser.has_section("optimizer") else {}
    optim = OptimSettings(
        tol=float(osec.get("tol", "1e-8")),
        rel_tol=float(osec.get("rel_tol", "1e-10")),
        max_iter=int(osec.get("max_iter", "100")),
    )

    seed = None
    if parser.has_section("options") and "seed" in parser["options"]:
        seed = int(parser["options"]["seed"])

    dsec = parser["data"] if parser.has_section("data") else {}
    column_map = {}
    for logical in ("sender", "receiver", "t_start", "t_end", "group"):
        key = f"{logical}_column"
        if key in dsec:
            column_map[logical] = dsec[key]
    data = DataOptions(
        column_map=column_map,
        delimiter=dsec.get("delimiter", ","),
        collapse_gaps=_bool(dsec.get("collapse_gaps", "false")),
    )

    sim = _simulation_config(parser, model, duration_floor, seed)
    return RunConfig(model=model, grid=grid, optim=optim, duration_floor=duration_floor,
                     refine=refine, seed=seed, data=data, sim=sim)
