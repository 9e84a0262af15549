import math

import numpy as np
import pytest

from relspells import (
    DD,
    UU,
    Coefficients,
    Directionality,
    GridSpec,
    ModelSpec,
    Options,
    SimConfig,
    SimulationError,
    StatisticSpec,
    WeightParams,
    build_design,
    build_transitions,
    generate_covariates,
    log_likelihood,
    recovery_study,
    rng_stream,
    simulate,
    validate_history,
    write_event_file,
)


def _intercept_config(directionality, n_actors, beta_s, beta_e, stop_events,
                      seed=7, horizon=None):
    model = ModelSpec(directionality, options=Options(t0="zero"))
    return SimConfig(
        n_actors=n_actors,
        model=model,
        coef=Coefficients(np.array([beta_s]), np.array([beta_e])),
        params=WeightParams(),
        stop_events=stop_events,
        stop_horizon=horizon,
        seed=seed,
    )


def test_alternating_renewal_closed_form():
    """One pair: start gaps ~ Exp(e^bs), durations ~ Exp(e^be)."""
    bs, be = math.log(0.5), math.log(2.0)
    cfg = _intercept_config(UU, 2, bs, be, stop_events=10_000, seed=11)
    history = simulate(cfg)
    durations = np.array([e.duration for e in history.events])
    gaps = np.empty(len(history.events))
    prev_end = 0.0
    for k, e in enumerate(history.events):
        gaps[k] = e.t_start - prev_end
        prev_end = e.t_end
    n = len(history.events)
    for values, mean_target in ((gaps, 1.0 / 0.5), (durations, 1.0 / 2.0)):
        mc_se = values.std() / math.sqrt(n)
        assert abs(values.mean() - mean_target) < 3 * mc_se, (
            f"mean {values.mean():.4f} vs {mean_target} (3 mc-se = {3 * mc_se:.4f})"
        )


def test_simulation_deterministic(tmp_path):
    cfg = _intercept_config(DD, 4, -2.0, 0.0, stop_events=50, seed=99)
    h1, h2 = simulate(cfg), simulate(cfg)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_event_file(h1, p1)
    write_event_file(h2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_different_seeds_differ():
    a = simulate(_intercept_config(DD, 4, -2.0, 0.0, stop_events=30, seed=1))
    b = simulate(_intercept_config(DD, 4, -2.0, 0.0, stop_events=30, seed=2))
    assert [e.t_start for e in a] != [e.t_start for e in b]


@pytest.mark.parametrize("code", ["DD", "UU", "DU", "UD"])
def test_simulated_histories_validate(code):
    d = Directionality.from_code(code)
    rng = rng_stream(31, code)
    cov = generate_covariates({"grp": ("categorical", 2)}, 5, rng_stream(5))
    if d.start_mode == "directed":
        start_stats = [StatisticSpec("inertia", "start"),
                       StatisticSpec("same", "start", covariate="grp")]
    else:
        start_stats = [StatisticSpec("inertia", "start"),
                       StatisticSpec("same", "start", covariate="grp")]
    end_stats = [StatisticSpec("inertia", "end")]
    model = ModelSpec(d, start_stats, end_stats, options=Options(t0="zero"))
    cfg = SimConfig(
        n_actors=5, model=model,
        coef=Coefficients(np.array([-3.0, 0.2, 0.1]), np.array([0.4, 0.05])),
        params=WeightParams(0.8, -0.6, None, 0.05),
        covariates=cov, stop_events=60, seed=17,
    )
    history = simulate(cfg)
    assert len(history) >= 60
    report = validate_history(history, model)
    assert report.ok, report.summary()
    seq = build_transitions(history, d)  # must not raise
    assert len(seq) == 2 * len(history)


def test_stop_rule_all_events_closed():
    cfg = _intercept_config(DD, 5, -2.5, 0.3, stop_events=40, seed=3)
    history = simulate(cfg)
    assert len(history) >= 40
    assert all(e.t_end <= history.observation_end for e in history.events)


def test_stop_horizon():
    cfg = _intercept_config(UU, 3, -1.0, 1.0, stop_events=None, horizon=50.0, seed=5)
    history = simulate(cfg)
    assert history.observation_end >= 50.0
    assert all(e.t_end <= history.observation_end for e in history.events)


def test_true_parameters_score_higher_on_average():
    model = ModelSpec(DD, [StatisticSpec("inertia", "start")],
                      [StatisticSpec("inertia", "end")], options=Options(t0="zero"))
    truth = Coefficients(np.array([-3.5, 0.4]), np.array([0.5, 0.1]))
    perturbed = Coefficients(np.array([-2.8, -0.2]), np.array([1.1, -0.2]))
    params = WeightParams(1.0, -1.0, None, 0.05)
    wins = 0
    reps = 8
    for rep in range(reps):
        cfg = SimConfig(n_actors=6, model=model, coef=truth, params=params,
                        stop_events=60, seed=100 + rep)
        history = simulate(cfg)
        seq = build_transitions(history, DD)
        design = build_design(seq, model, history, None, params)
        ll_true = log_likelihood(design, truth).loglik
        ll_pert = log_likelihood(design, perturbed).loglik
        wins += ll_true > ll_pert
    assert wins >= 7


def test_rate_overflow_rejected():
    model = ModelSpec(DD, [StatisticSpec("inertia", "start")], [], options=Options(t0="zero"))
    cfg = SimConfig(
        n_actors=3, model=model,
        coef=Coefficients(np.array([2.0, 500.0]), np.array([-1.0])),
        params=WeightParams(5.0, 0.0, None, 1e-6),
        stop_events=200, seed=1, max_transitions=100_000,
    )
    with pytest.raises(SimulationError):
        simulate(cfg)


def test_simconfig_validation():
    model = ModelSpec(DD, options=Options(t0="zero"))
    with pytest.raises(ValueError):
        SimConfig(n_actors=3, model=model, coef=Coefficients(np.zeros(1), np.zeros(1)),
                  params=WeightParams(), stop_events=None, stop_horizon=None)
    with pytest.raises(ValueError):
        SimConfig(n_actors=3, model=model, coef=Coefficients(np.zeros(1), np.zeros(1)),
                  params=WeightParams(), stop_events=10, stop_horizon=10.0)
    cfg = SimConfig(n_actors=3, model=model, coef=Coefficients(np.zeros(2), np.zeros(1)),
                    params=WeightParams(), stop_events=10)
    with pytest.raises(ValueError, match="coefficient length"):
        simulate(cfg)


def test_generate_covariates_recipes():
    rng = rng_stream(4)
    cov = generate_covariates(
        {"grp": ("categorical", 3), "score": ("normal", 1.0, 0.5),
         "u": ("uniform", -1.0, 1.0), "fixed": [1.0, 2.0, 3.0, 4.0],
         "ties": ["adv"]},
        4, rng,
    )
    assert set(cov.actor_attributes) == {"grp", "score", "u", "fixed"}
    assert cov.actor_attributes["grp"].shape == (4,)
    assert set(np.unique(cov.actor_attributes["grp"])) <= {0.0, 1.0, 2.0}
    assert np.allclose(cov.actor_attributes["fixed"], [1, 2, 3, 4])
    tie = cov.dyadic_ties["adv"]
    assert tie.shape == (4, 4) and np.allclose(tie, tie.T) and np.allclose(np.diag(tie), 0)
    with pytest.raises(ValueError):
        generate_covariates({"bad": ("triangular", 1)}, 4, rng)


def test_recovery_study_unbiased_at_zero():
    model = ModelSpec(
        DD,
        [StatisticSpec("inertia", "start")],
        [StatisticSpec("inertia", "end")],
        options=Options(t0="zero"),
    )
    truth = Coefficients(np.array([-3.2, 0.0]), np.array([0.3, 0.0]))
    cfg = SimConfig(n_actors=6, model=model, coef=truth,
                    params=WeightParams(0.0, 0.0, None, 0.05),
                    stop_events=150, seed=2024)
    study = recovery_study(cfg, replications=50)
    assert study.n_failed == 0
    assert np.abs(study.mean_z).max() < 0.2, study.mean_z
    assert (study.coverage3 >= 0.9).all()


def test_recovery_study_single_replication_and_failures():
    model = ModelSpec(DD, options=Options(t0="zero"))
    cfg = SimConfig(n_actors=3, model=model,
                    coef=Coefficients(np.array([-1.0]), np.array([0.0])),
                    params=WeightParams(), stop_events=10, seed=5)
    study = recovery_study(cfg, replications=1)
    assert len(study.replications) == 1
    assert study.replications[0].z_dev is not None
    rows = list(study.rows())
    assert len(rows) == 2

    # an explosive configuration fails per replication without aborting
    bad_model = ModelSpec(DD, [StatisticSpec("inertia", "start")], [],
                          options=Options(t0="zero"))
    bad = SimConfig(n_actors=3, model=bad_model,
                    coef=Coefficients(np.array([2.0, 500.0]), np.array([-1.0])),
                    params=WeightParams(5.0, 0.0, None, 1e-6),
                    stop_events=100, seed=1, max_transitions=50_000)
    study = recovery_study(bad, replications=2)
    assert study.n_failed == 2
    assert all(r.error for r in study.replications)


def test_recovery_study_grid_selection_runs():
    model = ModelSpec(DD, [StatisticSpec("inertia", "start")],
                      [StatisticSpec("inertia", "end")], options=Options(t0="zero"))
    cfg = SimConfig(n_actors=5, model=model,
                    coef=Coefficients(np.array([-3.0, 0.5]), np.array([0.3, 0.1])),
                    params=WeightParams(1.0, 0.0, None, 0.05),
                    stop_events=60, seed=77)
    grid = GridSpec(psi_s_values=(0.0, 1.0), psi_e_values=(0.0,), tau_values=(None,))
    study = recovery_study(cfg, replications=3, grid=grid)
    counts = study.selection_counts()
    assert sum(counts.values()) == 3
    assert all(point[0] in (0.0, 1.0) for point in counts)
