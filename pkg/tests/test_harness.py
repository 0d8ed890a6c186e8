from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.dynamics.costs import QuadCost
from src.dynamics.linear_system import natures_x
from src.errors import ConfigError
from src.evaluation.eval_metrics import load_trajectory, read_summary
from src.harness.config import apply_overrides, config_hash, parse_config, serialize_config
from src.harness.demos import demo_oco_counterexample, demo_shared_controls
from src.harness.experiment import (
    build_scenario,
    resolve_horizon,
    run_experiment,
    run_replicas,
    stabilized_plant,
    write_run,
)
from src.harness.regret import (
    closed_system,
    dac_cost_quadratic,
    measure_regret_terms,
    offline_optimal_dac,
)
from src.learning.multiplayer import split_blocks
from src.oracles.markov import default_horizon
from src.policies.checkpoint import load_policy
from src.policies.decoupling import simulate_policies
from src.policies.linear_policies import DacPolicy


# -- configuration ---------------------------------------------------------


def test_empty_config_gets_the_default_hyperparameters():
    cfg = parse_config("", scenario="admire")
    assert (cfg.h, cfg.m, cfg.lr_num) == (5, 5, 0.001)
    assert cfg.burn_in == 10
    assert cfg.n_agents == 4


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        parse_config("T = -1", scenario="admire")
    with pytest.raises(ConfigError):
        parse_config("")
    with pytest.raises(ConfigError):
        parse_config("horizon = 3", scenario="admire")
    with pytest.raises(ConfigError):
        parse_config("h = five", scenario="admire")
    with pytest.raises(ConfigError):
        parse_config("Tb = 3", scenario="admire")
    with pytest.raises(ConfigError):
        parse_config("failure_agent = 3", scenario="pair")


def test_serialized_config_reparses_to_an_equal_config():
    cfg = parse_config("T = 300\nfailure_agent = 2\nlr_num = 1e-5  # slow", scenario="pair")
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_overrides_replace_single_keys():
    cfg = apply_overrides(parse_config("", scenario="pair"), ["controller=lqr", "seed=3"])
    assert (cfg.controller, cfg.seed) == ("lqr", 3)
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["colour=red"])


def test_failure_mask_starts_at_failure_time(pair_config):
    cfg = pair_config(failure_agent=2, failure_t=50)
    assert cfg.failure_mask(49) is None
    assert cfg.failure_mask(50) == [False, True]


def test_step_scaling_is_validated(pair_config):
    assert pair_config().step_scaling == "energy"
    assert pair_config(step_scaling="none").step_scaling == "none"
    with pytest.raises(ConfigError):
        pair_config(step_scaling="fast")


def test_auto_horizon_follows_the_closed_loop_decay(pair_config):
    cfg = pair_config(h="auto", controller="magpc", T=120)
    assert cfg.h is None
    with pytest.raises(ConfigError):
        cfg.burn_in
    resolved = resolve_horizon(cfg)
    sys, cost = build_scenario(cfg)
    assert resolved.h == default_horizon(120, stabilized_plant(sys, cost).cert.decay)
    assert run_experiment(cfg).trajectory["h"] == resolved.h


# -- closed-loop runs ------------------------------------------------------


def test_zero_disturbance_and_zero_control_cost_nothing(pair_config):
    log = run_experiment(pair_config(profile="zero", controller="zero"))
    assert log.T == 200
    assert not log.frame["cost"].any()
    assert log.summary["total_cost"] == 0.0


def test_equal_configs_give_equal_logs(pair_config):
    cfg = pair_config(controller="magpc")
    first, second = run_experiment(cfg), run_experiment(cfg)
    pd.testing.assert_frame_equal(first.frame, second.frame)
    assert first.summary == second.summary


def test_log_columns_are_self_consistent(pair_config):
    log = run_experiment(pair_config(controller="magpc"))
    frame = log.frame
    assert list(frame.columns) == ["t", "cost", "avg_cost", "state_norm", "u1", "u2", "failed"]
    expected = np.cumsum(frame["cost"]) / np.arange(1, len(frame) + 1)
    assert np.allclose(frame["avg_cost"], expected, atol=1e-12)
    assert log.summary["total_cost"] == pytest.approx(frame["cost"].sum())


def test_states_follow_natures_x_during_burn_in(pair_config):
    cfg = pair_config(controller="magpc")
    log = run_experiment(cfg)
    sys, _ = build_scenario(cfg)
    nat = natures_x(sys, log.trajectory["w"])
    assert np.array_equal(log.trajectory["states"][: cfg.burn_in + 1], nat[: cfg.burn_in + 1])


def test_failed_agent_learned_control_is_zero(pair_config):
    log = run_experiment(pair_config(controller="magpc", failure_agent=2, failure_t=50))
    assert not log.trajectory["learned"][50:, 1].any()
    assert log.frame["failed"].iloc[49] == 0 and log.frame["failed"].iloc[50] == 1
    assert "post_failure_cost" in log.summary


@pytest.mark.parametrize("controller", ["lqr", "gpc", "magpc"])
def test_failed_channel_applies_no_input_on_the_aircraft(controller):
    cfg = parse_config(f"T = 60\ncontroller = {controller}\nfailure_agent = 4\nfailure_t = 30", scenario="admire")
    log = run_experiment(cfg)
    assert np.allclose(log.trajectory["total"][30:, 3], 0.0, atol=1e-12)
    assert np.allclose(log.frame["u4"].iloc[30:], 0.0, atol=1e-12)
    assert log.frame["u4"].iloc[:30].any()
    if controller != "lqr":
        assert {"pre_failure_epsilon", "post_failure_epsilon"} <= set(log.summary)


def test_oracle_error_is_measured_for_learned_runs(pair_config):
    learned = run_experiment(pair_config(controller="magpc"))
    baseline = run_experiment(pair_config(controller="lqr"))
    assert 0.0 <= learned.summary["epsilon_measured"] < 1.0
    assert np.isnan(baseline.summary["epsilon_measured"])


@pytest.mark.parametrize("controller", ["lqr", "hinf", "gpc"])
def test_every_controller_runs_on_the_pair(pair_config, controller):
    log = run_experiment(pair_config(controller=controller))
    assert np.isfinite(log.summary["avg_cost"])


def test_replicas_shift_the_seed(pair_config):
    logs = run_replicas(pair_config(controller="lqr", T=50), replicas=2, n_jobs=1)
    assert [log.summary["seed"] for log in logs] == [7, 8]


def test_run_artifacts_are_written(pair_config, tmp_path):
    log = run_experiment(pair_config(controller="magpc", T=60))
    written = write_run(log, tmp_path)
    header = written["steps"].read_text().splitlines()[0]
    assert header == "t,cost,avg_cost,state_norm,u1,u2,failed"
    assert read_summary(written["summary"])["controller"] == "magpc"
    assert np.array_equal(load_trajectory(written["trajectory"])["states"], log.trajectory["states"])


def test_learned_runs_checkpoint_their_final_policies(pair_config, tmp_path):
    log = run_experiment(pair_config(controller="magpc", T=60))
    written = write_run(log, tmp_path)
    for index, theta in enumerate(log.trajectory["final_thetas"], start=1):
        policy = load_policy(written[f"policy{index}"])
        assert policy.m == log.trajectory["m"]
        assert np.array_equal(policy.M, theta)
    assert "policy1" not in write_run(run_experiment(pair_config(controller="lqr", T=20)), tmp_path / "lqr")


# -- regret ----------------------------------------------------------------


def test_dac_cost_quadratic_matches_rollout(pair_config, rng):
    log = run_experiment(pair_config(controller="magpc", T=80))
    trajectory = log.trajectory
    sys = closed_system(trajectory)
    cost = QuadCost(*trajectory["wrapped_cost"])
    m = trajectory["m"]
    theta = rng.standard_normal(sum(d * m * sys.d_x for d in sys.input_dims))
    policies = split_blocks(theta, [(d, m * sys.d_x) for d in sys.input_dims])
    states, controls = simulate_policies(sys, [DacPolicy(M, m) for M in policies], trajectory["w"])
    direct = sum(cost(states[t], controls[t]) for t in range(80))
    assert dac_cost_quadratic(sys, cost, trajectory["w"], m)(theta) == pytest.approx(direct, rel=1e-9)


def test_regret_terms_sum_to_the_total(pair_config):
    log = run_experiment(pair_config(controller="magpc", T=150, lr_num=0.05))
    offline = offline_optimal_dac(log.trajectory, {"max_iter": 2000})
    report = measure_regret_terms(log.trajectory, offline, log.summary["epsilon_measured"])
    scale = 1.0 + float(np.sum(np.abs(log.trajectory["costs"])))
    assert report.identity_gap <= 1e-8 * scale
    assert set(report.as_dict()) >= {"term_burn_in", "term_policy_regret", "regret_bound", "within_bound"}




@pytest.mark.slow
def test_average_regret_shrinks_as_the_horizon_grows(pair_config):
    averages = []
    for T in (200, 400, 800):
        log = run_experiment(pair_config(controller="magpc", T=T, lr_num=0.05))
        offline = offline_optimal_dac(log.trajectory, {"max_iter": 2000})
        report = measure_regret_terms(log.trajectory, offline, log.summary["epsilon_measured"]).as_dict()
        assert report["within_bound"]
        averages.append(report["average_regret"])
    assert averages[2] < averages[0]


def test_regret_needs_learned_policies(pair_config):
    log = run_experiment(pair_config(controller="lqr", T=30))
    with pytest.raises(ValueError):
        measure_regret_terms(log.trajectory)


# -- demos -----------------------------------------------------------------


@pytest.mark.parametrize("T", [100, 1000])
def test_scripted_players_have_negative_regret(T):
    frame, summary = demo_oco_counterexample(T)
    assert np.allclose(frame["scripted_loss"], 0.2, atol=1e-12)
    assert summary["scripted_joint_loss"] == pytest.approx(0.2, abs=1e-12)
    assert summary["scripted_player1_best_loss"] == pytest.approx(1.1, abs=1e-9)
    assert summary["scripted_player2_regret"] == pytest.approx(-0.9, abs=1e-9)
    assert summary["scripted_multiagent_regret"] == pytest.approx(0.2, abs=1e-9)


def test_ogd_players_drive_multiagent_regret_down():
    _, summary = demo_oco_counterexample(10_000)
    assert summary["ogd_multiagent_regret"] <= 0.05


def test_counterexample_needs_even_horizon():
    with pytest.raises(ValueError):
        demo_oco_counterexample(3)


@pytest.mark.parametrize("strategy", ["constant_0", "constant_1", "constant_0.5", "ogd"])
def test_hidden_partners_force_constant_regret(strategy):
    _, summary = demo_shared_controls(strategy, 500)
    assert summary["identical_plays"]
    assert summary["max_regret"] >= 0.25 - 1e-9


def test_half_strategy_regret_is_exactly_a_quarter():
    frame, summary = demo_shared_controls("constant_0.5", 200)
    assert summary["regret_partner0"] == pytest.approx(0.25, abs=1e-12)
    assert summary["regret_partner1"] == pytest.approx(0.25, abs=1e-12)
    assert np.allclose(frame["cost_partner0"], 1.0)


# -- full-length presets ---------------------------------------------------


@pytest.mark.slow
def test_admire_magpc_stays_bounded():
    cfg = parse_config("T = 2000\ncontroller = magpc\nprofile = gaussian", scenario="admire")
    log = run_experiment(cfg)
    assert log.summary["max_state_norm"] < 50.0


def test_gpc_and_magpc_agree_at_tiny_learning_rate(pair_config):
    magpc = run_experiment(pair_config(controller="magpc", lr_num=1e-5))
    gpc = run_experiment(pair_config(controller="gpc", lr_num=1e-5))
    assert np.allclose(magpc.frame["avg_cost"], gpc.frame["avg_cost"], rtol=0.01)
    assert magpc.summary["total_cost"] == pytest.approx(gpc.summary["total_cost"], rel=0.01)


@pytest.mark.slow
def test_admire_random_walk_magpc_beats_lqr():
    base = parse_config("T = 2000\nprofile = random_walk", scenario="admire")
    for seed in range(3):
        magpc = run_experiment(replace(base, controller="magpc", seed=seed))
        lqr = run_experiment(replace(base, controller="lqr", seed=seed))
        assert np.isfinite(magpc.summary["total_cost"])
        assert magpc.summary["total_cost"] <= lqr.summary["total_cost"]


@pytest.mark.slow
def test_admire_failure_corrupts_gpc_oracle_but_not_magpc():
    base = parse_config("T = 2000\nprofile = random_walk\nfailure_agent = 4", scenario="admire")
    gpc_errors, magpc_errors = [], []
    for seed in range(10):
        magpc = run_experiment(replace(base, controller="magpc", seed=seed)).summary
        gpc = run_experiment(replace(base, controller="gpc", seed=seed)).summary
        assert magpc["max_state_norm"] < 10.0 * magpc["pre_failure_max_state_norm"]
        assert gpc["post_failure_epsilon"] > 2.0 * magpc["post_failure_epsilon"]
        gpc_errors.append(gpc["post_failure_epsilon"])
        magpc_errors.append(magpc["post_failure_epsilon"])
    assert sum(gpc_errors) >= 10.0 * sum(magpc_errors)
