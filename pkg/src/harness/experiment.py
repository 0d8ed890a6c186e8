"""Closed-loop experiment runner: scenario presets, controller rosters, logs."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..controllers.magpc import gpc_step, magpc_step, make_gpc, make_magpc_agents
from ..controllers.plant import StabilizedPlant, stabilize_and_wrap
from ..controllers.riccati import hinf_synthesize, lqr_synthesize
from ..dynamics.costs import QuadCost
from ..dynamics.disturbances import generate_disturbances
from ..dynamics.linear_system import LinearSystem, admire_system, certify_stability
from ..evaluation.eval_metrics import save_step_log, save_summary, save_trajectory
from ..errors import UnstableSystemError
from ..learning.ogd import InverseTimeStep
from ..oracles.markov import default_horizon
from ..oracles.peo import counterfactual_rollout
from ..policies.checkpoint import save_policy
from ..policies.linear_policies import DacPolicy
from .config import ExperimentConfig, config_hash, read_params, read_paths, serialize_config

logger = logging.getLogger(__name__)

PAIR_A = ((0.7,),)
PAIR_B = (((1.0,),), ((0.6,),))


def build_scenario(cfg: ExperimentConfig) -> Tuple[LinearSystem, QuadCost]:
    """Plant and stage cost for the configured scenario."""
    if cfg.scenario == "admire":
        sys = admire_system()
    else:
        sys = LinearSystem(np.array(PAIR_A), tuple(np.array(b) for b in PAIR_B))
    return sys, QuadCost.identity(sys.d_x, sys.d_u, cfg.Q_scale, cfg.R_scale)


def stabilized_plant(sys: LinearSystem, cost: QuadCost, margin: float = 1e-9) -> StabilizedPlant:
    """Wrap with K = 0 when the plant is already stable, else with the LQR gain."""
    try:
        certify_stability(sys, margin)
        K = np.zeros((sys.d_u, sys.d_x))
    except UnstableSystemError as exc:
        logger.info("Plant is open-loop unstable (rho=%.4f); learned controllers run on the LQR loop", exc.spectral_radius)
        K = lqr_synthesize(sys, cost.Q, cost.R).K
    return stabilize_and_wrap(sys, K)


@dataclass(frozen=True, eq=False)
class ExperimentLog:
    """Per-step frame, flat summary and the raw trajectory behind both."""

    frame: pd.DataFrame
    summary: Dict[str, object]
    trajectory: Dict[str, object]

    @property
    def T(self) -> int:
        return len(self.frame)


def _frame(costs: np.ndarray, states: np.ndarray, total: np.ndarray, sys: LinearSystem, failed: np.ndarray) -> pd.DataFrame:
    T = costs.shape[0]
    data = {
        "t": np.arange(T),
        "cost": costs,
        "avg_cost": np.cumsum(costs) / np.arange(1, T + 1),
        "state_norm": np.linalg.norm(states[:T], axis=1),
    }
    for i in range(sys.k):
        data[f"u{i + 1}"] = np.linalg.norm(total[:, sys.agent_slice(i)], axis=1)
    data["failed"] = failed.astype(int)
    return pd.DataFrame(data)


def _run_baseline(cfg: ExperimentConfig, sys: LinearSystem, cost: QuadCost, w: np.ndarray, params: dict):
    if cfg.controller == "lqr":
        K = lqr_synthesize(sys, cost.Q, cost.R).K
    elif cfg.controller == "hinf":
        hinf = params.get("hinf", {})
        K = hinf_synthesize(sys, cost.Q, cost.R, tuple(hinf.get("gamma_range", (0.1, 1e4))), hinf.get("tol", 1e-3)).K
    else:
        K = np.zeros((sys.d_u, sys.d_x))
    T = w.shape[0]
    states = np.zeros((T + 1, sys.d_x))
    controls = np.zeros((T, sys.d_u))
    costs = np.zeros(T)
    for t in range(T):
        u = -K @ states[t]
        mask = cfg.failure_mask(t)
        if mask is not None:
            for i, dead in enumerate(mask):
                if dead:
                    u[sys.agent_slice(i)] = 0.0
        controls[t] = u
        costs[t] = cost.at(t)(states[t], u)
        states[t + 1] = sys.A @ states[t] + sys.B @ u + w[t]
    trajectory = {"states": states, "learned": controls, "total": controls, "K": K, "thetas": None}
    return states, controls, costs, trajectory, float("nan")


def resolve_horizon(cfg: ExperimentConfig, params: Optional[dict] = None) -> ExperimentConfig:
    """Fill an `auto` horizon with the 1/T truncation rule on the certified closed-loop decay."""
    if cfg.h is not None:
        return cfg
    params = params or read_params()
    sys, cost = build_scenario(cfg)
    plant = stabilized_plant(sys, cost, params.get("stability", {}).get("margin", 1e-9))
    h = default_horizon(cfg.T, plant.cert.decay)
    logger.info("Horizon h=%d from closed-loop decay %.4f and T=%d", h, plant.cert.decay, cfg.T)
    return replace(cfg, h=h).validate()


def _run_learned(cfg: ExperimentConfig, sys: LinearSystem, cost: QuadCost, w: np.ndarray, params: dict):
    plant = stabilized_plant(sys, cost, params.get("stability", {}).get("margin", 1e-9))
    wrapped = plant.wrap_cost(cost)
    schedule = InverseTimeStep(cfg.lr_num)
    T = w.shape[0]
    options = {"burn_in": cfg.burn_in, "scale_steps": cfg.step_scaling == "energy"}
    if cfg.controller == "magpc":
        agents = make_magpc_agents(plant, T, cfg.m, cfg.h, cfg.radius, schedule, **options)
    else:
        agents = [make_gpc(plant, T, cfg.m, cfg.h, cfg.radius, schedule, **options)]
    states = np.zeros((T + 1, sys.d_x))
    learned = np.zeros((T, sys.d_u))
    total = np.zeros((T, sys.d_u))
    costs = np.zeros(T)
    thetas = [np.zeros((T,) + a.learner.domain.shape) for a in agents]
    gaps = np.zeros(T)
    for t in range(T):
        x = states[t]
        mask = cfg.failure_mask(t)
        if cfg.controller == "magpc":
            u, agents, _ = magpc_step(agents, plant, t, [x] * sys.k, wrapped.at(t), mask, state=x)
        else:
            u, controller, _ = gpc_step(agents[0], plant, t, x, wrapped.at(t), mask)
            agents = [controller]
        for j, agent in enumerate(agents):
            thetas[j][t] = agent.thetas[-1]
        learned[t] = u
        total[t] = plant.total_control(x, u)
        costs[t] = cost.at(t)(x, total[t])
        states[t + 1] = plant.step(x, u, w[t])
        for agent in agents:
            live = mask is None or cfg.controller == "gpc" or not mask[agent.index]
            if agent.last_eval is not None and agent.last_eval[0].t == t and live:
                ctx, window, value = agent.last_eval
                exact = counterfactual_rollout(agent.memory.sys, ctx, states, w, {agent.index: window})
                gaps[t] = max(gaps[t], abs(value - exact))
    trajectory = {
        "states": states,
        "learned": learned,
        "total": total,
        "K": plant.baseline.K,
        "A_closed": plant.closed.A,
        "input_dims": tuple(a.learner.domain.shape[0] for a in agents),
        "wrapped_cost": (wrapped.Q, wrapped.R, wrapped.cross),
        "thetas": thetas,
        "ledgers": [(a.learner.ledger.played, a.learner.ledger.grad_sum) for a in agents],
        "ledger_best_regret": [a.learner.ledger.best_regret(a.learner.domain) for a in agents],
        "final_thetas": [a.learner.decision for a in agents],
        "oracle_gaps": gaps,
    }
    return states, learned, costs, trajectory, float(gaps.max()) if T else 0.0


def run_experiment(cfg: ExperimentConfig, params: Optional[dict] = None) -> ExperimentLog:
    """Simulate one configured run; the result is a pure function of ``cfg``."""
    cfg.validate()
    params = params or read_params()
    cfg = resolve_horizon(cfg, params)
    started = time.perf_counter()
    sys, cost = build_scenario(cfg)
    trace = generate_disturbances(cfg.profile, cfg.seed, cfg.T, sys.d_x)
    w = np.array(trace.w)
    runner = _run_learned if cfg.controller in ("magpc", "gpc") else _run_baseline
    states, _, costs, trajectory, epsilon = runner(cfg, sys, cost, w, params)
    failed = np.array([cfg.failure_mask(t) is not None for t in range(cfg.T)])
    frame = _frame(costs, states, trajectory["total"], sys, failed)

    norms = np.linalg.norm(states, axis=1)
    summary: Dict[str, object] = {
        "scenario": cfg.scenario,
        "controller": cfg.controller,
        "profile": cfg.profile,
        "seed": cfg.seed,
        "T": cfg.T,
        "config_hash": config_hash(cfg),
        "total_cost": float(costs.sum()),
        "avg_cost": float(costs.mean()),
        "max_state_norm": float(norms.max()),
        "epsilon_measured": epsilon,
    }
    if cfg.failure_agent is not None:
        cut = min(cfg.failure_t, cfg.T)
        summary["failure_agent"] = cfg.failure_agent
        summary["pre_failure_max_state_norm"] = float(norms[: cut + 1].max())
        summary["post_failure_cost"] = float(costs[cut:].sum())
        if "oracle_gaps" in trajectory:
            summary["pre_failure_epsilon"] = float(trajectory["oracle_gaps"][:cut].max(initial=0.0))
            summary["post_failure_epsilon"] = float(trajectory["oracle_gaps"][cut:].max(initial=0.0))
    if trajectory.get("ledger_best_regret") is not None:
        summary["ledger_regret"] = float(sum(trajectory["ledger_best_regret"]))
    trajectory.update(
        {
            "config": serialize_config(cfg),
            "w": w,
            "A": sys.A,
            "B": sys.B,
            "agent_dims": sys.input_dims,
            "Q": cost.Q,
            "R": cost.R,
            "costs": costs,
            "m": cfg.m,
            "h": cfg.h,
            "burn_in": cfg.burn_in,
            "radius": cfg.radius,
            "epsilon": epsilon,
        }
    )
    logger.info(
        "%s/%s seed=%d: avg cost %.4g, max |x| %.4g (%.2fs)",
        cfg.scenario, cfg.controller, cfg.seed, summary["avg_cost"], summary["max_state_norm"],
        time.perf_counter() - started,
    )
    return ExperimentLog(frame=frame, summary=summary, trajectory=trajectory)


def run_replicas(cfg: ExperimentConfig, replicas: int, n_jobs: int = -1, params: Optional[dict] = None) -> List[ExperimentLog]:
    """Seed-shifted copies of ``cfg`` (seed, seed + 1, ...) run in parallel."""
    params = params or read_params()
    configs = [replace(cfg, seed=cfg.seed + r) for r in range(replicas)]
    return Parallel(n_jobs=n_jobs)(delayed(run_experiment)(c, params) for c in configs)


def write_run(log: ExperimentLog, output_dir: Path, paths: Optional[dict] = None) -> Dict[str, Path]:
    """Persist the step CSV, summary and trajectory of one run under ``output_dir``.

    Learned runs also get one policy checkpoint per agent holding its final parameters.
    """
    files = (paths or read_paths()).get("files", {})
    output_dir = Path(output_dir)
    written = {
        "steps": save_step_log(log.frame, output_dir / files.get("steps", "steps.csv")),
        "summary": save_summary(log.summary, output_dir / files.get("summary", "summary.txt")),
        "trajectory": save_trajectory(log.trajectory, output_dir / files.get("trajectory", "trajectory.joblib")),
    }
    policy_name = files.get("policy", "policy_agent{index}.txt")
    for index, theta in enumerate(log.trajectory.get("final_thetas") or (), start=1):
        policy = DacPolicy(theta, int(log.trajectory["m"]))
        written[f"policy{index}"] = save_policy(policy, output_dir / policy_name.format(index=index))
    logger.info("Run artifacts written to %s", output_dir)
    return written
