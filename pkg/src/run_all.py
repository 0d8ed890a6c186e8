"""End-to-end sweep: every controller on every disturbance profile of the ADMIRE preset."""

from __future__ import annotations

import logging
from dataclasses import replace

from .harness.config import parse_config, read_params, read_paths, resolve_output_dir
from .harness.demos import demo_oco_counterexample, demo_shared_controls
from .harness.experiment import run_experiment, write_run


def main() -> None:
    logging.basicConfig(level=logging.WARNING)
    params = read_params()
    paths = read_paths()
    sweep = params.get("sweep", {})
    base = parse_config("", scenario="admire", defaults=params)
    out = resolve_output_dir(base, paths)

    print("[1/3] Running the two-player counterexample...")
    _, oco = demo_oco_counterexample(1000)
    print(f"    Scripted joint loss {oco['scripted_joint_loss']:.3f}, per-player regret {oco['scripted_player1_regret']:.3f}")
    print(f"    OGD multi-agent regret {oco['ogd_multiagent_regret']:.4f}")

    print("[2/3] Running the shared-controls battery...")
    for strategy in ("constant_0", "constant_1", "constant_0.5", "ogd"):
        _, shared = demo_shared_controls(strategy, 1000)
        print(f"    {strategy}: max regret {shared['max_regret']:.3f}")

    print("[3/3] Running the ADMIRE sweep, healthy and with a failing agent...")
    for profile in sweep.get("profiles", ["gaussian"]):
        for controller in sweep.get("controllers", ["magpc"]):
            for failure_agent in (None, sweep.get("failure_agent", 4)):
                cfg = replace(base, profile=profile, controller=controller, failure_agent=failure_agent)
                log = run_experiment(cfg, params)
                tag = "healthy" if failure_agent is None else f"fail{failure_agent}"
                write_run(log, out / f"sweep_{profile}_{controller}_{tag}", paths)
                print(
                    f"    {profile:<12} {controller:<6} {tag:<8} avg cost {log.summary['avg_cost']:.4g}"
                    f"  max |x| {log.summary['max_state_norm']:.4g}"
                )
    print(f"    Saved runs under {out}")


if __name__ == "__main__":
    main()
