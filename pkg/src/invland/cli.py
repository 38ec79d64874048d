"""Command-line entry point: train agents, compare policies, slice actor
loss landscapes, run the exact small-instance benchmark, export scenarios.

All outputs land under the configured output directory and are byte-stable
for a fixed config and seeds.
"""

import argparse
import os
import sys

import numpy as np

from . import agents, demand, landscape as ls, nets, oracle as dp
from .config import ExperimentConfig, load_config, build_environment
from .demand import ConfigurationError
from .env import run_episode
from .heuristics import BaseStockPolicy, MeanOrderPolicy
from .oracle import DiscreteGrid, GreedyOraclePolicy, improvement_stats
from .seeding import stream


class CheckpointError(RuntimeError):
    pass


def _checkpoint_path(cfg, seed):
    return os.path.join(cfg.out_dir, f"{cfg.train.algorithm}_seed{seed}.ckpt")


def _make_task(cfg):
    env, scenario, k = build_environment(cfg)
    return agents.InventoryTask(env, scenario, k, reward_mode=cfg.env.reward_mode)


def _load_actor(cfg, task, path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    saved = nets.load_checkpoint(path)
    if "actor" not in saved:
        raise CheckpointError(f"{path} holds no 'actor' network")
    stochastic = cfg.train.algorithm.startswith("sac")
    cls = agents.GaussianActor if stochastic else agents.DeterministicActor
    actor = cls(task.obs_dim, task.act_dim, cfg.train.agent.hidden, task.low, task.high)
    if saved["actor"].sizes != actor.net.sizes:
        raise CheckpointError(
            f"checkpoint layer sizes {saved['actor'].sizes} do not match configured "
            f"architecture {actor.net.sizes}"
        )
    actor.net = saved["actor"]
    critics = (saved.get("critic1"), saved.get("critic2"))
    return actor, critics


def cmd_train(cfg: ExperimentConfig):
    os.makedirs(cfg.out_dir, exist_ok=True)
    task = _make_task(cfg)
    for seed in cfg.seeds:
        result = agents.train(task.clone(), cfg.train.algorithm, cfg.train.steps,
                              cfg.train.agent, seed)
        path = _checkpoint_path(cfg, seed)
        nets.save_checkpoint(
            path,
            {"actor": result.actor.net, "critic1": result.critics[0],
             "critic2": result.critics[1]},
        )
        result.write_log(os.path.join(cfg.out_dir, f"{cfg.train.algorithm}_seed{seed}_log.csv"))
        final = result.log[-1] if result.log else {}
        print(f"seed {seed}: checkpoint {path}, final eval cost "
              f"{final.get('eval_cost', float('nan')):.4f}")
    return 0


def _policy_costs(cfg, env, scenario, task, name):
    """Per-seed episode costs of a named policy (paired demand seeds)."""
    costs = []
    for seed in cfg.seeds:
        if name == "mean":
            policy = MeanOrderPolicy(scenario, depots=env.params.depots)
        elif name == "order-up-to":
            policy = BaseStockPolicy(scenario, service=cfg.service_level,
                                     depots=env.params.depots)
        elif name.startswith("checkpoint:"):
            path = name.split(":", 1)[1].replace("{seed}", str(seed))
            actor, _ = _load_actor(cfg, task, path)
            policy = task.policy_from(actor.mean_action)
        elif name == "trained":
            actor, _ = _load_actor(cfg, task, _checkpoint_path(cfg, seed))
            policy = task.policy_from(actor.mean_action)
        else:
            raise ConfigurationError(f"unknown policy {name!r}")
        costs.append(run_episode(env, policy, scenario, seed=seed).total_cost)
    return dp.PolicyStats(np.asarray(costs))


def cmd_compare(cfg: ExperimentConfig):
    policies = list(cfg.compare_policies)
    if not policies:
        raise ConfigurationError("compare needs at least one policy besides the baseline")
    os.makedirs(cfg.out_dir, exist_ok=True)
    env, scenario, _ = build_environment(cfg)
    task = _make_task(cfg)
    base = _policy_costs(cfg, env, scenario, task, "mean")
    lines = ["# baseline: mean-ordering; paired demand seeds; improvement percent",
             f"# seeds: {','.join(str(s) for s in cfg.seeds)}",
             "policy,mean,min,max,std"]
    print(f"baseline mean-ordering cost: {base.mean:.4f}")
    for name in policies:
        stats = _policy_costs(cfg, env, scenario, task, name)
        imp = improvement_stats(base, stats)
        lines.append(f"{name},{imp.mean:.4f},{imp.min:.4f},{imp.max:.4f},{imp.std:.4f}")
        print(f"{name}: improvement {imp.mean:.2f}% "
              f"(min {imp.min:.2f}, max {imp.max:.2f}, std {imp.std:.2f})")
    out = os.path.join(cfg.out_dir, "comparison.csv")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_landscape(cfg: ExperimentConfig, checkpoint, seed):
    os.makedirs(cfg.out_dir, exist_ok=True)
    task = _make_task(cfg)
    checkpoint = checkpoint or _checkpoint_path(cfg, seed)
    actor, critics = _load_actor(cfg, task, checkpoint)
    if critics[0] is None:
        raise CheckpointError(f"{checkpoint} holds no critics for the actor loss")
    batch = ls.collect_eval_batch(actor.mean_action, task.clone(),
                                  cfg.landscape.episodes, cfg.landscape.batch_states,
                                  seed)
    center = actor.net.get_params()
    w1 = ls.sample_direction(center, stream(seed, "direction-1"))
    w2 = ls.sample_direction(center, stream(seed, "direction-2"))
    if cfg.train.algorithm.startswith("sac"):
        alpha = 0.0 if cfg.train.algorithm == "sac-det" else cfg.train.agent.alpha
        noise = stream(seed, "landscape-noise").standard_normal(
            (batch.shape[0], task.act_dim)
        )
        loss_fn = ls.sac_loss_fn(actor, critics, batch, alpha, noise)
        loss_def = f"sac-sample-objective(alpha={alpha})"
    else:
        loss_fn = ls.td3_loss_fn(actor, critics[0], batch)
        loss_def = "minus-mean-Q1"
    grid = ls.evaluate_grid(actor.net, loss_fn, (w1, w2), cfg.landscape.resolution)
    grid.metadata = {
        "seed": seed,
        "batch": f"{batch.shape[0]} states from {cfg.landscape.episodes} episodes",
        "loss-def": loss_def,
    }
    out = os.path.join(cfg.out_dir,
                       f"landscape_{cfg.train.algorithm}_seed{seed}.csv")
    ls.write_grid(grid, out)
    a, b, v = grid.min_cell()
    print(f"center loss: {grid.center_loss:.6g}")
    print(f"min cell: alpha={a:.4g}, beta={b:.4g}, loss={v:.6g}")
    print(f"wrote {out}")
    return 0


def cmd_oracle(cfg: ExperimentConfig):
    env, scenario, _ = build_environment(cfg)
    p = env.params
    if (p.products, p.stores, p.depots) != (1, 1, 1):
        raise dp.SizeError(
            "the exact benchmark is restricted to 1-product 1-store 1-depot "
            f"instances; config has ({p.products}, {p.stores}, {p.depots})"
        )
    os.makedirs(cfg.out_dir, exist_ok=True)
    grid = DiscreteGrid(
        stock_step=cfg.oracle.stock_step,
        max_stock=float(env.initial_depot.max()),
        action_step=cfg.oracle.action_step,
        quad_nodes=cfg.oracle.quad_nodes,
        max_store_stock=cfg.oracle.max_store_stock,
    )
    solution = dp.solve(env, scenario, grid)
    v0 = solution.value_at(0, env.initial_depot[0, 0], env.initial_store[0, 0])
    table_path = os.path.join(cfg.out_dir, "oracle_tables.csv")
    solution.write_csv(table_path)
    print(f"oracle value at initial state: {v0:.4f}")
    task = _make_task(cfg)
    lines = [f"# oracle V0: {v0:.10g}", "policy,mean_cost,gap_percent"]
    entries = [("oracle-greedy", lambda: GreedyOraclePolicy(solution))]
    entries.append(("mean", lambda: MeanOrderPolicy(scenario, depots=1)))
    entries.append(
        ("order-up-to", lambda: BaseStockPolicy(scenario, service=cfg.service_level))
    )
    for name in cfg.compare_policies:
        if name.startswith("checkpoint:") or name == "trained":
            stats = _policy_costs(cfg, env, scenario, task, name)
            gap = (stats.mean - v0) / v0 * 100.0
            lines.append(f"{name},{stats.mean:.4f},{gap:.4f}")
            print(f"{name}: mean cost {stats.mean:.4f}, gap {gap:.2f}%")
    for name, factory in entries:
        stats = dp.evaluate_policy(env, scenario, factory, cfg.seeds)
        gap = (stats.mean - v0) / v0 * 100.0
        lines.append(f"{name},{stats.mean:.4f},{gap:.4f}")
        print(f"{name}: mean cost {stats.mean:.4f}, gap {gap:.2f}%")
    out = os.path.join(cfg.out_dir, "oracle_report.csv")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {table_path} and {out}")
    return 0


def cmd_scenario_export(cfg: ExperimentConfig):
    os.makedirs(cfg.out_dir, exist_ok=True)
    scenario = cfg.scenario.build(cfg.env)
    out = os.path.join(cfg.out_dir, f"scenario_{cfg.scenario.kind}.csv")
    demand.export_trajectories(scenario, out)
    print(f"wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="invland",
        description="seasonal inventory RL: training, comparison, loss landscapes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed list with one seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p_train = sub.add_parser("train", help="train per-seed agents")
    common(p_train)
    p_train.add_argument("--algo", choices=agents.ALGORITHMS, default=None,
                         help="override the configured algorithm")
    p_train.add_argument("--steps", type=int, default=None)

    p_cmp = sub.add_parser("compare", help="policy comparison on paired demand seeds")
    common(p_cmp)
    p_cmp.add_argument("--algo", choices=agents.ALGORITHMS, default=None,
                       help="which algorithm's checkpoints the 'trained' policy loads")

    p_land = sub.add_parser("landscape", help="2D actor loss-landscape slice")
    common(p_land)
    p_land.add_argument("--checkpoint", default=None)
    p_land.add_argument("--algo", choices=agents.ALGORITHMS, default=None)
    p_land.add_argument("--resolution", type=int, default=None)

    p_orc = sub.add_parser("oracle", help="exact benchmark on a 1x1x1 instance")
    common(p_orc)

    p_exp = sub.add_parser("scenario-export", help="dump mean/std trajectories")
    common(p_exp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None and args.command != "landscape":
        cfg.seeds = [args.seed]
    if getattr(args, "algo", None):
        cfg.train.algorithm = args.algo
    if getattr(args, "steps", None):
        cfg.train.steps = args.steps
    if getattr(args, "resolution", None):
        cfg.landscape.resolution = args.resolution
    cfg.validate()
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "compare":
        return cmd_compare(cfg)
    if args.command == "landscape":
        seed = args.seed if args.seed is not None else cfg.seeds[0]
        return cmd_landscape(cfg, args.checkpoint, seed)
    if args.command == "oracle":
        return cmd_oracle(cfg)
    if args.command == "scenario-export":
        return cmd_scenario_export(cfg)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
