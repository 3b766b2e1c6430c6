"""Command line entry point: ``sbnn evolve | validate | report | trace``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .engine import Agent, run_episode
from .envs import LANDER_PRESETS, RemapSpec, env_spec, make_env, wrap_remapped
from .harness import ConfigError, ExperimentConfig, episode_seeds, run_experiment, validate_transfer
from .network import SBNN, apply_genome, load_network
from .pruning import global_magnitude_prune
from .report import analysis_report

# flag name -> config field
EVOLVE_FLAGS = {
    "task": str,
    "model": str,
    "hidden": int,
    "prune_rate": float,
    "prune_time": int,
    "eta": float,
    "budget": int,
    "budget_unit": str,
    "episodes": int,
    "runs": int,
    "seed": int,
    "out": str,
    "sigma": float,
    "cycle_mode": str,
    "workers": int,
}


def load_remap(value: str | None) -> RemapSpec | None:
    """A preset name (``lander:cartpole``) or a JSON file with
    ``input_map`` and ``output_map`` lists."""
    if value is None:
        return None
    if value.startswith("lander:"):
        return LANDER_PRESETS[value.split(":", 1)[1]]
    doc = json.loads(Path(value).read_text())
    return RemapSpec.from_dict(doc.get("remap", doc))


def cmd_evolve(args) -> int:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for name in EVOLVE_FLAGS:
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    records = run_experiment(config)
    for rec in records:
        print(f"run {rec.run}: fitness {rec.fitness:.2f} working {rec.working_pct:.1f}% {rec.structure}")
    return 0 if len(records) == config.runs else 1


def cmd_validate(args) -> int:
    mean = validate_transfer(args.network, args.target, load_remap(args.remap_config), args.episodes, args.seed)
    print(f"{mean:.4f}")
    return 0


def cmd_report(args) -> int:
    rep = analysis_report(args.dir, args.out)
    for path in rep.files:
        print(path)
    return 0


def _trace_agent(args):
    if args.run:
        run = Path(args.run)
        config = ExperimentConfig.load(run / "config.json")
        record = json.loads((run / "record.json").read_text())
        net = apply_genome(config.topology(), np.array(record["genome"]))
        seeds = episode_seeds(config.seed, record["run"], record["generation"], config.episodes)
        if config.model == SBNN:
            return Agent.sbnn(net, config.eta, config.cycle_mode), config, seeds
        return Agent.frozen(global_magnitude_prune(net, config.prune_rate)[0]), config, seeds
    net = load_network(args.network)
    return Agent.frozen(net), None, episode_seeds(args.seed, 0, 0, args.episodes)


def cmd_trace(args) -> int:
    """Per-step CSV: episode, step, phase, observation, action, reward."""
    agent, config, seeds = _trace_agent(args)
    task = args.task or (config.task if config else None)
    if task is None:
        raise ConfigError("--task is required with --network")
    remap = load_remap(args.remap_config)
    env = wrap_remapped(agent.net.n_inputs, agent.net.n_outputs, task, remap) if remap else make_env(task)
    dim = env_spec(task).observation_dim
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["episode", "step", "phase", *[f"obs_{k}" for k in range(dim)], "action", "reward"])
        for episode, seed in enumerate(seeds[: args.episodes], start=1):
            rows: list = []
            phase = agent.phase
            run_episode(agent, env, int(seed), rows)
            for t, obs, action, reward in rows:
                w.writerow([episode, t, phase, *(repr(float(x)) for x in obs), action, reward])
            if config and config.model == SBNN and agent.plastic and episode == config.prune_time:
                agent.prune(config.prune_rate, episode)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evolve", help="run CMA-ES on one configuration")
    ev.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    for name, kind in EVOLVE_FLAGS.items():
        ev.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    ev.set_defaults(func=cmd_evolve)

    va = sub.add_parser("validate", help="evaluate a saved network on a (possibly different) task")
    va.add_argument("--network", required=True)
    va.add_argument("--target", required=True)
    va.add_argument("--remap-config", help="JSON with input_map/output_map, or lander:<task>")
    va.add_argument("--episodes", type=int, default=100)
    va.add_argument("--seed", type=int, default=0)
    va.set_defaults(func=cmd_validate)

    rp = sub.add_parser("report", help="summarise a directory of runs")
    rp.add_argument("--dir", required=True)
    rp.add_argument("--out", help="where to write the CSVs (default: --dir)")
    rp.set_defaults(func=cmd_report)

    tr = sub.add_parser("trace", help="per-step CSV of a run or a saved network")
    src = tr.add_mutually_exclusive_group(required=True)
    src.add_argument("--run", help="run directory; replays the best genome's lifecycle")
    src.add_argument("--network", help="saved network JSON, replayed frozen")
    tr.add_argument("--task")
    tr.add_argument("--remap-config")
    tr.add_argument("--episodes", type=int, default=1)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", help="CSV path (default: stdout)")
    tr.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
