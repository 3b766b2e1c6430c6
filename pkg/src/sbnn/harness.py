"""Fitness evaluation, evolutionary runs, persistence and transfer validation."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import cma, fast
from .condensation import SCC, ActivationSchedule, random_order_schedule
from .engine import Agent, condensed_schedule, run_lifecycle
from .envs import RemapSpec, env_spec, make_env, wrap_remapped
from .network import FFNN, SBNN, Network, apply_genome, build_topology, genome_length, load_network, save_network
from .plasticity import DEFAULT_ETA
from .pruning import PruneEvent, classify_structure, global_magnitude_prune, working_mask

log = logging.getLogger(__name__)

EVALUATIONS = "evaluations"
EPISODES = "episodes"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "cartpole"
    model: str = SBNN
    hidden: int = 3
    prune_rate: float = 40.0
    prune_time: int = 5
    eta: float = DEFAULT_ETA
    budget: int = 2000
    budget_unit: str = EVALUATIONS
    episodes: int = 100
    runs: int = 1
    seed: int = 0
    out: str = "runs"
    sigma: float = 0.5
    cycle_mode: str = SCC
    workers: int = 1

    def validate(self) -> ExperimentConfig:
        env_spec(self.task)
        if self.model not in (SBNN, FFNN):
            raise ConfigError(f"model must be {SBNN!r} or {FFNN!r}")
        if self.budget <= 0:
            raise ConfigError("budget must be positive")
        if self.budget_unit not in (EVALUATIONS, EPISODES):
            raise ConfigError(f"budget_unit must be {EVALUATIONS!r} or {EPISODES!r}")
        if self.evaluation_budget < 1:
            raise ConfigError("budget is smaller than one fitness evaluation")
        if not 0 <= self.prune_rate <= 100:
            raise ConfigError("prune_rate must be in [0, 100]")
        if self.episodes < 1 or self.runs < 1:
            raise ConfigError("episodes and runs must be >= 1")
        if self.model == SBNN and not 1 <= self.prune_time < self.episodes:
            raise ConfigError("prune_time must satisfy 1 <= prune_time < episodes")
        if self.model == FFNN and self.hidden < 1:
            raise ConfigError("the baseline needs at least one hidden node")
        if not math.isfinite(self.eta):
            raise ConfigError("eta must be finite")
        return self

    @property
    def evaluation_budget(self) -> int:
        if self.budget_unit == EPISODES:
            return self.budget // self.episodes
        return self.budget

    def topology(self) -> Network:
        spec = env_spec(self.task)
        return build_topology(self.model, spec.observation_dim, self.hidden, spec.action_count)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def episode_seeds(master: int, run: int, generation: int, n: int) -> np.ndarray:
    """Per-episode uint32 seeds. Independent of the genome, so every member
    of a generation faces the same initial conditions."""
    return np.random.SeedSequence([master, run, generation]).generate_state(n)


def optimizer_seed(master: int, run: int) -> int:
    return int(np.random.SeedSequence([master, run, 2**31 - 1]).generate_state(1)[0])


def sbnn_fitness(rewards, prune_time: int) -> tuple[float, float, float]:
    """(fitness, pre-pruning mean, post-pruning mean)."""
    r = np.asarray(rewards, dtype=float)
    pre = float(np.mean(r[:prune_time]))
    post = float(np.mean(r[prune_time:]))
    return (pre + post) / 2, pre, post


@dataclass
class Evaluation:
    rewards: np.ndarray
    fitness: float
    pre_mean: float | None
    post_mean: float
    network: Network
    schedule: ActivationSchedule
    prune_event: PruneEvent | None


def evaluate_genome(genome, config: ExperimentConfig, seeds, engine: str = "fast") -> Evaluation:
    """Run the full lifecycle of one genome over ``len(seeds)`` episodes.

    SBNN: plastic episodes ``1..prune_time``, prune, then frozen episodes.
    FFNN: prune the evolved weights first, then frozen episodes.
    """
    net = apply_genome(config.topology(), genome)
    task = config.task
    if config.model == SBNN:
        pt = config.prune_time
        if engine == "python":
            agent = Agent.sbnn(net, config.eta, config.cycle_mode)
            rewards = np.array(
                run_lifecycle(agent, make_env(task), seeds, config.prune_rate, pt)
            )
            net, schedule, event = agent.net, agent.schedule, agent.prune_event
        else:
            pre = fast.run_episodes(
                net, random_order_schedule(net.hidden_nodes), task, seeds[:pt], config.eta, True
            )
            net, event = global_magnitude_prune(net, config.prune_rate, pt)
            schedule = condensed_schedule(net, config.cycle_mode)
            post = fast.run_episodes(net, schedule, task, seeds[pt:])
            rewards = np.concatenate([pre, post])
        fitness, pre_mean, post_mean = sbnn_fitness(rewards, pt)
        return Evaluation(rewards, fitness, pre_mean, post_mean, net, schedule, event)

    net, event = global_magnitude_prune(net, config.prune_rate, 0)
    if engine == "python":
        agent = Agent.frozen(net, config.cycle_mode)
        rewards = np.array(run_lifecycle(agent, make_env(task), seeds, config.prune_rate, None))
        schedule = agent.schedule
    else:
        schedule = condensed_schedule(net, config.cycle_mode)
        rewards = fast.run_episodes(net, schedule, task, seeds)
    mean = float(np.mean(rewards))
    return Evaluation(rewards, mean, None, mean, net, schedule, event)


@dataclass
class RunRecord:
    run: int
    seed: int
    generation: int
    episode_rewards: list[float]
    fitness: float
    pre_mean: float | None
    post_mean: float
    prune_event: dict[str, Any] | None
    working_connections: int
    total_connections: int
    working_pct: float
    structure: str
    elapsed: float = 0.0
    evaluations: int = 0
    genome: list[float] = field(default_factory=list)

    def recomputed_fitness(self, model: str, prune_time: int) -> float:
        if model == SBNN:
            return sbnn_fitness(self.episode_rewards, prune_time)[0]
        return float(np.mean(self.episode_rewards))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunRecord:
        return cls(**doc)


def make_record(ev: Evaluation, genome, run: int, seed: int, generation: int) -> RunRecord:
    mask = working_mask(ev.network)
    total = ev.network.n_connections
    working_net = ev.network.copy()
    working_net.active = mask
    return RunRecord(
        run=run,
        seed=seed,
        generation=generation,
        episode_rewards=[float(r) for r in ev.rewards],
        fitness=ev.fitness,
        pre_mean=ev.pre_mean,
        post_mean=ev.post_mean,
        prune_event=dataclasses.asdict(ev.prune_event) if ev.prune_event else None,
        working_connections=int(mask.sum()),
        total_connections=total,
        working_pct=100.0 * int(mask.sum()) / total,
        structure=str(classify_structure(working_net)),
        genome=[float(g) for g in genome],
    )


def evaluate_sbnn(genome, config: ExperimentConfig, seed: int, run: int = 0, generation: int = 0) -> RunRecord:
    if config.model != SBNN:
        raise ConfigError("evaluate_sbnn needs an sbnn config")
    seeds = episode_seeds(seed, run, generation, config.episodes)
    return make_record(evaluate_genome(genome, config, seeds), genome, run, seed, generation)


def evaluate_ffnn(genome, config: ExperimentConfig, seed: int, run: int = 0, generation: int = 0) -> RunRecord:
    if config.model != FFNN:
        raise ConfigError("evaluate_ffnn needs an ffnn config")
    seeds = episode_seeds(seed, run, generation, config.episodes)
    return make_record(evaluate_genome(genome, config, seeds), genome, run, seed, generation)


# -- evolution -------------------------------------------------------------


def _fitness_job(args) -> float:
    genome, config, seeds = args
    return evaluate_genome(genome, config, seeds).fitness


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


TRACE_HEADER = ["generation", "evals", "best", "median", "sigma"]
MANIFEST_HEADER = [
    "run",
    "seed",
    "fitness",
    "pre_mean",
    "post_mean",
    "working_connections",
    "working_pct",
    "structure",
    "evaluations",
    "elapsed",
    "path",
]


@dataclass
class RunResult:
    record: RunRecord
    trace: list[list[Any]]
    evaluation: Evaluation


def evolve_run(config: ExperimentConfig, run: int, pool: ProcessPoolExecutor | None = None) -> RunResult:
    """One CMA-ES run; returns the best genome's record and the trace.

    The best genome is the one with the highest fitness seen in any
    generation; its record is recomputed on that generation's episode seeds,
    so the stored fitness equals the fitness the optimizer saw.
    """
    start = time.perf_counter()
    n = genome_length(config.topology())
    state = cma.cma_init(n, optimizer_seed(config.seed, run), config.sigma)
    trace: list[list[Any]] = []
    best = (-math.inf, None, 0)
    budget = config.evaluation_budget
    while state.evaluations < budget:
        xs = cma.ask(state)
        seeds = episode_seeds(config.seed, run, state.generation, config.episodes)
        jobs = [(x, config, seeds) for x in xs]
        fits = list(pool.map(_fitness_job, jobs)) if pool else [_fitness_job(j) for j in jobs]
        top = int(np.argmax(fits))
        if fits[top] > best[0]:
            best = (fits[top], xs[top].copy(), state.generation)
        cma.tell(state, xs, fits)
        trace.append([state.generation, state.evaluations, max(fits), float(np.median(fits)), state.sigma])
    _, genome, generation = best
    seeds = episode_seeds(config.seed, run, generation, config.episodes)
    ev = evaluate_genome(genome, config, seeds)
    record = make_record(ev, genome, run, config.seed, generation)
    record.evaluations = state.evaluations
    record.elapsed = time.perf_counter() - start
    return RunResult(record, trace, ev)


def write_run(out_dir: Path, config: ExperimentConfig, result: RunResult) -> Path:
    """Write one run directory atomically (staging dir, then rename)."""
    final = out_dir / f"run_{result.record.run:03d}"
    staging = out_dir / f".{final.name}.tmp"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    (staging / "config.json").write_text(json.dumps(config.to_dict(), indent=1))
    _write_csv(staging / "trace.csv", TRACE_HEADER, result.trace)
    save_network(result.evaluation.network, staging / "network.json", result.evaluation.schedule.to_json())
    (staging / "record.json").write_text(json.dumps(result.record.to_dict(), indent=1))
    ev = result.record.prune_event
    _write_csv(
        staging / "prune.csv",
        ["episode", "rate", "threshold", "removed"],
        [[ev["episode_index"], ev["pruning_rate"], ev["threshold"], ev["removed"]]] if ev else [],
    )
    if final.exists():
        shutil.rmtree(final)
    os.replace(staging, final)
    return final


def _write_manifest(out_dir: Path, rows: list[list[Any]]) -> None:
    tmp = out_dir / ".manifest.csv.tmp"
    _write_csv(tmp, MANIFEST_HEADER, rows)
    os.replace(tmp, out_dir / "manifest.csv")


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """All runs of one configuration. A failing run is logged and skipped."""
    config.validate()
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[RunRecord] = []
    rows: list[list[Any]] = []
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for run in range(config.runs):
            try:
                result = evolve_run(config, run, pool)
            except Exception:
                log.exception("run %d failed", run)
                continue
            path = write_run(out_dir, config, result)
            rec = result.record
            records.append(rec)
            rows.append(
                [
                    rec.run,
                    rec.seed,
                    rec.fitness,
                    rec.pre_mean if rec.pre_mean is not None else "",
                    rec.post_mean,
                    rec.working_connections,
                    rec.working_pct,
                    rec.structure,
                    rec.evaluations,
                    f"{rec.elapsed:.3f}",
                    path.name,
                ]
            )
            _write_manifest(out_dir, rows)
            log.info("run %d: fitness %.2f (%s)", run, rec.fitness, rec.structure)
    finally:
        if pool:
            pool.shutdown()
    return records


# -- transfer --------------------------------------------------------------


def validate_transfer(
    network: Network | str | Path,
    target: str,
    remap: RemapSpec | None = None,
    episodes: int = 100,
    seed: int = 0,
) -> float:
    """Mean reward of a frozen network on ``target`` through ``remap``.

    No plasticity and no further pruning; the activation schedule is rebuilt
    from the active connections.
    """
    net = network if isinstance(network, Network) else load_network(network)
    remap = remap or RemapSpec.identity(env_spec(target))
    view = wrap_remapped(net.n_inputs, net.n_outputs, target, remap)
    schedule = condensed_schedule(net)
    seeds = episode_seeds(seed, 0, 0, episodes)
    rewards = fast.run_episodes(
        net, schedule, target, seeds, input_index=view.input_index, allowed=view.allowed_outputs
    )
    return float(np.mean(rewards))
