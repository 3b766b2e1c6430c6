import csv
import json

import numpy as np
import pytest

from sbnn import fast
from sbnn.cli import main
from sbnn.engine import condensed_schedule
from sbnn.envs import LANDER_PRESETS, CartPole, RemapError, RemapSpec
from sbnn.harness import (
    ConfigError,
    ExperimentConfig,
    RunRecord,
    episode_seeds,
    evaluate_ffnn,
    evaluate_genome,
    evaluate_sbnn,
    run_experiment,
    sbnn_fitness,
    validate_transfer,
)
from sbnn.network import build_sbnn_topology, genome_length, load_network, network_from_edges, save_network
from sbnn.report import EmptyRunDirectoryError, analysis_report, parameter_table, post_prune_boost, working_histogram


def small(tmp_path=None, **kw):
    base = dict(task="cartpole", hidden=2, episodes=10, prune_time=2, budget=24, out=str(tmp_path or "unused"))
    base.update(kw)
    return ExperimentConfig(**base).validate()


def test_sbnn_fitness_pt1():
    r = np.array([-90.0] + [-120.0] * 98 + [-150.0])
    fitness, pre, post = sbnn_fitness(r, 1)
    assert pre == -90.0
    assert post == pytest.approx((-120 * 98 - 150) / 99, abs=1e-12)
    assert fitness == (pre + post) / 2


def test_zero_genome_mountaincar():
    config = ExperimentConfig(task="mountaincar", hidden=3, prune_rate=60, prune_time=10)
    n = genome_length(config.topology())
    rec = evaluate_sbnn(np.zeros(n), config, seed=0)
    assert rec.fitness == -200.0 and rec.pre_mean == -200.0 and rec.post_mean == -200.0
    assert len(rec.episode_rewards) == 100


def test_ffnn_unpruned_matches_direct_evaluation():
    config = ExperimentConfig(task="cartpole", model="ffnn", hidden=3, prune_rate=0)
    genome = np.random.default_rng(0).normal(size=genome_length(config.topology()))
    rec = evaluate_ffnn(genome, config, seed=4)
    assert rec.prune_event["removed"] == 0
    ev = evaluate_genome(genome, config, episode_seeds(4, 0, 0, 100))
    assert rec.fitness == float(np.mean(ev.rewards))


def test_ffnn_fully_pruned_is_constant_left_policy():
    config = ExperimentConfig(task="cartpole", model="ffnn", hidden=3, prune_rate=100)
    genome = np.random.default_rng(1).normal(size=genome_length(config.topology()))
    rec = evaluate_ffnn(genome, config, seed=2)
    expected = []
    for s in episode_seeds(2, 0, 0, 100):
        env = CartPole()
        env.reset(np.random.RandomState(int(s)))
        total, done = 0.0, False
        while not done:
            _, r, done = env.step(0)
            total += r
        expected.append(total)
    assert rec.episode_rewards == expected
    assert rec.working_connections == 0 and rec.structure == "zero_layer"


def test_evaluation_deterministic():
    config = ExperimentConfig(task="cartpole", hidden=3, prune_time=5)
    genome = np.random.default_rng(3).normal(size=genome_length(config.topology()))
    assert evaluate_sbnn(genome, config, 7).to_dict() == evaluate_sbnn(genome, config, 7).to_dict()


@pytest.mark.parametrize("model", ["sbnn", "ffnn"])
def test_python_engine_agrees_with_compiled(model):
    config = ExperimentConfig(task="mountaincar", model=model, hidden=3, prune_rate=60, prune_time=3, episodes=8)
    genome = np.random.default_rng(8).normal(size=genome_length(config.topology()))
    seeds = episode_seeds(0, 0, 0, 8)
    a = evaluate_genome(genome, config, seeds, engine="fast")
    b = evaluate_genome(genome, config, seeds, engine="python")
    assert np.array_equal(a.rewards, b.rewards)
    assert np.array_equal(a.network.weights, b.network.weights)
    assert a.schedule == b.schedule


def test_wrong_model_rejected():
    with pytest.raises(ConfigError):
        evaluate_ffnn(np.zeros(4), ExperimentConfig(), 0)


@pytest.mark.parametrize("bad", [
    dict(budget=0),
    dict(prune_time=0),
    dict(prune_time=100),
    dict(prune_rate=120),
    dict(model="rnn"),
    dict(task="acrobot"),
    dict(budget=50, budget_unit="episodes"),
])
def test_invalid_configs(bad):
    with pytest.raises((ConfigError, ValueError)):
        ExperimentConfig(**bad).validate()


def test_budget_zero_writes_nothing(tmp_path):
    out = tmp_path / "runs"
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(budget=0, out=str(out)))
    assert not out.exists()


def test_config_round_trip_and_unknown_keys(tmp_path):
    cfg = small(tmp_path, eta=0.05)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"tsak": "cartpole"})


def test_episode_budget_unit():
    cfg = ExperimentConfig(budget=4000, budget_unit="episodes", episodes=100)
    assert cfg.evaluation_budget == 40


def test_run_experiment_artifacts(tmp_path):
    cfg = small(tmp_path / "out", runs=2, budget=30)
    records = run_experiment(cfg)
    assert [r.run for r in records] == [0, 1]
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == ["manifest.csv", "run_000", "run_001"]
    lam = 4 + int(np.floor(3 * np.log(genome_length(cfg.topology()))))
    for rec in records:
        run = out / f"run_{rec.run:03d}"
        assert {p.name for p in run.iterdir()} == {"config.json", "trace.csv", "network.json", "record.json", "prune.csv"}
        stored = RunRecord.from_dict(json.loads((run / "record.json").read_text()))
        assert stored.recomputed_fitness(cfg.model, cfg.prune_time) == stored.fitness
        assert cfg.evaluation_budget <= stored.evaluations <= cfg.evaluation_budget + lam - 1
        with open(run / "trace.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["generation", "evals", "best", "median", "sigma"]
        assert max(float(r[2]) for r in rows[1:]) == stored.fitness
        with open(run / "prune.csv") as fh:
            prune_rows = list(csv.reader(fh))
        assert prune_rows[0] == ["episode", "rate", "threshold", "removed"]
        assert int(prune_rows[1][0]) == cfg.prune_time
        net = load_network(run / "network.json")
        assert int((~net.active).sum()) == int(prune_rows[1][3])
        assert "schedule" in json.loads((run / "network.json").read_text())
    with open(out / "manifest.csv") as fh:
        manifest = list(csv.DictReader(fh))
    assert [m["path"] for m in manifest] == ["run_000", "run_001"]
    assert float(manifest[0]["fitness"]) == records[0].fitness


def test_run_experiment_reproducible(tmp_path):
    a = run_experiment(small(tmp_path / "a"))
    b = run_experiment(small(tmp_path / "b"))
    assert a[0].genome == b[0].genome and a[0].episode_rewards == b[0].episode_rewards


def oscillator(n_inputs, n_outputs, velocity_input, left_output, right_output):
    """Push in the direction of motion: a textbook mountain car policy."""
    edges = [(velocity_input, n_inputs + left_output), (velocity_input, n_inputs + right_output)]
    weights = {edges[0]: -100.0, edges[1]: 100.0}
    return network_from_edges(n_inputs, 0, n_outputs, sorted(edges), weights)


def test_validate_identity_remap(tmp_path):
    net = oscillator(2, 3, 1, 0, 2)
    path = tmp_path / "net.json"
    save_network(net, path)
    native = validate_transfer(path, "mountaincar", episodes=30)
    seeds = episode_seeds(0, 0, 0, 30)
    direct = fast.run_episodes(net, condensed_schedule(net), "mountaincar", seeds)
    assert native == float(np.mean(direct))
    assert -200 < native <= -80


def test_validate_lander_shaped_network():
    # velocity arrives on input 2; actions 0, 1, 2 live on outputs 1, 2, 3 so
    # ties still resolve to action 0
    remap = RemapSpec((0, 2), (1, 2, 3))
    lander = oscillator(8, 4, 2, 1, 3)
    native = oscillator(2, 3, 1, 0, 2)
    assert validate_transfer(lander, "mountaincar", remap, 30) == validate_transfer(native, "mountaincar", None, 30)


def test_validate_preset_ties_follow_network_index():
    # under the lander preset output 0 (noop) wins an all-zero tie
    net = build_sbnn_topology(8, 0, 4)
    assert validate_transfer(net, "mountaincar", LANDER_PRESETS["mountaincar"], 3) == -200.0


def test_validate_zero_network_constant_reward():
    net = build_sbnn_topology(8, 2, 4)
    assert validate_transfer(net, "mountaincar", LANDER_PRESETS["mountaincar"], 10) == -200.0


def test_validate_bad_remap():
    net = build_sbnn_topology(8, 2, 4)
    with pytest.raises(RemapError):
        validate_transfer(net, "mountaincar", RemapSpec((0, 2), (0, 1)), 5)


def fake_records(tmp_path, pcts, structures, fitness=None):
    for k, (pct, s) in enumerate(zip(pcts, structures)):
        run = tmp_path / f"run_{k:03d}"
        run.mkdir(parents=True)
        f = fitness[k] if fitness else -100.0 - k
        rec = RunRecord(k, 0, 0, [f], f, f - 5, f + 5, None, 0, 100, pct, s)
        (run / "record.json").write_text(json.dumps(rec.to_dict()))


def test_report_histogram_half_in_forty_bin(tmp_path):
    pcts = [35.0] * 15 + [12.0] * 10 + [100.0] * 5
    fake_records(tmp_path, pcts, ["mixed"] * 30)
    rep = analysis_report(tmp_path)
    assert rep.histogram[40] == 0.5
    assert rep.histogram[20] == pytest.approx(1 / 3)
    assert sum(rep.histogram.values()) == pytest.approx(1.0)
    assert all(p.exists() for p in rep.files)


def test_report_structure_counts(tmp_path):
    fake_records(tmp_path, [10.0] * 4, ["zero_layer"] * 4)
    assert analysis_report(tmp_path).structures == {"zero_layer": 4}


def test_report_fitness_stats(tmp_path):
    fake_records(tmp_path, [50.0] * 3, ["single_layer"] * 3, fitness=[-100.0, -120.0, -110.0])
    stats = analysis_report(tmp_path).fitness
    assert stats["median"] == -110.0 and stats["runs"] == 3
    assert stats["post_gt_pre"] == 1.0


def test_report_empty_dir(tmp_path):
    with pytest.raises(EmptyRunDirectoryError):
        analysis_report(tmp_path)


def test_histogram_bin_edges():
    assert working_histogram([0.0])[10] == 1.0
    assert working_histogram([10.0])[10] == 1.0
    assert working_histogram([100 * 3 / 10])[30] == 1.0
    assert working_histogram([30.5])[40] == 1.0


def test_parameter_table():
    rows = {r[0]: r for r in parameter_table()}
    assert len(rows) == 50
    assert rows[10][1:4] == [20, 80, 4 * (100 + 20 + 1)]
    for h, ffnn, hebbian, sbnn, c, built in rows.values():
        assert c == h * h + 2 * h + 1 == built
        assert ffnn < hebbian < sbnn


def test_boost_sign_convention():
    assert post_prune_boost(-120.0, -108.0) == pytest.approx(0.1)
    assert post_prune_boost(100.0, 110.0) == pytest.approx(0.1)
    assert post_prune_boost(-100.0, -110.0) < 0


def test_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "runs"
    args = ["evolve", "--task", "cartpole", "--model", "sbnn", "--hidden", "2", "--prune-rate", "40",
            "--prune-time", "2", "--eta", "0.1", "--budget", "12", "--runs", "1", "--seed", "3",
            "--episodes", "6", "--out", str(out)]
    assert main(args) == 0
    assert (out / "run_000" / "network.json").exists()

    assert main(["report", "--dir", str(out)]) == 0
    assert (out / "report_parameters.csv").exists()

    remap = tmp_path / "remap.json"
    remap.write_text(json.dumps({"input_map": [0, 1, 2, 3], "output_map": [1, 0]}))
    capsys.readouterr()
    assert main(["validate", "--network", str(out / "run_000" / "network.json"), "--target", "cartpole",
                 "--remap-config", str(remap), "--episodes", "3"]) == 0
    mean = float(capsys.readouterr().out)
    assert 1 <= mean <= 500

    trace = tmp_path / "trace.csv"
    assert main(["trace", "--run", str(out / "run_000"), "--episodes", "6", "--out", str(trace)]) == 0
    with open(trace) as fh:
        rows = list(csv.DictReader(fh))
    record = json.loads((out / "run_000" / "record.json").read_text())
    per_episode = [sum(float(r["reward"]) for r in rows if r["episode"] == str(e)) for e in range(1, 7)]
    assert per_episode == record["episode_rewards"]
    assert {r["phase"] for r in rows} == {"pre_prune", "post_prune"}


def test_cli_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "mountaincar", "hidden": 1, "episodes": 4, "prune_time": 1,
                               "budget": 1, "out": str(tmp_path / "from_file")}))
    out = tmp_path / "from_flag"
    assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
    stored = json.loads((out / "run_000" / "config.json").read_text())
    assert stored["task"] == "mountaincar" and stored["hidden"] == 1
    assert not (tmp_path / "from_file").exists()


def test_cli_reports_errors(tmp_path, capsys):
    assert main(["evolve", "--budget", "0", "--out", str(tmp_path / "x")]) == 2
    assert "budget" in capsys.readouterr().err
    assert main(["report", "--dir", str(tmp_path)]) == 2


def test_failing_run_is_skipped(tmp_path, monkeypatch):
    from sbnn import harness

    real = harness.evolve_run

    def flaky(config, run, pool=None):
        if run == 1:
            raise FloatingPointError("boom")
        return real(config, run, pool)

    monkeypatch.setattr(harness, "evolve_run", flaky)
    records = run_experiment(small(tmp_path / "out", runs=3, budget=12))
    assert [r.run for r in records] == [0, 2]
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert names == ["manifest.csv", "run_000", "run_002"]
