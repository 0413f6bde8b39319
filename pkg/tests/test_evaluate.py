import math

import numpy as np
import pytest

from helpers import tiny_config, wall_scenario
from smdpnav.config import TrainConfig
from smdpnav.evaluate import (EvalReport, ScenarioResult, ablation_sweep, constant_action_fn, evaluate, evaluate_fn,
                              run_episode, scenario_seed)
from smdpnav.policy import build_networks, save_checkpoint
from smdpnav.scenarios import Scenario, preset
from smdpnav.sim.world import WorldMap
from smdpnav.smdp import ExecutableAction, Pose


def empty_scenario(size=40.0, goal=(39.0, 39.0), start=(20.0, 20.0)):
    world = WorldMap(np.zeros((int(size / 0.1), int(size / 0.1)), bool), 0.1)
    return Scenario(world, Pose(*start, 0.0), np.array(goal), preset("sparse"), (0, 0, 0, 0), (0, 0, 0, 0))


CFG = TrainConfig(local_map_resolution=0.2, lidar_beams=61)


def test_spawn_at_goal():
    sc = empty_scenario(goal=(20.2, 20.0))
    ep = run_episode(sc, constant_action_fn(ExecutableAction(0.6, 0.0, 1.0)), CFG)
    assert ep.success and ep.decisions == 1 and ep.seconds == 0.0
    rep = EvalReport({"x": ScenarioResult("x", [ep])}, 0, "mode1")
    assert rep.summaries()[0]["success_rate"] == 1.0 and rep.summaries()[0]["reach_time"] == 0.0


def test_path_length_identity_on_circle():
    sc = empty_scenario()
    a = ExecutableAction(0.6, 0.9, 0.7)
    ep = run_episode(sc, constant_action_fn(a), CFG, max_decisions=50)
    assert ep.outcome == "timeout" and ep.decisions == 50
    assert ep.path_length == pytest.approx(0.6 * ep.seconds, abs=1e-6)
    assert ep.seconds == pytest.approx(50 * 0.7, abs=1e-9)
    assert ep.mean_fst == pytest.approx(0.7)


def test_collision_outcome():
    ep = run_episode(wall_scenario(0.2), constant_action_fn(ExecutableAction(0.6, 0.0, 2.0)), CFG)
    assert ep.outcome == "collided" and not ep.success


def test_metrics_exclude_failures():
    eps = [run_episode(empty_scenario(goal=(20.2, 20.0)), constant_action_fn(ExecutableAction(0.6, 0, 1)), CFG),
           run_episode(wall_scenario(0.2), constant_action_fn(ExecutableAction(0.6, 0, 2)), CFG)]
    r = ScenarioResult("m", eps)
    assert r.success_rate == 0.5 and r.collision_rate == 0.5
    assert r.reach_time == 0.0 and r.mean_decisions == 1.0


def test_random_policy_fails_on_zigzag(tmp_path):
    cfg = tiny_config()
    pol, val = build_networks(cfg.net_config, 0)
    ck = save_checkpoint(tmp_path / "r.bin", pol, val, step=0, epoch=0, extra={"config": cfg.to_dict()})
    rep = evaluate(ck, ["zigzag"], 10, seed=1)
    assert rep.results["zigzag"].success_rate < 0.1


def test_evaluate_is_reproducible_and_writes(tmp_path):
    cfg = tiny_config()
    pol, val = build_networks(cfg.net_config, 0)
    ck = save_checkpoint(tmp_path / "r.bin", pol, val, step=0, epoch=0, extra={"config": cfg.to_dict()})
    before = ck.read_bytes()
    a = evaluate(ck, ["desk", "sparse"], 3, seed=5)
    b = evaluate(ck, ["desk", "sparse"], 3, seed=5)
    assert ck.read_bytes() == before
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    a.write_episodes_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().count("\n") == 7
    assert "desk" in a.table() and list(a.results) == ["desk", "sparse"]


def test_evaluate_architecture_mismatch(tmp_path):
    cfg = tiny_config()
    pol, val = build_networks(cfg.net_config, 0)
    ck = save_checkpoint(tmp_path / "r.bin", pol, val, step=0, epoch=0, extra={"config": cfg.to_dict()})
    with pytest.raises(ValueError):
        evaluate(ck, ["desk"], 1, cfg=TrainConfig())
    with pytest.raises(ValueError):
        evaluate_fn(constant_action_fn(ExecutableAction(0.1, 0, 1)), ["desk"], 0)


def test_scenario_seeds_are_stable_and_distinct():
    assert scenario_seed(0, 3) == scenario_seed(0, 3)
    assert len({scenario_seed(0, i) for i in range(100)}) == 100


def test_sweep_records_failures(tmp_path):
    base = tiny_config(epochs=1)
    calls = []

    def fake_train(cfg, out):
        calls.append((cfg.estimator, cfg.seed))
        if cfg.estimator == "td0":
            raise RuntimeError("boom")
        from smdpnav.trainer import train

        return train(cfg, out)

    rep = ablation_sweep(base, ["AFST", "-EGAE"], [0], ["desk"], 2, out_dir=tmp_path, train_fn=fake_train)
    assert calls == [("egae", 0), ("td0", 0)]
    bad = [r for r in rep.rows if r.variant == "-EGAE"]
    assert bad and all("boom" in r.error for r in bad)
    assert not math.isnan(rep.mean_sr("AFST")) and math.isnan(rep.mean_sr("-EGAE"))
    assert (tmp_path / "sweep.csv").exists() and "err" in (tmp_path / "sweep.txt").read_text()


def test_sweep_single_variant_is_one_evaluation(tmp_path):
    base = tiny_config(epochs=1)
    rep = ablation_sweep(base, ["AFST"], [0], ["desk"], 3, eval_seed=9, out_dir=tmp_path)
    from smdpnav.trainer import train
    from smdpnav.evaluate import evaluate_policy

    res = train(base, None)
    direct = evaluate_policy(res.policy, base, ["desk"], 3, 9)
    assert rep.mean_sr("AFST", "desk") == direct.results["desk"].success_rate


def test_sweep_accepts_prebuilt_runs(tmp_path):
    from smdpnav.trainer import train

    base = tiny_config(epochs=1)
    done = train(base, None)
    rep = ablation_sweep(base, ["AFST"], [0], ["desk"], 2, out_dir=tmp_path, train_fn=lambda cfg, out: done)
    assert not any(r.error for r in rep.rows)
    assert (tmp_path / "AFST" / "seed0" / "eval.csv").exists()
