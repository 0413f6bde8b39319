import math

import numpy as np
import pytest
import torch

from helpers import tiny_config, wall_scenario
from smdpnav.config import variant_config
from smdpnav.egae import td_residuals
from smdpnav.policy import build_networks, load_checkpoint
from smdpnav.smdp import DiscountSpec
from smdpnav.trainer import (ExperienceBuffer, NavEnv, TrainingDiverged, convert_action, make_optimizers,
                             read_metrics, rollout_epoch, train, update, worker_budgets)


def nets(cfg, seed=0):
    return build_networks(cfg.net_config, seed)


def envs_for(cfg, scenario_fn=None):
    return [NavEnv(cfg, scenario_fn=scenario_fn) for _ in range(cfg.n_workers)]


def test_worker_budgets():
    assert worker_budgets(10, 3) == [4, 3, 3]
    assert sum(worker_budgets(4096, 8)) == 4096


def test_single_step_collision_episode():
    cfg = tiny_config(steps_per_epoch=1, n_workers=1)
    pol, val = nets(cfg)
    with torch.no_grad():
        pol.mean.bias.copy_(torch.tensor([5.0, 0.0]))  # fast and nearly straight
        pol.log_std.fill_(math.log(0.01))
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg, lambda rng: wall_scenario()), 0)
    assert len(buf.episodes) == 1
    ep = buf.episodes[0]
    assert len(ep) == 1 and ep.terminal_kind == "collided" and not ep.truncated
    s = ep.steps[0]
    assert s.reward < -450
    assert ep.advantages[0] == pytest.approx(s.reward - s.value_estimate, abs=1e-9)
    assert ep.returns[0] == pytest.approx(s.reward)


def test_rollout_is_deterministic():
    cfg = tiny_config()
    pol, val = nets(cfg)
    a = rollout_epoch(cfg, pol, val, envs_for(cfg), 3)
    b = rollout_epoch(cfg, pol, val, envs_for(cfg), 3)
    assert len(a) == len(b) == cfg.steps_per_epoch
    for x, y in zip(a.steps(), b.steps()):
        assert np.array_equal(x.raw_action, y.raw_action) and x.reward == y.reward and x.tau == y.tau
        assert np.array_equal(x.observation.local_map, y.observation.local_map)
    for e1, e2 in zip(a.episodes, b.episodes):
        assert np.array_equal(e1.advantages, e2.advantages)


def test_buffer_contents():
    cfg = tiny_config()
    pol, val = nets(cfg)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    for ep in buf.episodes:
        assert ep.finalized and len(ep.advantages) == len(ep.returns) == len(ep)
        assert len(ep) <= cfg.max_episode_steps
        if ep.terminal_kind == "timeout" and not ep.truncated:
            assert len(ep) == cfg.max_episode_steps
        for s in ep.steps:
            assert 0 <= s.tau <= s.action.d
    # at most one budget-truncated episode per worker
    assert sum(e.truncated for e in buf.episodes) <= cfg.n_workers


def test_td0_stores_residuals():
    cfg = variant_config(tiny_config(), "-EGAE")
    pol, val = nets(cfg)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    for ep in buf.episodes:
        assert ep.advantages == pytest.approx(td_residuals(ep.rewards, ep.taus, ep.values, cfg.discount), abs=1e-9)


def test_convert_action_paths():
    cfg = tiny_config()
    assert convert_action([0.5, 0.0], cfg).d == pytest.approx(0.5 / 0.6 * 0.4)
    assert convert_action([-1.0, 0.0], cfg.replace(use_elu=False)).v == 0.0
    a3 = convert_action([0.3, 0.2, 0.0], cfg.replace(use_2d_to_3d=False))
    assert (a3.v, a3.omega, a3.d) == pytest.approx((0.3, 0.2, 1.5))
    assert convert_action([0.5, 0.1], cfg.replace(force_duration=1.0)).d == 1.0
    assert cfg.replace(use_2d_to_3d=False).net_config.action_dim == 3


def test_fresh_ratios_are_one():
    cfg = tiny_config()
    pol, val = nets(cfg)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    popt, vopt = make_optimizers(cfg, pol, val)
    stats = update(cfg, pol, val, buf, popt, vopt)
    assert stats["first_ratio_max_dev"] < 1e-6
    assert stats["ratio_mean"] == pytest.approx(1.0, abs=1e-6)


def test_zero_advantage_leaves_policy_unchanged():
    cfg = tiny_config(value_iters=1)
    pol, val = nets(cfg)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    for ep in buf.episodes:
        ep.advantages = np.zeros(len(ep))
    before = {k: v.clone() for k, v in pol.state_dict().items()}
    popt, vopt = make_optimizers(cfg, pol, val)
    stats = update(cfg, pol, val, buf, popt, vopt)
    assert stats["policy_loss"] == 0.0
    for k, v in pol.state_dict().items():
        assert torch.equal(before[k], v)


def test_first_step_follows_gradient_sign():
    cfg = tiny_config(policy_iters=1, value_iters=1, policy_lr=1e-9, chunk_size=1000, dtype="float64")
    pol, val = build_networks(cfg.net_config, 0, torch.float64)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    maps, goals, raws, old, adv, _ = buf.arrays(torch.float64)
    from smdpnav.policy import loss_and_grad, ppo_policy_loss

    _, grads = loss_and_grad(pol, ppo_policy_loss(pol, old, maps, goals, raws, adv, cfg.clip_ratio)[0])
    before = [p.detach().clone() for p in pol.parameters()]
    popt, vopt = make_optimizers(cfg, pol, val)
    update(cfg, pol, val, buf, popt, vopt)
    checked = 0
    for b, p, g in zip(before, pol.parameters(), grads):
        mask = g.abs() > 1e-6
        step = (p.detach() - b)[mask]
        assert torch.all(torch.sign(step) == -torch.sign(g[mask]))
        checked += int(mask.sum())
    assert checked > 10


def test_value_regresses_to_constant():
    cfg = tiny_config(policy_iters=1, value_iters=25, value_lr=3e-3)
    pol, val = nets(cfg)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    for ep in buf.episodes:
        ep.returns = np.full(len(ep), 123.0)
    maps, goals, *_ = buf.arrays()
    popt, vopt = make_optimizers(cfg, pol, val)
    with torch.no_grad():
        err0 = float((val(maps, goals) - 123.0).abs().mean())
    for _ in range(4):
        update(cfg, pol, val, buf, popt, vopt)
    with torch.no_grad():
        err1 = float((val(maps, goals) - 123.0).abs().mean())
    assert err1 < 0.1 * err0


def test_update_rejects_empty_and_nonfinite():
    cfg = tiny_config()
    pol, val = nets(cfg)
    popt, vopt = make_optimizers(cfg, pol, val)
    with pytest.raises(ValueError):
        update(cfg, pol, val, ExperienceBuffer(), popt, vopt)
    buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
    with torch.no_grad():
        val.head.bias.fill_(math.inf)
    with pytest.raises((TrainingDiverged, ValueError)):
        update(cfg, pol, val, buf, popt, vopt)


def test_epochs_zero_returns_initial_checkpoint(tmp_path):
    cfg = tiny_config(epochs=0)
    res = train(cfg, tmp_path)
    ref, _ = build_networks(cfg.net_config, cfg.seed)
    ck = load_checkpoint(tmp_path / "ckpt_0000.bin", cfg.net_config)
    for a, b in zip(ref.state_dict().values(), ck.policy.state_dict().values()):
        assert torch.equal(a, b)
    assert res.metrics == [] and ck.epoch == 0 and ck.step == 0


def test_train_outputs_and_reproducibility(tmp_path):
    cfg = tiny_config(epochs=2)
    a, b = tmp_path / "a", tmp_path / "b"
    ra = train(cfg, a)
    train(cfg, b)
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    for name in ("ckpt_0000.bin", "ckpt_0001.bin", "ckpt_0002.bin", "final.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read_metrics(a / "metrics.csv")
    assert [r["epoch"] for r in rows] == [1, 2]
    assert rows[-1]["env_steps"] == 2 * cfg.steps_per_epoch
    for r in rows:
        assert r["first_ratio_max_dev"] < 1e-6
    assert len(ra.metrics) == 2
    assert (a / "config.yaml").exists() and (a / "timing.csv").exists()


def test_resume_matches_uninterrupted(tmp_path):
    cfg = tiny_config(epochs=2)
    train(cfg, tmp_path / "full")
    train(cfg.replace(epochs=1), tmp_path / "half")
    train(cfg, tmp_path / "rest", resume=tmp_path / "half" / "ckpt_0001.bin")
    full = load_checkpoint(tmp_path / "full" / "final.bin")
    rest = load_checkpoint(tmp_path / "rest" / "final.bin")
    for a, b in zip(full.policy.state_dict().values(), rest.policy.state_dict().values()):
        assert torch.equal(a, b)
    assert (tmp_path / "full" / "metrics.csv").read_bytes() == (tmp_path / "rest" / "metrics.csv").read_bytes()


def test_failure_saves_resumable_checkpoint(tmp_path, monkeypatch):
    import smdpnav.trainer as tr

    cfg = tiny_config(epochs=3)
    real = tr.update
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 2:
            raise TrainingDiverged("injected")
        return real(*a, **k)

    monkeypatch.setattr(tr, "update", flaky)
    with pytest.raises(TrainingDiverged):
        train(cfg, tmp_path)
    ck = load_checkpoint(tmp_path / "failed_0001.bin")
    assert ck.epoch == 1 and ck.step == cfg.steps_per_epoch
    good = load_checkpoint(tmp_path / "ckpt_0001.bin")
    for a, b in zip(good.policy.state_dict().values(), ck.policy.state_dict().values()):
        assert torch.equal(a, b)


def test_duration_degenerate_equivalence():
    base = tiny_config(force_duration=1.0, gamma=0.99)
    smdp, per = base, variant_config(base, "-SMDP")
    out = []
    for cfg in (smdp, per):
        pol, val = nets(cfg)
        buf = rollout_epoch(cfg, pol, val, envs_for(cfg), 0)
        out.append(buf)
    for e1, e2 in zip(*[b.episodes for b in out]):
        assert np.array_equal(e1.advantages, e2.advantages)
        assert np.array_equal(e1.returns, e2.returns)


def test_discount_affects_only_weights():
    cfg = tiny_config()
    assert variant_config(cfg, "-SMDP").discount == DiscountSpec(cfg.gamma, "per-step")
    diff = {k for k, v in variant_config(cfg, "-ELU").to_dict().items() if cfg.to_dict()[k] != v}
    assert diff == {"use_elu"}
