"""Command line entry point: ``smdpnav {train,eval,sweep,render,scenario,bias}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np


def _add_common(p):
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def cmd_train(args) -> int:
    from .config import load_config
    from .plotting import plot_training_curves
    from .trainer import train

    changes = {} if args.seed is None else {"seed": args.seed}
    cfg = load_config(args.config, args.override, **changes)
    out = Path(args.out)
    result = train(cfg, out, resume=args.resume)
    if result.metrics:
        plot_training_curves(result.metrics, out / "training.png")
        last = result.metrics[-1]
        print(f"epochs={last['epoch']} env_steps={last['env_steps']} mean_return={last['mean_return']:.2f} "
              f"success_rate={last['success_rate']:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_eval(args) -> int:
    from .config import load_config
    from .evaluate import evaluate
    from .plotting import plot_eval_summary, render_trajectory
    from .sim.env import write_trajectory

    cfg = load_config(args.config, args.override) if args.config or args.override else None
    report = evaluate(args.checkpoint, args.scenario, args.episodes, args.seed, args.mode, cfg,
                      keep_episodes=args.trajectories > 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "summary.csv")
    report.write_episodes_csv(out / "episodes.csv")
    (out / "summary.txt").write_text(report.table() + "\n")
    plot_eval_summary(report, out / "summary.png")
    for label, res in report.results.items():
        for i, ep in enumerate(res.episodes[:args.trajectories]):
            stem = out / f"{label}_{i:03d}"
            sc = ep.scenario
            write_trajectory(stem.with_suffix(".csv"), ep.rows, sc.start, sc.goal)
            render_trajectory(sc.world, ep.rows, sc.start, sc.goal, stem.with_suffix(".png"), sc.start_region,
                              sc.goal_region, title=f"{label} #{i} {ep.outcome}")
            if i == 0:
                from .sim.world import write_world

                write_world(sc.world, out / f"{label}_{i:03d}_world.pgm")
    print(report.table())
    return 0


def cmd_sweep(args) -> int:
    from .config import load_config
    from .evaluate import ablation_sweep
    from .plotting import plot_sweep

    cfg = load_config(args.config, args.override)
    variants = [v for item in args.variants for v in item.split(",") if v]
    report = ablation_sweep(cfg, variants, args.seeds, args.scenario, args.episodes, args.eval_seed,
                            args.out)
    plot_sweep(report, Path(args.out) / "sweep.png")
    print(report.table())
    return 0


def cmd_render(args) -> int:
    from .plotting import render_trajectory
    from .sim.env import read_trajectory
    from .sim.world import read_world

    rows, start, goal = read_trajectory(args.episode)
    world = read_world(args.world)
    out = args.out or str(Path(args.episode).with_suffix(".png"))
    render_trajectory(world, rows, start, goal, out)
    print(f"wrote {out}")
    return 0


def cmd_scenario(args) -> int:
    from .evaluate import resolve_specs
    from .plotting import render_trajectory
    from .scenarios import generate_scenario
    from .sim.world import write_world

    (label, spec), = resolve_specs(args.scenario).items()
    sc = generate_scenario(spec, args.seed)
    out = Path(args.out)
    write_world(sc.world, out.with_suffix(".pgm"), start=[sc.start.x, sc.start.y, sc.start.theta],
                goal=[float(sc.goal[0]), float(sc.goal[1])], family=spec.family)
    render_trajectory(sc.world, [], sc.start, sc.goal, out.with_suffix(".png"), sc.start_region, sc.goal_region,
                      title=f"{label} seed {args.seed}")
    print(f"wrote {out.with_suffix('.pgm')} and {out.with_suffix('.png')}")
    return 0


def cmd_bias(args) -> int:
    from .egae import EstimatorConfig
    from .smdp import DiscountSpec
    from .tabular import EXAMPLE_POLICY, bias_experiment, example_smdp, exact_values, write_bias_report

    smdp = example_smdp(args.gamma)
    v_exact, _, _ = exact_values(smdp, EXAMPLE_POLICY)
    value_fn = v_exact + args.value_offset
    cfg = EstimatorConfig(args.lam, DiscountSpec(args.gamma))
    rows = bias_experiment(smdp, EXAMPLE_POLICY, value_fn, cfg, args.episodes, args.seed)
    if args.out:
        write_bias_report(rows, args.out)
    print(f"{'s':>2} {'a':>2} {'exact':>10} {'error':>10} {'err/SE':>8} {'centered/SE':>12}")
    for r in rows:
        z = r.error / r.std_error if r.std_error > 0 else float("nan")
        zc = r.centered_error / r.centered_std_error if r.centered_std_error > 0 else float("nan")
        print(f"{r.state:>2} {r.action:>2} {r.exact_advantage:>10.4f} {r.error:>10.4f} {z:>8.2f} {zc:>12.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smdpnav", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy")
    t.add_argument("--config", help="YAML config file")
    t.add_argument("--seed", type=int)
    t.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--out", default="runs/train")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", nargs="+", default=["sparse"], help="family names or layout/spec files")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--mode", choices=["mode1", "mode2"])
    e.add_argument("--config", help="override the config stored in the checkpoint")
    e.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    e.add_argument("--trajectories", type=int, default=0, help="episodes per scenario to save and render")
    e.add_argument("--out", default="runs/eval")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="ablation sweep")
    s.add_argument("--config")
    s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--variants", nargs="+", default=["AFST", "no-ELU", "no-2D-to-3D", "no-EGAE", "no-SMDP"],
                   help="AFST or an ablation; write -EGAE as no-EGAE or use --variants=AFST,-EGAE")
    s.add_argument("--seeds", nargs="+", type=int, default=[0])
    s.add_argument("--scenario", nargs="+", default=["sparse", "dense", "spiral", "zigzag", "hybrid"])
    s.add_argument("--episodes", type=int, default=100)
    s.add_argument("--eval-seed", type=int, default=12345)
    s.add_argument("--out", default="runs/sweep")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("render", help="render a saved trajectory over its world")
    r.add_argument("--episode", required=True, help="trajectory CSV")
    r.add_argument("--world", required=True, help="world image with JSON sidecar")
    r.add_argument("--out")
    r.set_defaults(func=cmd_render)

    g = sub.add_parser("scenario", help="generate one scenario and save its world image")
    g.add_argument("--scenario", default="sparse")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="scenario")
    g.set_defaults(func=cmd_scenario)

    b = sub.add_parser("bias", help="advantage bias experiment on the tabular example")
    b.add_argument("--lam", type=float, default=1.0)
    b.add_argument("--gamma", type=float, default=0.9)
    b.add_argument("--value-offset", type=float, default=0.0, help="added to the exact values")
    b.add_argument("--episodes", type=int, default=100_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bias)

    for sp in (t, e, s, r, g, b):
        _add_common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    np.set_printoptions(precision=4)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
