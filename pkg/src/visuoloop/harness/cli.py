"""Command-line interface.

Subcommands: gen-data, train-planner, train-policy, rollout, bench, sweep,
diagnose, plot. Global flags: --config PATH (JSON bundle), --seed N (offsets
every stage seed), --out DIR (pipeline root; artifacts are cached there).
Every subcommand prints the configuration it resolved to.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..nn import RngStream
from .bench import run_benchmark, run_oracle_benchmark
from .config import BundleConfig, bundle_to_dict, load_bundle, print_resolved
from .diagnostics import (
    measurability_stats,
    replan_separation,
    steps_per_subgoal_histogram,
)
from .pipeline import Pipeline
from .plots import SvgChart, plot_emit, write_csv
from .sweep import AXES, ablation_sweep


def _pipeline(args) -> Pipeline:
    bundle = load_bundle(args.config, args.seed)
    return Pipeline(args.out, bundle)


def cmd_gen_data(args):
    pipe = _pipeline(args)
    print_resolved("gen-data", pipe.bundle)
    ds = pipe.load_data()
    hd = pipe.load_data(heldout=True)
    print(f"wrote {len(ds.episodes)} train / {len(hd.episodes)} held-out episodes to {pipe.root / 'data'}")


def cmd_train_planner(args):
    pipe = _pipeline(args)
    if args.lambda_reg is not None:
        pipe.bundle.planner = replace(pipe.bundle.planner, lambda_reg=args.lambda_reg)
    if args.iters is not None:
        pipe.bundle.planner = replace(pipe.bundle.planner, iters=args.iters)
    print_resolved("train-planner", pipe.bundle)
    stage = pipe.ensure_planner()
    print(f"planner checkpoints in {stage}")


def cmd_train_policy(args):
    pipe = _pipeline(args)
    print_resolved("train-policy", pipe.bundle, {"variant": args.variant})
    stage = pipe.ensure_policy(args.variant)
    print(f"policy checkpoint in {stage}")


def cmd_rollout(args):
    pipe = _pipeline(args)
    exec_cfg = replace(pipe.bundle.executor, mode=args.mode)
    print_resolved("rollout", pipe.bundle, {"episodes": args.episodes, "mode": args.mode})
    from .bench import build_chain_suite
    from ..executor.loop import run_chain_episode

    bundle = pipe.model_bundle()
    planner, ema, policy = bundle.load()
    suite = build_chain_suite(args.episodes, pipe.bundle.bench.suite_seed)
    out = pipe.root / "rollouts"
    out.mkdir(parents=True, exist_ok=True)
    lengths = []
    for i, chain in enumerate(suite):
        stream = RngStream(pipe.bundle.bench.episode_seed).substream(f"episode/{i}")
        log = run_chain_episode(chain, stream, planner, ema, policy, exec_cfg)
        log.write_jsonl(out / f"episode_{i:04d}.jsonl")
        lengths.append(log.tasks_completed)
        print(f"episode {i}: completed {log.tasks_completed}/5 in {log.length} steps "
              f"({log.replan_count} replans)")
    print(f"avg length {np.mean(lengths):.3f}; logs in {out}")


def cmd_bench(args):
    pipe = _pipeline(args)
    exec_cfg = pipe.bundle.executor
    if args.mode:
        exec_cfg = replace(exec_cfg, mode=args.mode)
    if args.d_s is not None:
        exec_cfg = replace(exec_cfg, transition_threshold=args.d_s)
    if args.open_interval is not None:
        exec_cfg = replace(exec_cfg, open_interval=args.open_interval)
    if args.sample_steps is not None:
        exec_cfg = replace(exec_cfg, sample_steps=args.sample_steps)
    bench_cfg = pipe.bundle.bench
    if args.n_chains is not None:
        bench_cfg = replace(bench_cfg, n_chains=args.n_chains)
    pipe.bundle.executor = exec_cfg
    pipe.bundle.bench = bench_cfg
    print_resolved("bench", pipe.bundle, {"oracle": args.oracle, "policy_variant": args.policy_variant})
    out = pipe.root / "bench" / (args.name or ("oracle" if args.oracle else exec_cfg.mode))
    if args.oracle:
        report = run_oracle_benchmark(bench_cfg.n_chains, bench_cfg.suite_seed, bench_cfg.episode_seed,
                                      exec_cfg.step_limit)
        from .bench import write_report

        write_report(report, out)
    else:
        bundle = pipe.model_bundle(policy_variant=args.policy_variant)
        report, _ = run_benchmark(bundle, exec_cfg, bench_cfg, out_dir=out, keep_logs=args.keep_logs)
    print(f"avg length {report.avg_length:.4f}; rates {report.rates}; report in {out}")


def cmd_sweep(args):
    pipe = _pipeline(args)
    values = [v for v in args.values.split(",") if v]
    print_resolved("sweep", pipe.bundle, {"axis": args.axis, "values": values})
    out = pipe.root / "sweeps" / args.axis
    rows = ablation_sweep(pipe, args.axis, values, out, n_chains=args.n_chains)
    for r in rows:
        print(f"{args.axis}={r[0]}: avg_length={r[1]}")
    print(f"sweep table in {out / 'sweep.csv'}")


def cmd_diagnose(args):
    pipe = _pipeline(args)
    print_resolved("diagnose", pipe.bundle, {"episodes": args.episodes, "plans": args.plans})
    out = pipe.root / "diagnostics"
    out.mkdir(parents=True, exist_ok=True)

    bundle = pipe.model_bundle()
    bench_cfg = replace(pipe.bundle.bench, n_chains=args.episodes)
    report, logs = run_benchmark(bundle, pipe.bundle.executor, bench_cfg)
    stats = measurability_stats(logs)
    hist = steps_per_subgoal_histogram(logs)

    planner, ema, policy = bundle.load()
    from .bench import build_chain_suite
    from ..env.tasks import task_id, reset
    from ..executor.loop import ddim_plan_source

    suite = build_chain_suite(args.plans, pipe.bundle.bench.suite_seed + 1)
    source = ddim_plan_source(planner, ema, pipe.bundle.executor)
    plans = []
    for i, chain in enumerate(suite):
        state, obs = reset(chain, RngStream(505).substream(i))
        plans.append(source(obs, task_id(chain.tasks[0]), RngStream(506).substream(i), 0))
    sep = replan_separation(plans, policy, RngStream(507))

    payload = {
        "avg_length": report.avg_length,
        "nonincreasing_fraction": stats.nonincreasing_fraction,
        "prev_goal_increase_fraction": stats.prev_goal_increase_fraction,
        "n_pairs": stats.n_pairs,
        "n_transitions": stats.n_transitions,
        "replan_auc": sep.auc,
        "replan_threshold": sep.threshold,
        "false_replan_rate": sep.false_replan_rate,
        "missed_corruption_rate": sep.missed_corruption_rate,
        "histogram": hist,
    }
    (out / "diagnostics.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    write_csv(out / "clean_corrupt.csv", ["kind", "max_consec_dist"],
              [["clean", f"{v:.8f}"] for v in sep.clean_scores]
              + [["corrupt", f"{v:.8f}"] for v in sep.corrupt_scores])
    chart = SvgChart("steps per sub-goal", "steps", "transitions")
    chart.add_bars("count", list(hist.keys()), list(hist.values()))
    plot_emit(chart, out / "steps_per_subgoal", ["steps", "count"],
              [[k, v] for k, v in hist.items()])
    # per-episode distance curve for the first episode, as a worked example
    if logs:
        curve = [(s.t, s.d_active) for s in logs[0].steps]
        chart = SvgChart("distance to active sub-goal (episode 0)", "t", "cosine distance")
        chart.add_line("d_active", [c[0] for c in curve], [c[1] for c in curve])
        plot_emit(chart, out / "distance_curve", ["t", "d_active"],
                  [[t, f"{d:.8f}"] for t, d in curve])
    print(json.dumps(payload, indent=2, sort_keys=True))
    print(f"diagnostics in {out}")


def cmd_plot(args):
    pipe = _pipeline(args)
    print_resolved("plot", pipe.bundle, {"csv": args.csv, "kind": args.kind})
    path = Path(args.csv)
    with open(path) as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    out_base = path.with_suffix("")
    if args.kind == "bars":
        chart = SvgChart(path.stem, header[0], header[1])
        chart.add_bars(header[1], [float(r[0]) for r in body if _num(r[0])],
                       [float(r[1]) for r in body if _num(r[0])])
    else:
        chart = SvgChart(path.stem, header[0], header[1])
        chart.add_line(header[1], [float(r[0]) for r in body if _num(r[0])],
                       [float(r[1]) for r in body if _num(r[0])])
    svg, _ = plot_emit(chart, out_base, header, body)
    print(f"wrote {svg}")


def _num(x) -> bool:
    try:
        float(x)
        return True
    except ValueError:
        return False


def main(argv=None):
    parser = argparse.ArgumentParser(prog="visuoloop",
                                     description="closed-loop visuomotor control testbed")
    parser.add_argument("--config", type=str, default=None, help="JSON bundle config")
    parser.add_argument("--seed", type=int, default=None, help="offset every stage seed")
    parser.add_argument("--out", type=str, default="runs/default", help="pipeline root directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data").set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-planner")
    p.add_argument("--lambda-reg", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(fn=cmd_train_planner)

    p = sub.add_parser("train-policy")
    p.add_argument("--variant", choices=("main", "bc", "app_only"), default="main")
    p.set_defaults(fn=cmd_train_policy)

    p = sub.add_parser("rollout")
    p.add_argument("--episodes", type=int, default=3)
    p.add_argument("--mode", choices=("closed", "open"), default="closed")
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("bench")
    p.add_argument("--name", type=str, default=None)
    p.add_argument("--mode", choices=("closed", "open"), default=None)
    p.add_argument("--d-s", type=float, default=None)
    p.add_argument("--open-interval", type=int, default=None)
    p.add_argument("--sample-steps", type=int, default=None)
    p.add_argument("--n-chains", type=int, default=None)
    p.add_argument("--policy-variant", choices=("main", "bc", "app_only"), default="main")
    p.add_argument("--oracle", action="store_true", help="scripted-expert upper bound")
    p.add_argument("--keep-logs", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("sweep")
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--values", type=str, required=True, help="comma-separated")
    p.add_argument("--n-chains", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("diagnose")
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--plans", type=int, default=100)
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("plot")
    p.add_argument("--csv", type=str, required=True)
    p.add_argument("--kind", choices=("line", "bars"), default="line")
    p.set_defaults(fn=cmd_plot)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
