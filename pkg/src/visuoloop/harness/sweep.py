"""Ablation sweeps: one full benchmark per axis value, retraining the model
the axis touches (planner for the regularizer weight, policy for fusion and
error-measurement modes)."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from ..nn import ContractViolation
from .bench import run_benchmark
from .pipeline import Pipeline
from .plots import SvgChart, plot_emit

AXES = ("d_s", "open_interval", "sample_steps", "lambda_reg", "fusion_mode", "error_mode")


def _coerce(axis: str, value):
    if axis in ("fusion_mode", "error_mode"):
        return str(value)
    if axis in ("open_interval", "sample_steps"):
        return int(value)
    return float(value)


def sweep_point(pipe: Pipeline, axis: str, value, n_chains: int | None = None,
                out_dir: str | Path | None = None):
    """One benchmark run with the axis applied; returns the report."""
    exec_cfg = pipe.bundle.executor
    bench_cfg = pipe.bundle.bench
    if n_chains is not None:
        bench_cfg = replace(bench_cfg, n_chains=n_chains)
    policy_variant = "main"
    planner_lambda = None

    if axis == "d_s":
        exec_cfg = replace(exec_cfg, mode="closed", transition_threshold=float(value))
    elif axis == "open_interval":
        exec_cfg = replace(exec_cfg, mode="open", open_interval=int(value))
    elif axis == "sample_steps":
        exec_cfg = replace(exec_cfg, sample_steps=int(value))
    elif axis == "lambda_reg":
        planner_lambda = float(value)
    elif axis == "fusion_mode":
        if value not in ("rgbd", "appearance_only"):
            raise ContractViolation(f"fusion_mode value {value!r} not recognized")
        policy_variant = "main" if value == "rgbd" else "app_only"
    elif axis == "error_mode":
        if value not in ("subtraction", "current_only"):
            raise ContractViolation(f"error_mode value {value!r} not recognized")
        policy_variant = "main" if value == "subtraction" else "bc"
    else:
        raise ContractViolation(f"unknown sweep axis {axis!r}; one of {AXES}")

    bundle = pipe.model_bundle(policy_variant=policy_variant, planner_lambda=planner_lambda)
    report, _ = run_benchmark(bundle, exec_cfg, bench_cfg, out_dir=out_dir)
    return report


def ablation_sweep(pipe: Pipeline, axis: str, values: list, out_dir: str | Path,
                   n_chains: int | None = None) -> list[list]:
    """Benchmark every value; writes sweep.csv + sweep.svg under out_dir."""
    out_dir = Path(out_dir)
    rows = []
    for v in values:
        value = _coerce(axis, v)
        report = sweep_point(pipe, axis, value, n_chains, out_dir=out_dir / f"{axis}_{value}")
        rows.append([value, round(report.avg_length, 6)] + list(report.rates))
    chart = SvgChart(f"sweep over {axis}", axis, "avg completed length")
    numeric = all(not isinstance(r[0], str) for r in rows)
    if numeric:
        chart.add_line("avg_length", [r[0] for r in rows], [r[1] for r in rows])
    else:
        chart.add_bars("avg_length", list(range(len(rows))), [r[1] for r in rows])
    plot_emit(chart, out_dir / "sweep",
              [axis, "avg_length", "rate1", "rate2", "rate3", "rate4", "rate5"], rows)
    return rows
