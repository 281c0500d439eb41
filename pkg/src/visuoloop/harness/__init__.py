from .bench import (
    BenchmarkConfig,
    BenchmarkReport,
    ModelBundle,
    build_chain_suite,
    config_fingerprint,
    run_benchmark,
    run_oracle_benchmark,
    summarize,
    write_report,
)
from .config import BundleConfig, DataConfig, bundle_to_dict, load_bundle
from .diagnostics import (
    MeasurabilityStats,
    ReplanSeparation,
    auc_rank,
    corrupt_plan,
    measurability_stats,
    replan_separation,
    steps_per_subgoal_histogram,
)
from .metrics import VideoMetrics, aggregate_metrics, psnr, ssim_single, video_metrics
from .pipeline import PLANNER_SNAPSHOT, Pipeline
from .plots import SvgChart, plot_emit, write_csv
from .sweep import AXES, ablation_sweep, sweep_point
