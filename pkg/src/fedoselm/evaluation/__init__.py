from .experiments import (
    EXPERIMENTS, ConvergenceConfig, ExperimentConfig, LatencyConfig, MergeLossConfig, RocConfig,
    bench_latencies, experiment_convergence, experiment_merge_loss, experiment_roc_heatmap,
    merge_via_server, run_experiment,
)
from .metrics import roc_auc
from .report import Report, load_schema

__all__ = [
    "EXPERIMENTS", "ConvergenceConfig", "ExperimentConfig", "LatencyConfig", "MergeLossConfig",
    "RocConfig", "bench_latencies", "experiment_convergence", "experiment_merge_loss",
    "experiment_roc_heatmap", "merge_via_server", "run_experiment", "roc_auc", "Report",
    "load_schema",
]
