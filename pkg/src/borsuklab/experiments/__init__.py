from .harness import (
    AllCensored,
    ConfigError,
    ExperimentConfig,
    TrialBatch,
    edge_count_experiment,
    emit_report,
    estimate_event_probability,
    nested_poisson_counts,
    pn_experiment,
    poissonize,
    threshold_sweep,
)

__all__ = [
    "AllCensored",
    "ConfigError",
    "ExperimentConfig",
    "TrialBatch",
    "edge_count_experiment",
    "emit_report",
    "estimate_event_probability",
    "nested_poisson_counts",
    "pn_experiment",
    "poissonize",
    "threshold_sweep",
]
