"""Retouched Bloom filters: trade selected false positives for random
false negatives at unchanged filter size, plus the experiment harness and
stop-set replay simulator built on top of them."""

from .analysis import (
    MetricsReport,
    analytic_fpr,
    analytic_p0,
    analytic_p1,
    measure_metrics,
    metrics_after_clearing,
    min_fpr,
    optimal_k,
    retention,
)
from .filters import (
    BloomFilter,
    FilterParams,
    HashFamily,
    InvalidParamsError,
    ParamsMismatchError,
    new_filter,
    string_key,
)
from .experiment import (
    AggregateResult,
    ExperimentConfig,
    build_trial_population,
    run_comparison,
    run_experiment,
    sample_troublesome,
    student_t_ci,
)
from .retouch import (
    ALGORITHMS,
    ClearingOutcome,
    ElementListVector,
    TroublesomeSet,
    counting_vector,
    improved_max_fp_selection,
    improved_min_fn_selection,
    improved_ratio_selection,
    max_fp_selection,
    min_fn_selection,
    random_selection,
    randomized_clearing,
    ratio_selection,
    resolve_outcome,
    run_clearing,
)
from .rss import (
    PathCorpus,
    RoundMetrics,
    RssImplementation,
    SyntheticTopologyConfig,
    TraceRoute,
    beta_sweep,
    build_rss,
    encode_rss,
    generate_corpus,
    ingest_corpus,
    multi_cycle_replay,
    replay_probing,
    write_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AggregateResult",
    "BloomFilter",
    "ClearingOutcome",
    "ElementListVector",
    "ExperimentConfig",
    "FilterParams",
    "HashFamily",
    "InvalidParamsError",
    "MetricsReport",
    "ParamsMismatchError",
    "PathCorpus",
    "RoundMetrics",
    "RssImplementation",
    "SyntheticTopologyConfig",
    "TraceRoute",
    "TroublesomeSet",
    "analytic_fpr",
    "analytic_p0",
    "analytic_p1",
    "beta_sweep",
    "build_rss",
    "build_trial_population",
    "counting_vector",
    "encode_rss",
    "generate_corpus",
    "improved_max_fp_selection",
    "improved_min_fn_selection",
    "improved_ratio_selection",
    "ingest_corpus",
    "max_fp_selection",
    "measure_metrics",
    "metrics_after_clearing",
    "min_fn_selection",
    "min_fpr",
    "multi_cycle_replay",
    "new_filter",
    "optimal_k",
    "random_selection",
    "randomized_clearing",
    "ratio_selection",
    "replay_probing",
    "resolve_outcome",
    "retention",
    "run_clearing",
    "run_comparison",
    "run_experiment",
    "sample_troublesome",
    "string_key",
    "student_t_ci",
    "write_corpus",
]
