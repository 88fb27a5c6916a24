"""latentlink: record linkage and de-duplication across categorical files.

Records from several files are modeled as distorted copies of latent
individuals; a hybrid Gibbs / split-merge chain samples the posterior
over the linkage structure, from which match probabilities, population
size and most-probable matching sets are estimated.
"""

__version__ = "0.1.0"

from .analysis import (
    NPosterior,
    PatternCounts,
    PatternDistribution,
    ThresholdLinks,
    iter_clusters,
    kway_match_probs,
    mms_prob,
    most_probable_mms,
    pairwise_match_prob,
    pattern_counts,
    pattern_label,
    posterior_n,
    set_match_prob,
    shared_mms_partition,
    threshold_links,
)
from .blocking import (
    Block,
    BlockExhausted,
    BlockIndex,
    BlockingError,
    build_blocks,
    pairs_in_block,
    sample_eligible_pair,
    validate_blocking,
)
from .engine import available_engines
from .evaluation import (
    ConfusionMatrix,
    LinkCounts,
    PatternError,
    confusion_matrix,
    partition_link_counts,
    posterior_link_counts,
    relative_pattern_errors,
)
from .io import (
    DataFormatError,
    SamplesFormatError,
    load_files,
    load_samples,
    save_samples,
    write_files,
)
from .model import (
    FieldSchema,
    Hyperparameters,
    LatentState,
    Mode,
    RecordStore,
    count_individuals,
    log_joint_posterior,
    state_consistent,
)
from .sampler import (
    ChainConfig,
    ConsistencyError,
    PosteriorSamples,
    canonicalize_partition,
    chain_stream,
    concatenate_samples,
    init_state,
    resample_beta,
    resample_theta,
    resample_y,
    resample_z,
    run_chain,
    split_merge_step,
)
from .simulate import (
    Population,
    SimulatedData,
    SweepRow,
    distortion_sweep,
    draw_population,
    emit_records,
    generate,
    sample_memberships,
)

__all__ = [
    "Block",
    "BlockExhausted",
    "BlockIndex",
    "BlockingError",
    "ChainConfig",
    "ConfusionMatrix",
    "ConsistencyError",
    "DataFormatError",
    "FieldSchema",
    "Hyperparameters",
    "LatentState",
    "LinkCounts",
    "Mode",
    "NPosterior",
    "PatternCounts",
    "PatternDistribution",
    "PatternError",
    "Population",
    "PosteriorSamples",
    "RecordStore",
    "SamplesFormatError",
    "SimulatedData",
    "SweepRow",
    "ThresholdLinks",
    "available_engines",
    "build_blocks",
    "canonicalize_partition",
    "chain_stream",
    "concatenate_samples",
    "confusion_matrix",
    "count_individuals",
    "distortion_sweep",
    "draw_population",
    "emit_records",
    "generate",
    "init_state",
    "iter_clusters",
    "kway_match_probs",
    "load_files",
    "load_samples",
    "log_joint_posterior",
    "mms_prob",
    "most_probable_mms",
    "pairs_in_block",
    "pairwise_match_prob",
    "partition_link_counts",
    "pattern_counts",
    "pattern_label",
    "posterior_link_counts",
    "posterior_n",
    "relative_pattern_errors",
    "resample_beta",
    "resample_theta",
    "resample_y",
    "resample_z",
    "run_chain",
    "sample_eligible_pair",
    "sample_memberships",
    "save_samples",
    "set_match_prob",
    "shared_mms_partition",
    "split_merge_step",
    "state_consistent",
    "threshold_links",
    "validate_blocking",
]
