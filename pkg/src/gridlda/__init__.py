"""Sharded sparse collapsed Gibbs LDA with a block-diagonal cluster runtime,
real-time argmax prediction, asymmetric prior learning, and topic
de-duplication."""

from .alphaopt import AlphaSufficientStats, collect_stats, digamma, log_evidence, optimize_alpha
from .corpus import (
    BlockGrid,
    Document,
    PreprocessReport,
    Vocabulary,
    place_words,
    preprocess,
    shuffle_and_partition,
)
from .counts import (
    DocTopicCounts,
    Hyperparameters,
    WordTopicCounts,
    estimate_phi,
    estimate_theta,
    gibbs_conditional_oracle,
    rebuild_doc_counts,
)
from .dedup import DedupResult, cluster_topics, l1_distance, remap_labels
from .evaluation import (
    CooccurrenceCounts,
    heldout_loglik_curve,
    pmi_coherence,
    predictive_perplexity,
)
from .predictor import (
    FrozenModel,
    RMatrix,
    build_r_matrix,
    extract_features,
    infer_theta_gibbs,
    map_tokens,
    predict,
)
from .sampler import SparseSampler, sweep_document

__version__ = "0.1.0"
