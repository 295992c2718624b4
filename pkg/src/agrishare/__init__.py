"""Privacy-preserving agricultural data sharing toolkit.

Participants project their private tables through a shared dimensionality-
reduction model, add locally calibrated Laplace noise, and submit only the
privatized shares to a sandbox that clusters farms, recommends
collaborators and trains federated models. An evaluation harness
quantifies the privacy-utility trade-off across epsilon budgets.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    CROP_SCHEMA,
    MARKET_SCHEMA,
    DataMatrix,
    FeatureSchema,
    PartitionSpec,
    StandardizerParams,
    apply_standardizer,
    fit_standardizer,
    generate_crop_dataset,
    generate_synthetic_market,
    load_csv,
    partition_markets,
)
from .errors import AgriShareError, AuditViolation, DataError, FingerprintMismatch  # noqa: F401
from .ldp import (  # noqa: F401
    NoisyMatrix,
    PrivacyBudget,
    allocate_epsilon,
    compute_sensitivity,
    laplace_sample,
    privatize,
)
from .pca import (  # noqa: F401
    PcaModel,
    TransformedMatrix,
    explained_variance_ratio,
    load_model,
    pca_fit,
    pca_transform,
    save_model,
)
from .sandbox import (  # noqa: F401
    AggregatedStore,
    ClusterModel,
    ParticipantShare,
    Recommendation,
    kmeans_assign,
    kmeans_fit,
    market_similarity_distribution,
    market_similarity_profile,
    recommend_collaborators,
    select_collaborators,
    submit_share,
)
