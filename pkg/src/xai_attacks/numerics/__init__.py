from .linalg import SingularSystemError, finite_diff_gradient, weighted_ridge
from .rng import derive_seed, make_rng
from .stats import (
    importance_order,
    importance_ranks,
    kendall_tau_distance,
    kl_divergence,
    spearman_rank_corr,
)
from .transport import (
    FlowNetwork,
    InfeasibleFlowError,
    min_cost_flow,
    wasserstein_1d,
    wasserstein_per_feature,
)

__all__ = [
    "FlowNetwork",
    "InfeasibleFlowError",
    "SingularSystemError",
    "derive_seed",
    "finite_diff_gradient",
    "importance_order",
    "importance_ranks",
    "kendall_tau_distance",
    "kl_divergence",
    "make_rng",
    "min_cost_flow",
    "spearman_rank_corr",
    "wasserstein_1d",
    "wasserstein_per_feature",
    "weighted_ridge",
]
