"""The six explanation attacks, each returning an AttackArtifact."""

from .biased_sampling import attack_biased_sampling, protected_contributions, solve_weights
from .blackbox import ManifoldConfig, OptimizerConfig, PrincipalManifold, attack_black_box
from .makrut import FineTuneConfig, attack_makrut
from .poisoning import GAConfig, attack_data_poisoning_genetic, explanation_fitness
from .scaffolding import DetectorConfig, RoutingModel, attack_scaffolding_ood
from .shuffling import ShuffledScorer, attack_output_shuffling, dominance_order, swap_pass
from .taxonomy import TAXONOMY, AttackArtifact, AttackTaxonomy, check_taxonomy

ATTACKS = tuple(TAXONOMY)

__all__ = [
    "ATTACKS",
    "TAXONOMY",
    "AttackArtifact",
    "AttackTaxonomy",
    "DetectorConfig",
    "FineTuneConfig",
    "GAConfig",
    "ManifoldConfig",
    "OptimizerConfig",
    "PrincipalManifold",
    "RoutingModel",
    "ShuffledScorer",
    "attack_biased_sampling",
    "attack_black_box",
    "attack_data_poisoning_genetic",
    "attack_makrut",
    "attack_output_shuffling",
    "attack_scaffolding_ood",
    "check_taxonomy",
    "dominance_order",
    "explanation_fitness",
    "protected_contributions",
    "solve_weights",
    "swap_pass",
]
