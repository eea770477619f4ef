"""Tactic / technique / procedure labels for each attack."""

import json
from dataclasses import dataclass, field

import numpy as np

TACTICS = ("FE", "ME", "BD")
TECHNIQUES = ("adversarial_model", "data_manipulation", "adversarial_example", "model_manipulation")
HARDNESS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class AttackTaxonomy:
    tactics: tuple
    techniques: tuple
    hardness: str
    role: str = ""
    target: str = ""
    defense: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tactics", tuple(self.tactics))
        object.__setattr__(self, "techniques", tuple(sorted(self.techniques)))
        if not set(self.tactics) <= set(TACTICS):
            raise ValueError(f"unknown tactic in {self.tactics}")
        if not set(self.techniques) <= set(TECHNIQUES):
            raise ValueError(f"unknown technique in {self.techniques}")
        if self.hardness not in HARDNESS:
            raise ValueError(f"unknown hardness {self.hardness!r}")

    @property
    def tactic(self):
        return "+".join(self.tactics)

    @property
    def technique(self):
        return "+".join(self.techniques)

    def to_dict(self):
        return {"tactic": self.tactic, "technique": self.technique, "hardness": self.hardness,
                "role": self.role, "target": self.target, "defense": self.defense}


TAXONOMY = {
    "output_shuffling": AttackTaxonomy(("FE",), ("data_manipulation", "adversarial_model"), "easy",
                                       "auditor", "G_SHAP permutation", "multiple_xai_methods"),
    "scaffolding_ood": AttackTaxonomy(("FE", "BD"), ("adversarial_model",), "medium",
                                      "auditor", "L,G_SHAP kernel; L_LIME", "data_filtering"),
    "data_poisoning": AttackTaxonomy(("ME",), ("adversarial_example",), "hard",
                                     "anyone", "L,G_SHAP", "adversarial_retraining"),
    "black_box": AttackTaxonomy(("ME",), ("adversarial_example",), "hard",
                                "anyone", "L_IG", "adversarial_retraining"),
    "makrut": AttackTaxonomy(("FE",), ("model_manipulation",), "hard",
                             "auditor", "L_LIME", "decentralized_model"),
    "biased_sampling": AttackTaxonomy(("FE",), ("data_manipulation",), "hard",
                                      "auditor", "G_SHAP", "output_comparison"),
}


def check_taxonomy(attack_name, taxonomy):
    """Raise unless ``taxonomy`` is exactly the registered row for ``attack_name``."""
    expected = TAXONOMY.get(attack_name)
    if expected is None:
        raise ValueError(f"unknown attack {attack_name!r}; expected one of {sorted(TAXONOMY)}")
    if taxonomy != expected:
        raise ValueError(f"taxonomy mismatch for {attack_name}: {taxonomy.to_dict()} != {expected.to_dict()}")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


@dataclass
class AttackArtifact:
    """Result of one attack run.

    ``payload`` is the attack's product (wrapped scorer, routing model,
    perturbed data, adversarial instance, manipulated model or background
    weights); ``summary`` holds its JSON-friendly description and
    ``metrics`` the attack's own measurements.
    """

    name: str
    taxonomy: AttackTaxonomy
    payload: object
    provenance: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        check_taxonomy(self.name, self.taxonomy)

    def to_dict(self):
        return _jsonable({
            "attack": self.name,
            "taxonomy": self.taxonomy.to_dict(),
            "provenance": self.provenance,
            "payload": self.summary,
            "metrics": self.metrics,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)
