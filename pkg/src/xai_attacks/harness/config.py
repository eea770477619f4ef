"""Experiment configuration: JSON document -> validated dataclasses."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..attacks import TAXONOMY
from ..defenses import DEFENSES
from ..explainers import METHODS
from ..models import KINDS, ModelConfig
from ..tabular import Column, FeatureSchema


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    source: str = "synthetic"
    n_rows: int = 2000
    d_numerical: int = 5
    bias_strength: float = 0.8
    path: str = None
    schema: list = None
    label_column: str = None
    positive_label: str = None

    def feature_schema(self):
        if self.schema is None:
            return None
        try:
            return FeatureSchema([Column(c["name"], c.get("kind", "numerical"), c.get("categories"))
                                  for c in self.schema])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid dataset schema: {exc}") from exc


@dataclass
class PreprocessConfig:
    corr_threshold: float = 0.35
    test_fraction: float = 0.2


@dataclass
class ModelEntry:
    name: str
    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def model_config(self, seed):
        return ModelConfig(self.kind, dict(self.hyperparameters), seed)


@dataclass
class ExplainerEntry:
    method: str = "kernel_shap"
    output: str = "probability"
    n_coalitions: int = 2048
    n_permutations: int = 10
    n_perturbations: int = 2000
    ig_steps: int = 50


@dataclass
class AttackEntry:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class Thresholds:
    fe_epsilon1: float = 0.1
    fe_epsilon2: float = 0.25
    fe_relative: bool = True
    me_delta: float = 0.7
    asr_kl: float = 0.05


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    protected: str = "protected"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    models: list = field(default_factory=lambda: [ModelEntry("logistic", "logistic")])
    explainers: list = field(default_factory=lambda: [ExplainerEntry()])
    panel_size: int = 50
    background_size: int = 50
    attacks: list = field(default_factory=list)
    defenses: list = field(default_factory=list)
    thresholds: Thresholds = field(default_factory=Thresholds)
    seed: int = 0
    output_dir: str = "runs/experiment"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            cfg = cls(
                dataset=DatasetConfig(**data.get("dataset", {})),
                protected=data.get("protected", "protected"),
                preprocess=PreprocessConfig(**data.get("preprocess", {})),
                models=[ModelEntry(m.get("name", m.get("kind")), m["kind"], dict(m.get("hyperparameters", {})))
                        for m in data.get("models", [{"name": "logistic", "kind": "logistic"}])],
                explainers=[ExplainerEntry(**e) for e in data.get("explainers", [{}])],
                panel_size=int(data.get("panel_size", 50)),
                background_size=int(data.get("background_size", 50)),
                attacks=[AttackEntry(a["name"], dict(a.get("params", {}))) if isinstance(a, dict) else AttackEntry(a)
                         for a in data.get("attacks", [])],
                defenses=list(data.get("defenses", [])),
                thresholds=Thresholds(**data.get("thresholds", {})),
                seed=int(data.get("seed", 0)),
                output_dir=data.get("output_dir", "runs/experiment"),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = cls.from_dict(data)
        if cfg.dataset.path is not None and not Path(cfg.dataset.path).is_absolute():
            cfg.dataset.path = str((path.parent / cfg.dataset.path).resolve())
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        ds = self.dataset
        if ds.source == "synthetic":
            names = [f"f{k}" for k in range(ds.d_numerical)] + ["protected"]
            if ds.n_rows < 20 or ds.d_numerical < 2 or not 0 <= ds.bias_strength <= 1:
                raise ConfigError("synthetic dataset needs n_rows >= 20, d_numerical >= 2, bias_strength in [0, 1]")
        elif ds.source == "csv":
            if not ds.path or ds.schema is None or ds.label_column is None or ds.positive_label is None:
                raise ConfigError("csv dataset needs path, schema, label_column and positive_label")
            names = ds.feature_schema().names
        else:
            raise ConfigError(f"unknown dataset source {ds.source!r}; expected 'synthetic' or 'csv'")
        if self.protected not in names:
            raise ConfigError(f"protected feature {self.protected!r} is not among the features {names}")
        if not 0 < self.preprocess.corr_threshold <= 1:
            raise ConfigError("corr_threshold must lie in (0, 1]")
        if not 0 < self.preprocess.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not self.models:
            raise ConfigError("at least one model is required")
        labels = [m.name for m in self.models]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"model names must be unique, got {labels}")
        for m in self.models:
            if m.kind not in KINDS:
                raise ConfigError(f"model {m.name!r}: unknown kind {m.kind!r}; expected one of {KINDS}")
            try:
                m.model_config(self.seed).resolved()
            except ValueError as exc:
                raise ConfigError(f"model {m.name!r}: {exc}") from exc
        if not self.explainers:
            raise ConfigError("at least one explainer is required")
        for e in self.explainers:
            if e.method not in METHODS:
                raise ConfigError(f"unknown explainer {e.method!r}; expected one of {METHODS}")
            if e.output not in ("probability", "margin"):
                raise ConfigError(f"explainer output must be 'probability' or 'margin', got {e.output!r}")
        for a in self.attacks:
            if a.name not in TAXONOMY:
                raise ConfigError(f"unknown attack {a.name!r}; expected one of {sorted(TAXONOMY)}")
        for dname in self.defenses:
            if dname not in DEFENSES:
                raise ConfigError(f"unknown defense {dname!r}; expected one of {DEFENSES}")
        if self.panel_size < 1 or self.background_size < 1:
            raise ConfigError("panel_size and background_size must be positive")
        t = self.thresholds
        if t.asr_kl <= 0 or t.fe_epsilon1 < 0 or t.fe_epsilon2 < 0:
            raise ConfigError("thresholds must be positive")
