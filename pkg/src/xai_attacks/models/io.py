"""JSON persistence for trained models."""

import json

from .base import TrainedModel
from .logistic import LogisticModel
from .mlp import MLPModel
from .trees import ForestModel, GBTModel

FORMAT_VERSION = 1

_CLASSES = {"logistic": LogisticModel, "gbt": GBTModel, "mlp": MLPModel, "forest": ForestModel}


def model_to_dict(model, reference=None):
    doc = {
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "d": model.d,
        "schema_hash": model.schema_hash,
        "feature_names": model.feature_names,
        "params": model.params(),
    }
    if reference is not None:
        doc["reference"] = [list(map(float, row)) for row in reference]
    return doc


def model_from_dict(doc):
    if "version" not in doc:
        raise ValueError("model document has no version field")
    if doc["version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc['version']}")
    cls = _CLASSES.get(doc["kind"])
    if cls is None:
        raise ValueError(f"unknown model kind {doc['kind']!r}")
    kw = {"feature_names": doc.get("feature_names"), "schema_hash": doc.get("schema_hash")}
    if cls is LogisticModel:
        return cls.from_params(doc["params"], **kw)
    return cls.from_params(doc["params"], doc["d"], **kw)


def save_model(model, path, reference=None):
    """Write ``model`` (plus optional reference rows for explainers) as JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, reference), fh)


def load_model(path):
    """Return ``(model, reference_rows_or_None)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return model_from_dict(doc), doc.get("reference")


__all__ = ["FORMAT_VERSION", "TrainedModel", "load_model", "model_from_dict", "model_to_dict", "save_model"]
