"""Tabular datasets: schema, CSV ingestion, preprocessing, splitting and a
synthetic biased-data generator."""

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import make_rng

log = logging.getLogger(__name__)

NUMERICAL = "numerical"
CATEGORICAL = "categorical"


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = NUMERICAL
    categories: tuple = None

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.categories is None or len(self.categories) < 2:
                raise ValueError(f"categorical column {self.name!r} needs at least 2 categories")
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        elif self.categories is not None:
            raise ValueError(f"numerical column {self.name!r} cannot list categories")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns; the order defines the feature index space."""

    columns: tuple

    def __post_init__(self):
        cols = tuple(c if isinstance(c, Column) else Column(**c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate column names: {dupes}")

    @property
    def names(self):
        return [c.name for c in self.columns]

    @property
    def d(self):
        return len(self.columns)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None

    @property
    def numerical_indices(self):
        return [i for i, c in enumerate(self.columns) if c.kind == NUMERICAL]

    @property
    def categorical_indices(self):
        return [i for i, c in enumerate(self.columns) if c.kind == CATEGORICAL]

    def is_categorical(self):
        return np.array([c.kind == CATEGORICAL for c in self.columns])

    def subset(self, keep):
        return FeatureSchema(tuple(self.columns[i] for i in keep))

    def to_dict(self):
        out = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind}
            if c.categories is not None:
                entry["categories"] = list(c.categories)
            out.append(entry)
        return {"columns": out}

    @classmethod
    def from_dict(cls, data):
        cols = data["columns"] if isinstance(data, dict) else data
        return cls(tuple(Column(c["name"], c.get("kind", NUMERICAL), c.get("categories")) for c in cols))

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    protected_index: int = None
    row_ids: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        y = np.asarray(self.y).astype(int).ravel()
        if X.shape[0] != len(y):
            raise ValueError(f"X has {X.shape[0]} rows but y has {len(y)} labels")
        if X.shape[1] != self.schema.d:
            raise ValueError(f"X has {X.shape[1]} columns but the schema declares {self.schema.d}")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be binary in {0, 1}")
        if self.protected_index is not None and not 0 <= self.protected_index < self.schema.d:
            raise ValueError(f"protected_index {self.protected_index} out of range for d={self.schema.d}")
        for j in self.schema.categorical_indices:
            n_cat = len(self.schema.columns[j].categories)
            col = X[:, j]
            if np.any((col != np.round(col)) | (col < 0) | (col >= n_cat)):
                raise ValueError(f"column {self.schema.columns[j].name!r} holds invalid category codes")
        row_ids = np.arange(len(y)) if self.row_ids is None else np.asarray(self.row_ids, dtype=int)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def feature_names(self):
        return self.schema.names

    @property
    def protected_name(self):
        return None if self.protected_index is None else self.schema.names[self.protected_index]

    def rows(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(self, X=self.X[idx], y=self.y[idx], row_ids=self.row_ids[idx])

    def with_X(self, X):
        return replace(self, X=np.asarray(X, dtype=float))


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset


@dataclass
class ScalingStats:
    """Per-column standardization constants for the surviving numerical columns.

    Numerical columns missing from ``columns`` were pruned when the stats
    were fitted and are dropped again whenever the stats are reused.
    """

    columns: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {name: {"mean": float(s["mean"]), "std": float(s["std"])} for name, s in self.columns.items()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        return cls({k: {"mean": float(v["mean"]), "std": float(v["std"])} for k, v in data.items()})


def load_csv_dataset(path, schema, label_column, positive_label, protected=None):
    """Read a headered CSV into a Dataset.

    ``positive_label`` names the raw label value that maps to 1 (the
    benign / superior outcome); every other value maps to 0. When the raw
    flag marks malicious rows with "1", pass ``positive_label="0"`` to get
    the flipped labelling.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in schema.names + [label_column] if c not in header]
        if missing:
            raise IngestionError(f"{path}: missing column(s) {', '.join(map(repr, missing))}")
        X, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            values = []
            for col in schema.columns:
                cell = (row[col.name] or "").strip()
                if col.kind == NUMERICAL:
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise IngestionError(
                            f"{path}: row {lineno}, column {col.name!r}: cannot parse {cell!r} as a number"
                        ) from None
                else:
                    if cell not in col.categories:
                        raise IngestionError(
                            f"{path}: row {lineno}, column {col.name!r}: {cell!r} is not one of {list(col.categories)}"
                        )
                    values.append(float(col.categories.index(cell)))
            X.append(values)
            raw_labels.append((row[label_column] or "").strip())
    distinct = sorted(set(raw_labels))
    if len(distinct) > 2:
        raise IngestionError(f"{path}: label column {label_column!r} is not binary: {distinct}")
    if str(positive_label) not in distinct:
        raise IngestionError(f"{path}: positive label {positive_label!r} never occurs in {label_column!r}")
    y = np.array([1 if lab == str(positive_label) else 0 for lab in raw_labels], dtype=int)
    X = np.array(X, dtype=float).reshape(len(y), schema.d)
    protected_index = schema.index(protected) if protected is not None else None
    return Dataset(schema, X, y, protected_index)


def write_csv_dataset(ds, path, label_column="label"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.feature_names + [label_column])
        for row, lab in zip(ds.X, ds.y):
            cells = []
            for col, v in zip(ds.schema.columns, row):
                cells.append(col.categories[int(v)] if col.kind == CATEGORICAL else repr(float(v)))
            writer.writerow(cells + [int(lab)])


def _pearson_matrix(Z):
    Zc = Z - Z.mean(axis=0)
    norms = np.sqrt((Zc**2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    R = (Zc.T @ Zc) / np.outer(safe, safe)
    R[norms == 0, :] = 0.0
    R[:, norms == 0] = 0.0
    return R


def preprocess(ds, corr_threshold=0.35, fit_stats=None):
    """Standard-scale numerical columns and prune correlated ones.

    Without ``fit_stats`` the scaling constants (population std) are fitted
    on ``ds``, then for every pair of numerical columns with |Pearson r|
    above ``corr_threshold`` the later column in schema order is dropped,
    keeping the earlier one. The protected column is never dropped and
    categorical columns pass through untouched. With ``fit_stats`` the
    stored constants are applied and the same columns are dropped.

    Returns:
        ``(dataset, stats, dropped_column_names)``
    """
    if ds.n == 0:
        raise ValueError("cannot preprocess an empty dataset")
    if not 0 < corr_threshold <= 1:
        raise ValueError("corr_threshold must lie in (0, 1]")
    schema = ds.schema
    num_idx = schema.numerical_indices
    X = ds.X.copy()

    if fit_stats is None:
        stats = ScalingStats()
        fitted = {}
        for j in num_idx:
            name = schema.columns[j].name
            mean = float(X[:, j].mean())
            std = float(X[:, j].std())
            if std == 0.0:
                stats.warnings.append(f"column {name!r} has zero variance; scaled to zeros")
                log.warning("column %r has zero variance; scaled to zeros", name)
            fitted[name] = {"mean": mean, "std": std}
            X[:, j] = (X[:, j] - mean) / std if std > 0 else 0.0
        R = _pearson_matrix(X[:, num_idx]) if num_idx else np.zeros((0, 0))
        kept = []
        dropped = []
        for a, j in enumerate(num_idx):
            name = schema.columns[j].name
            violates = any(abs(R[a, b]) > corr_threshold for b, _ in kept)
            if violates and j != ds.protected_index:
                dropped.append(name)
            else:
                kept.append((a, j))
        stats.columns = {name: fitted[name] for name in schema.names if name in fitted and name not in dropped}
    else:
        stats = fit_stats
        dropped = []
        for j in num_idx:
            name = schema.columns[j].name
            s = fit_stats.columns.get(name)
            if s is None:
                if j == ds.protected_index:
                    raise ValueError(f"scaling stats lack the protected column {name!r}")
                dropped.append(name)
                continue
            X[:, j] = (X[:, j] - s["mean"]) / s["std"] if s["std"] > 0 else 0.0

    keep = [i for i, c in enumerate(schema.columns) if c.name not in dropped]
    protected = None if ds.protected_index is None else keep.index(ds.protected_index)
    out = Dataset(schema.subset(keep), X[:, keep], ds.y, protected, ds.row_ids)
    return out, stats, dropped


def split(ds, test_fraction=0.2, seed=0):
    """Stratified, seed-deterministic train/test split.

    The overall test size is ``round(n * test_fraction)`` and is shared out
    among the classes by largest remainder, so both sides stay within one
    row of the requested ratio.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = make_rng(seed, "split")
    classes = [np.flatnonzero(ds.y == c) for c in (0, 1)]
    for c, idx in enumerate(classes):
        if len(idx) < 2:
            raise ValueError(f"class {c} has {len(idx)} row(s); stratified splitting needs at least 2")
    n_test = int(round(ds.n * test_fraction))
    quotas = [len(idx) * test_fraction for idx in classes]
    alloc = [int(np.floor(q)) for q in quotas]
    by_remainder = sorted(range(2), key=lambda c: (-(quotas[c] - alloc[c]), c))
    for c in by_remainder[: max(n_test - sum(alloc), 0)]:
        alloc[c] += 1
    alloc = [min(max(a, 1), len(idx) - 1) for a, idx in zip(alloc, classes)]
    train_idx, test_idx = [], []
    for idx, k in zip(classes, alloc):
        perm = rng.permutation(idx)
        test_idx.extend(perm[:k])
        train_idx.extend(perm[k:])
    return SplitPair(ds.rows(np.sort(train_idx)), ds.rows(np.sort(test_idx)))


def generate_synthetic_biased(n_rows=2000, d_numerical=5, bias_strength=0.8, seed=0, separation=0.65):
    """Binary-label data with a label-correlated protected feature.

    Labels are fair coin flips. Numerical feature ``k`` is Gaussian with
    unit variance and class means ``+/- s_k`` where ``s_k`` falls linearly
    from ``separation`` to half of it, giving graded importances while
    keeping pairwise correlations below the default pruning threshold.
    The binary protected feature (last column) equals the label with
    probability ``0.5 + 0.5 * bias_strength``.
    """
    if n_rows < 20 or d_numerical < 2:
        raise ValueError("need n_rows >= 20 and d_numerical >= 2")
    if not 0 <= bias_strength <= 1:
        raise ValueError("bias_strength must lie in [0, 1]")
    rng = make_rng(seed, "synthetic")
    y = rng.integers(0, 2, size=n_rows)
    sign = 2.0 * y - 1.0
    seps = separation * (1.0 - 0.5 * np.arange(d_numerical) / max(d_numerical - 1, 1))
    num = rng.standard_normal((n_rows, d_numerical)) + sign[:, None] * seps[None, :]
    agree = rng.random(n_rows) < 0.5 + 0.5 * bias_strength
    protected = np.where(agree, y, 1 - y).astype(float)
    cols = tuple(Column(f"f{k}") for k in range(d_numerical)) + (
        Column("protected", CATEGORICAL, ("0", "1")),
    )
    X = np.column_stack([num, protected])
    return Dataset(FeatureSchema(cols), X, y, protected_index=d_numerical)
