"""Multi-feature tabular datasets: loading, scaling, splitting and views.

A dataset is a dense n x D matrix, +-1 labels and a manifest that cuts the
D columns into named, contiguous feature groups.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed data or manifest file."""


@dataclass(frozen=True)
class FeatureManifest:
    groups: tuple  # ((name, dim), ...)

    def __post_init__(self):
        groups = tuple((str(name), int(dim)) for name, dim in self.groups)
        if not groups:
            raise DataError("manifest needs at least one feature group")
        names = [name for name, _ in groups]
        if any(not name for name in names):
            raise DataError("feature group names must be non-empty")
        if len(set(names)) != len(names):
            raise DataError("feature group names must be unique")
        if any(dim < 1 for _, dim in groups):
            raise DataError("feature group dims must be positive")
        object.__setattr__(self, "groups", groups)

    @property
    def total_dim(self) -> int:
        return sum(dim for _, dim in self.groups)

    @property
    def names(self) -> list:
        return [name for name, _ in self.groups]

    def slice_of(self, name: str) -> slice:
        start = 0
        for group, dim in self.groups:
            if group == name:
                return slice(start, start + dim)
            start += dim
        raise KeyError(f"unknown feature group {name!r}")

    @classmethod
    def single(cls, dim: int, name: str = "all") -> "FeatureManifest":
        return cls(((name, dim),))

    @classmethod
    def per_column(cls, names) -> "FeatureManifest":
        return cls(tuple((name, 1) for name in names))

    def to_json(self) -> dict:
        return {"groups": [{"name": n, "dim": d} for n, d in self.groups]}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureManifest":
        try:
            return cls(tuple((g["name"], g["dim"]) for g in doc["groups"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed manifest: {exc}") from exc

    @classmethod
    def load(cls, path) -> "FeatureManifest":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON manifest ({exc})") from exc
        return cls.from_json(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


@dataclass(frozen=True)
class Dataset:
    """Immutable instances/labels pair.

    ``index`` records, for every row, the row of the originally loaded
    dataset it came from; splits and resampling carry it along.
    """

    X: np.ndarray
    y: np.ndarray
    manifest: FeatureManifest
    index: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True).ravel()
        if X.ndim != 2:
            raise DataError(f"instances must be a 2-D matrix, got shape {X.shape}")
        if X.shape[0] != y.size:
            raise DataError(f"{X.shape[0]} rows but {y.size} labels")
        if X.shape[1] != self.manifest.total_dim:
            raise DataError(
                f"manifest declares {self.manifest.total_dim} dims, data has {X.shape[1]}"
            )
        if not np.all(np.isfinite(X)):
            raise DataError("instances contain non-finite values")
        if not np.all((y == 1) | (y == -1)):
            raise DataError("labels must be -1 or +1")
        index = np.arange(y.size) if self.index is None else np.array(self.index, dtype=np.int64)
        if index.shape != y.shape:
            raise DataError("index length must match the number of rows")
        for arr in (X, y, index):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return self.y.size

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.X[rows], self.y[rows], self.manifest, self.index[rows])

    def class_counts(self) -> dict:
        return {1: int(np.sum(self.y == 1)), -1: int(np.sum(self.y == -1))}

    def require_both_classes(self) -> None:
        counts = self.class_counts()
        if min(counts.values()) == 0:
            raise DataError(f"both classes are required, got counts {counts}")


def _map_labels(raw: np.ndarray, where: str) -> np.ndarray:
    values = set(np.unique(raw).tolist())
    if values <= {-1.0, 1.0}:
        return raw.astype(np.int64)
    if values <= {0.0, 1.0}:
        return np.where(raw > 0, 1, -1)
    raise DataError(f"{where}: labels must use {{0,1}} or {{-1,+1}}, found {sorted(values)}")


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataError(f"{where}: non-numeric cell {token!r}") from None


def _read_csv(lines, path):
    labels, rows = [], []
    for lineno, line in lines:
        cells = [c.strip() for c in line.split(",")]
        where = f"{path}:{lineno}"
        if cells[0] == "":
            raise DataError(f"{where}: missing label")
        labels.append(_parse_float(cells[0], where))
        rows.append([_parse_float(c, where) for c in cells[1:]])
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: rows have differing column counts {sorted(widths)}")
    return np.array(labels), np.array(rows, dtype=np.float64)


def _read_sparse(lines, path, dim):
    labels, entries = [], []
    for lineno, line in lines:
        tokens = line.split()
        where = f"{path}:{lineno}"
        if ":" in tokens[0]:
            raise DataError(f"{where}: missing label")
        labels.append(_parse_float(tokens[0], where))
        row = {}
        for tok in tokens[1:]:
            key, _, val = tok.partition(":")
            try:
                col = int(key)
            except ValueError:
                raise DataError(f"{where}: bad feature index {key!r}") from None
            if col < 1:
                raise DataError(f"{where}: feature indices start at 1")
            row[col - 1] = _parse_float(val, where)
        entries.append(row)
    width = max((max(r) + 1 for r in entries if r), default=0)
    if width > dim:
        raise DataError(f"{path}: feature index {width} exceeds manifest dimension {dim}")
    X = np.zeros((len(entries), dim))
    for i, row in enumerate(entries):
        for col, val in row.items():
            X[i, col] = val
    return np.array(labels), X


def load_dataset(data_path, manifest_path) -> Dataset:
    """Read a CSV (label first) or sparse ``label idx:val`` file."""
    manifest = FeatureManifest.load(manifest_path)
    text = Path(data_path).read_text()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{data_path}: empty data file")
    first = lines[0][1]
    if ":" in first and "," not in first:
        raw_labels, X = _read_sparse(lines, data_path, manifest.total_dim)
    else:
        raw_labels, X = _read_csv(lines, data_path)
        if X.shape[1] != manifest.total_dim:
            raise DataError(
                f"dimension mismatch: manifest declares {manifest.total_dim} "
                f"columns, {data_path} has {X.shape[1]}"
            )
    if not np.all(np.isfinite(X)):
        raise DataError(f"{data_path}: non-finite values")
    return Dataset(X, _map_labels(raw_labels, str(data_path)), manifest)


def save_dataset(ds: Dataset, data_path, manifest_path=None) -> None:
    """Write CSV with the label first; floats use their shortest repr."""
    out = []
    for label, row in zip(ds.y.tolist(), ds.X.tolist()):
        out.append(",".join([str(label)] + [repr(v) for v in row]))
    Path(data_path).write_text("\n".join(out) + "\n")
    if manifest_path is not None:
        ds.manifest.save(manifest_path)


@dataclass(frozen=True)
class Scaler:
    """Per-column affine map to [0, 1]; results outside are clamped."""

    lo: np.ndarray
    hi: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        span = self.hi - self.lo
        const = span == 0
        out = (X - self.lo) / np.where(const, 1.0, span)
        out[:, const] = 0.0
        return np.clip(out, 0.0, 1.0)

    def to_json(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "Scaler":
        return cls(np.array(doc["min"], dtype=float), np.array(doc["max"], dtype=float))


def scale_unit_interval(train: Dataset):
    """Fit a min/max scaler on ``train`` and return (scaled train, scaler)."""
    if len(train) == 0:
        raise DataError("cannot scale an empty dataset")
    scaler = Scaler(train.X.min(axis=0), train.X.max(axis=0))
    return apply_scaler(train, scaler), scaler


def apply_scaler(ds: Dataset, scaler: Scaler) -> Dataset:
    return Dataset(scaler.transform(ds.X), ds.y, ds.manifest, ds.index)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def split_indices(y: np.ndarray, spec: SplitSpec):
    """Row positions (train, test) for a (stratified) random split."""
    rng = np.random.default_rng(spec.seed)
    y = np.asarray(y)
    strata = [np.flatnonzero(y == c) for c in (1, -1)] if spec.stratified else [np.arange(y.size)]
    train = []
    for members in strata:
        if members.size == 0:
            continue
        n_train = int(round(spec.train_fraction * members.size))
        if n_train == 0 or n_train == members.size:
            raise DataError(
                f"split {spec.train_fraction} leaves a class of {members.size} "
                "instances with an empty train or test part"
            )
        train.append(rng.permutation(members)[:n_train])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(y.size), train)
    return train, test


def stratified_split(ds: Dataset, spec: SplitSpec):
    train, test = split_indices(ds.y, spec)
    return ds.take(train), ds.take(test)


def stratified_subsample(ds: Dataset, n: int, seed: int = 0) -> Dataset:
    """Keep ``n`` rows with class proportions preserved."""
    if n >= len(ds):
        return ds
    keep, _ = split_indices(ds.y, SplitSpec(n / len(ds), seed))
    return ds.take(keep)


def feature_view(ds: Dataset, group_name: str) -> np.ndarray:
    """Read-only column slice of one feature group."""
    try:
        sl = ds.manifest.slice_of(group_name)
    except KeyError:
        raise KeyError(f"unknown feature group {group_name!r}; have {ds.manifest.names}") from None
    return ds.X[:, sl]
