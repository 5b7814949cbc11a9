"""Benchmark datasets as (CSV, manifest) pairs, plus the 2-D toy problem.

The UCI tables are taken from two PyPI data packages so that no network
access beyond the package index is needed (``pip install kernelforge[bench]``):

* ``rdatasets`` -- MASS ``biopsy``: Wisconsin breast cancer with its
  sample-code column, 683 complete rows, malignant = +1;
* ``keel-ds`` -- ``pima`` (768 rows, non-diabetic = +1), ``bupa`` (345
  rows, selector 1 = +1) and ``german`` (1000 rows, bad credit = +1).

Every column becomes its own feature group, as in the usual per-attribute
benchmark setup. German credit ships with categorical attributes; they are
encoded to 24 numeric columns by :func:`encode_german`.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .datasets import Dataset, FeatureManifest, save_dataset

NAMES = ("breast_cancer", "diabetes", "german_numeric", "liver_disorders")


def _keel_rows(name):
    try:
        root = resources.files("keel_ds")
    except ModuleNotFoundError as exc:
        raise ImportError("install the 'keel-ds' package (kernelforge[bench])") from exc
    text = (root / "data" / "balanced" / "raw" / f"{name}.dat").read_text()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("@"):
            rows.append([cell.strip() for cell in line.split(",")])
    return rows


def breast_cancer() -> Dataset:
    try:
        import rdatasets
    except ModuleNotFoundError as exc:
        raise ImportError("install the 'rdatasets' package (kernelforge[bench])") from exc
    df = rdatasets.data("MASS", "biopsy").dropna()
    cols = ["ID"] + [f"V{i}" for i in range(1, 10)]
    names = ["ID", "CT", "UCS", "UCSh", "MA", "SECS", "BN", "BC", "NN", "M"]
    X = df[cols].astype(float).to_numpy()
    y = np.where(df["class"].to_numpy() == "malignant", 1, -1)
    return Dataset(X, y, FeatureManifest.per_column(names))


def diabetes() -> Dataset:
    rows = _keel_rows("pima")
    names = ["NTP", "PGC", "DBP", "TSFT", "SI", "BMI", "DPF", "AGE"]
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    y = np.array([1 if r[-1] == "tested_negative" else -1 for r in rows])
    return Dataset(X, y, FeatureManifest.per_column(names))


def liver_disorders() -> Dataset:
    rows = _keel_rows("bupa")
    names = ["MCV", "AAP", "SGPT", "SGOT", "GGT", "DPD"]
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    y = np.array([1 if r[-1] == "1" else -1 for r in rows])
    return Dataset(X, y, FeatureManifest.per_column(names))


_GERMAN_ORDINAL = {
    # attribute position -> ordered codes
    0: ["A11", "A12", "A13", "A14"],
    2: ["A30", "A31", "A32", "A33", "A34"],
    5: ["A61", "A62", "A63", "A64", "A65"],
    6: ["A71", "A72", "A73", "A74", "A75"],
    8: ["A91", "A92", "A93", "A94", "A95"],
    9: ["A101", "A102", "A103"],
    11: ["A121", "A122", "A123", "A124"],
    13: ["A141", "A142", "A143"],
    14: ["A151", "A152", "A153"],
    16: ["A171", "A172", "A173", "A174"],
    18: ["A191", "A192"],
    19: ["A201", "A202"],
}
_GERMAN_NUMERIC = [1, 4, 7, 10, 12, 15, 17]
_GERMAN_PURPOSE = ["A40", "A41", "A42", "A43", "A49"]


def encode_german(rows):
    """20 raw attributes -> 24 numeric columns.

    Seven numeric attributes are kept, twelve categorical ones become their
    integer code and the purpose attribute becomes five indicators (new car,
    used car, furniture, radio/TV, business).
    """
    names = (
        [f"N{p + 1}" for p in _GERMAN_NUMERIC]
        + [f"C{p + 1}" for p in _GERMAN_ORDINAL]
        + [f"P_{code}" for code in _GERMAN_PURPOSE]
    )
    X = []
    for r in rows:
        vals = [float(r[p]) for p in _GERMAN_NUMERIC]
        vals += [float(codes.index(r[p]) + 1) for p, codes in _GERMAN_ORDINAL.items()]
        vals += [1.0 if r[3] == code else 0.0 for code in _GERMAN_PURPOSE]
        X.append(vals)
    return np.array(X), names


def german_numeric() -> Dataset:
    rows = _keel_rows("german")
    X, names = encode_german([r[:-1] for r in rows])
    y = np.array([1 if r[-1] == "2" else -1 for r in rows])
    return Dataset(X, y, FeatureManifest.per_column(names))


def load(name: str) -> Dataset:
    try:
        return {
            "breast_cancer": breast_cancer,
            "diabetes": diabetes,
            "german_numeric": german_numeric,
            "liver_disorders": liver_disorders,
        }[name]()
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {NAMES}") from None


def export(name: str, directory) -> tuple:
    """Write ``<name>.csv`` and ``<name>.manifest.json``; return both paths."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = directory / f"{name}.csv"
    manifest = directory / f"{name}.manifest.json"
    save_dataset(load(name), data, manifest)
    return data, manifest


def toy_dataset(n_per_class=750, seed=0) -> Dataset:
    """2-D two-class set mixing a curved boundary with a noisy overlap.

    For x1 < 0.5 the classes sit either side of the line x2 = 0.5 but overlap
    (Gaussian jitter), so a flexible kernel tends to chase noise there. For
    x1 >= 0.5 the classes are separated cleanly by a sine curve with two full
    periods that no line can follow.
    """
    rng = np.random.default_rng(seed)
    pts, labels = [], []
    for label in (1, -1):
        count = 0
        while count < n_per_class:
            x1 = rng.uniform(0, 1)
            if x1 < 0.5:
                x2 = np.clip(0.5 + label * 0.1 + rng.normal(0, 0.15), 0, 1)
            else:
                boundary = 0.5 + 0.35 * np.sin(4 * np.pi * (x1 - 0.5) / 0.5)
                x2 = rng.uniform(0, 1)
                if abs(x2 - boundary) < 0.03 or (x2 > boundary) != (label == 1):
                    continue
            pts.append((x1, x2))
            labels.append(label)
            count += 1
    order = rng.permutation(len(pts))
    X = np.array(pts)[order]
    y = np.array(labels)[order]
    return Dataset(X, y, FeatureManifest.single(2, "xy"))
