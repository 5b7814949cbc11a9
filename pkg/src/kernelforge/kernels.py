"""Base kernels k(u, v) on one feature group, Gram matrices and PSD checks."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

KINDS = ("linear", "rbf", "chi2")
SHORT = {"linear": "LK", "rbf": "RK", "chi2": "XK"}
CHI2_EPS = 1e-10
# rows per block when forming pairwise differences
_BLOCK_ELEMS = 4_000_000


@dataclass(frozen=True)
class KernelSpec:
    group: str
    kind: str
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kernel kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "linear":
            if self.gamma is not None:
                raise ValueError("linear kernels take no gamma")
        elif self.gamma is None or not self.gamma > 0:
            raise ValueError(f"{self.kind} kernel needs gamma > 0, got {self.gamma}")

    @property
    def label(self) -> str:
        return f"{self.group}-{SHORT[self.kind]}"

    def with_gamma(self, gamma) -> "KernelSpec":
        if self.kind == "linear":
            return self
        return KernelSpec(self.group, self.kind, float(gamma))

    def to_json(self) -> dict:
        return {"group": self.group, "kind": self.kind, "gamma": self.gamma}

    @classmethod
    def from_json(cls, doc) -> "KernelSpec":
        return cls(doc["group"], doc["kind"], doc.get("gamma"))


def eval_kernel(spec: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if spec.kind == "linear":
        return float(np.dot(u, v))
    if spec.kind == "rbf":
        d = u - v
        return float(np.exp(-spec.gamma * np.sum(d * d, axis=-1)))
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("chi-square kernel needs non-negative inputs")
    d = u - v
    return float(np.exp(-spec.gamma * np.sum(d * d / (u + v + CHI2_EPS), axis=-1)))


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel values between the rows of A and B (already sliced to the group)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "chi2" and (np.any(A < 0) or np.any(B < 0)):
        raise ValueError("chi-square kernel needs non-negative inputs")
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _BLOCK_ELEMS // max(1, B.shape[0] * A.shape[1]))
    for start in range(0, A.shape[0], step):
        a = A[start:start + step, None, :]
        d = a - B[None, :, :]
        if spec.kind == "rbf":
            s = np.sum(d * d, axis=-1)
        else:
            s = np.sum(d * d / (a + B[None, :, :] + CHI2_EPS), axis=-1)
        out[start:start + step] = np.exp(-spec.gamma * s)
    return out


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    row_ids: np.ndarray
    col_ids: np.ndarray

    @property
    def is_square(self) -> bool:
        return np.array_equal(self.row_ids, self.col_ids)


def gram(spec: KernelSpec, ds, rows=None, cols=None) -> GramMatrix:
    """Gram matrix of ``spec`` over dataset rows x cols (default: all rows)."""
    view = ds.X[:, ds.manifest.slice_of(spec.group)]
    rows = np.arange(len(ds)) if rows is None else np.asarray(rows, dtype=np.int64)
    cols = rows if cols is None else np.asarray(cols, dtype=np.int64)
    return GramMatrix(kernel_matrix(spec, view[rows], view[cols]), rows, cols)


@dataclass(frozen=True)
class ViewKernel:
    """A kernel spec bound to a column range of full instance rows."""

    spec: KernelSpec
    start: int
    stop: int

    @classmethod
    def bind(cls, spec: KernelSpec, manifest) -> "ViewKernel":
        sl = manifest.slice_of(spec.group)
        return cls(spec, sl.start, sl.stop)

    def view(self, X) -> np.ndarray:
        return np.asarray(X)[:, self.start:self.stop]

    def __call__(self, A, B) -> np.ndarray:
        return kernel_matrix(self.spec, self.view(A), self.view(B))


def min_eigenvalue(g) -> float:
    """Smallest eigenvalue of the symmetrized Gram (G + G^T) / 2."""
    G = g.values if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"min_eigenvalue needs a square matrix, got shape {G.shape}")
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])


class GramCache:
    """On-disk Gram cache: a JSON header line followed by row-major doubles.

    Entries are keyed by (dataset hash, kernel spec, row ids, col ids). The
    default directory comes from ``KERNELFORGE_CACHE_DIR``.
    """

    def __init__(self, directory=None):
        directory = directory or os.environ.get("KERNELFORGE_CACHE_DIR")
        if directory is None:
            raise ValueError("no cache directory given and KERNELFORGE_CACHE_DIR unset")
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def dataset_hash(ds) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(ds.X).tobytes())
        h.update(np.ascontiguousarray(ds.y).tobytes())
        h.update(json.dumps(ds.manifest.to_json(), sort_keys=True).encode())
        return h.hexdigest()[:16]

    def _key(self, ds_hash, spec, rows, cols):
        h = hashlib.sha256()
        h.update(ds_hash.encode())
        h.update(json.dumps(spec.to_json(), sort_keys=True).encode())
        h.update(np.asarray(rows, dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.asarray(cols, dtype=np.int64).tobytes())
        return h.hexdigest()[:24]

    def path_for(self, ds_hash, spec, rows, cols) -> Path:
        return self.directory / f"gram-{self._key(ds_hash, spec, rows, cols)}.bin"

    def gram(self, spec: KernelSpec, ds, rows=None, cols=None) -> GramMatrix:
        rows = np.arange(len(ds)) if rows is None else np.asarray(rows, dtype=np.int64)
        cols = rows if cols is None else np.asarray(cols, dtype=np.int64)
        ds_hash = self.dataset_hash(ds)
        path = self.path_for(ds_hash, spec, rows, cols)
        if path.exists():
            return self.read(path)
        g = gram(spec, ds, rows, cols)
        self.write(path, g, spec, ds_hash)
        return g

    @staticmethod
    def write(path, g: GramMatrix, spec: KernelSpec, ds_hash: str) -> None:
        header = {
            "spec": spec.to_json(),
            "dataset": ds_hash,
            "shape": list(g.values.shape),
            "row_ids": g.row_ids.tolist(),
            "col_ids": g.col_ids.tolist(),
        }
        tmp = Path(str(path) + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(np.ascontiguousarray(g.values, dtype="<f8").tobytes())
        tmp.replace(path)

    @staticmethod
    def read(path) -> GramMatrix:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            values = np.frombuffer(fh.read(), dtype="<f8").reshape(header["shape"])
        return GramMatrix(values.copy(), np.array(header["row_ids"]), np.array(header["col_ids"]))
