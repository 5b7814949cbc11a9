"""Model files: one JSON header line followed by raw little-endian arrays.

The header carries ``format_version``, the method name, the scaler and
manifest the model was trained with, and a nested description of the model
in which every array is replaced by ``{"$array": i}``. Entry ``i`` of the
header's ``arrays`` list gives dtype, shape and byte offset into the payload
that follows the newline.

Composite models (S-MKL, F-MKL, F-EC) store their base classifiers and
success regressors; kernels are rebuilt from the stored specs on load.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import FeatureManifest, Scaler
from .kernels import KernelSpec, ViewKernel
from .mkl import (
    BaseClassifierBank,
    CombinedKernel,
    EnsembleModel,
    FmklModel,
    SmklModel,
    SuccessRegressorBank,
    WeightedSumKernel,
    predict_fec,
    predict_fmkl,
    predict_smkl,
)
from .solver import SvcModel, SvrModel, predict_csvc

FORMAT_VERSION = 1
MAGIC = "kernelforge-model"
METHODS = ("svc", "concat", "fec", "fmkl", "smkl")


class ModelFormatError(ValueError):
    pass


@dataclass
class ModelBundle:
    """A trained model with the preprocessing it expects."""

    method: str
    model: object
    scaler: Scaler | None = None
    manifest: FeatureManifest | None = None
    meta: dict = field(default_factory=dict)

    def predict(self, X, *, scaled=False):
        """(labels, scores) for raw rows ``X`` (scaled first unless told not to)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.manifest is not None and X.shape[1] != self.manifest.total_dim:
            raise ValueError(
                f"dimension mismatch: model expects {self.manifest.total_dim} "
                f"columns, got {X.shape[1]}"
            )
        if self.scaler is not None and not scaled:
            X = self.scaler.transform(X)
        if self.method == "smkl":
            return predict_smkl(self.model, X)
        if self.method == "fmkl":
            return predict_fmkl(self.model, X)
        if self.method == "fec":
            return predict_fec(self.model, X)
        return predict_csvc(self.model, X)

    def summary(self) -> dict:
        doc = {"method": self.method, "format_version": FORMAT_VERSION}
        m = self.model
        svc = getattr(m, "final_svc", m if isinstance(m, SvcModel) else None)
        if svc is not None:
            doc.update(n_sv=svc.n_sv, n_train=svc.n_train, sv_fraction=svc.sv_fraction,
                       c=svc.c, bias=svc.bias, converged=svc.converged)
        bank = getattr(m, "bank", None)
        if bank is not None:
            doc["kernels"] = [s.label for s in bank.specs]
            doc["f_measures"] = [float(v) for v in bank.f_measures]
        if isinstance(m, FmklModel):
            doc["beta"] = [float(v) for v in m.beta]
        if isinstance(m, SmklModel):
            doc["min_eigenvalue"] = m.min_eigenvalue
            doc["psd_policy"] = m.psd_policy
            doc["fallback_policy"] = m.fallback_policy
        if isinstance(m, SvcModel) and isinstance(m.kernel, ViewKernel):
            doc["kernel"] = m.kernel.spec.to_json()
        if self.manifest is not None:
            doc["groups"] = self.manifest.names
        doc.update(self.meta)
        return doc


class _Writer:
    def __init__(self):
        self.arrays = []

    def arr(self, a):
        if a is None:
            return None
        a = np.ascontiguousarray(a)
        if a.dtype.kind == "f":
            a = a.astype("<f8")
        elif a.dtype.kind in "iu":
            a = a.astype("<i8")
        else:
            raise TypeError(f"cannot store array of dtype {a.dtype}")
        self.arrays.append(a)
        return {"$array": len(self.arrays) - 1}


class _Reader:
    def __init__(self, table, payload):
        self.table = table
        self.payload = payload

    def arr(self, ref):
        if ref is None:
            return None
        try:
            entry = self.table[ref["$array"]]
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"], dtype=np.int64))
            out = np.frombuffer(self.payload, dtype=dtype, count=count, offset=entry["offset"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"corrupt array reference {ref}: {exc}") from exc
        return out.reshape(entry["shape"]).copy()


def _kernel_doc(k):
    if k is None:
        return None
    if isinstance(k, ViewKernel):
        return {"type": "view", "spec": k.spec.to_json(), "start": k.start, "stop": k.stop}
    raise TypeError(f"cannot store kernel of type {type(k).__name__}")


def _kernel_from(doc):
    if doc is None:
        return None
    if doc["type"] == "view":
        return ViewKernel(KernelSpec.from_json(doc["spec"]), doc["start"], doc["stop"])
    raise ModelFormatError(f"unknown kernel type {doc['type']!r}")


def _dual_doc(m, w: _Writer, with_kernel=True):
    doc = {
        "type": "svr" if isinstance(m, SvrModel) else "svc",
        "sv_indices": w.arr(m.sv_indices),
        "dual_coef": w.arr(m.dual_coef),
        "bias": m.bias,
        "c": m.c,
        "n_train": m.n_train,
        "dual_objective": m.dual_objective,
        "kkt_gap": m.kkt_gap,
        "n_iter": m.n_iter,
        "converged": m.converged,
        "support_vectors": w.arr(m.support_vectors),
        "sv_counts": w.arr(m.sv_counts),
        "kernel": _kernel_doc(m.kernel) if with_kernel else None,
    }
    if isinstance(m, SvrModel):
        doc["epsilon"] = m.epsilon
    return doc


def _dual_from(doc, r: _Reader):
    kw = dict(
        sv_indices=r.arr(doc["sv_indices"]),
        dual_coef=r.arr(doc["dual_coef"]),
        bias=doc["bias"],
        c=doc["c"],
        n_train=doc["n_train"],
        dual_objective=doc["dual_objective"],
        kkt_gap=doc["kkt_gap"],
        n_iter=doc["n_iter"],
        converged=doc["converged"],
        kernel=_kernel_from(doc["kernel"]),
        support_vectors=r.arr(doc["support_vectors"]),
        sv_counts=r.arr(doc["sv_counts"]),
    )
    if doc["type"] == "svr":
        return SvrModel(epsilon=doc["epsilon"], **kw)
    return SvcModel(**kw)


def _bank_doc(bank, w):
    return {
        "specs": [s.to_json() for s in bank.specs],
        "models": [_dual_doc(m, w) for m in bank.models],
        "f_measures": w.arr(bank.f_measures),
        "cv_scores": w.arr(bank.cv_scores),
        "dropped": [[s.to_json(), msg] for s, msg in bank.dropped],
    }


def _bank_from(doc, r):
    return BaseClassifierBank(
        specs=[KernelSpec.from_json(s) for s in doc["specs"]],
        models=[_dual_from(m, r) for m in doc["models"]],
        f_measures=r.arr(doc["f_measures"]),
        cv_scores=r.arr(doc["cv_scores"]),
        dropped=[(KernelSpec.from_json(s), msg) for s, msg in doc["dropped"]],
    )


def _success_doc(success, w):
    return {
        "regressors": [_dual_doc(m, w) for m in success.regressors],
        "train_mse": w.arr(success.train_mse),
        "baseline_mse": w.arr(success.baseline_mse),
    }


def _success_from(doc, r):
    return SuccessRegressorBank(
        regressors=[_dual_from(m, r) for m in doc["regressors"]],
        train_mse=r.arr(doc["train_mse"]),
        baseline_mse=r.arr(doc["baseline_mse"]),
    )


def _model_doc(method, model, w):
    if method in ("svc", "concat"):
        return _dual_doc(model, w)
    if method == "fec":
        return {"bank": _bank_doc(model.bank, w), "weights": w.arr(model.weights)}
    if method == "fmkl":
        return {
            "bank": _bank_doc(model.bank, w),
            "beta": w.arr(model.beta),
            "final_svc": _dual_doc(model.final_svc, w, with_kernel=False),
        }
    if method == "smkl":
        return {
            "bank": _bank_doc(model.bank, w),
            "success": _success_doc(model.success, w),
            "final_svc": _dual_doc(model.final_svc, w, with_kernel=False),
            "sv_weights": w.arr(model.sv_weights),
            "min_eigenvalue": model.min_eigenvalue,
            "psd_policy": model.psd_policy,
            "fallback_policy": model.fallback_policy,
        }
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _model_from(method, doc, r):
    if method in ("svc", "concat"):
        return _dual_from(doc, r)
    bank = _bank_from(doc["bank"], r)
    if method == "fec":
        return EnsembleModel(bank, r.arr(doc["weights"]))
    final = _dual_from(doc["final_svc"], r)
    if method == "fmkl":
        beta = r.arr(doc["beta"])
        final.kernel = WeightedSumKernel(tuple(bank.kernels), beta)
        return FmklModel(bank, beta, final)
    if method == "smkl":
        success = _success_from(doc["success"], r)
        final.kernel = CombinedKernel(tuple(bank.kernels), success)
        return SmklModel(bank, success, final, r.arr(doc["sv_weights"]),
                         doc["min_eigenvalue"], doc["psd_policy"], doc["fallback_policy"])
    raise ModelFormatError(f"unknown method {method!r}")


def save_model(path, bundle: ModelBundle) -> None:
    w = _Writer()
    body = _model_doc(bundle.method, bundle.model, w)
    table, offset = [], 0
    for a in w.arrays:
        table.append({"dtype": a.dtype.str, "shape": list(a.shape), "offset": offset})
        offset += a.nbytes
    header = {
        "magic": MAGIC,
        "format_version": FORMAT_VERSION,
        "method": bundle.method,
        "scaler": None if bundle.scaler is None else bundle.scaler.to_json(),
        "manifest": None if bundle.manifest is None else bundle.manifest.to_json(),
        "meta": bundle.meta,
        "arrays": table,
        "model": body,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for a in w.arrays:
            fh.write(a.tobytes())


def load_model(path) -> ModelBundle:
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n")
    try:
        header = json.loads(raw[:cut].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not a model file") from exc
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {header.get('format_version')} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    reader = _Reader(header["arrays"], raw[cut + 1:])
    try:
        model = _model_from(header["method"], header["model"], reader)
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: malformed model header ({exc})") from exc
    return ModelBundle(
        method=header["method"],
        model=model,
        scaler=None if header["scaler"] is None else Scaler.from_json(header["scaler"]),
        manifest=None if header["manifest"] is None else FeatureManifest.from_json(header["manifest"]),
        meta=header.get("meta") or {},
    )
