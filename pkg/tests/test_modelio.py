import json
import warnings

import numpy as np
import pytest

from kernelforge.datasets import scale_unit_interval
from kernelforge.mkl import (
    ensemble_from_bank,
    make_specs,
    train_base_bank,
    train_concat,
    train_fmkl,
    train_smkl,
)
from kernelforge.modelio import (
    FORMAT_VERSION,
    ModelBundle,
    ModelFormatError,
    load_model,
    save_model,
)
from kernelforge.search import GridConfig

GRID = GridConfig.small()


@pytest.fixture(scope="module")
def trained():
    from conftest import two_group_dataset

    ds = two_group_dataset()
    train, scaler = scale_unit_interval(ds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bank = train_base_bank(train, make_specs(ds.manifest), GRID)
        models = {
            "concat": train_concat(train, GRID),
            "fec": ensemble_from_bank(bank),
            "fmkl": train_fmkl(train, grid=GRID, bank=bank),
            "smkl": train_smkl(train, grid=GRID, bank=bank, psd_policy="warn"),
        }
    return ds, scaler, models


@pytest.mark.parametrize("method", ["concat", "fec", "fmkl", "smkl"])
def test_round_trip_predictions_identical(tmp_path, trained, method):
    ds, scaler, models = trained
    bundle = ModelBundle(method, models[method], scaler, ds.manifest, {"seed": 0})
    path = tmp_path / "m.bin"
    save_model(path, bundle)
    loaded = load_model(path)
    a = bundle.predict(ds.X)
    b = loaded.predict(ds.X)
    assert a[0].tolist() == b[0].tolist()
    assert a[1].tobytes() == b[1].tobytes()
    assert loaded.summary() == bundle.summary()
    # saving is deterministic
    save_model(tmp_path / "again.bin", loaded)
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_header_is_versioned_json(tmp_path, trained):
    ds, scaler, models = trained
    path = tmp_path / "m.bin"
    save_model(path, ModelBundle("concat", models["concat"], scaler, ds.manifest))
    header = json.loads(path.read_bytes().split(b"\n", 1)[0])
    assert header["format_version"] == FORMAT_VERSION
    assert header["method"] == "concat"
    assert header["manifest"]["groups"][0]["name"] == "a"


def test_rejects_other_versions_and_garbage(tmp_path, trained):
    ds, scaler, models = trained
    path = tmp_path / "m.bin"
    save_model(path, ModelBundle("concat", models["concat"], scaler, ds.manifest))
    head, body = path.read_bytes().split(b"\n", 1)
    doc = json.loads(head)
    doc["format_version"] = FORMAT_VERSION + 1
    path.write_bytes(json.dumps(doc).encode() + b"\n" + body)
    with pytest.raises(ModelFormatError, match="version"):
        load_model(path)
    path.write_bytes(b"hello\nworld")
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_predict_checks_dimension(trained):
    ds, scaler, models = trained
    bundle = ModelBundle("concat", models["concat"], scaler, ds.manifest)
    with pytest.raises(ValueError, match="dimension mismatch"):
        bundle.predict(np.zeros((2, 3)))


def test_unknown_method_rejected(tmp_path, trained):
    ds, scaler, models = trained
    with pytest.raises(ValueError):
        save_model(tmp_path / "m.bin", ModelBundle("nope", models["concat"], scaler, ds.manifest))
