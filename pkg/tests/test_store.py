import json

import numpy as np
import pytest

from gridrl.errors import NumericError, ShapeError
from gridrl.nn import GradStore, ParamStore, load_checkpoint, save_checkpoint


def test_add_and_get():
    ps = ParamStore()
    ps.add("w", np.ones((2, 3)))
    ps.add("b", np.zeros(3), trainable=False)
    assert ps.names() == ["w", "b"]
    assert ps.trainable_names() == ["w"]
    assert ps["w"].shape == (2, 3)


def test_shape_locked():
    ps = ParamStore()
    ps.add("w", np.ones((2, 2)))
    with pytest.raises(ShapeError):
        ps["w"] = np.ones((3, 2))


def test_duplicate_name_rejected():
    ps = ParamStore()
    ps.add("w", np.ones(2))
    with pytest.raises(KeyError):
        ps.add("w", np.ones(2))


def test_finite_enforced_on_params_not_grads():
    ps = ParamStore()
    with pytest.raises(NumericError):
        ps.add("w", np.array([1.0, np.nan]))
    gs = GradStore()
    gs.add("w", np.array([1.0, np.nan]))  # allowed; optimizer rejects later
    assert np.isnan(gs["w"][1])


def test_copy_is_deep():
    ps = ParamStore()
    ps.add("w", np.ones(2))
    cp = ps.copy()
    cp["w"] = np.zeros(2)
    assert ps["w"][0] == 1.0


def test_grad_accumulate_and_norm():
    gs = GradStore()
    gs.accumulate("w", np.array([3.0, 4.0]))
    gs.accumulate("w", np.array([0.0, 0.0]))
    assert gs.global_norm() == pytest.approx(5.0)
    clipped = gs.clip_global_norm(1.0)
    assert clipped.global_norm() == pytest.approx(1.0)
    # clipping below the max leaves the store untouched
    assert gs.clip_global_norm(10.0) is gs


def test_checkpoint_roundtrip_bytes(tmp_path):
    ps = ParamStore()
    rng = np.random.default_rng(3)
    ps.add("layer0.W", rng.normal(size=(3, 2)))
    ps.add("layer0.bn.running_var", np.ones(2) * 0.73, trainable=False)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, {"actor": ps}, extra={"step": 12})
    stores, extra = load_checkpoint(path)
    assert extra["step"] == 12
    back = stores["actor"]
    assert np.array_equal(back["layer0.W"], ps["layer0.W"])
    assert not back.is_trainable("layer0.bn.running_var")

    # save -> load -> save reproduces the file byte for byte
    path2 = tmp_path / "ckpt2.json"
    save_checkpoint(path2, stores, extra=extra)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_is_plain_json(tmp_path):
    ps = ParamStore()
    ps.add("w", np.arange(6, dtype=float).reshape(2, 3))
    path = tmp_path / "c.json"
    save_checkpoint(path, {"net": ps})
    doc = json.loads(path.read_text())
    assert doc["stores"]["net"]["w"]["shape"] == [2, 3]
    assert doc["stores"]["net"]["w"]["data"] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
