import numpy as np
import pytest

from clarigen import autodiff as ad
from clarigen import checkpoint
from clarigen.errors import CheckpointError


def test_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    arrays = {
        "emb": rng.normal(size=(11, 4)),
        "w": rng.normal(size=(4, 4)),
        "b": rng.normal(size=4),
        "scalarish": rng.normal(size=(1,)),
    }
    path = tmp_path / "model.ckpt"
    checkpoint.save(path, arrays)
    loaded = checkpoint.load(path)
    assert list(loaded) == list(arrays)
    for k in arrays:
        assert loaded[k].shape == arrays[k].shape
        assert np.array_equal(loaded[k], arrays[k])
        assert loaded[k].tobytes() == arrays[k].tobytes()


def test_save_is_deterministic(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.zeros(2)}
    p1, p2 = tmp_path / "one.ckpt", tmp_path / "two.ckpt"
    checkpoint.save(p1, arrays)
    checkpoint.save(p2, arrays)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes().startswith(b"CLARIGEN1")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC!" + b"\x00" * 30)
    with pytest.raises(CheckpointError):
        checkpoint.load(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "model.ckpt"
    checkpoint.save(path, {"w": np.ones((3, 3))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        checkpoint.load(path)


def test_load_into_validates_names_and_shapes(tmp_path):
    path = tmp_path / "model.ckpt"
    checkpoint.save(path, {"w": np.ones((3, 3))})
    params = {"w": ad.parameter(np.zeros((3, 3)))}
    checkpoint.load_into(path, params)
    assert np.array_equal(params["w"].data, np.ones((3, 3)))

    with pytest.raises(CheckpointError) as err:
        checkpoint.load_into(path, {"w": ad.parameter(np.zeros((2, 3)))})
    assert "(3, 3)" in str(err.value) and "(2, 3)" in str(err.value)

    with pytest.raises(CheckpointError):
        checkpoint.load_into(path, {"other": ad.parameter(np.zeros((3, 3)))})
