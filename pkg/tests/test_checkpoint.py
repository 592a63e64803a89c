import numpy as np
import pytest
from numpy.testing import assert_array_equal

from checkpoint import Checkpoint, config_from_checkpoint, load_checkpoint, save_checkpoint
from errors import CheckpointError


def test_round_trip(tmp_path, rng):
    state = {"param/a.weight": rng.standard_normal((3, 2)), "buffer/bn.running_var": np.ones(4, dtype=np.float32)}
    saved = Checkpoint(state, step=7, epoch=2, best_map50=0.25, config_yaml="frames: 2\n")
    loaded = load_checkpoint(save_checkpoint(tmp_path / "ck" / "last.npz", saved))
    assert (loaded.step, loaded.epoch, loaded.best_map50) == (7, 2, 0.25)
    assert loaded.config_yaml == "frames: 2\n"
    assert loaded.state.keys() == state.keys()
    for key in state:
        assert_array_equal(loaded.state[key], state[key])
        assert loaded.state[key].dtype == state[key].dtype


def test_unsupported_version(tmp_path):
    path = tmp_path / "old.npz"
    np.savez(path, **{"meta/format_version": np.int64(99), "meta/step": np.int64(0)})
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_and_corrupt_files(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.npz")
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not an archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_config_fallback():
    assert config_from_checkpoint(Checkpoint({}, config_yaml="a: 1\n")) == "a: 1\n"
    assert config_from_checkpoint(Checkpoint({}), fallback="b: 2\n") == "b: 2\n"
    with pytest.raises(CheckpointError):
        config_from_checkpoint(Checkpoint({}))
