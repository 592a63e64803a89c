import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dataset import (
    ClipDataset,
    clip_at,
    export_dataset,
    load_sequence,
    load_split,
    read_index,
    read_pgm,
    sequence_seeds,
    to_input,
    write_pgm,
)
from errors import DataError
from synthdata import generate


def test_pgm_round_trip(tmp_path, rng):
    image = rng.integers(0, 256, size=(9, 13), dtype=np.uint8)
    write_pgm(tmp_path / "f.pgm", image)
    assert (tmp_path / "f.pgm").read_bytes().startswith(b"P5")
    assert_array_equal(read_pgm(tmp_path / "f.pgm"), image)


def test_read_pgm_missing(tmp_path):
    with pytest.raises(DataError):
        read_pgm(tmp_path / "missing.pgm")


def test_sequence_seeds_are_deterministic():
    assert sequence_seeds(3, 4) == sequence_seeds(3, 4)
    assert len(set(sequence_seeds(3, 4))) == 4


def test_splits_are_disjoint_and_cover(dataset_dir):
    index = read_index(dataset_dir)
    assert not set(index.train) & set(index.val)
    assert sorted(index.train + index.val) == sorted(index.mse)
    assert len(index.val) == 1


def test_exported_sequence_loads_back(dataset_dir):
    index = read_index(dataset_dir)
    sequence = load_sequence(dataset_dir / index.train[0])
    assert sequence.frames.shape == (3, 16, 16)
    assert len(sequence.boxes) == 3
    assert len(load_split(dataset_dir, "val")) == 1
    with pytest.raises(DataError):
        load_split(dataset_dir, "test")


def test_export_rejects_bad_val_count(tmp_path, tiny_scene):
    with pytest.raises(DataError):
        export_dataset([generate(tiny_scene)], tmp_path, val_count=2)


def test_missing_index(tmp_path):
    with pytest.raises(DataError):
        read_index(tmp_path)


def test_clip_is_left_padded_with_first_frame():
    frames = np.arange(4)[:, None, None] * np.ones((4, 2, 2), dtype=np.uint8)
    assert_array_equal(clip_at(frames, 1, 3)[:, 0, 0], [0, 0, 1])
    assert_array_equal(clip_at(frames, 3, 3)[:, 0, 0], [1, 2, 3])


def test_to_input_scales_to_unit_range():
    out = to_input(np.full((1, 2, 3, 3), 255, dtype=np.uint8))
    assert out.shape == (1, 2, 1, 3, 3)
    assert out.max() == 1.0


def test_clip_dataset_batches(dataset_dir):
    data = ClipDataset.from_directory(dataset_dir, "train", length=2)
    assert len(data) == 9
    batches = list(data.batches(4))
    assert [b.frames.shape[0] for b in batches] == [4, 4, 1]
    assert batches[0].frames.shape[1:] == (2, 1, 16, 16)
    assert batches[0].keys[0][1] == 0
    with pytest.raises(DataError):
        ClipDataset([], 2)
