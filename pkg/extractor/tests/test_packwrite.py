"""The emitted files must be readable by the retrieval package, bit-exactly."""

import numpy as np
import pytest
from nbnnplace import load_keypoint_sets, load_pack, read_pack_info

from nbnnextract import (
    ExtractedKeypoints,
    ExtractedScene,
    ParameterError,
    write_keypoint_file,
    write_pack,
)


def scene(image_id, extent, boxes, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(1 + len(boxes), dim)).astype(np.float32)
    return ExtractedScene(image_id, extent, boxes, vectors)


def test_pack_round_trips_through_the_retrieval_package(tmp_path):
    scenes = [
        scene("alpha", (320, 240), [(10.0, 20.0, 64.0, 48.0), (0.0, 0.0, 320.0, 240.0)], seed=1),
        scene("beta", (160, 120), [(4.0, 4.0, 100.0, 100.0)], seed=2),
        scene("gamma", (320, 200), [], seed=3),
    ]
    path = tmp_path / "out.nbnp"
    extent = write_pack(scenes, path)
    assert extent == (320, 240)  # max width x max height over the batch

    info = read_pack_info(path)
    assert (info.count, info.dim, info.extent) == (3, 16, (320, 240))

    loaded = load_pack(path)
    assert [m.image_id for m in loaded] == ["alpha", "beta", "gamma"]
    for original, model in zip(scenes, loaded):
        assert model.parts[0].level == "image"
        assert model.parts[0].box == (0.0, 0.0, float(original.extent[0]),
                                      float(original.extent[1]))
        assert [p.box for p in model.parts[1:]] == original.boxes
        assert np.array_equal(model.vectors(), original.vectors)
        assert model.viewpoint is None


def test_pack_bytes_are_deterministic(tmp_path):
    scenes = [scene("a", (64, 64), [(1.0, 2.0, 30.0, 20.0)], seed=9)]
    write_pack(scenes, tmp_path / "one.nbnp")
    write_pack(scenes, tmp_path / "two.nbnp")
    assert (tmp_path / "one.nbnp").read_bytes() == (tmp_path / "two.nbnp").read_bytes()


def test_pack_writer_validation(tmp_path):
    with pytest.raises(ParameterError):
        write_pack(
            [scene("a", (64, 64), [], dim=8), scene("b", (64, 64), [], dim=16)],
            tmp_path / "mixed.nbnp",
        )
    with pytest.raises(ParameterError):
        write_pack([scene("a", (64, 64), [(40.0, 40.0, 30.0, 30.0)])],
                   tmp_path / "oob.nbnp")
    with pytest.raises(ParameterError):
        ExtractedScene("a", (64, 64), [(0.0, 0.0, 8.0, 8.0)],
                       np.zeros((1, 4), np.float32))  # needs 2 rows
    with pytest.raises(ParameterError):
        ExtractedScene("a", (64, 64), [],
                       np.array([[np.nan, 0.0]], np.float32))


def test_no_temp_droppings(tmp_path):
    write_pack([scene("a", (64, 64), [])], tmp_path / "clean.nbnp")
    assert [p.name for p in tmp_path.iterdir()] == ["clean.nbnp"]


def test_keypoint_file_round_trips_including_empty_sets(tmp_path):
    rng = np.random.default_rng(5)
    full = ExtractedKeypoints(
        "full", (320, 240),
        rng.uniform(0, 200, size=(12, 2)).astype(np.float32),
        rng.normal(size=(12, 128)).astype(np.float32),
    )
    empty = ExtractedKeypoints(
        "empty", (320, 240),
        np.empty((0, 2), np.float32),
        np.empty((0, 128), np.float32),
    )
    path = tmp_path / "kp.nbkp"
    write_keypoint_file([full, empty], path)

    sets = load_keypoint_sets(path)
    assert [s.image_id for s in sets] == ["full", "empty"]
    assert np.array_equal(sets[0].positions, full.positions)
    assert np.array_equal(sets[0].descriptors, full.descriptors)
    assert sets[0].extent == (320.0, 240.0)
    assert len(sets[1]) == 0


def test_keypoint_writer_rejects_mixed_dims(tmp_path):
    a = ExtractedKeypoints("a", (64, 64), np.zeros((2, 2), np.float32),
                           np.zeros((2, 8), np.float32))
    b = ExtractedKeypoints("b", (64, 64), np.zeros((2, 2), np.float32),
                           np.zeros((2, 16), np.float32))
    with pytest.raises(ParameterError):
        write_keypoint_file([a, b], tmp_path / "mixed.nbkp")
