import numpy as np
import pytest

from vpx import synthdata
from vpx.geometry import project
from vpx.synthdata import EVAL12, ITOP15, generate, read_dataset, write_dataset


def test_frames_are_deterministic_and_independent():
    a = generate(3, seed=7)
    b = generate(3, seed=7)
    single = synthdata.synth_frame(2, 7)
    for fa, fb in zip(a.frames, b.frames):
        assert fa.depth.depth.tobytes() == fb.depth.depth.tobytes()
        assert fa.xyz.tobytes() == fb.xyz.tobytes()
    assert single.depth.depth.tobytes() == a.frames[2].depth.depth.tobytes()
    c = generate(1, seed=8)
    assert c.frames[0].xyz.tobytes() != a.frames[0].xyz.tobytes()


def test_joint_sets():
    assert generate(1, 0).joint_names == ITOP15
    assert generate(1, 0, joint_set="eval12").joint_names == EVAL12
    with pytest.raises(ValueError):
        generate(1, 0, joint_set="coco")


def test_annotations_consistent_with_camera():
    ds = generate(4, seed=1)
    for fr in ds.frames:
        np.testing.assert_allclose(project(fr.xyz, ds.intrinsics), fr.uv, atol=1e-9)
        assert fr.depth.valid.any()
        # visible joints lie just behind the rendered surface at their pixel
        for k in np.nonzero(~fr.occluded)[0]:
            u, v = np.floor(fr.uv[k]).astype(int)
            assert fr.depth.depth[v, u] <= fr.xyz[k, 2] + 1e-3


def test_depth_noise_only_on_valid_pixels():
    clean = synthdata.synth_frame(0, 3)
    noisy = synthdata.synth_frame(0, 3, noise_sigma=5.0)
    assert np.array_equal(clean.depth.valid, noisy.depth.valid)
    assert np.all(noisy.depth.depth[~noisy.depth.valid] == 0)
    assert not np.array_equal(clean.depth.depth, noisy.depth.depth)


def test_dataset_file_round_trip(tmp_path):
    ds = generate(3, seed=2)
    write_dataset(ds, tmp_path / "a")
    back = read_dataset(tmp_path / "a")
    assert back.joint_names == ds.joint_names and back.intrinsics == ds.intrinsics
    for fa, fb in zip(ds.frames, back.frames):
        assert fa.depth.depth.tobytes() == fb.depth.depth.tobytes()
        np.testing.assert_array_equal(fa.xyz, fb.xyz)
        np.testing.assert_array_equal(fa.occluded, fb.occluded)
    write_dataset(back, tmp_path / "b")
    for name in ["manifest.json", "depth/000001.tdf"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{}")
    with pytest.raises(ValueError, match="manifest"):
        read_dataset(tmp_path)
