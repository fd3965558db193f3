import io
import json

import numpy as np
import pytest

from vpx import profiles, synthdata
from vpx.networks import Network
from vpx.pipeline import ablation, data, infer, train
from vpx.pipeline.config import TrainConfig

TINY = profiles.get("tiny")


@pytest.fixture(scope="module")
def ds():
    return synthdata.generate(4, seed=3)


def test_lr_schedule_and_overrides():
    c = TrainConfig(learning_rate=0.1, lr_drop_at=5)
    assert c.lr_at(4) == 0.1 and c.lr_at(5) == pytest.approx(0.01)
    t = TrainConfig.for_profile("tiny", iterations="7")
    assert t.iterations == 7 and t.learning_rate == TINY.learning_rate
    with pytest.raises(KeyError, match="bogus"):
        t.with_overrides({"bogus": 1})
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)


def test_coordinate_normalization_round_trip():
    dims = (16, 16, 20)
    v = np.array([[0.0, 15.0, 9.5], [7.5, 3.2, 19.0]])
    n = train.normalize_coords(v, dims)
    assert np.all(np.abs(n) <= 1)
    np.testing.assert_allclose(train.denormalize_coords(n, dims), v)


def test_pnet_target_decodes_to_joint_pixels(ds):
    fr = ds.frames[0]
    off = data.center_offset(TINY)
    uv, peak = data.decode_pnet(data.pnet_target(fr, off, TINY), off, TINY)
    err = np.abs(uv - data.pixel_index(fr.uv))
    inside = peak > 0.5
    assert inside.any() and np.all(err[inside] <= TINY.heatmap_stride / 2)


def test_depth_augmentation_shifts_targets():
    g = np.arange(2 * 2 * 6, dtype=np.float32).reshape(2, 2, 6)
    v = np.array([[1.0, 1.0, 3.0]])
    out, v2, off = data.augment_vnet(g, v, None, 4, offset=2)
    assert out.shape == (2, 2, 4) and v2[0, 2] == 1.0 and off == 2
    assert v[0, 2] == 3.0
    with pytest.raises(ValueError):
        data.augment_vnet(g, v, None, 4, offset=3)


def test_cropset_round_trip(ds, tmp_path):
    cs = infer.generate_vnet_crops(ds.subset([0, 1]), TINY, mode="gt")
    assert len(cs) == 2 * ds.num_joints
    own = cs.voxels[np.arange(len(cs)), cs.joint]
    # ground-truth centered crops hold their joint at the window center in x and y
    assert np.all(np.abs(own[:, :2] - np.array(TINY.grid[:2]) // 2) <= 0.5 + 1e-9)
    cs.save(tmp_path / "c.tdf")
    back = data.CropSet.load(tmp_path / "c.tdf")
    assert back.grids.tobytes() == cs.grids.tobytes()
    np.testing.assert_allclose(back.voxels, cs.voxels, atol=1e-4)
    assert back.crops == cs.crops
    for k in cs.flags:
        np.testing.assert_array_equal(back.flags[k], cs.flags[k])


def test_jitter_is_bounded(ds):
    gt = np.stack([data.gt_centers(f, ds.width, ds.height) for f in ds.frames])
    j = infer.jitter_centers(gt, np.random.default_rng(0), 5, ds.width, ds.height)
    assert np.abs(j - gt).max() <= 5 and not np.array_equal(j, gt)
    with pytest.raises(ValueError):
        infer.generate_vnet_crops(ds, TINY, mode="pnet")


def _tiny_cfg(**kw):
    base = dict(iterations=3, lr_drop_at=2, log_every=1, eval_every=2, val_fraction=0.25, batch_size=2)
    base.update(kw)
    return TrainConfig.for_profile("tiny", **base)


def test_training_is_deterministic(ds, tmp_path):
    cs = infer.generate_vnet_crops(ds.subset([0]), TINY, mode="gt")
    out = []
    for name in ("a", "b"):
        res = train.train_vnet(cs, _tiny_cfg(), TINY)
        train.save_result(res, tmp_path / name, _tiny_cfg(), TINY)
        out.append((tmp_path / name / "final.ckpt").read_bytes())
        assert (tmp_path / name / "best.ckpt").exists()
    assert out[0] == out[1]
    net = Network.load(tmp_path / "a" / "final.ckpt")
    assert net.extra["config"]["iterations"] == 3


def test_fit_logs_json_events(ds):
    buf = io.StringIO()
    log = train.JsonLog(buf)
    train.train_pnet(ds, _tiny_cfg(val_fraction=0.0), TINY, log)
    events = [json.loads(line) for line in buf.getvalue().splitlines()]
    iters = [e for e in events if e["event"] == "iter"]
    assert [e["iteration"] for e in iters] == [1, 2, 3]
    assert {"loss", "lr", "wall"} <= set(iters[0])
    assert iters[2]["lr"] == pytest.approx(TINY.learning_rate / 10)
    assert events[-1]["event"] == "done"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(ds):
    cs = infer.generate_vnet_crops(ds.subset([0]), TINY, mode="gt")
    with pytest.raises(train.TrainingDiverged, match="iteration"):
        train.train_vnet(cs, _tiny_cfg(learning_rate=1e12, val_fraction=0.0), TINY)


def test_oracle_pipeline_within_quantization_bound(ds):
    s2, s3 = infer.oracle_stages(TINY, ds.intrinsics)
    pred = infer.infer_dataset(ds, s2, s3, TINY)
    off = data.center_offset(TINY)
    S = TINY.input_size
    within, total = 0, 0
    for fr, p in zip(ds.frames, pred.frames):
        for k in range(ds.num_joints):
            u, v = fr.uv[k]
            if fr.occluded[k] or p.flagged[k] or not (off[0] <= u < off[0] + S and off[1] <= v < off[1] + S):
                continue
            bound = infer.quantization_bound(fr.uv[k], fr.xyz[k, 2], ds.intrinsics, TINY.bin_size)
            total += 1
            within += np.linalg.norm(p.xyz[k] - fr.xyz[k]) <= bound + 1e-6
    # at tiny scale the 5x5 anchor window occasionally lands on a neighbouring limb
    assert total > 40 and within >= 0.9 * total


def test_quantization_bound_covers_cell_corners():
    cam = synthdata.generate(1, 0).intrinsics
    b = infer.quantization_bound((50.2, 60.7), 2000.0, cam, 25.0)
    half_px = 0.5 * 2000.0 / cam.fx
    assert b >= np.sqrt(2 * half_px ** 2 + 12.5 ** 2)


def test_predictions_jsonl_round_trip(ds, tmp_path):
    s2, s3 = infer.oracle_stages(TINY, ds.intrinsics)
    pred = infer.infer_dataset(ds.subset([0, 1]), s2, s3, TINY)
    pred.write_jsonl(tmp_path / "p.jsonl")
    recs = infer.read_jsonl(tmp_path / "p.jsonl")
    assert set(recs[0]) == {"frame_id", "joints"}
    assert set(recs[0]["joints"][0]) == {"id", "u", "v", "z_mm", "x_mm", "y_mm", "confidence", "flagged"}
    ids, xyz = infer.records_to_xyz(recs)
    assert ids == ["000000", "000001"]
    np.testing.assert_array_equal(xyz, pred.xyz)
    pred.write_jsonl(tmp_path / "q.jsonl")
    assert (tmp_path / "p.jsonl").read_bytes() == (tmp_path / "q.jsonl").read_bytes()


def test_holistic_box_cell_pixel_inverse(ds):
    fr = ds.frames[0]
    box = ablation.holistic_box(fr, data.pixel_index(fr.uv), TINY, ds.joint_names.index("torso"))
    c = np.array([3.0, 40.5])
    np.testing.assert_allclose(box.pixel_to_cell(box.cell_to_pixel(c)), c)
    g = ablation.holistic_grid(fr, box)
    assert g.shape == (TINY.holistic_size, TINY.holistic_size, TINY.grid[2])
    assert (g == 1).sum(axis=2).max() <= 1


def test_patch_stages_decode(ds):
    from vpx.networks import build_ablation
    cs = infer.generate_vnet_crops(ds.subset([0]), TINY, mode="gt")
    for kind in ("2d_co", "2d_vl"):
        task = train.PatchTask(cs, TINY, kind)
        x, t = task.eval_batch(np.arange(2))
        net = build_ablation(kind, ds.num_joints, profile="tiny")
        assert net.forward(x, train=True).shape == t.shape
        stage = ablation.patch_stage(net, TINY)
        pred = infer.infer_frame(ds.frames[0], None, stage, TINY, ds.intrinsics,
                                 uv2d=data.gt_centers(ds.frames[0], ds.width, ds.height))
        assert np.all(np.isfinite(pred.xyz))
