"""Acceptance criteria 1-9. Each test records a one-line PASS/FAIL shown in the pytest summary."""
import math
import time

import numpy as np
import pytest

from helpers import GRADIENT_CASES, record
from vpx import heatmaps, metrics, profiles, synthdata, voxelizer
from vpx.geometry import discretize_depths
from vpx.networks import VNET_BLOCKS, Network, build_vnet, measure_receptive_field, receptive_field
from vpx.pipeline import data, infer, train
from vpx.pipeline.config import TrainConfig

TINY = profiles.get("tiny")
# the 3D stage sits on a loss plateau for ~500 steps at the profile lr; this schedule
# was the best measured within the overfit time budget
VNET_RECIPE = dict(learning_rate=3e-4, iterations=1000, lr_drop_at=750)


# 1 ---------------------------------------------------------------------------

def test_criterion_1_gradient_suite():
    rng = np.random.default_rng(2024)
    t0 = time.process_time()
    worst = {op: max(case(rng) for case in cases) for op, cases in GRADIENT_CASES.items()}
    cpu = time.process_time() - t0
    counts = {op: len(c) for op, c in GRADIENT_CASES.items()}
    ok = all(e < 1e-3 for e in worst.values()) and all(n >= 5 for n in counts.values()) and cpu < 60
    detail = ", ".join(f"{op} {e:.1e}" for op, e in sorted(worst.items())) + f"; {cpu:.1f} s CPU"
    assert record(1, ok, detail), detail


# 2 ---------------------------------------------------------------------------

def test_criterion_2_architecture_fidelity():
    net = build_vnet(15, "paper")
    convs = [l for l in net.spec.layers if l.kind == "conv"]
    layout = [(c.out_channels, c.kernel) for c in convs]
    want = [(c, (k, k, k)) for c, k in VNET_BLOCKS] + [(15, (1, 1, 1))]
    strides = {c.stride for c in convs}
    rf = receptive_field(net.spec)
    probe = measure_receptive_field(build_vnet(15, profiles.get("paper", channel_divisor=64)).spec, 41)
    ok = (len(net.spec.blocks()) == 11 and layout == want and strides == {(1, 1, 1)}
          and rf == (35, 35, 35) and probe == rf)
    detail = f"{len(net.spec.blocks())} blocks, formula {rf}, perturbation {probe}"
    assert record(2, ok, detail), detail


# 3 ---------------------------------------------------------------------------

def test_criterion_3_hit_grid_invariants():
    ds = synthdata.generate(67, seed=31)
    rng = np.random.default_rng(31)
    torso = ds.joint_names.index("torso")
    crops = violations = 0
    for fr in ds.frames:
        # jittered centers reach image borders and background as well as the body
        centers = infer.jitter_centers(data.gt_centers(fr, ds.width, ds.height), rng, 8, ds.width, ds.height)
        metas, grids, _, _ = data.frame_crops(fr, centers, TINY, torso)
        for m, g in zip(metas, grids):
            crops += 1
            d, ok = voxelizer.patch_depth(fr.depth, m)
            expected = int((discretize_depths(np.where(ok, d, np.nan), m.discretization) >= 0).sum())
            bad = (not np.all((g == 1) | (g == -1))) or (g == 1).sum(axis=2).max() > 1 or (g == 1).sum() != expected
            violations += bad
    ok = crops >= 1000 and violations == 0
    detail = f"{crops} crops, {violations} violations"
    assert record(3, ok, detail), detail


# 4 ---------------------------------------------------------------------------

def _round_trip(dims, sigma):
    misses, peak_err, sigma_err = 0, 0.0, 0.0
    s = int(sigma)
    for cell in np.ndindex(*dims):
        t = heatmaps.make_target(cell, dims, sigma)
        idx, peak = heatmaps.decode_argmax(t)
        misses += idx != cell
        peak_err = max(peak_err, abs(peak - 1.0))
        for a in range(len(dims)):
            if cell[a] + s < dims[a]:
                off = list(cell)
                off[a] += s
                sigma_err = max(sigma_err, abs(float(t[tuple(off)]) - math.exp(-0.5)))
    return misses, peak_err, sigma_err


def test_criterion_4_heatmap_round_trip():
    paper = profiles.get("paper")
    m2, p2, s2 = _round_trip((paper.heatmap_size, paper.heatmap_size), paper.sigma_2d)
    m3, p3, s3 = _round_trip(paper.grid[:2] + (paper.depth_crop,), paper.sigma_3d)
    ok = m2 == m3 == 0 and p2 == p3 == 0 and max(s2, s3) <= 1e-6
    detail = (f"64x64 misses {m2}, 32x32x36 misses {m3}, peak err {max(p2, p3):.1e}, "
              f"one-sigma err {max(s2, s3):.1e}")
    assert record(4, ok, detail), detail


# 5 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_overfit():
    ds = synthdata.generate(16, seed=0)
    cfg = TrainConfig.for_profile("tiny", val_fraction=0.0, seed=0)
    t0 = time.perf_counter()
    pnet = train.train_pnet(ds, cfg, TINY).network
    uv, _ = infer.predict_2d(infer.NetworkStage2D(pnet, TINY, ds.z_window), ds.frames, TINY)
    gt = np.stack([data.pixel_index(f.uv) for f in ds.frames])
    rates, _ = metrics.pckh(uv, gt, *ds.head_neck())
    crops = infer.generate_vnet_crops(ds, TINY, mode="gt")
    vnet = train.train_vnet(crops, cfg.with_overrides(VNET_RECIPE), TINY).network
    err = train.own_joint_errors(vnet, crops, TINY)
    wall = time.perf_counter() - t0
    p, within = float(np.mean(rates)), float(np.mean(err <= 1))
    ok = p >= 0.95 and within == 1.0 and wall < 15 * 60
    detail = f"P-Net PCKh {p:.3f}, V-Net within 1 voxel {within:.3f} ({int((err > 1).sum())} misses), {wall:.0f} s wall"
    assert record(5, ok, detail), detail


# 6 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_generalization():
    train_ds = synthdata.generate(256, seed=101)
    test_ds = synthdata.generate(64, seed=202)
    cfg = TrainConfig.for_profile("tiny", seed=0)
    t0 = time.perf_counter()
    pnet = train.train_pnet(train_ds, cfg, TINY).best
    s2 = infer.NetworkStage2D(pnet, TINY, train_ds.z_window)
    crops = infer.generate_vnet_crops(train_ds, TINY, "pnet", s2)
    uv_test, _ = infer.predict_2d(s2, test_ds.frames, TINY)
    vcfg = cfg.with_overrides(VNET_RECIPE)
    vnet = train.train_vnet(crops, vcfg, TINY).best
    _, s3 = infer.network_stages(None, vnet, TINY, test_ds.z_window)
    ours = infer.infer_dataset(test_ds, None, s3, TINY, uv2d=uv_test)
    from vpx.pipeline import ablation
    co = train.train_patch_model("2d_co", crops, vcfg, TINY).best
    base = infer.infer_dataset(test_ds, None, ablation.patch_stage(co, TINY), TINY, uv2d=uv_test)
    wall = time.perf_counter() - t0
    m3 = ablation.evaluate_predictions(ours.xyz, test_ds).full_body
    mc = ablation.evaluate_predictions(base.xyz, test_ds).full_body
    ok = m3 - mc >= 0.03 and wall < 2 * 3600
    detail = f"3D_VL mAP {100 * m3:.1f}, 2D_CO mAP {100 * mc:.1f}, margin {100 * (m3 - mc):+.1f} pts, {wall:.0f} s wall"
    assert record(6, ok, detail), detail


# 7 ---------------------------------------------------------------------------

NAMES = ("head", "neck", "r_hand", "l_hand")


def _fixture():
    # head-neck segment 50 px in every frame -> PCKh radius 25 px (inclusive)
    gt2 = np.zeros((3, 4, 2))
    gt2[:, 0] = [100, 100]
    gt2[:, 1] = [100, 150]
    gt2[:, 2] = [60, 200]
    gt2[:, 3] = [140, 200]
    pred2 = gt2.copy()
    pred2[0, 2] += [15, 20]           # exactly 25 px: hit
    pred2[1, 2] += [15, 20.001]       # just over: miss
    pred2[2, 2] += [30, 40]           # 50 px: miss
    pred2[0, 3] += [0, 24]
    pred2[1, 3] += [-25, 0]           # exactly 25: hit
    pred2[2, 3] += [7, 24]            # 25: hit
    pred2[2, 0] += [0, 26]            # head miss in frame 3
    gt3 = np.zeros((3, 4, 3)) + [0, 0, 2000]
    pred3 = gt3.copy()
    pred3[0, 0] += [60, 80, 0]        # exactly 100 mm: hit
    pred3[1, 0] += [0, 0, 100.01]     # miss
    pred3[:, 1] += [0, 0, -99]        # all hit
    pred3[0, 2] += [0, 120, 0]        # miss
    pred3[1, 2] += [0, 0, 100]        # hit
    pred3[:, 3] += [100, 100, 0]      # all miss (141 mm)
    return pred2, gt2, pred3, gt3


def test_criterion_7_metric_oracles():
    pred2, gt2, pred3, gt3 = _fixture()
    rates, skipped = metrics.pckh(pred2, gt2, 0, 1)
    want_pckh = [2 / 3, 1.0, 1 / 3, 1.0]
    prec = metrics.rule_10cm(pred3, gt3)
    want_prec = [2 / 3, 1.0, 2 / 3, 0.0]
    want_map = (2 / 3 + 1.0 + 2 / 3 + 0.0) / 4
    rep = metrics.evaluate(pred3, gt3, NAMES, pred2, gt2)
    ok = (rates.tolist() == want_pckh and skipped == 0 and prec.tolist() == want_prec
          and rep.full_body == want_map and rep.pckh.tolist() == want_pckh)
    detail = f"PCKh {np.round(rates, 3).tolist()}, 10cm {np.round(prec, 3).tolist()}, mAP {rep.full_body:.4f}"
    assert record(7, ok, detail), detail


# 8 ---------------------------------------------------------------------------

def test_criterion_8_determinism_and_serialization(tmp_path):
    ds = synthdata.generate(4, seed=5)
    cfg = TrainConfig.for_profile("tiny", iterations=4, lr_drop_at=3, val_fraction=0.25, eval_every=2, seed=9)
    ckpts, preds = [], []
    for run in ("a", "b"):
        p = train.train_pnet(ds, cfg, TINY)
        crops = infer.generate_vnet_crops(ds, TINY, "pnet", infer.NetworkStage2D(p.best, TINY, ds.z_window))
        v = train.train_vnet(crops, cfg, TINY)
        train.save_result(p, tmp_path / run / "pnet", cfg, TINY)
        train.save_result(v, tmp_path / run / "vnet", cfg, TINY)
        s2, s3 = infer.network_stages(p.best, v.best, TINY, ds.z_window)
        infer.infer_dataset(ds, s2, s3, TINY).write_jsonl(tmp_path / run / "pred.jsonl")
        ckpts.append([(tmp_path / run / n / f).read_bytes() for n in ("pnet", "vnet") for f in ("final.ckpt", "best.ckpt")])
        preds.append((tmp_path / run / "pred.jsonl").read_bytes())
    same_ckpt = ckpts[0] == ckpts[1]
    same_pred = preds[0] == preds[1]
    # round trips: checkpoint load/save and a TDF depth file
    net = Network.load(tmp_path / "a" / "vnet" / "final.ckpt")
    net.save(tmp_path / "again.ckpt", extra=net.extra)
    ckpt_rt = (tmp_path / "again.ckpt").read_bytes() == ckpts[0][2]
    from vpx.engine import load_tdf, save_tdf
    save_tdf(tmp_path / "d.tdf", ds.frames[0].depth.depth)
    raw = (tmp_path / "d.tdf").read_bytes()
    save_tdf(tmp_path / "e.tdf", load_tdf(tmp_path / "d.tdf"))
    tdf_rt = (tmp_path / "e.tdf").read_bytes() == raw
    ok = same_ckpt and same_pred and ckpt_rt and tdf_rt
    detail = f"checkpoints identical {same_ckpt}, predictions identical {same_pred}, ckpt round trip {ckpt_rt}, TDF round trip {tdf_rt}"
    assert record(8, ok, detail), detail


# 9 ---------------------------------------------------------------------------

def test_criterion_9_oracle_stub_bound():
    prof = profiles.get("paper")
    ds = synthdata.generate(100, seed=0, profile=prof)
    s2, s3 = infer.oracle_stages(prof, ds.intrinsics)
    pred = infer.infer_dataset(ds, s2, s3, prof)
    checked, worst, bad = 0, 0.0, []
    for fr, p in zip(ds.frames, pred.frames):
        for k in np.nonzero(~fr.occluded)[0]:
            bound = infer.quantization_bound(fr.uv[k], fr.xyz[k, 2], ds.intrinsics, prof.bin_size)
            err = float(np.linalg.norm(p.xyz[k] - fr.xyz[k]))
            checked += 1
            worst = max(worst, err / bound)
            if err > bound + 1e-6:
                bad.append(f"{fr.frame_id}/{ds.joint_names[k]}")
    ok = not bad
    detail = f"{checked} unoccluded joints, {len(bad)} over the bound {bad[:4]}, worst err/bound {worst:.2f}"
    assert record(9, ok, detail), detail
