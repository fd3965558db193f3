import math

import numpy as np
import pytest

from vpx import heatmaps


def test_peak_and_one_sigma_value():
    t = heatmaps.make_target_2d((10, 7), (32, 24), sigma=3.0)
    assert t.shape == (32, 24)
    assert t[7, 10] == 1.0
    assert t[7, 13] == pytest.approx(math.exp(-0.5), abs=1e-6)
    assert t[10, 10] == pytest.approx(math.exp(-0.5), abs=1e-6)


def test_3d_axis_order():
    t = heatmaps.make_target_3d((1, 2, 3), (4, 5, 6))
    assert heatmaps.decode_argmax(t) == ((1, 2, 3), 1.0)


def test_subcell_center_decodes_to_nearest():
    t = heatmaps.make_target_2d((4.3, 5.8), (10, 10), 2.0)
    assert heatmaps.decode_argmax(t)[0] == (6, 4)


def test_argmax_ties_lowest_index():
    m = np.zeros((3, 3))
    m[1, 2] = m[2, 0] = 5
    assert heatmaps.decode_argmax(m) == ((1, 2), 5.0)
    with pytest.raises(ValueError):
        heatmaps.decode_argmax(np.zeros((0, 3)))


def test_decode_all_matches_single():
    rng = np.random.default_rng(0)
    maps = rng.random((4, 6, 7, 5))
    idx, peak = heatmaps.decode_all(maps)
    for k in range(4):
        i, p = heatmaps.decode_argmax(maps[k])
        assert tuple(idx[k]) == i and peak[k] == p


def test_center_outside_grid_is_a_tail():
    t = heatmaps.make_target_2d((-3, -3), (5, 5), 1.0)
    assert t.max() < 1e-3
    with pytest.raises(ValueError):
        heatmaps.make_target((1, 2), (4,), 1.0)
    with pytest.raises(ValueError):
        heatmaps.make_target((1,), (4,), 0.0)


def test_pgm_round_trip(tmp_path):
    ch = np.linspace(0, 1.2, 35).reshape(5, 7)
    heatmaps.write_pgm(tmp_path / "h.pgm", ch)
    img = heatmaps.read_pgm(tmp_path / "h.pgm")
    assert img.shape == (5, 7)
    assert img.tolist() == heatmaps.to_gray(ch).tolist()
    assert img.max() == 255
    assert (tmp_path / "h.pgm").read_bytes().startswith(b"P5\n7 5\n255\n")
    with pytest.raises(ValueError):
        heatmaps.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))
