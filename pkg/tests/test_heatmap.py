import json

import numpy as np
import pytest

from faceqa import heatmap as hm


def frame(points, index=0):
    return hm.LandmarkFrame(points=np.asarray(points, dtype=float), frame_index=index)


# ---------------------------------------------------------------------------
# landmark selection and files
# ---------------------------------------------------------------------------


def test_select_identity():
    pts = np.arange(212.0).reshape(106, 2)
    out = hm.select_landmarks(pts, list(range(106)))
    np.testing.assert_array_equal(out, pts)


def test_select_single():
    out = hm.select_landmarks([(5.0, 7.0), (1.0, 2.0)], [0])
    np.testing.assert_array_equal(out, [[5.0, 7.0]])


def test_select_rejects_bad_spec():
    pts = np.zeros((106, 2))
    with pytest.raises(ValueError, match="duplicate"):
        hm.select_landmarks(pts, [1, 1])
    with pytest.raises(ValueError, match="out of range"):
        hm.select_landmarks(pts, [106])


def test_default_subset_excludes_boundary_indices():
    spec = hm.default_subset_spec()
    assert len(spec) == 73
    assert len(set(spec)) == 73
    assert all(0 <= i < 106 for i in spec)
    boundary = set(range(33))  # face contour indices of the 106-point markup
    assert boundary.isdisjoint(spec)


def test_landmark_file_round_trip(tmp_path):
    rng = np.random.default_rng(30)
    frames = [frame(rng.uniform(0, 40, (73, 2)), i) for i in range(4)]
    seq = hm.LandmarkSequence(frames=frames, width=40, height=40)
    path = tmp_path / "clip.jsonl"
    hm.save_landmarks(seq, path)
    loaded = hm.load_landmarks(path, width=40, height=40)
    assert len(loaded) == 4
    np.testing.assert_array_equal(loaded.points_array(), seq.points_array())


def test_landmark_file_rejects_malformed(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"frame_index": 0}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        hm.load_landmarks(path, width=10, height=10)


def test_sequence_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        hm.LandmarkSequence(frames=[frame([(0, 0)], 1), frame([(0, 0)], 1)], width=4, height=4)
    with pytest.raises(ValueError, match="landmark count"):
        hm.LandmarkSequence(frames=[frame([(0, 0)], 0), frame([(0, 0), (1, 1)], 1)],
                            width=4, height=4)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def test_kernel_center_weight_is_one():
    for sigma, size in [(1.0, 11), (3.0, 7), (0.5, 1), (2.5, 15)]:
        k = hm.build_kernel(sigma, size)
        c = (size - 1) // 2
        assert k.weights[c, c] == 1.0


def test_kernel_sum_close_to_two_pi():
    k = hm.build_kernel(1.0, 11)
    assert abs(k.weights.sum() - 2 * np.pi) < 1e-3


def test_kernel_off_center_value():
    k = hm.build_kernel(1.0, 11)
    c = 5
    assert k.weights[c, c + 1] == np.exp(-0.5)


def test_kernel_symmetry():
    k = hm.build_kernel(1.7, 9).weights
    np.testing.assert_array_equal(k, k.T)
    np.testing.assert_array_equal(k, k[::-1])
    np.testing.assert_array_equal(k, k[:, ::-1])
    np.testing.assert_array_equal(k, np.rot90(k))


def test_kernel_rejects_bad_arguments():
    with pytest.raises(ValueError):
        hm.build_kernel(0.0, 11)
    with pytest.raises(ValueError):
        hm.build_kernel(1.0, 10)


# ---------------------------------------------------------------------------
# accumulation
# ---------------------------------------------------------------------------


def test_accumulate_no_landmarks_is_zero():
    acc = hm.accumulate(frame(np.zeros((0, 2))), hm.build_kernel(1.0, 11), 16, 16)
    assert not acc.any()


def test_accumulate_single_centered_landmark_embeds_kernel():
    k = hm.build_kernel(1.0, 11)
    acc = hm.accumulate(frame([(10.0, 10.0)]), k, 21, 21)
    np.testing.assert_array_equal(acc[5:16, 5:16], k.weights)
    assert acc.max() == 1.0
    assert acc[10, 10] == 1.0
    outside = acc.copy()
    outside[5:16, 5:16] = 0.0
    assert not outside.any()


def test_accumulate_coincident_landmarks_double():
    k = hm.build_kernel(1.0, 11)
    one = hm.accumulate(frame([(8.0, 6.0)]), k, 20, 20)
    two = hm.accumulate(frame([(8.0, 6.0), (8.0, 6.0)]), k, 20, 20)
    np.testing.assert_array_equal(two, 2.0 * one)


def test_accumulate_permutation_invariance():
    rng = np.random.default_rng(31)
    pts = rng.uniform(0, 24, (10, 2))
    k = hm.build_kernel(1.0, 11)
    base = hm.accumulate(frame(pts), k, 24, 24)
    for _ in range(5):
        perm = rng.permutation(10)
        np.testing.assert_array_equal(hm.accumulate(frame(pts[perm]), k, 24, 24), base)


def test_accumulate_clips_offframe_landmarks():
    k = hm.build_kernel(1.0, 11)
    acc = hm.accumulate(frame([(-3.0, 2.0), (100.0, 100.0)]), k, 16, 16)
    assert acc.min() >= 0.0
    assert acc[2, 0] > 0.0  # clipped tail of the first landmark
    acc_far = hm.accumulate(frame([(500.0, 500.0)]), k, 16, 16)
    assert not acc_far.any()


# ---------------------------------------------------------------------------
# smoothing and normalization
# ---------------------------------------------------------------------------


def test_smooth_normalize_zero_input():
    out = hm.smooth_and_normalize(np.zeros((8, 8)))
    assert not out.any()


def test_smooth_normalize_range_exact():
    rng = np.random.default_rng(32)
    for _ in range(10):
        pts = rng.uniform(0, 30, (8, 2))
        acc = hm.accumulate(frame(pts), hm.build_kernel(1.0, 11), 30, 30)
        out = hm.smooth_and_normalize(acc)
        assert out.max() == 1.0
        assert out.min() == 0.0


def test_smooth_normalize_constant_positive_maps_to_zero():
    out = hm.smooth_and_normalize(np.full((6, 6), 3.5))
    assert not out.any()


def test_box_filter_preserves_constants_and_mass_interior():
    const = hm.box_filter3(np.full((5, 5), 2.0))
    np.testing.assert_allclose(const, np.full((5, 5), 2.0), atol=1e-12)
    # single interior impulse spreads to a 3x3 plateau of 1/9
    impulse = np.zeros((7, 7))
    impulse[3, 3] = 1.0
    sm = hm.box_filter3(impulse)
    np.testing.assert_allclose(sm[2:5, 2:5], np.full((3, 3), 1 / 9), atol=1e-15)
    assert abs(sm.sum() - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# RGB weighting
# ---------------------------------------------------------------------------


def test_weight_rgb_identity_and_annihilator():
    rng = np.random.default_rng(33)
    img = rng.uniform(0, 255, (3, 6, 5))
    np.testing.assert_array_equal(hm.weight_rgb(np.ones((6, 5)), img), img)
    assert not hm.weight_rgb(np.zeros((6, 5)), img).any()


def test_weight_rgb_scalar_scaling():
    img = np.zeros((3, 2, 2))
    img[:, 0, 0] = [10.0, 20.0, 30.0]
    out = hm.weight_rgb(np.full((2, 2), 0.5), img)
    np.testing.assert_array_equal(out[:, 0, 0], [5.0, 10.0, 15.0])


def test_weight_rgb_shape_mismatch():
    with pytest.raises(ValueError, match="extents differ"):
        hm.weight_rgb(np.ones((4, 4)), np.ones((3, 5, 5)))


# ---------------------------------------------------------------------------
# volumes
# ---------------------------------------------------------------------------


def make_seq(points_per_frame, w=32, h=32):
    frames = [frame(p, i) for i, p in enumerate(points_per_frame)]
    return hm.LandmarkSequence(frames=frames, width=w, height=h)


def test_volume_single_centered_landmark_locality():
    seq = make_seq([[(16.0, 16.0)]])
    frames = np.ones((1, 3, 32, 32))
    vol = hm.build_volume(seq, frames, hm.HeatmapConfig(out_size=16))
    assert vol.data.shape == (1, 3, 16, 16)
    center_mass = vol.data[0, :, 6:11, 6:11].sum()
    border_mass = vol.data[0, :, :3, :].sum() + vol.data[0, :, 13:, :].sum()
    assert center_mass > 0
    assert border_mass == 0.0


def test_volume_range_with_normalized_rgb():
    rng = np.random.default_rng(34)
    seq = make_seq([rng.uniform(4, 28, (5, 2)) for _ in range(3)])
    frames = rng.uniform(0, 1, (3, 3, 32, 32))
    vol = hm.build_volume(seq, frames, hm.HeatmapConfig(out_size=16))
    assert vol.data.min() >= 0.0
    assert vol.data.max() <= 1.0


def test_volume_rejects_length_mismatch():
    seq = make_seq([[(4.0, 4.0)]])
    with pytest.raises(ValueError, match="length mismatch"):
        hm.build_volume(seq, np.zeros((2, 3, 32, 32)), hm.HeatmapConfig())


def test_translation_equivariance_interior():
    rng = np.random.default_rng(35)
    k = hm.build_kernel(1.0, 11)
    h = w = 40
    pts = rng.uniform(12, 26, (6, 2))  # soundly interior: radius 5 + margin
    base = hm.frame_weights(frame(pts), k, h, w)
    shifted = hm.frame_weights(frame(pts + np.array([5.0, 5.0])), k, h, w)
    np.testing.assert_array_equal(shifted[5:, 5:], base[:-5, :-5])


def test_positions_only_single_landmark_single_pixel():
    seq = make_seq([[(9.3, 14.8)]])
    cfg = hm.HeatmapConfig(mode="positions_only", out_size=32)
    mask = hm.frame_weights(seq.frames[0], cfg.kernel(), 32, 32, mode="positions_only")
    assert mask.sum() == 1.0
    assert mask[15, 9] == 1.0
    assert set(np.unique(mask)) <= {0.0, 1.0}


def test_positions_only_matches_unit_kernel_without_smoothing():
    rng = np.random.default_rng(36)
    pts = rng.uniform(2, 28, (8, 2))
    f = frame(pts)
    tiny = hm.build_kernel(1.0, 1)
    gauss = hm.frame_weights(f, tiny, 30, 30, mode="gaussian", smooth=False)
    mask = hm.frame_weights(f, tiny, 30, 30, mode="positions_only")
    np.testing.assert_array_equal(gauss, mask)


def test_volume_deterministic():
    rng = np.random.default_rng(37)
    seq = make_seq([rng.uniform(0, 32, (7, 2)) for _ in range(2)])
    frames = rng.uniform(0, 1, (2, 3, 32, 32))
    cfg = hm.HeatmapConfig(out_size=16)
    a = hm.build_volume(seq, frames, cfg).data
    b = hm.build_volume(seq, frames, cfg).data
    assert a.tobytes() == b.tobytes()


def test_resize_bilinear_exact_on_power_of_two():
    # 2x downscale averages 2x2 blocks exactly under half-pixel sampling
    img = np.arange(16.0).reshape(4, 4)
    out = hm.resize_bilinear(img, 2, 2)
    expected = np.array([[img[:2, :2].mean(), img[:2, 2:].mean()],
                         [img[2:, :2].mean(), img[2:, 2:].mean()]])
    np.testing.assert_array_equal(out, expected)
