import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reconeval.core import CameraView, PointCloud
from reconeval.render import (
    Intrinsics,
    SplatConfig,
    fibonacci_sphere,
    look_at,
    make_camera_rig,
    project,
    render_pair,
    render_view,
)

from oracles import render_oracle


def axis_view(z_offset=0.0, size=32, focal=20.0):
    """Camera at the origin looking down +z (camera frame equals world frame)."""
    return CameraView(np.zeros(3), np.eye(3), focal, size / 2, size / 2, size, size)


def check_look_at(rig):
    for view in rig.views:
        to_target = rig.target - view.position
        assert abs(np.linalg.norm(to_target) - rig.radius) < 1e-9
        assert view.forward @ (to_target / np.linalg.norm(to_target)) > 0.9999


def test_single_view_rig():
    cloud = PointCloud(np.random.default_rng(0).random((50, 3)))
    rig = make_camera_rig(cloud, 1)
    assert len(rig) == 1
    np.testing.assert_allclose(rig.target, cloud.centroid)
    check_look_at(rig)


def test_fibonacci_min_separation():
    cloud = PointCloud(np.array([[0, 0, 0], [1, 1, 1]], float) / np.sqrt(3))
    rig = make_camera_rig(cloud, 100, 2.0)
    dirs = np.array([v.position - rig.target for v in rig.views]) / rig.radius
    cos = np.clip(dirs @ dirs.T, -1, 1)
    np.fill_diagonal(cos, -1)
    assert np.degrees(np.arccos(cos.max())) > 15.0
    check_look_at(rig)


@pytest.mark.parametrize("n", [10, 12, 32, 64, 100, 256])
def test_rig_centroid_symmetry(n):
    cloud = PointCloud(np.random.default_rng(n).random((30, 3)))
    rig = make_camera_rig(cloud, n)
    centroid = np.mean([v.position for v in rig.views], axis=0)
    assert np.linalg.norm(centroid - rig.target) < 1e-6 * rig.radius
    check_look_at(rig)


def test_fibonacci_unit_vectors():
    d = fibonacci_sphere(77)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("pos", [[0, 0, 5.0], [0, 0, -5.0], [3, 4, 0]])
def test_look_at_is_rotation_even_at_poles(pos):
    R = look_at(pos, np.zeros(3))
    assert abs(np.linalg.det(R) - 1) < 1e-12
    np.testing.assert_allclose(R[:, 2], -np.asarray(pos) / np.linalg.norm(pos), atol=1e-12)


def test_point_at_target_lands_on_principal_point():
    cloud = PointCloud(np.zeros((1, 3)))
    view = make_camera_rig(PointCloud(np.array([[-1, -1, -1], [1, 1, 1.0]])), 5).views[2]
    img = render_view(cloud, view, SplatConfig(point_radius_px=1))
    ys, xs = np.nonzero(img.data)
    assert (round(view.cx), round(view.cy)) in set(zip(xs.tolist(), ys.tolist()))
    assert img.data[round(view.cy), round(view.cx)] == 200
    assert len(xs) == 5  # radius-1 disc


def test_near_point_wins_depth_test():
    cloud = PointCloud(np.array([[0, 0, 1.0], [0, 0, 2.0]]), np.array([1.0, 0.0]))
    img = render_view(cloud, axis_view(), SplatConfig(point_radius_px=0, background=7))
    assert img.data[16, 16] == 255
    # swapped order: still the near point
    cloud = PointCloud(cloud.points[::-1], cloud.intensity[::-1])
    assert render_view(cloud, axis_view(), SplatConfig(point_radius_px=0)).data[16, 16] == 255


def test_no_depth_test_last_point_wins():
    cloud = PointCloud(np.array([[0, 0, 1.0], [0, 0, 2.0]]), np.array([1.0, 0.0]))
    img = render_view(cloud, axis_view(), SplatConfig(point_radius_px=0, depth_test=False))
    assert img.data[16, 16] == 0


def test_behind_camera_is_background():
    cloud = PointCloud(np.random.default_rng(1).random((100, 3)) - [0.5, 0.5, 3.0])
    img = render_view(cloud, axis_view(), SplatConfig(background=9))
    assert np.all(img.data == 9)


def test_render_pair_self_identical_and_ordered():
    rng = np.random.default_rng(2)
    cloud = PointCloud(rng.random((400, 3)), rng.random(400))
    rig = make_camera_rig(cloud, 64, intrinsics=Intrinsics(48, 48))
    pairs = render_pair(cloud, cloud, rig)
    assert len(pairs) == 64
    for (a, b), view in zip(pairs, rig.views):
        assert a.data.tobytes() == b.data.tobytes()
        assert a == render_view(cloud, view)


def test_ablation_changes_only_covered_pixels():
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.random((300, 3)), rng.random(300))
    keep = cloud.points[:, 0] < 0.7
    ablated = cloud.subset(np.flatnonzero(keep))
    removed = cloud.subset(np.flatnonzero(~keep))
    rig = make_camera_rig(cloud, 8, intrinsics=Intrinsics(64, 64))
    cfg = SplatConfig(point_radius_px=1)
    for (a, b), view in zip(render_pair(cloud, ablated, rig, cfg), rig.views):
        # every pixel a removed point could reach, regardless of its intensity
        cover = render_view(PointCloud(removed.points, np.ones(len(removed))), view, cfg).data > 0
        diff = a.data != b.data
        assert not np.any(diff & ~cover)


def test_determinism():
    rng = np.random.default_rng(4)
    cloud = PointCloud(rng.random((1000, 3)), rng.random(1000))
    view = make_camera_rig(cloud, 3).views[1]
    assert render_view(cloud, view).data.tobytes() == render_view(cloud, view).data.tobytes()


@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_depth_buffer_matches_oracle(seed, radius):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    pts = rng.uniform(-1, 1, size=(n, 3))
    inten = rng.random(n) if rng.random() < 0.7 else None
    rig = make_camera_rig(PointCloud(np.array([[-1, -1, -1], [1, 1, 1.0]])), 7, 1.0, Intrinsics(32, 32, 60))
    view = rig.views[int(rng.integers(7))]
    cloud = PointCloud(pts, inten)
    got = render_view(cloud, view, SplatConfig(point_radius_px=radius, background=3)).data
    np.testing.assert_array_equal(got, render_oracle(pts, inten, view, radius, 3))


@given(st.integers(0, 2**32 - 1))
def test_projection_inside_splat(seed):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.uniform(-1, 1, size=(100, 3)))
    view = make_camera_rig(cloud, 9, 2.0, Intrinsics(64, 64)).views[int(rng.integers(9))]
    r = 1
    u, v, z = project(cloud.points, view)
    for k in range(len(cloud)):
        if z[k] <= 0 or not (r <= u[k] < 64 - r - 1 and r <= v[k] < 64 - r - 1):
            continue
        single = render_view(cloud.subset([k]), view, SplatConfig(point_radius_px=r))
        ys, xs = np.nonzero(single.data)
        # the analytic projection lies within half a pixel of some covered pixel centre
        assert np.min(np.hypot(xs - u[k], ys - v[k])) <= np.sqrt(0.5) + 1e-9
