import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pedintent.pose import BoundingBox
from pedintent.sim import agent_card, agent_visibility, generate_scenario, render_stereo_pair
from pedintent.stereo import (
    INVALID, CameraIntrinsics, DisparityMap, Point3D, StereoInputError, block_match,
    block_match_region, implied_height, pedestrian_distance, project, size_consistent,
    triangulate, within_range,
)

from conftest import clean_config


def _textured(shape, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=shape).astype(np.uint8)


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_pure_translation_gives_constant_disparity(backend):
    base = _textured((40, 90))
    # left[u] == right[u - 7]
    left = base[:, :-7]
    right = base[:, 7:]
    dmap = block_match(left, right, 5, 12, backend=backend)
    interior = dmap.values[2:-2, 2 + 12:-2]
    assert (interior == 7).all()


def test_constant_images_are_all_invalid():
    img = np.full((30, 50), 120, dtype=np.uint8)
    dmap = block_match(img, img, 5, 8)
    assert (dmap.values == INVALID).all()


def test_shape_mismatch_raises():
    with pytest.raises(StereoInputError):
        block_match(np.zeros((10, 10)), np.zeros((10, 11)))
    with pytest.raises(StereoInputError):
        block_match(np.zeros((10, 10)), np.zeros((10, 10)), block_size=4)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), bs=st.sampled_from([3, 5, 7]), maxd=st.integers(1, 16))
def test_backends_agree(seed, bs, maxd):
    rng = np.random.default_rng(seed)
    left = rng.integers(0, 256, size=(24, 40)).astype(np.uint8)
    shift = int(rng.integers(0, maxd + 1))
    right = np.roll(left, -shift, axis=1)
    right[rng.random(right.shape) < 0.1] = 0
    a = block_match(left, right, bs, maxd, backend="python").values
    b = block_match(left, right, bs, maxd, backend="cython").values
    np.testing.assert_array_equal(a, b)


def test_region_match_equals_full_match_on_the_box():
    sc = generate_scenario(clean_config(3, seed=7, duration=3.0))
    pair = render_stereo_pair(sc, 45)
    full = block_match(pair.left, pair.right, 9, 48)
    box = BoundingBox(70.3, 100.6, 81.2, 150.0)
    region = block_match_region(pair.left, pair.right, box, 9, 48)
    x0, y0 = region.origin
    np.testing.assert_array_equal(
        region.values, full.values[y0:y0 + region.height, x0:x0 + region.width])


def test_triangulate_principal_ray():
    K = CameraIntrinsics(f=1000.0, cx=320.0, cy=180.0, baseline=0.2)
    p = triangulate(320.0, 180.0, 40.0, K)
    assert (p.x, p.y, p.z) == (0.0, 0.0, 5.0)
    p = triangulate(420.0, 180.0, 40.0, K)
    assert p.x == pytest.approx(0.5, abs=1e-12) and p.y == 0.0 and p.z == 5.0


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_triangulate_rejects_nonpositive_disparity(d):
    with pytest.raises(ValueError):
        triangulate(0.0, 0.0, d, CameraIntrinsics())


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-10, 10), y=st.floats(-3, 3), z=st.floats(1.0001, 14.9999))
def test_project_triangulate_round_trip(x, y, z):
    K = CameraIntrinsics()
    u, v, d = project(Point3D(x, y, z), K)
    p = triangulate(u, v, d, K)
    assert max(abs(p.x - x), abs(p.y - y), abs(p.z - z)) < 1e-9


def test_within_range_examples():
    assert within_range(Point3D(0, 0, 14.9))
    assert not within_range(Point3D(0, 0, 15.1))
    assert not within_range(Point3D(9, 0, 12.1))
    assert within_range(Point3D(9, 0, 12.1), mode="depth")
    assert within_range(Point3D(0, 0, 15.0))
    assert within_range(Point3D(9.0, 0.0, 12.0))  # 3-4-5 triangle, norm exactly 15
    assert not within_range(Point3D(0, 0, math.nextafter(15.0, 16.0)))
    with pytest.raises(ValueError):
        within_range(Point3D(0, 0, 1), mode="manhattan")


def test_pedestrian_distance_on_clean_agent_at_5m():
    sc = generate_scenario(clean_config(4, seed=3, duration=20.0))
    K = sc.config.intrinsics
    for k in range(sc.n_frames):
        for agent in sc.agents:
            z = agent.trajectory[k, 2]
            if abs(z - 5.0) > 0.1 or not agent_visibility(sc, agent, k)[1]:
                continue
            (u0, u1, v0, v1), d = agent_card(sc, agent, k)
            pair = render_stereo_pair(sc, k)
            box = BoundingBox(u0, v0, u1 - u0, v1 - v0)
            p = pedestrian_distance(box, block_match_region(pair.left, pair.right, box), K)
            assert p is not None and abs(p.z - 5.0) <= 0.2 + abs(z - 5.0)
            return
    pytest.skip("no clean agent near 5 m")


def test_pedestrian_distance_none_over_invalid_region():
    K = CameraIntrinsics()
    dmap = DisparityMap(np.zeros((50, 50), dtype=np.int32), 48)
    assert pedestrian_distance(BoundingBox(5, 5, 20, 30), dmap, K) is None


def test_pedestrian_distance_prefers_majority_disparity():
    K = CameraIntrinsics(f=1000.0, baseline=0.2)
    values = np.full((40, 40), 10, dtype=np.int32)
    values[:, :24] = 40  # agent covers 60% of the box
    dmap = DisparityMap(values, 48)
    p = pedestrian_distance(BoundingBox(0, 0, 40, 40), dmap, K)
    assert p.z == pytest.approx(5.0)


def test_size_consistency_gate():
    K = CameraIntrinsics()
    box = BoundingBox(0, 0, 40, 100)
    assert implied_height(box, Point3D(0, 0, 5.0), K) == pytest.approx(100 * 5.0 / 280.0)
    assert size_consistent(box, Point3D(0, 0, 5.0), K)
    assert not size_consistent(box, Point3D(0, 0, 20.0), K)


def test_disparity_map_pgm(tmp_path):
    values = np.array([[0, 24], [48, 12]], dtype=np.int32)
    path = tmp_path / "d.pgm"
    DisparityMap(values, 48).to_pgm(path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert list(data[-4:]) == [0, 127, 255, 63]
