import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pedintent.errors import ConfigError
from pedintent.io import dumps, scenario_records
from pedintent.pose import BoundingBox
from pedintent.sim import (
    Condition, ScenarioConfig, agent_card, agent_keypoints, agent_visibility, generate_scenario,
    longest_occlusion_gap, render_detections, render_stereo_pair, render_region,
)
from pedintent.stereo import block_match_region

from conftest import clean_config


def test_empty_scenario_has_vehicle_trace_only():
    sc = generate_scenario(clean_config(0, seed=5, duration=2.0))
    assert sc.agents == ()
    assert len(sc.vehicle) == 60
    assert all(render_detections(sc, k) == [] for k in range(sc.n_frames))


def _serialise(cfg):
    sc = generate_scenario(cfg)
    dets = [render_detections(sc, k) for k in range(sc.n_frames)]
    return "\n".join(dumps(r) for r in scenario_records(sc, dets))


def test_same_config_is_byte_identical():
    cfg = ScenarioConfig(n_pedestrians=4, seed=11, duration=3.0)
    assert _serialise(cfg) == _serialise(cfg)


def test_different_seed_differs():
    a = ScenarioConfig(n_pedestrians=4, seed=11, duration=3.0)
    assert _serialise(a) != _serialise(a.replace(seed=12))


def test_crossing_fraction_tracks_probability():
    # 50 seeds x 100 agents; the decision is Bernoulli(0.5) per agent so the
    # 99% interval on 5000 draws is 0.5 +- 0.018, well inside [0.4, 0.6]
    labels = []
    for seed in range(50):
        cfg = ScenarioConfig(n_pedestrians=100, cross_probability=0.5, seed=seed, duration=1.0)
        sc = generate_scenario(cfg)
        labels += [a.role == "crosser" for a in sc.agents]
    frac = np.mean(labels)
    assert 0.4 <= frac <= 0.6


@pytest.mark.parametrize("field,value", [
    ("duration", 0.0), ("frame_rate", -1.0), ("detection_miss_rate", 1.5),
    ("n_pedestrians", -1), ("keypoint_noise_sigma", -0.1), ("cross_probability", 1.2),
])
def test_invalid_config_names_field(field, value):
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig(**{field: value})
    assert exc.value.field == field


def test_speed_profile_must_stay_in_band():
    with pytest.raises(ConfigError, match="vehicle_speed_profile"):
        ScenarioConfig(vehicle_speed_profile=((0.0, 25.0),))


def test_config_dict_round_trip():
    cfg = ScenarioConfig(n_pedestrians=3, seed=2**63 + 5, condition="traffic_light",
                         vehicle_speed_profile=((0.0, 10.0), (5.0, 0.0)))
    back = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_miss_rate_one_gives_no_detections():
    sc = generate_scenario(ScenarioConfig(n_pedestrians=6, detection_miss_rate=1.0,
                                          false_positive_rate=0.0, seed=3, duration=3.0))
    assert all(render_detections(sc, k) == [] for k in range(sc.n_frames))


def test_noiseless_detections_sit_on_projected_keypoints():
    sc = generate_scenario(clean_config(4, seed=1, duration=5.0))
    checked = 0
    for k in range(0, sc.n_frames, 10):
        for det in render_detections(sc, k):
            uv = agent_keypoints(sc, sc.agent(det.truth_agent), k)
            ok = det.keypoints[:, 2] > 0
            np.testing.assert_array_equal(det.keypoints[ok, :2], uv[ok])
            checked += 1
    assert checked > 0


def test_out_of_range_frame_raises():
    sc = generate_scenario(ScenarioConfig(n_pedestrians=1, duration=1.0))
    with pytest.raises(IndexError):
        render_detections(sc, sc.n_frames)
    with pytest.raises(IndexError):
        render_detections(sc, -1)


def test_detection_counts_match_rates():
    # per frame: visible agents thinned by (1 - miss) plus Poisson(fp) clutter
    cfg = ScenarioConfig(n_pedestrians=8, seed=21, duration=1000 / 30.0,
                         detection_miss_rate=0.2, false_positive_rate=0.5, keypoint_dropout=0.0)
    sc = generate_scenario(cfg)
    n_real = n_vis = n_fp = 0
    for k in range(sc.n_frames):
        vis = sum(agent_visibility(sc, a, k)[1] for a in sc.agents)
        dets = render_detections(sc, k)
        real = [d for d in dets if d.truth_agent is not None]
        full = [d for d in real if d.keypoints[:, 2].all()]
        n_vis += vis
        n_real += len(full)
        n_fp += len(dets) - len(real)
    p = 1 - cfg.detection_miss_rate
    assert abs(n_real - p * n_vis) <= 3 * np.sqrt(n_vis * p * (1 - p)) + 1
    lam = cfg.false_positive_rate * sc.n_frames
    # clutter may be dropped when it falls outside the image, never added
    assert n_fp <= lam + 3 * np.sqrt(lam)
    assert n_fp >= 0.8 * lam - 3 * np.sqrt(lam)


def test_descriptors_cluster_per_agent():
    sc = generate_scenario(ScenarioConfig(n_pedestrians=5, seed=2, duration=4.0))
    by_agent = {}
    for k in range(sc.n_frames):
        for d in render_detections(sc, k):
            if d.truth_agent is not None:
                by_agent.setdefault(d.truth_agent, []).append(d.descriptor)
    ids = sorted(by_agent)
    intra = [1 - np.dot(a, b) for i in ids for a, b in zip(by_agent[i], by_agent[i][1:])]
    inter = [1 - np.dot(by_agent[i][0], by_agent[j][0]) for i in ids for j in ids if i < j]
    assert np.mean(intra) < np.mean(inter)


def test_agent_at_disparity_40_offsets_right_patch():
    K = ScenarioConfig().intrinsics
    cfg = clean_config(1, seed=4, duration=8.0)
    sc = generate_scenario(cfg)
    agent = sc.agents[0]
    # frame whose card sits at exactly disparity 40 after rounding
    for k in range(sc.n_frames):
        card = agent_card(sc, agent, k)
        if card and card[1] == 40 and 0 <= card[0][0] and card[0][1] < K.width:
            break
    else:
        pytest.skip("agent never at disparity 40")
    (u0, u1, v0, v1), d = card
    left = render_region(sc, k, u0, v0, u1, v1, "left")
    right = render_region(sc, k, u0 - 40, v0, u1 - 40, v1, "right")
    np.testing.assert_array_equal(left, right)


def test_empty_scenario_images_are_textured_background():
    sc = generate_scenario(ScenarioConfig(n_pedestrians=0, seed=1, duration=1.0))
    pair = render_stereo_pair(sc, 0)
    assert pair.left.shape == (360, 640) and pair.right.shape == (360, 640)
    assert pair.left.std() > 10 and not np.array_equal(pair.left, pair.right)


def test_agent_behind_camera_is_skipped_with_warning():
    sc = generate_scenario(ScenarioConfig(n_pedestrians=12, seed=0, duration=20.0))
    frame = sc.n_frames - 1
    behind = [a for a in sc.agents if a.trajectory[frame, 2] <= 0]
    if not behind:
        pytest.skip("no agent behind the camera")
    pair = render_stereo_pair(sc, frame)
    assert len(pair.warnings) == len(behind)
    assert all("behind camera" in w for w in pair.warnings)


def test_rendered_pair_recovers_agent_disparity():
    sc = generate_scenario(clean_config(3, seed=7, duration=6.0))
    K = sc.config.intrinsics
    checked = 0
    for k in range(0, sc.n_frames, 30):
        pair = render_stereo_pair(sc, k)
        for agent in sc.agents:
            card = agent_card(sc, agent, k)
            if card is None or not agent_visibility(sc, agent, k)[1]:
                continue
            (u0, u1, v0, v1), d = card
            if d > 48 or u0 < 60 or u1 > K.width:
                continue
            box = BoundingBox(u0, v0, u1 - u0, v1 - v0)
            dmap = block_match_region(pair.left, pair.right, box)
            good = dmap.values[dmap.values > 0]
            assert abs(np.median(good) - K.disparity_for_depth(agent.trajectory[k, 2])) <= 1.0
            checked += 1
    assert checked >= 3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(0, 6))
def test_trajectories_are_finite_and_labelled_consistently(seed, n):
    sc = generate_scenario(ScenarioConfig(n_pedestrians=n, seed=seed, duration=3.0))
    assert len(sc.agents) == n
    for a in sc.agents:
        assert np.isfinite(a.trajectory).all()
        assert a.crossing_label == (a.crossing_frame is not None)
        np.testing.assert_allclose(np.hypot(*a.heading.T), 1.0, atol=1e-9)


def test_condition_changes_crossing_propensity():
    base = ScenarioConfig(n_pedestrians=100, duration=1.0, seed=9)
    p = {c: base.replace(condition=c).p_cross for c in Condition}
    assert len(set(p.values())) >= 2


def test_occlusion_gap_zero_for_single_agent():
    sc = generate_scenario(clean_config(1, seed=3, duration=6.0))
    assert longest_occlusion_gap(sc) == 0
