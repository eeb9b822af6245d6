"""Stage functions wiring the modules together; the CLI adds files and staging.

Scenario files carry the detector output. Stereo imagery is a pure
function of the scenario header, so the tracking stage re-synthesises the
pixels it needs rather than storing full frames.
"""
from collections import Counter, deque
from dataclasses import dataclass
import math

import numpy as np

from . import eval as evaluation
from .intent.dataset import build_dataset, split
from .intent.features import FrameRecord, ObservationWindow, build_window, local_context_from_sampler, window_length
from .intent.gru import StackedGruModel, stacked_forward
from .intent.train import accuracy, train_toy
from .intent.trigger import InteractionTrigger
from .pose import BoundingBox, DegeneratePoseError, is_valid_pose, pose_feature
from .sim import Condition, agent_rects, agent_visibility, frame_renderer, generate_scenario, render_detections
from .stereo import StereoInputError, block_match_sampled, pedestrian_distance, size_consistent, within_range
from .track.tracker import TrackStatus, Tracker

CROSS = "Cross"
NOT_CROSS = "NotCross"


def scenario_seed(run_seed, condition, index):
    cond = list(Condition).index(Condition(condition))
    return int(np.random.default_rng([int(run_seed), 100, cond, int(index)]).integers(0, 2**63))


def scenario_name(condition, index):
    return f"{Condition(condition).value}_{index:02d}"


# ------------------------------------------------------------ simulate

def _body_centre_range(scenario, agent, frame, mode):
    x, y, z = agent.trajectory[frame]
    y = y - 0.5 * agent.body_height
    if mode == "depth":
        return z
    return math.sqrt(x * x + y * y + z * z)


def simulate(config, max_range=15.0, range_mode="euclidean"):
    """Returns ``(scenario, detections_per_frame, truth)`` for one scenario config."""
    scenario = generate_scenario(config)
    detections = [render_detections(scenario, k) for k in range(scenario.n_frames)]
    visibility = {str(a.agent_id): [] for a in scenario.agents}
    for k in range(scenario.n_frames):
        rects = None
        for agent in scenario.agents:
            if agent.trajectory[k, 2] <= 0:
                continue
            if _body_centre_range(scenario, agent, k, range_mode) > max_range:
                continue
            if rects is None:
                rects = agent_rects(scenario, k)
            if agent_visibility(scenario, agent, k, rects)[1]:
                visibility[str(agent.agent_id)].append(k)
    truth = {
        "kind": "truth",
        "condition": config.condition.value,
        "seed": int(config.seed),
        "n_frames": scenario.n_frames,
        "agents": [
            {"agent_id": a.agent_id, "crossing_label": bool(a.crossing_label),
             "crossing_frame": a.crossing_frame, "role": a.role}
            for a in scenario.agents
        ],
        "visibility": visibility,
    }
    return scenario, detections, truth


# ------------------------------------------------------------ track

@dataclass(frozen=True)
class _Fed:
    bbox: tuple
    descriptor: np.ndarray
    pose_feature: np.ndarray
    index: int
    distance: float


@dataclass
class TrackResult:
    assignments: list
    tracks: list
    windows: list
    summary: dict


def _measure_range(sample, box, K, run):
    s = run.stereo
    try:
        dmap = block_match_sampled(lambda view, r, c: sample(r, c, view), box, K.image_size,
                                   s.block_size, s.max_disparity)
    except StereoInputError:
        return None
    return pedestrian_distance(box, dmap, K, s.min_valid_fraction)


def track_scenario(config, frames, run):
    """Run pose filtering, stereo ranging, tracking and triggering over one scenario.

    ``frames`` is a list of ``(speed_kmh, detections)``. Each triggered track
    yields one observation window.
    """
    scenario = generate_scenario(config)
    K = config.intrinsics
    T = window_length(config.frame_rate)
    tracker = Tracker(run.tracker_config())
    trigger = InteractionTrigger(tuple(run.intent.trigger_band))
    records = {}  # track id -> recent (frame, box, pose, speed)
    histories = {}
    assignments = []
    windows = []
    confirmed = set()
    n_fed = 0
    for k, (speed, dets) in enumerate(frames):
        sample = frame_renderer(scenario, k)
        fed = []
        for idx, det in enumerate(dets):
            if not is_valid_pose(det.keypoints, K.image_size, run.pose.min_valid_keypoints):
                continue
            box = BoundingBox(*det.bbox)
            p = _measure_range(sample, box, K, run)
            if p is None or not size_consistent(box, p, K, run.stereo.height_range):
                continue
            if not within_range(p, run.stereo.max_range, run.stereo.range_mode):
                continue
            fed.append(_Fed(det.bbox, det.descriptor, pose_feature(det.keypoints, box), idx, p.z))
        n_fed += len(fed)
        log = tracker.step(fed, frame=k)
        matched = {}
        for rec in log:
            item = fed[rec.detection]
            matched[rec.track_id] = item
            assignments.append({"kind": "assignment", "frame": k, "track_id": rec.track_id,
                                "detection": item.index, "d1": rec.d1, "d2": rec.d2,
                                "cost": rec.cost, "status": rec.status})
        for trk in tracker.tracks:
            buf = records.setdefault(trk.id, deque(maxlen=T))
            item = matched.get(trk.id)
            if item is not None:
                box, pose, dist = BoundingBox(*item.bbox), item.pose_feature, item.distance
            else:
                # coast through a miss on the predicted box if the history is unbroken
                if not buf or buf[-1][0] != k - 1 or trk.last_pose is None:
                    continue
                try:
                    box = trk.bbox
                except ValueError:
                    continue
                pose, dist = trk.last_pose, None
            buf.append((k, box, pose, speed))
            histories.setdefault(trk.id, []).append(
                {"frame": k, "bbox": list(box.as_tuple()), "distance": dist,
                 "matched": item is not None})
            if trk.status is TrackStatus.CONFIRMED:
                confirmed.add(trk.id)
            if item is None or trk.status is not TrackStatus.CONFIRMED or len(buf) < T:
                continue
            if buf[0][0] != k - T + 1:
                continue
            if trigger.should_trigger(trk.id, dist, speed):
                window = _window_from_buffer(scenario, buf, K, config.frame_rate, run)
                windows.append({"kind": "window", "track_id": trk.id, "trigger_frame": k,
                                "window": window.to_dict()})
    tracks = [{"kind": "track", "track_id": tid, "history": rows}
              for tid, rows in sorted(histories.items())]
    summary = {
        "frames": len(frames),
        "detections_fed": n_fed,
        "tracks": len(histories),
        "confirmed_tracks": len(confirmed),
        "triggered": len(windows),
    }
    return TrackResult(assignments, tracks, windows, summary)


def _window_from_buffer(scenario, buf, K, frame_rate, run):
    recs = []
    for frame, box, pose, speed in buf:
        sample = frame_renderer(scenario, frame)
        ctx = local_context_from_sampler(sample, box, K.image_size, run.intent.feature_dim)
        recs.append(FrameRecord(frame, box, pose, ctx, speed))
    return build_window(recs, frame_rate, buf[-1][0])


# ------------------------------------------------------------ train / predict

def stream_dims(feature_dim):
    return {"appearance": feature_dim, "surroundings": feature_dim, "pose": 36,
            "displacement": 4, "speed": 1}


def training_seed(run_seed):
    return int(np.random.default_rng([int(run_seed), 200]).integers(0, 2**63))


def build_training_set(run, seed=None):
    """Balanced ground-truth windows pooled over the configured conditions."""
    seed = training_seed(run.run.seed) if seed is None else seed
    conds = run.conditions
    per_class = run.intent.train_per_class
    items = []
    for i, cond in enumerate(conds):
        share = per_class // len(conds) + (1 if i < per_class % len(conds) else 0)
        if share == 0:
            continue
        base = run.scenario_config(cond, 0)
        items += build_dataset(base, share, seed=seed + i, feature_dim=run.intent.feature_dim)
    return items


def train(run, items, seed=None):
    """Split, train a fresh model, and report train / held-out accuracy."""
    seed = training_seed(run.run.seed) if seed is None else seed
    tr, te = split(items, run.intent.holdout, seed)
    model = StackedGruModel.create(stream_dims(run.intent.feature_dim), run.intent.hidden,
                                   seed=seed)
    labels = np.array([lw.label for lw in tr], dtype=float)
    model, curve = train_toy(model, [lw.window for lw in tr], labels, run.train_params())
    report = {
        "train_windows": len(tr),
        "holdout_windows": len(te),
        "train_accuracy": accuracy(model, [lw.window for lw in tr], labels),
        "holdout_accuracy": (accuracy(model, [lw.window for lw in te], [lw.label for lw in te])
                             if te else None),
        "final_loss": curve[-1],
    }
    return model, curve, report


def predict(model, window_records, threshold=0.5):
    """One intention score per triggered window record."""
    out = []
    for rec in window_records:
        window = ObservationWindow.from_dict(rec["window"])
        prob = stacked_forward(model, window)
        out.append({"kind": "prediction", "track_id": int(rec["track_id"]),
                    "trigger_frame": int(rec["trigger_frame"]), "probability": prob,
                    "label": CROSS if prob >= threshold else NOT_CROSS})
    return out


# ------------------------------------------------------------ evaluate

def evaluate_scenario(truth, frames, assignments, predictions, run, image_size):
    """Score one scenario against its ground truth."""
    labels = {a["agent_id"]: a["crossing_label"] for a in truth["agents"]}
    visibility = [(int(aid), f) for aid, fs in truth["visibility"].items() for f in fs]
    detected = []
    for k, (_, dets) in enumerate(frames):
        for det in dets:
            if det.truth_agent is None:
                continue
            try:
                ok = is_valid_pose(det.keypoints, image_size, run.pose.min_valid_keypoints)
            except DegeneratePoseError:
                ok = False
            if ok:
                detected.append((det.truth_agent, k))
    fed = []
    owners = {}
    for rec in assignments:
        k, j = int(rec["frame"]), int(rec["detection"])
        agent = frames[k][1][j].truth_agent
        owners.setdefault(int(rec["track_id"]), Counter())[agent] += 1
        # tracker output is the confirmed tracks; tentative ones are not reported identities
        if rec.get("status") == "confirmed":
            fed.append((agent, k, int(rec["track_id"])))
    counts = evaluation.rate_counts(visibility, detected, fed, run.eval.tracking_coverage)
    resolved = []
    for pred in predictions:
        votes = owners.get(int(pred["track_id"]))
        agent = votes.most_common(1)[0][0] if votes else None
        resolved.append((agent, pred["label"] == CROSS))
    cm = evaluation.compute_confusion(resolved, labels)
    return evaluation.ScenarioResult(
        condition=Condition(truth["condition"]),
        confusion=cm,
        visibility_events=counts.visibility_events,
        detected_events=counts.detected_events,
        tracked_agents=counts.tracked_agents,
        detected_agents=counts.detected_agents,
        id_switches=counts.id_switches,
    )
