"""Labelled observation windows harvested from simulated scenarios.

Windows end at the first frame an agent's ground-truth time-to-interaction
enters the trigger band, mirroring when the online pipeline predicts.
Inputs come from the simulated detector (noisy keypoints, misses); a
missed frame holds the previous box and pose.
"""
from dataclasses import dataclass
import json

import numpy as np

from ..pose import BoundingBox, is_valid_pose, pose_feature
from ..sim import frame_renderer, generate_scenario, render_detections
from .features import FrameRecord, ObservationWindow, build_window, local_context_from_sampler, window_length
from .trigger import TRIGGER_BAND, time_to_interaction

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LabelledWindow:
    window: ObservationWindow
    label: bool
    agent_id: int
    scenario_seed: int


def trigger_frame(scenario, agent, band=TRIGGER_BAND, min_frame=0):
    for k in range(min_frame, scenario.n_frames):
        z = agent.trajectory[k, 2]
        if z <= 0:
            continue
        tti = time_to_interaction(z, scenario.vehicle[k].speed)
        if band[0] <= tti <= band[1]:
            return k
    return None


def scenario_windows(scenario, feature_dim=64, band=TRIGGER_BAND, max_missing=0.5):
    cfg = scenario.config
    T = window_length(cfg.frame_rate)
    wanted = {}
    for agent in scenario.agents:
        k = trigger_frame(scenario, agent, band, min_frame=T - 1)
        if k is not None:
            wanted[agent.agent_id] = k
    if not wanted:
        return []
    per_frame = {}
    for aid, k in wanted.items():
        for f in range(k - T + 1, k + 1):
            per_frame.setdefault(f, []).append(aid)

    K = cfg.intrinsics
    observed = {aid: {} for aid in wanted}
    for f in sorted(per_frame):
        dets = {d.truth_agent: d for d in render_detections(scenario, f)
                if d.truth_agent is not None and is_valid_pose(d.keypoints, K.image_size)}
        for aid in per_frame[f]:
            if aid in dets:
                observed[aid][f] = dets[aid]

    out = []
    samplers = {}
    for aid, k in sorted(wanted.items()):
        obs = observed[aid]
        if len(obs) < (1.0 - max_missing) * T:
            continue
        frames = list(range(k - T + 1, k + 1))
        first = next(f for f in frames if f in obs)
        held = obs[first]
        records = []
        for f in frames:
            if f not in samplers:
                samplers[f] = frame_renderer(scenario, f)
            sample = samplers[f]
            det = obs.get(f, held)
            held = det
            box = BoundingBox(*det.bbox)
            ctx = local_context_from_sampler(sample, box, K.image_size, feature_dim)
            records.append(FrameRecord(f, box, pose_feature(det.keypoints, box), ctx,
                                       scenario.vehicle[f].speed))
        window = build_window(records, cfg.frame_rate, k)
        agent = scenario.agent(aid)
        out.append(LabelledWindow(window, bool(agent.crossing_label), aid, int(cfg.seed)))
    return out


def derive_seed(seed, index):
    return int(np.random.default_rng([int(seed), 99, int(index)]).integers(0, 2**63))


def build_dataset(base_config, n_per_class, seed=0, feature_dim=64, max_scenarios=2000):
    """Balanced list of :class:`LabelledWindow`, ``n_per_class`` per label."""
    pos, neg = [], []
    for i in range(max_scenarios):
        if len(pos) >= n_per_class and len(neg) >= n_per_class:
            break
        scenario = generate_scenario(base_config.replace(seed=derive_seed(seed, i)))
        for lw in scenario_windows(scenario, feature_dim):
            (pos if lw.label else neg).append(lw)
    if len(pos) < n_per_class or len(neg) < n_per_class:
        raise RuntimeError(
            f"only {len(pos)} crossing / {len(neg)} non-crossing windows after {max_scenarios} scenarios")
    items = pos[:n_per_class] + neg[:n_per_class]
    order = np.random.default_rng([int(seed), 98]).permutation(len(items))
    return [items[i] for i in order]


def split(items, holdout_fraction=0.3, seed=0):
    order = np.random.default_rng([int(seed), 97]).permutation(len(items))
    n_test = int(round(holdout_fraction * len(items)))
    test = [items[i] for i in order[:n_test]]
    train = [items[i] for i in order[n_test:]]
    return train, test


def write_dataset(items, path):
    from ..io import atomic_write_text
    lines = []
    for lw in items:
        rec = {"schema_version": SCHEMA_VERSION, "label": lw.label, "agent_id": lw.agent_id,
               "scenario_seed": lw.scenario_seed, "window": lw.window.to_dict()}
        lines.append(json.dumps(rec) + "\n")
    atomic_write_text(path, "".join(lines))


def read_dataset(path):
    from ..errors import FormatError
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if rec.get("schema_version") != SCHEMA_VERSION:
                    raise FormatError(f"{path}:{lineno}: unsupported schema_version")
                out.append(LabelledWindow(ObservationWindow.from_dict(rec["window"]),
                                          bool(rec["label"]), int(rec["agent_id"]),
                                          int(rec["scenario_seed"])))
            except (KeyError, ValueError, TypeError) as exc:
                if isinstance(exc, FormatError):
                    raise
                raise FormatError(f"{path}:{lineno}: malformed window record ({exc})") from exc
    return out
