"""Seeded synthetic shared-space encounters.

A scenario is an ego vehicle driving along a straight road at a
piecewise-constant speed while pedestrians walk beside or across its
path. Everything is expressed in the camera frame of the vehicle (x right,
y down, z forward); agent trajectories store the foot point, so
``y == camera_height`` for every sample.

All randomness is derived from ``config.seed`` through
``numpy.random.default_rng`` with per-purpose sub-seeds, so scenarios,
detections and images are pure functions of (config, frame).
"""
from dataclasses import dataclass, field, fields, replace
from enum import Enum
import math

import numpy as np

from .errors import ConfigError
from .pose import N_KEYPOINTS, bbox_from_pose
from .stereo import CameraIntrinsics

MAX_SPEED_KMH = 20.0
CORRIDOR_HALF_WIDTH = 1.0
CORRIDOR_LENGTH = 25.0
NEAR_PLANE = 1.0


class Condition(str, Enum):
    BASELINE = "baseline"
    SCREEN_DISPLAY = "screen_display"
    TRAFFIC_LIGHT = "traffic_light"

    @property
    def label(self):
        return {
            "baseline": "Baseline",
            "screen_display": "Screen Display",
            "traffic_light": "Traffic Lights",
        }[self.value]


DEFAULT_CROSS_PROBABILITY = {
    Condition.BASELINE: 0.45,
    Condition.SCREEN_DISPLAY: 0.55,
    Condition.TRAFFIC_LIGHT: 0.5,
}
# mean curb pause (s) before a crossing agent steps out
DEFAULT_HESITATION = {
    Condition.BASELINE: 0.8,
    Condition.SCREEN_DISPLAY: 0.3,
    Condition.TRAFFIC_LIGHT: 0.5,
}


def _per_condition(value, name):
    if isinstance(value, (int, float)):
        return {c: float(value) for c in Condition}
    out = {}
    for key, val in dict(value).items():
        try:
            out[Condition(key)] = float(val)
        except ValueError:
            raise ConfigError(name, f"unknown condition {key!r}") from None
    missing = [c.value for c in Condition if c not in out]
    if missing:
        raise ConfigError(name, f"missing conditions {missing}")
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    n_pedestrians: int = 12
    duration: float = 20.0
    frame_rate: float = 30.0
    condition: Condition = Condition.BASELINE
    cross_probability: dict = field(default_factory=lambda: dict(DEFAULT_CROSS_PROBABILITY))
    hesitation: dict = field(default_factory=lambda: dict(DEFAULT_HESITATION))
    detection_miss_rate: float = 0.05
    false_positive_rate: float = 0.1
    keypoint_noise_sigma: float = 1.0
    keypoint_dropout: float = 0.01
    descriptor_dim: int = 64
    descriptor_noise: float = 0.15
    stander_fraction: float = 0.2
    seed: int = 0
    vehicle_speed_profile: tuple = ((0.0, 14.4),)
    camera_height: float = 1.3
    background_disparity: int = 2
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition(self.condition))
        object.__setattr__(self, "cross_probability",
                           _per_condition(self.cross_probability, "cross_probability"))
        object.__setattr__(self, "hesitation", _per_condition(self.hesitation, "hesitation"))
        object.__setattr__(self, "vehicle_speed_profile",
                           tuple((float(t), float(v)) for t, v in self.vehicle_speed_profile))
        self.validate()

    def validate(self):
        if int(self.n_pedestrians) != self.n_pedestrians or self.n_pedestrians < 0:
            raise ConfigError("n_pedestrians", "must be a non-negative integer")
        if not self.duration > 0:
            raise ConfigError("duration", "must be > 0")
        if not self.frame_rate > 0:
            raise ConfigError("frame_rate", "must be > 0")
        for name in ("detection_miss_rate", "false_positive_rate", "keypoint_dropout",
                     "stander_fraction"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(name, f"must lie in [0, 1], got {val}")
        for cond, p in self.cross_probability.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError("cross_probability", f"{cond.value} must lie in [0, 1], got {p}")
        for cond, h in self.hesitation.items():
            if h < 0:
                raise ConfigError("hesitation", f"{cond.value} must be >= 0")
        if self.keypoint_noise_sigma < 0:
            raise ConfigError("keypoint_noise_sigma", "must be >= 0")
        if self.descriptor_noise < 0:
            raise ConfigError("descriptor_noise", "must be >= 0")
        if int(self.descriptor_dim) != self.descriptor_dim or self.descriptor_dim < 2:
            raise ConfigError("descriptor_dim", "must be an integer >= 2")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        profile = self.vehicle_speed_profile
        if not profile or profile[0][0] != 0.0:
            raise ConfigError("vehicle_speed_profile", "must start at t = 0")
        times = [t for t, _ in profile]
        if times != sorted(times) or len(set(times)) != len(times):
            raise ConfigError("vehicle_speed_profile", "segment start times must increase")
        for _, v in profile:
            if not 0.0 <= v <= MAX_SPEED_KMH:
                raise ConfigError("vehicle_speed_profile", f"speeds must lie in [0, 20] km/h, got {v}")
        if self.camera_height <= 0:
            raise ConfigError("camera_height", "must be > 0")
        if self.background_disparity < 1:
            raise ConfigError("background_disparity", "must be >= 1")

    @property
    def n_frames(self):
        return int(math.floor(self.duration * self.frame_rate + 1e-9))

    @property
    def p_cross(self):
        return self.cross_probability[self.condition]

    def speed_at(self, t):
        speed = self.vehicle_speed_profile[0][1]
        for start, v in self.vehicle_speed_profile:
            if t + 1e-12 >= start:
                speed = v
        return speed

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "condition":
                val = val.value
            elif f.name in ("cross_probability", "hesitation"):
                val = {k.value: v for k, v in val.items()}
            elif f.name == "vehicle_speed_profile":
                val = [list(seg) for seg in val]
            elif f.name == "intrinsics":
                val = {g.name: getattr(val, g.name) for g in fields(val)}
            out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown scenario key")
        if "intrinsics" in data and isinstance(data["intrinsics"], dict):
            data["intrinsics"] = CameraIntrinsics(**data["intrinsics"])
        if "vehicle_speed_profile" in data:
            data["vehicle_speed_profile"] = tuple(tuple(s) for s in data["vehicle_speed_profile"])
        return cls(**data)


@dataclass(frozen=True)
class PedestrianAgent:
    agent_id: int
    trajectory: np.ndarray  # (n_frames, 3) foot point, camera frame, metres
    crossing_label: bool
    crossing_frame: int | None
    heading: np.ndarray  # (n_frames, 2) facing direction (dx, dz)
    gait_phase: np.ndarray  # (n_frames,) radians
    stride: np.ndarray  # (n_frames,) swing amplitude in [0, 1]
    body_height: float
    anchor: np.ndarray  # unit appearance anchor
    texture_seed: int
    role: str = "walker"


@dataclass(frozen=True)
class VehicleState:
    frame: int
    speed: float  # km/h


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    agents: tuple
    vehicle: tuple

    @property
    def n_frames(self):
        return self.config.n_frames

    def agent(self, agent_id):
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


@dataclass(frozen=True)
class Detection:
    frame: int
    keypoints: np.ndarray  # (25, 3)
    bbox: tuple  # (x, y, w, h)
    descriptor: np.ndarray
    truth_agent: int | None = None
    confidence: float = 1.0


@dataclass
class StereoPair:
    left: np.ndarray
    right: np.ndarray
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------- geometry

def in_corridor(x, z):
    return abs(x) <= CORRIDOR_HALF_WIDTH and 0.0 < z <= CORRIDOR_LENGTH


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def vehicle_travel(config):
    """Distance (m) travelled by the vehicle at the start of every frame."""
    dt = 1.0 / config.frame_rate
    speeds = np.array([config.speed_at(k * dt) for k in range(config.n_frames)]) / 3.6
    travel = np.zeros(config.n_frames)
    if config.n_frames > 1:
        travel[1:] = np.cumsum(speeds[:-1] * dt)
    return travel


def _unit(v):
    return v / np.linalg.norm(v)


def _crosser_path(rng, config, side, times, travel):
    """World-frame (X, Z) path, headings and walking speed for a crossing agent."""
    dt = 1.0 / config.frame_rate
    T = times[-1] if len(times) else 0.0
    t_lo = min(2.5, 0.5 * T)
    t_c = rng.uniform(t_lo, max(t_lo, T - 0.5))
    v_ms = config.speed_at(t_c) / 3.6
    z_c = max(3.0, v_ms * rng.uniform(0.7, 1.6))
    k_c = min(int(round(t_c / dt)), len(travel) - 1)
    z_world_c = travel[k_c] + (t_c - k_c * dt) * config.speed_at(t_c) / 3.6 + z_c
    s_lat = rng.uniform(1.1, 1.7)
    s_par = rng.uniform(0.6, 1.4)
    dir_z = rng.choice([-1.0, 1.0])
    mean_pause = config.hesitation[config.condition]
    pause = min(rng.exponential(mean_pause), 2.0) if mean_pause > 0 else 0.0
    x_start = rng.uniform(2.0, 4.0)
    t_turn = t_c - pause - (x_start - CORRIDOR_HALF_WIDTH) / s_lat
    if t_turn < 0:
        pause = max(0.0, pause + t_turn)
        t_turn = t_c - pause - (x_start - CORRIDOR_HALF_WIDTH) / s_lat
        if t_turn < 0:
            x_start = CORRIDOR_HALF_WIDTH + s_lat * (t_c - pause)
            t_turn = 0.0
    t_walk = t_turn + pause

    X = np.empty_like(times)
    Z = np.empty_like(times)
    heading = np.empty((len(times), 2))
    speed = np.empty_like(times)
    for k, t in enumerate(times):
        if t < t_turn:
            X[k] = side * x_start
            Z[k] = z_world_c - dir_z * s_par * (t_turn - t)
            heading[k] = (0.0, dir_z)
            speed[k] = s_par
        elif t < t_walk:
            X[k] = side * x_start
            Z[k] = z_world_c
            heading[k] = (-side, 0.0)
            speed[k] = 0.0
        else:
            X[k] = side * (x_start - s_lat * (t - t_walk))
            Z[k] = z_world_c
            heading[k] = (-side, 0.0)
            speed[k] = s_lat
    return X, Z, heading, speed


def _walker_path(rng, config, side, times, travel):
    """Non-crossing walker: constant-velocity segments parallel to the road."""
    dt = 1.0 / config.frame_rate
    n = len(times)
    x = side * rng.uniform(1.6, 3.8)
    s_par = rng.uniform(0.6, 1.5)
    dir_z = rng.choice([-1.0, 1.0])
    dev = 0.0
    next_change = rng.exponential(4.0)
    X = np.empty(n)
    Z = np.empty(n)
    heading = np.empty((n, 2))
    zpos = 0.0
    for k in range(n):
        t = times[k]
        if t >= next_change:
            dev = float(np.clip(dev + rng.normal(0.0, math.radians(15)), -math.radians(25),
                                math.radians(25)))
            next_change = t + rng.exponential(4.0)
        dx, dz = math.sin(dev), dir_z * math.cos(dev)
        if abs(x) <= 1.6 and dx * side < 0 or abs(x) >= 4.5 and dx * side > 0:
            dev = -dev
            dx = -dx
        X[k] = x
        Z[k] = zpos
        heading[k] = (dx, dz)
        x += dx * s_par * dt
        zpos += dz * s_par * dt
    # place the walk so that it passes the vehicle at a random time
    k_e = rng.integers(min(int(1.5 * config.frame_rate), n - 1), n)
    z_target = rng.uniform(2.0, 8.0)
    Z += travel[k_e] + z_target - Z[k_e]
    return X, Z, heading, np.full(n, s_par)


def _stander_path(rng, config, side, times, travel):
    n = len(times)
    x = side * rng.uniform(1.6, 3.8)
    k_e = rng.integers(min(int(1.5 * config.frame_rate), n - 1), n)
    z = travel[k_e] + rng.uniform(2.0, 8.0)
    heading = np.tile([-side, 0.0], (n, 1))
    return np.full(n, x), np.full(n, z), heading, np.zeros(n)


TURN_SECONDS = 0.4


def _smooth(values, width):
    """Centred moving average along axis 0 with edge padding."""
    if width <= 1 or len(values) == 0:
        return values
    arr = np.asarray(values, dtype=float)
    flat = arr.reshape(len(arr), -1)
    lo, hi = width // 2, width - 1 - width // 2
    padded = np.concatenate([np.repeat(flat[:1], lo, 0), flat, np.repeat(flat[-1:], hi, 0)])
    csum = np.cumsum(np.concatenate([np.zeros((1, flat.shape[1])), padded]), axis=0)
    out = (csum[width:] - csum[:-width]) / width
    return out.reshape(arr.shape)


def _smooth_heading(heading, width):
    # turns and gait changes take a fraction of a second rather than one frame
    sm = _smooth(heading, width)
    norm = np.linalg.norm(sm, axis=1, keepdims=True)
    return np.where(norm > 1e-6, sm / np.maximum(norm, 1e-12), heading)


def generate_scenario(config):
    """Build agents and the vehicle trace for ``config`` (pure in ``config``)."""
    config.validate()
    n = config.n_frames
    dt = 1.0 / config.frame_rate
    times = np.arange(n) * dt
    travel = vehicle_travel(config)
    vehicle = tuple(VehicleState(k, config.speed_at(k * dt)) for k in range(n))

    master = np.random.default_rng([int(config.seed), 0])
    agents = []
    for i in range(config.n_pedestrians):
        rng = np.random.default_rng([int(config.seed), 1, i])
        wants_cross = master.random() < config.p_cross
        side = float(rng.choice([-1.0, 1.0]))
        if n == 0:
            X = Z = np.zeros(0)
            heading = np.zeros((0, 2))
            speed = np.zeros(0)
            role = "crosser" if wants_cross else "walker"
        elif wants_cross:
            X, Z, heading, speed = _crosser_path(rng, config, side, times, travel)
            role = "crosser"
        elif rng.random() < config.stander_fraction:
            X, Z, heading, speed = _stander_path(rng, config, side, times, travel)
            role = "stander"
        else:
            X, Z, heading, speed = _walker_path(rng, config, side, times, travel)
            role = "walker"
        traj = np.column_stack([X, np.full(n, config.camera_height), Z - travel])
        crossing_frame = None
        for k in range(n):
            if in_corridor(traj[k, 0], traj[k, 2]):
                crossing_frame = k
                break
        width = int(round(TURN_SECONDS * config.frame_rate))
        heading = _smooth_heading(heading, width)
        stride = np.clip(_smooth(speed, width) / 1.4, 0.0, 1.0)
        phase = np.cumsum(2.0 * math.pi * speed * dt / 1.4) + rng.uniform(0, 2 * math.pi)
        agents.append(
            PedestrianAgent(
                agent_id=i,
                trajectory=_readonly(traj),
                crossing_label=crossing_frame is not None,
                crossing_frame=crossing_frame,
                heading=_readonly(heading),
                gait_phase=_readonly(phase),
                stride=_readonly(stride),
                body_height=float(rng.uniform(1.55, 1.9)),
                anchor=_readonly(_unit(rng.normal(size=config.descriptor_dim))),
                texture_seed=int(rng.integers(0, 2**31)),
                role=role,
            )
        )
    return Scenario(config, tuple(agents), vehicle)


# ------------------------------------------------------------- body model

# (forward, right, up) as fractions of body height, neutral stance
_BODY = np.array([
    (0.06, 0.00, 0.935),   # Nose
    (0.00, 0.00, 0.86),    # Neck
    (0.00, 0.13, 0.83),    # RShoulder
    (0.00, 0.16, 0.66),    # RElbow
    (0.00, 0.17, 0.50),    # RWrist
    (0.00, -0.13, 0.83),   # LShoulder
    (0.00, -0.16, 0.66),   # LElbow
    (0.00, -0.17, 0.50),   # LWrist
    (0.00, 0.00, 0.53),    # MidHip
    (0.00, 0.075, 0.53),   # RHip
    (0.00, 0.08, 0.29),    # RKnee
    (0.00, 0.08, 0.05),    # RAnkle
    (0.00, -0.075, 0.53),  # LHip
    (0.00, -0.08, 0.29),   # LKnee
    (0.00, -0.08, 0.05),   # LAnkle
    (0.05, 0.03, 0.95),    # REye
    (0.05, -0.03, 0.95),   # LEye
    (0.00, 0.06, 0.94),    # REar
    (0.00, -0.06, 0.94),   # LEar
    (0.10, -0.07, 0.00),   # LBigToe
    (0.09, -0.11, 0.00),   # LSmallToe
    (-0.03, -0.08, 0.00),  # LHeel
    (0.10, 0.07, 0.00),    # RBigToe
    (0.09, 0.11, 0.00),    # RSmallToe
    (-0.03, 0.08, 0.00),   # RHeel
])
# forward-axis swing coefficients: legs counter-phase, knees half, arms opposite legs
_SWING = np.zeros(N_KEYPOINTS)
_SWING[[11, 22, 23, 24]] = 1.0
_SWING[[14, 19, 20, 21]] = -1.0
_SWING[10] = 0.5
_SWING[13] = -0.5
_SWING[[3, 4]] = -0.5
_SWING[[6, 7]] = 0.5
_BODY_F = np.ascontiguousarray(_BODY[:, 0])
_BODY_R = np.ascontiguousarray(_BODY[:, 1])
_BODY_U = np.ascontiguousarray(_BODY[:, 2])


def body_points(agent, frame, camera_height):
    """3-D keypoints (25 x 3) in the camera frame."""
    H = agent.body_height
    swing = 0.16 * agent.stride[frame] * math.sin(agent.gait_phase[frame])
    fwd = (_BODY_F + swing * _SWING) * H
    right = _BODY_R * H
    foot = agent.trajectory[frame]
    dx, dz = agent.heading[frame]
    out = np.empty((N_KEYPOINTS, 3))
    out[:, 0] = foot[0] + fwd * dx + right * dz
    out[:, 1] = camera_height - _BODY_U * H
    out[:, 2] = foot[2] + fwd * dz - right * dx
    return out


def project_points(points, K):
    out = np.empty((len(points), 2))
    out[:, 0] = K.cx + K.f * points[:, 0] / points[:, 2]
    out[:, 1] = K.cy + K.f * points[:, 1] / points[:, 2]
    return out


def _in_image(uv, K):
    return (uv[:, 0] >= 0) & (uv[:, 0] < K.width) & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)


def agent_keypoints(scenario, agent, frame):
    """Noise-free projected keypoints ``(25, 2)`` or ``None`` when behind the near plane."""
    pts = body_points(agent, frame, scenario.config.camera_height)
    if np.any(pts[:, 2] < NEAR_PLANE):
        return None
    return project_points(pts, scenario.config.intrinsics)


def occluded_keypoints(uv, depth, rects):
    """Mask of keypoints hidden behind the card of a nearer agent."""
    hidden = np.zeros(len(uv), dtype=bool)
    for z, _, u0, u1, v0, v1, _ in rects:
        if z >= depth:
            continue
        hidden |= (uv[:, 0] >= u0) & (uv[:, 0] < u1) & (uv[:, 1] >= v0) & (uv[:, 1] < v1)
    return hidden


def agent_visibility(scenario, agent, frame, rects=None):
    """``(visible, fully_visible)``.

    Visible agents have enough unoccluded keypoints inside the image to be
    detectable; fully visible agents have all 25 inside and unoccluded.
    """
    uv = agent_keypoints(scenario, agent, frame)
    if uv is None:
        return False, False
    if rects is None:
        rects = _agent_rects(scenario, frame, [])
    seen = _in_image(uv, scenario.config.intrinsics)
    seen &= ~occluded_keypoints(uv, agent.trajectory[frame, 2], rects)
    count = int(seen.sum())
    return count >= 2, count == N_KEYPOINTS


def _check_frame(scenario, frame):
    if not 0 <= frame < scenario.n_frames:
        raise IndexError(f"frame {frame} outside [0, {scenario.n_frames})")


# --------------------------------------------------------------- detections

def _template_pose(height_px):
    # frontal standing pose in image units, origin at the feet
    pts = _BODY.copy() * height_px
    return np.column_stack([pts[:, 1], -pts[:, 2]])


def render_detections(scenario, frame):
    """Noisy per-frame detections for the visible agents plus clutter."""
    _check_frame(scenario, frame)
    cfg = scenario.config
    K = cfg.intrinsics
    rng = np.random.default_rng([int(cfg.seed), 2, frame])
    rects = _agent_rects(scenario, frame, [])
    dets = []
    for agent in scenario.agents:
        uv = agent_keypoints(scenario, agent, frame)
        # draw all variates unconditionally so one agent's visibility does not
        # shift another agent's noise stream
        miss = rng.random() < cfg.detection_miss_rate
        noise = rng.normal(0.0, 1.0, size=(N_KEYPOINTS, 2)) * cfg.keypoint_noise_sigma
        drop = rng.random(N_KEYPOINTS) < cfg.keypoint_dropout
        desc_noise = rng.normal(size=cfg.descriptor_dim)
        if uv is None or miss:
            continue
        hidden = occluded_keypoints(uv, agent.trajectory[frame, 2], rects)
        uv = uv + noise
        conf = np.where(_in_image(uv, K) & ~drop & ~hidden, 1.0, 0.0)
        if np.count_nonzero(conf) < 2:
            continue
        kps = np.column_stack([uv, conf])
        try:
            box = bbox_from_pose(kps, K.image_size)
        except ValueError:
            continue
        desc = agent.anchor + desc_noise * (cfg.descriptor_noise / math.sqrt(cfg.descriptor_dim))
        dets.append(Detection(frame, kps, box.as_tuple(), _unit(desc), agent.agent_id))

    n_fp = rng.poisson(cfg.false_positive_rate)
    for _ in range(n_fp):
        h = rng.uniform(30.0, 110.0)
        foot = np.array([rng.uniform(0, K.width), rng.uniform(h, K.height)])
        uv = foot + _template_pose(h) + rng.normal(0.0, 1.0, (N_KEYPOINTS, 2)) * 0.03 * h
        conf = np.where(_in_image(uv, K), 1.0, 0.0)
        desc = _unit(rng.normal(size=cfg.descriptor_dim))
        if np.count_nonzero(conf) < 2:
            continue
        kps = np.column_stack([uv, conf])
        try:
            box = bbox_from_pose(kps, K.image_size)
        except ValueError:
            continue
        dets.append(Detection(frame, kps, box.as_tuple(), desc, None))
    order = rng.permutation(len(dets))
    return [dets[i] for i in order]


# ---------------------------------------------------------------- imaging

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix(x):
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _hash_grid(key, rows, cols):
    """Deterministic uint64 hash of (key, row, col) over a grid."""
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(key & 0xFFFFFFFFFFFFFFFF) * _GOLD + _GOLD)
        r = rows.astype(np.uint64)[:, None]
        c = cols.astype(np.uint64)[None, :]
        return _mix(base ^ _mix(r * np.uint64(0x100000001B3) + c * _GOLD + np.uint64(1)))


def _background(cfg, frame, rows, cols):
    """Background intensity: a plane at constant disparity, road darker than kerb."""
    K = cfg.intrinsics
    rr = rows[:, None].astype(float)
    cc = cols[None, :].astype(float)
    below = rr > K.cy + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        zg = np.where(below, K.f * cfg.camera_height / (rr - K.cy), np.inf)
        xg = (cc - K.cx) * zg / K.f
    road = below & (np.abs(xg) <= 3.0)
    base = np.where(road, 95.0, np.where(below, 150.0, 175.0))
    key = (int(cfg.seed) * 1_000_003 + 7) ^ (frame * 7919)
    noise = (_hash_grid(key, rows, cols) % np.uint64(101)).astype(float) - 50.0
    return base + noise


def _agent_texture(agent, rows, cols):
    h = _hash_grid(agent.texture_seed, rows, cols)
    return 20.0 + (h % np.uint64(216)).astype(float)


def _agent_rects(scenario, frame, warn):
    cfg = scenario.config
    K = cfg.intrinsics
    rects = []
    for agent in scenario.agents:
        z = agent.trajectory[frame, 2]
        if z <= 0:
            warn.append(f"agent {agent.agent_id} behind camera at frame {frame}; skipped")
            continue
        pts = body_points(agent, frame, cfg.camera_height)
        pts[:, 2] = z  # render as a fronto-parallel card at the foot depth
        uv = project_points(pts, K)
        u0, u1 = int(math.floor(uv[:, 0].min())), int(math.ceil(uv[:, 0].max()))
        v0, v1 = int(math.floor(uv[:, 1].min())), int(math.ceil(uv[:, 1].max()))
        d = int(round(K.disparity_for_depth(z)))
        rects.append((z, agent, u0, u1, v0, v1, d))
    rects.sort(key=lambda r: -r[0])
    return rects


def render_pixels(scenario, frame, rows, cols, view="left", rects=None, warn=None):
    """Render the pixel grid ``rows x cols`` (increasing index arrays) of one view."""
    cfg = scenario.config
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    shift = cfg.background_disparity if view == "right" else 0
    img = _background(cfg, frame, rows, cols + shift)
    if rects is None:
        rects = _agent_rects(scenario, frame, [] if warn is None else warn)
    for _, agent, u0, u1, v0, v1, d in rects:
        off = d if view == "right" else 0
        rsel = (rows >= v0) & (rows < v1)
        csel = (cols >= u0 - off) & (cols < u1 - off)
        if not rsel.any() or not csel.any():
            continue
        img[np.ix_(rsel, csel)] = _agent_texture(agent, rows[rsel] - v0, cols[csel] + off - u0)
    return np.clip(img, 0, 255).astype(np.uint8)


def render_region(scenario, frame, x0, y0, x1, y1, view="left", rects=None, warn=None):
    """Render pixels ``[y0:y1, x0:x1]`` of the left or right image."""
    return render_pixels(scenario, frame, np.arange(y0, y1), np.arange(x0, x1), view, rects, warn)


def render_stereo_pair(scenario, frame, intrinsics=None):
    """Rectified grayscale pair; each agent is a textured card at disparity f B / Z."""
    _check_frame(scenario, frame)
    if intrinsics is not None and intrinsics != scenario.config.intrinsics:
        scenario = replace(scenario, config=scenario.config.replace(intrinsics=intrinsics))
    K = scenario.config.intrinsics
    warn = []
    rects = _agent_rects(scenario, frame, warn)
    left = render_region(scenario, frame, 0, 0, K.width, K.height, "left", rects)
    right = render_region(scenario, frame, 0, 0, K.width, K.height, "right", rects)
    return StereoPair(left, right, warn)


def agent_rects(scenario, frame):
    """Card layout of one frame, far to near, as used by the renderer."""
    return _agent_rects(scenario, frame, [])


def frame_renderer(scenario, frame):
    """Callable ``(rows, cols, view="left") -> pixels`` sharing one agent layout."""
    rects = _agent_rects(scenario, frame, [])

    def sample(rows, cols, view="left"):
        return render_pixels(scenario, frame, rows, cols, view, rects)

    return sample


def agent_card(scenario, agent, frame):
    """Left-image pixel rectangle ``(u0, u1, v0, v1)`` and integer disparity of an agent."""
    for _, a, u0, u1, v0, v1, d in _agent_rects(scenario, frame, []):
        if a.agent_id == agent.agent_id:
            return (u0, u1, v0, v1), d
    return None


def _cards_overlap(a, b):
    # a, b: (u0, u1, v0, v1, d); compares left cards, then right cards shifted by d
    if not (b[2] < a[3] and a[2] < b[3]):
        return False
    if b[0] < a[1] and a[0] < b[1]:
        return True
    return b[0] - b[4] < a[1] - a[4] and a[0] - a[4] < b[1] - b[4]


def longest_occlusion_gap(scenario, max_range=15.0):
    """Longest run of frames an agent spends hidden between two clear sightings.

    An agent is clear in a frame when its body centre lies within
    ``max_range`` and no nearer card overlaps its own in either view. A tracker
    whose track survives ``max_age`` missed frames can keep every identity
    when this gap does not exceed ``max_age``.
    """
    clear = {a.agent_id: [] for a in scenario.agents}
    for k in range(scenario.n_frames):
        rects = _agent_rects(scenario, k, [])
        for z, agent, u0, u1, v0, v1, d in rects:
            x, y, zz = agent.trajectory[k]
            y -= 0.5 * agent.body_height
            if math.sqrt(x * x + y * y + zz * zz) > max_range:
                continue
            mine = (u0, u1, v0, v1, d)
            if not any(z2 < z and _cards_overlap(mine, (p0, p1, q0, q1, d2))
                       for z2, _, p0, p1, q0, q1, d2 in rects):
                clear[agent.agent_id].append(k)
    gap = 0
    for frames in clear.values():
        for a, b in zip(frames, frames[1:]):
            gap = max(gap, b - a - 1)
    return gap
