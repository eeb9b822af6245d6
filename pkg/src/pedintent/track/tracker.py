"""Tracking-by-detection with a combined motion/appearance association cost."""
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
import itertools

import numpy as np

from ..errors import ConfigError
from ..pose import BoundingBox
from . import kalman
from .assignment import INFEASIBLE, hungarian_solve

CHI2_GATE_4DOF = 9.4877  # 95% quantile, chi-square with 4 degrees of freedom
GALLERY_SIZE = 100


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


class EmptyGalleryError(RuntimeError):
    pass


@dataclass
class Track:
    id: int
    state: kalman.KalmanState
    gallery: deque = field(default_factory=lambda: deque(maxlen=GALLERY_SIZE))
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    misses: int = 0
    last_pose: np.ndarray | None = None
    history: deque = field(default_factory=lambda: deque(maxlen=128))

    @property
    def bbox(self):
        return BoundingBox.from_xyah(self.state.mean[:4])

    def add_descriptor(self, r):
        self.gallery.append(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class TrackerConfig:
    lambda_: float = 0.5
    chi2_gate: float = CHI2_GATE_4DOF
    appearance_gate: float = 0.4
    n_init: int = 3
    max_age: int = 30
    gallery_size: int = GALLERY_SIZE
    # a tentative track that misses a frame is dropped at once, so spurious
    # or stale short tracks never compete with an established one
    delete_tentative_on_miss: bool = True
    metric: str = "combined"  # or "motion" / "appearance": single-degree reference paths
    kalman_params: kalman.KalmanParams = field(default_factory=kalman.KalmanParams)

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigError("lambda", f"must lie in [0, 1], got {self.lambda_}")
        if self.metric not in ("combined", "motion", "appearance"):
            raise ConfigError("metric", f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class AssignmentRecord:
    frame: int
    track_id: int
    detection: int
    d1: float | None
    d2: float | None
    cost: float | None
    status: str = "tentative"  # track status after this frame's update

    def to_dict(self):
        return {"frame": self.frame, "track_id": self.track_id, "detection": self.detection,
                "d1": self.d1, "d2": self.d2, "cost": self.cost, "status": self.status}


def motion_cost(track, z, params=kalman.KalmanParams()):
    """Squared Mahalanobis distance of measurement ``z`` from the track's predicted box."""
    z_hat, S = kalman.project(track.state, params)
    return kalman.mahalanobis_sq(np.asarray(z, dtype=float) - z_hat, S)


def appearance_cost(track, r):
    """Smallest cosine distance between ``r`` and the track's descriptor gallery."""
    if not track.gallery:
        raise EmptyGalleryError(f"track {track.id} has no descriptors")
    gallery = np.asarray(track.gallery)
    return float(np.min(1.0 - gallery @ np.asarray(r, dtype=float)))


def combined_cost(d1, d2, lambda_):
    if not 0.0 <= lambda_ <= 1.0:
        raise ConfigError("lambda", f"must lie in [0, 1], got {lambda_}")
    return lambda_ * d1 + (1.0 - lambda_) * d2


def gate(d1, d2, chi2_gate=CHI2_GATE_4DOF, appearance_gate=0.4):
    return d1 <= chi2_gate and d2 <= appearance_gate


def _as_bbox(b):
    return b if isinstance(b, BoundingBox) else BoundingBox(*b)


class Tracker:
    """Single-owner tracker; call :meth:`step` once per frame."""

    def __init__(self, config=TrackerConfig()):
        self.config = config
        self.tracks = []
        self._ids = itertools.count(1)
        self.frame = -1

    def _cost_matrix(self, detections):
        cfg = self.config
        n, m = len(self.tracks), len(detections)
        costs = np.full((n, m), INFEASIBLE)
        d1s = np.full((n, m), np.nan)
        d2s = np.full((n, m), np.nan)
        if n == 0 or m == 0:
            return costs, d1s, d2s
        zs = np.array([_as_bbox(d.bbox).to_xyah() for d in detections])
        descs = np.array([d.descriptor for d in detections], dtype=float)
        for i, trk in enumerate(self.tracks):
            z_hat, S = kalman.project(trk.state, cfg.kalman_params)
            for j in range(m):
                d1s[i, j] = kalman.mahalanobis_sq(zs[j] - z_hat, S)
            gallery = np.asarray(trk.gallery)
            d2s[i] = np.min(1.0 - gallery @ descs.T, axis=0)
        for i in range(n):
            for j in range(m):
                d1, d2 = d1s[i, j], d2s[i, j]
                if not gate(d1, d2, cfg.chi2_gate, cfg.appearance_gate):
                    continue
                if cfg.metric == "motion":
                    costs[i, j] = d1
                elif cfg.metric == "appearance":
                    costs[i, j] = d2
                else:
                    costs[i, j] = combined_cost(d1, d2, cfg.lambda_)
        return costs, d1s, d2s

    def step(self, detections, frame=None):
        """Advance one frame. Returns the assignment log for this frame.

        Detections need ``bbox`` (x, y, w, h) and a unit ``descriptor``;
        an optional ``pose_feature`` is stored as the track's last pose.
        """
        cfg = self.config
        self.frame = self.frame + 1 if frame is None else frame
        for trk in self.tracks:
            trk.state = kalman.predict(trk.state, cfg.kalman_params)
        costs, d1s, d2s = self._cost_matrix(detections)
        result = hungarian_solve(costs)
        log = []
        for i, j in result.matches:
            trk = self.tracks[i]
            det = detections[j]
            box = _as_bbox(det.bbox)
            trk.state = kalman.update(trk.state, box.to_xyah(), cfg.kalman_params)
            trk.add_descriptor(det.descriptor)
            trk.hits += 1
            trk.misses = 0
            trk.history.append((self.frame, box))
            pose = getattr(det, "pose_feature", None)
            if pose is not None:
                trk.last_pose = pose
            if trk.status is TrackStatus.TENTATIVE and trk.hits >= cfg.n_init:
                trk.status = TrackStatus.CONFIRMED
            log.append(AssignmentRecord(self.frame, trk.id, j, float(d1s[i, j]),
                                        float(d2s[i, j]), float(costs[i, j]), trk.status.value))
        for i in result.unmatched_rows:
            trk = self.tracks[i]
            trk.hits = 0
            trk.misses += 1
            if trk.misses > cfg.max_age:
                trk.status = TrackStatus.DELETED
            elif cfg.delete_tentative_on_miss and trk.status is TrackStatus.TENTATIVE:
                trk.status = TrackStatus.DELETED
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DELETED]
        for j in result.unmatched_cols:
            det = detections[j]
            box = _as_bbox(det.bbox)
            trk = Track(next(self._ids), kalman.initiate(box.to_xyah(), cfg.kalman_params))
            trk.gallery = deque(maxlen=cfg.gallery_size)
            trk.add_descriptor(det.descriptor)
            trk.history.append((self.frame, box))
            trk.last_pose = getattr(det, "pose_feature", None)
            if trk.hits >= cfg.n_init:
                trk.status = TrackStatus.CONFIRMED
            self.tracks.append(trk)
            log.append(AssignmentRecord(self.frame, trk.id, j, None, None, None, trk.status.value))
        log.sort(key=lambda rec: rec.detection)
        return log

    def confirmed(self):
        return [t for t in self.tracks if t.status is TrackStatus.CONFIRMED]
