"""Pose validation, bounding boxes and the 36-D pose feature.

Poses follow the 25-point body model (see ``data/keypoints.csv`` for the
canonical index table). Each keypoint is ``(x, y, confidence)``; a
confidence of 0 marks an undetected keypoint.
"""
from dataclasses import dataclass

import numpy as np

N_KEYPOINTS = 25
MIN_VALID_KEYPOINTS = 20
BBOX_MARGIN = 0.10

BODY25_NAMES = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow",
    "LWrist", "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle",
    "REye", "LEye", "REar", "LEar", "LBigToe", "LSmallToe", "LHeel",
    "RBigToe", "RSmallToe", "RHeel",
)
# MidHip plus the six foot points have no counterpart in the 18-point model.
DROPPED_INDICES = (8, 19, 20, 21, 22, 23, 24)
KEPT_INDICES = tuple(i for i in range(N_KEYPOINTS) if i not in DROPPED_INDICES)


class DegeneratePoseError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"bounding box needs positive size, got {self.width}x{self.height}")

    @property
    def center(self):
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)

    def as_tuple(self):
        return (self.x, self.y, self.width, self.height)

    def to_xyah(self):
        """Centre x, centre y, aspect ratio (w/h), height."""
        cx, cy = self.center
        return np.array([cx, cy, self.width / self.height, self.height])

    @classmethod
    def from_xyah(cls, xyah):
        cx, cy, a, h = (float(v) for v in xyah)
        w = a * h
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)


def as_pose_array(pose):
    arr = np.asarray(pose, dtype=float)
    if arr.shape != (N_KEYPOINTS, 3):
        raise ValueError(f"pose must have shape (25, 3), got {arr.shape}")
    return arr


def valid_mask(pose):
    return as_pose_array(pose)[:, 2] > 0


def bbox_from_pose(pose, image_size=None, margin=BBOX_MARGIN):
    """Axis-aligned box over the valid keypoints, grown by ``margin`` of the
    extent on every side and clipped to ``image_size = (width, height)``.
    """
    arr = as_pose_array(pose)
    pts = arr[arr[:, 2] > 0, :2]
    if len(pts) < 2:
        raise DegeneratePoseError(f"need at least 2 valid keypoints, got {len(pts)}")
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    mx = margin * (x1 - x0)
    my = margin * (y1 - y0)
    x0, x1 = x0 - mx, x1 + mx
    y0, y1 = y0 - my, y1 + my
    if image_size is not None:
        w, h = image_size
        x0, x1 = max(x0, 0.0), min(x1, float(w))
        y0, y1 = max(y0, 0.0), min(y1, float(h))
    if x1 <= x0 or y1 <= y0:
        raise DegeneratePoseError("keypoints collapse to a zero-area box")
    return BoundingBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


def is_valid_pose(pose, image_size=None, min_valid=MIN_VALID_KEYPOINTS):
    """Keep poses with at least 20 detected keypoints whose box is not wider
    than it is tall."""
    arr = as_pose_array(pose)
    if int(np.count_nonzero(arr[:, 2] > 0)) < min_valid:
        return False
    try:
        box = bbox_from_pose(arr, image_size)
    except DegeneratePoseError:
        return False
    return box.width <= box.height


def filter_poses(poses, image_size=None, min_valid=MIN_VALID_KEYPOINTS):
    return [p for p in poses if is_valid_pose(p, image_size, min_valid)]


def reduce_to_18(pose):
    """Drop MidHip and the six foot points; remaining order is unchanged."""
    return as_pose_array(pose)[list(KEPT_INDICES)]


def normalize_pose(k18, bbox):
    """Map each keypoint into the box's unit square and flatten to 36 values.

    Invalid keypoints encode as (0, 0).
    """
    arr = np.asarray(k18, dtype=float)
    if arr.shape != (18, 3):
        raise ValueError(f"expected 18 keypoints, got shape {arr.shape}")
    out = np.empty((18, 2))
    out[:, 0] = (arr[:, 0] - bbox.x) / bbox.width
    out[:, 1] = (arr[:, 1] - bbox.y) / bbox.height
    np.clip(out, 0.0, 1.0, out=out)
    out[arr[:, 2] <= 0] = 0.0
    return out.reshape(36)


def pose_feature(pose, bbox=None):
    """Convenience: 25-point pose to PoseFeature36."""
    if bbox is None:
        bbox = bbox_from_pose(pose)
    return normalize_pose(reduce_to_18(pose), bbox)
