"""Rectified stereo: SAD block matching, triangulation and the range gate."""
from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels

MAX_RANGE_M = 15.0
INVALID = 0
MIN_VALID_FRACTION = 0.10


class StereoInputError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float = 280.0
    cx: float = 320.0
    cy: float = 180.0
    baseline: float = 0.30
    width: int = 640
    height: int = 360

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError("intrinsics: f must be > 0")
        if not self.baseline > 0:
            raise ValueError("intrinsics: baseline must be > 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("intrinsics: image size must be positive")

    @property
    def image_size(self):
        return (self.width, self.height)

    def disparity_for_depth(self, z):
        return self.f * self.baseline / z


@dataclass(frozen=True)
class Point3D:
    x: float
    y: float
    z: float

    @property
    def norm(self):
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass
class DisparityMap:
    """Integer disparities; ``INVALID`` (0) marks no match.

    ``origin`` is the image position of ``values[0, 0]`` so that maps
    computed over a sub-window keep image coordinates.
    """

    values: np.ndarray
    max_disparity: int
    origin: tuple = (0, 0)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def valid(self):
        return self.values != INVALID

    def to_pgm(self, path):
        """Write as a binary portable graymap, disparities scaled to 0..255."""
        scale = 255.0 / max(self.max_disparity, 1)
        img = np.clip(self.values * scale, 0, 255).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{self.width} {self.height}\n255\n".encode("ascii"))
            fh.write(img.tobytes())


def block_match(left, right, block_size=9, max_disparity=48, backend=None):
    """Per-pixel disparity minimising the SAD over a square block.

    Disparities are searched in ``[1, max_disparity]``. Border pixels and
    matches failing the uniqueness test (best SAD >= 0.95 x best SAD away
    from the winner's immediate neighbours) are set to ``INVALID``.
    """
    left = np.asarray(left)
    right = np.asarray(right)
    if left.ndim != 2 or left.shape != right.shape:
        raise StereoInputError(
            f"left/right must be equal-size grayscale images, got {left.shape} and {right.shape}"
        )
    if block_size < 3 or block_size % 2 == 0:
        raise StereoInputError(f"block_size must be odd and >= 3, got {block_size}")
    if max_disparity < 1:
        raise StereoInputError("max_disparity must be >= 1")
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    values = kern.sad_block_match(left, right, int(block_size), int(max_disparity))
    return DisparityMap(np.asarray(values, dtype=np.int32), int(max_disparity))


def block_match_region(left, right, bbox, block_size=9, max_disparity=48, backend=None):
    """Block matching restricted to the pixels of ``bbox``.

    The search window is padded so that every pixel of the box sees the
    same candidates it would in a full-image match.
    """
    left = np.asarray(left)
    right = np.asarray(right)
    height, width = left.shape

    def fetch(view, rows, cols):
        img = left if view == "left" else right
        return img[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]

    return block_match_sampled(fetch, bbox, (width, height), block_size, max_disparity, backend)


def block_match_sampled(sample, bbox, image_size, block_size=9, max_disparity=48, backend=None):
    """Like :func:`block_match_region` but pulls pixels on demand.

    ``sample(view, rows, cols)`` returns the ``rows x cols`` grid of the
    ``"left"`` or ``"right"`` image for increasing, contiguous index arrays.
    """
    width, height = image_size
    half = block_size // 2
    x0 = int(math.floor(bbox.x))
    y0 = int(math.floor(bbox.y))
    x1 = int(math.ceil(bbox.x + bbox.width))
    y1 = int(math.ceil(bbox.y + bbox.height))
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width), min(y1, height)
    if x1 <= x0 or y1 <= y0:
        raise StereoInputError("bbox does not overlap the image")
    wx0 = max(x0 - half - max_disparity, 0)
    wy0 = max(y0 - half, 0)
    wx1 = min(x1 + half, width)
    wy1 = min(y1 + half, height)
    rows = np.arange(wy0, wy1)
    cols = np.arange(wx0, wx1)
    sub = block_match(sample("left", rows, cols), sample("right", rows, cols),
                      block_size, max_disparity, backend)
    values = sub.values[y0 - wy0 : y1 - wy0, x0 - wx0 : x1 - wx0].copy()
    # pixels within half a block of the true image border stay invalid, as in a full match
    return DisparityMap(values, max_disparity, origin=(x0, y0))


def triangulate(u, v, d, K):
    """Rectified pinhole model: z = f B / d, x = (u - cx) z / f, y = (v - cy) z / f."""
    if not d > 0:
        raise ValueError(f"disparity must be positive, got {d}")
    z = K.f * K.baseline / d
    return Point3D((u - K.cx) * z / K.f, (v - K.cy) * z / K.f, z)


def project(p, K):
    """Inverse of :func:`triangulate`: camera point to ``(u, v, d)``."""
    if not p.z > 0:
        raise ValueError("point must lie in front of the camera")
    return (K.cx + K.f * p.x / p.z, K.cy + K.f * p.y / p.z, K.f * K.baseline / p.z)


def pedestrian_distance(bbox, disparity_map, K, min_valid_fraction=MIN_VALID_FRACTION):
    """Triangulate the bbox centre at the median valid disparity inside the box.

    Returns ``None`` when fewer than ``min_valid_fraction`` of the box pixels
    carry a valid disparity.
    """
    ox, oy = disparity_map.origin
    x0 = int(math.floor(bbox.x)) - ox
    y0 = int(math.floor(bbox.y)) - oy
    x1 = int(math.ceil(bbox.x + bbox.width)) - ox
    y1 = int(math.ceil(bbox.y + bbox.height)) - oy
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, disparity_map.width), min(y1, disparity_map.height)
    if x1 <= x0 or y1 <= y0:
        return None
    patch = disparity_map.values[y0:y1, x0:x1]
    good = patch[patch != INVALID]
    if good.size < min_valid_fraction * patch.size or good.size == 0:
        return None
    d = float(np.median(good))
    u, v = bbox.center
    return triangulate(u, v, d, K)


HEIGHT_RANGE_M = (1.0, 2.6)


def implied_height(bbox, p, K):
    """Metric height of ``bbox`` if it stood at depth ``p.z``."""
    return bbox.height * p.z / K.f


def size_consistent(bbox, p, K, height_range=HEIGHT_RANGE_M):
    """Reject ranges that would make the box an implausibly sized person.

    Catches stereo failures such as a pedestrian visible in the left image
    but hidden behind a nearer one in the right.
    """
    h = implied_height(bbox, p, K)
    return height_range[0] <= h <= height_range[1]


def within_range(p, max_range=MAX_RANGE_M, mode="euclidean"):
    """Range gate: Euclidean norm (default) or depth-only ``z``."""
    if mode == "euclidean":
        return p.norm <= max_range
    if mode == "depth":
        return p.z <= max_range
    raise ValueError(f"unknown range mode {mode!r}")
