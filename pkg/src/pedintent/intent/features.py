"""Local-context features and observation windows.

The appearance/surroundings descriptor is a fixed, deterministic stand-in
for a pretrained CNN embedding: an intensity histogram and a
magnitude-weighted gradient-orientation histogram of the crop, resampled
to a fixed grid.
"""
from dataclasses import dataclass
import math

import numpy as np

from ..pose import BoundingBox

GRID = 32
MASK_GRAY = 128
WINDOW_SECONDS = 1.5


@dataclass(frozen=True)
class LocalContextFeature:
    appearance: np.ndarray
    surroundings: np.ndarray


def _to_gray(image):
    img = np.asarray(image)
    if img.ndim == 3:
        img = img.mean(axis=2)
    return img.astype(float)


def _clip_box(x0, y0, x1, y1, shape):
    h, w = shape
    return max(x0, 0), max(y0, 0), min(x1, w), min(y1, h)


def _grid_index(lo, hi):
    n = hi - lo
    return lo + np.minimum(((np.arange(GRID) + 0.5) * n / GRID).astype(int), n - 1)


def _stub_from_grid(grid, dim):
    if dim < 2 or dim % 2:
        raise ValueError("feature dim must be an even number >= 2")
    grid = np.asarray(grid, dtype=float)
    nb = dim // 2
    hist = np.bincount(np.clip((grid * nb / 256.0).astype(int), 0, nb - 1).ravel(),
                       minlength=nb).astype(float)
    hist /= grid.size
    gy, gx = np.gradient(grid)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), math.pi)
    bins = np.clip((ang * nb / math.pi).astype(int), 0, nb - 1)
    orient = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=nb) / (grid.size * 255.0)
    return np.concatenate([hist, orient])


def feature_stub(patch, dim=64):
    """Histogram + gradient-orientation summary of a 2-D patch."""
    patch = np.asarray(patch, dtype=float)
    h, w = patch.shape
    return _stub_from_grid(patch[np.ix_(_grid_index(0, h), _grid_index(0, w))], dim)


def local_context_from_sampler(sample, bbox, image_size, dim=64):
    """Local context computed from ``sample(rows, cols) -> grid`` of full-frame pixels.

    Only the ``GRID x GRID`` sample points of the crop and of the ROI are
    requested, which lets a renderer produce just those pixels.
    """
    width, height = image_size
    bx0 = int(math.floor(bbox.x))
    by0 = int(math.floor(bbox.y))
    bx1 = int(math.ceil(bbox.x + bbox.width))
    by1 = int(math.ceil(bbox.y + bbox.height))
    cx0, cy0, cx1, cy1 = _clip_box(bx0, by0, bx1, by1, (height, width))
    if cx1 <= cx0 or cy1 <= cy0:
        raise ValueError("bbox lies entirely outside the image")
    rows, cols = _grid_index(cy0, cy1), _grid_index(cx0, cx1)
    appearance = _stub_from_grid(sample(rows, cols), dim)

    side = 2.0 * max(bbox.width, bbox.height)
    ccx, ccy = bbox.center
    rx0, ry0, rx1, ry1 = _clip_box(
        int(math.floor(ccx - side / 2)), int(math.floor(ccy - side / 2)),
        int(math.ceil(ccx + side / 2)), int(math.ceil(ccy + side / 2)), (height, width))
    rows, cols = _grid_index(ry0, ry1), _grid_index(rx0, rx1)
    roi = np.array(sample(rows, cols), dtype=float)
    inside = ((rows >= cy0) & (rows < cy1))[:, None] & ((cols >= cx0) & (cols < cx1))[None, :]
    roi[inside] = MASK_GRAY
    return LocalContextFeature(appearance, _stub_from_grid(roi, dim))


def extract_local_context(image, bbox, dim=64):
    """Appearance of the pedestrian crop and of its gray-masked surroundings.

    The surroundings ROI is a square of side ``2 * max(w, h)`` centred on
    the box (clipped to the image), with the box painted gray (128) before
    feature extraction.
    """
    img = _to_gray(image)
    return local_context_from_sampler(lambda r, c: img[np.ix_(r, c)], bbox,
                                      (img.shape[1], img.shape[0]), dim)


def window_length(frame_rate, seconds=WINDOW_SECONDS):
    return int(round(seconds * frame_rate))


@dataclass(frozen=True)
class FrameRecord:
    """Per-frame inputs gathered for one track."""

    frame: int
    bbox: BoundingBox
    pose: np.ndarray  # 36
    context: LocalContextFeature
    speed: float  # km/h


@dataclass(frozen=True)
class ObservationWindow:
    appearance: np.ndarray  # (T, Da)
    surroundings: np.ndarray  # (T, Ds)
    pose: np.ndarray  # (T, 36)
    displacement: np.ndarray  # (T, 4)
    speed: np.ndarray  # (T, 1)
    end_frame: int = -1

    STREAMS = ("appearance", "surroundings", "pose", "displacement", "speed")

    def __post_init__(self):
        lengths = {getattr(self, s).shape[0] for s in self.STREAMS}
        if len(lengths) != 1:
            raise ValueError(f"window streams differ in length: {lengths}")

    @property
    def length(self):
        return self.appearance.shape[0]

    def streams(self):
        return [getattr(self, s) for s in self.STREAMS]

    def to_dict(self):
        out = {s: getattr(self, s).tolist() for s in self.STREAMS}
        out["end_frame"] = self.end_frame
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(*(np.asarray(data[s], dtype=float) for s in cls.STREAMS),
                   end_frame=int(data.get("end_frame", -1)))


def build_window(records, frame_rate, current_frame=None, seconds=WINDOW_SECONDS):
    """Assemble the last ``T`` records into an observation window.

    Returns ``None`` unless the records hold ``T`` consecutive frames ending
    at ``current_frame`` (defaults to the last record's frame).
    """
    T = window_length(frame_rate, seconds)
    records = list(records)
    if T <= 0 or len(records) < T:
        return None
    tail = records[-T:]
    end = tail[-1].frame if current_frame is None else current_frame
    if tail[-1].frame != end:
        return None
    frames = [r.frame for r in tail]
    if frames != list(range(end - T + 1, end + 1)):
        return None
    first = tail[0].bbox
    disp = np.array([
        (r.bbox.x - first.x, r.bbox.y - first.y, r.bbox.width - first.width,
         r.bbox.height - first.height)
        for r in tail
    ])
    return ObservationWindow(
        appearance=np.array([r.context.appearance for r in tail]),
        surroundings=np.array([r.context.surroundings for r in tail]),
        pose=np.array([r.pose for r in tail]),
        displacement=disp,
        speed=np.array([[r.speed] for r in tail]),
        end_frame=end,
    )
