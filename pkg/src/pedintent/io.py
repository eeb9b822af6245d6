"""File formats: atomic writes, versioned JSONL records, scenario files."""
import csv
import hashlib
import io
import json
import os
import tempfile

import numpy as np

from .errors import FormatError
from .sim import Detection, ScenarioConfig

SCHEMA_VERSION = 1


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(record):
    return json.dumps(record, sort_keys=True, default=_jsonable, allow_nan=False)


def write_jsonl(path, records):
    """Write records one per line, each stamped with ``schema_version``."""
    lines = []
    for rec in records:
        rec = dict(rec)
        rec.setdefault("schema_version", SCHEMA_VERSION)
        lines.append(dumps(rec))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_jsonl(path):
    """Parse a JSONL file; any bad line raises :class:`FormatError` naming its number."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: corrupt record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise FormatError(f"{path}:{lineno}: record is not an object")
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise FormatError(
                    f"{path}:{lineno}: unsupported schema_version {rec.get('schema_version')!r}")
            rec["_line"] = lineno
            out.append(rec)
    return out


def write_json(path, obj):
    obj = dict(obj)
    obj.setdefault("schema_version", SCHEMA_VERSION)
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def read_json(path):
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{exc.lineno}: corrupt JSON ({exc.msg})") from None
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema_version {obj.get('schema_version')!r}")
    return obj


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def file_checksum(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------ scenarios

def detection_to_dict(det):
    return {
        "keypoints": det.keypoints,
        "bbox": list(det.bbox),
        "descriptor": det.descriptor,
        "confidence": det.confidence,
        "truth_agent": det.truth_agent,
    }


def detection_from_dict(frame, data):
    kps = np.asarray(data["keypoints"], dtype=float)
    if kps.shape != (25, 3):
        raise ValueError(f"keypoints must be 25 x 3, got {kps.shape}")
    bbox = tuple(float(v) for v in data["bbox"])
    if len(bbox) != 4 or not (bbox[2] > 0 and bbox[3] > 0):
        raise ValueError("bbox must be (x, y, w, h) with positive size")
    desc = np.asarray(data["descriptor"], dtype=float)
    truth = data.get("truth_agent")
    return Detection(frame, kps, bbox, desc, None if truth is None else int(truth),
                     float(data.get("confidence", 1.0)))


def scenario_records(scenario, detections_per_frame):
    """Header record followed by one record per frame."""
    yield {"kind": "header", "config": scenario.config.to_dict(), "n_frames": scenario.n_frames}
    for k, dets in enumerate(detections_per_frame):
        yield {"kind": "frame", "frame": k, "speed": scenario.vehicle[k].speed,
               "detections": [detection_to_dict(d) for d in dets]}


def read_scenario_file(path):
    """Returns ``(config, frames)``; ``frames`` is a list of ``(speed, detections)``."""
    records = read_jsonl(path)
    if not records or records[0].get("kind") != "header":
        raise FormatError(f"{path}:1: missing scenario header")
    head = records[0]
    try:
        config = ScenarioConfig.from_dict(head["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}:{head['_line']}: bad scenario header ({exc})") from None
    frames = []
    for rec in records[1:]:
        line = rec["_line"]
        try:
            if rec.get("kind") != "frame":
                raise ValueError(f"unexpected record kind {rec.get('kind')!r}")
            k = int(rec["frame"])
            if k != len(frames):
                raise ValueError(f"expected frame {len(frames)}, found {k}")
            dets = [detection_from_dict(k, d) for d in rec["detections"]]
            frames.append((float(rec["speed"]), dets))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{line}: bad frame record ({exc})") from None
    if len(frames) != int(head.get("n_frames", len(frames))):
        raise FormatError(f"{path}: expected {head['n_frames']} frames, found {len(frames)}")
    return config, frames
