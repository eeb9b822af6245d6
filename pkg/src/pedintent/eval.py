"""Evaluation: confusion counts, the five intent metrics, detection and tracking rates."""
from collections import Counter
from dataclasses import dataclass

from .sim import Condition

METRICS = ("accuracy", "precision", "specificity", "cross_recall", "not_cross_recall")
METRIC_LABELS = {
    "accuracy": "Accuracy",
    "precision": "Precision",
    "specificity": "Specificity",
    "cross_recall": "Cross Recall",
    "not_cross_recall": "Not Cross Recall",
}
# report column order
TABLE_CONDITIONS = (Condition.BASELINE, Condition.TRAFFIC_LIGHT, Condition.SCREEN_DISPLAY)
TRACKING_COVERAGE = 0.8


class EmptyReportError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with Cross as the positive class; ``spurious`` counts unresolved predictions."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    spurious: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn", "spurious"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn,
                               self.fn + other.fn, self.spurious + other.spurious)

    def as_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "spurious": self.spurious}


def compute_confusion(predictions, truth_labels):
    """``predictions``: iterable of ``(agent_id or None, predicted_cross)``.

    ``truth_labels`` maps agent id to its crossing label. Predictions whose
    agent is ``None`` or unknown count as spurious.
    """
    tp = fp = tn = fn = spurious = 0
    for agent, pred in predictions:
        if agent is None or agent not in truth_labels:
            spurious += 1
            continue
        truth = bool(truth_labels[agent])
        pred = bool(pred)
        if pred and truth:
            tp += 1
        elif pred:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn, spurious)


def _ratio(num, den):
    return num / den if den else None


def compute_metrics(cm):
    """The five table metrics; a zero-denominator metric is omitted from the dict."""
    if cm.total == 0:
        raise EmptyReportError("confusion matrix is empty")
    values = {
        "accuracy": _ratio(cm.tp + cm.tn, cm.total),
        "precision": _ratio(cm.tp, cm.tp + cm.fp),
        "specificity": _ratio(cm.tn, cm.tn + cm.fp),
        "cross_recall": _ratio(cm.tp, cm.tp + cm.fn),
        "not_cross_recall": _ratio(cm.tn, cm.tn + cm.fn),
    }
    return {k: v for k, v in values.items() if v is not None}


# ------------------------------------------------------------ rates

@dataclass(frozen=True)
class RateCounts:
    visibility_events: int
    detected_events: int
    detected_agents: int
    tracked_agents: int
    id_switches: int

    @property
    def detection_rate(self):
        return _ratio(self.detected_events, self.visibility_events)

    @property
    def tracking_rate(self):
        return _ratio(self.tracked_agents, self.detected_agents)


def rate_counts(visibility, detections, assignments, coverage=TRACKING_COVERAGE):
    """Counts behind the detection and tracking rates of one scenario.

    visibility:  iterable of ``(agent_id, frame)`` events the detector should find.
    detections:  iterable of ``(agent_id, frame)`` pairs that were detected.
    assignments: iterable of ``(agent_id, frame, track_id)`` for detections fed to
                 the tracker (agent ``None`` for clutter, ignored).
    """
    events = set(visibility)
    found = set(detections) & events
    per_agent = {}
    for agent, frame, track_id in sorted(
            (a, f, t) for a, f, t in assignments if a is not None):
        per_agent.setdefault(agent, []).append(track_id)
    tracked = 0
    switches = 0
    for ids in per_agent.values():
        dominant = Counter(ids).most_common(1)[0][1]
        if dominant >= coverage * len(ids):
            tracked += 1
        switches += sum(1 for a, b in zip(ids, ids[1:]) if a != b)
    return RateCounts(len(events), len(found), len(per_agent), tracked, switches)


def detection_tracking_rates(visibility, detections, assignments, coverage=TRACKING_COVERAGE):
    """``(detection_rate, tracking_rate, id_switches)``; an empty rate is ``None``."""
    c = rate_counts(visibility, detections, assignments, coverage)
    return c.detection_rate, c.tracking_rate, c.id_switches


# ------------------------------------------------------------ breakdown

@dataclass(frozen=True)
class ScenarioResult:
    condition: Condition
    confusion: ConfusionMatrix
    visibility_events: int = 0
    detected_events: int = 0
    tracked_agents: int = 0
    detected_agents: int = 0
    id_switches: int = 0


@dataclass(frozen=True)
class MetricsReport:
    """Per-condition columns plus the micro-averaged ``average`` column."""

    columns: dict  # label -> {"confusion": ConfusionMatrix, "metrics": dict, "rates": dict}

    def metric(self, column, name):
        return self.columns[column]["metrics"].get(name)

    def to_dict(self):
        out = {}
        for col, block in self.columns.items():
            out[col] = {"confusion": block["confusion"].as_dict(),
                        "metrics": dict(block["metrics"]), "rates": dict(block["rates"])}
        return {"columns": out}


def _column(results):
    cm = ConfusionMatrix()
    vis = det = tracked = agents = switches = 0
    for r in results:
        cm = cm + r.confusion
        vis += r.visibility_events
        det += r.detected_events
        tracked += r.tracked_agents
        agents += r.detected_agents
        switches += r.id_switches
    metrics = compute_metrics(cm) if cm.total else {}
    rates = {"id_switches": switches}
    if vis:
        rates["detection_rate"] = det / vis
    if agents:
        rates["tracking_rate"] = tracked / agents
    return {"confusion": cm, "metrics": metrics, "rates": rates}


def condition_breakdown(results):
    """Pool counts per condition, then across all conditions (micro-average)."""
    results = list(results)
    columns = {}
    for cond in TABLE_CONDITIONS:
        mine = [r for r in results if Condition(r.condition) is cond]
        if mine:
            columns[cond.label] = _column(mine)
    if not columns:
        raise EmptyReportError("no scenario results")
    columns["Average"] = _column(results)
    return MetricsReport(columns)


# ------------------------------------------------------------ output

def _display_columns(report):
    # with one condition the Average column repeats it; show it once
    cols = list(report.columns)
    if len(cols) == 2:
        return cols[:1]
    return cols


def format_table(report):
    """Plain-text table: metric rows, condition columns, Average last."""
    cols = _display_columns(report)
    width = max(len(lbl) for lbl in METRIC_LABELS.values()) + 2
    colw = max(10, max(len(c) for c in cols) + 2)
    lines = ["".ljust(width) + "".join(c.rjust(colw) for c in cols)]
    for key in METRICS:
        row = METRIC_LABELS[key].ljust(width)
        for c in cols:
            val = report.metric(c, key)
            row += ("-" if val is None else f"{val:.2f}").rjust(colw)
        lines.append(row)
    return "\n".join(lines) + "\n"


def format_rates(report):
    cols = _display_columns(report)
    width = 18
    colw = max(10, max(len(c) for c in cols) + 2)
    lines = ["".ljust(width) + "".join(c.rjust(colw) for c in cols)]
    for key, label in (("detection_rate", "Detection Rate"), ("tracking_rate", "Tracking Rate"),
                       ("id_switches", "Id Switches")):
        row = label.ljust(width)
        for c in cols:
            val = report.columns[c]["rates"].get(key)
            if val is None:
                cell = "-"
            elif key == "id_switches":
                cell = str(val)
            else:
                cell = f"{val:.4f}"
            row += cell.rjust(colw)
        lines.append(row)
    return "\n".join(lines) + "\n"


def confusion_rows(report):
    rows = []
    for col, block in report.columns.items():
        cm = block["confusion"]
        rows.append([col, cm.tp, cm.fp, cm.tn, cm.fn, cm.spurious])
    return ["condition", "tp", "fp", "tn", "fn", "spurious"], rows


def metric_rows(report):
    cols = _display_columns(report)
    rows = []
    for key in METRICS:
        vals = [report.metric(c, key) for c in cols]
        rows.append([METRIC_LABELS[key]] + ["" if v is None else repr(float(v)) for v in vals])
    return ["metric"] + cols, rows
