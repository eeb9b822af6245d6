"""Run configuration: one INI file with a section per pipeline stage.

Values are Python literals (``0.5``, ``(0.9, 1.1)``, ``"adam"``); bare words
are read as strings. Unknown sections and keys are rejected. Precedence is
command-line flag > file > built-in default.
"""
import ast
import configparser
from dataclasses import dataclass, field, fields, replace
import json

from .errors import ConfigError
from .sim import Condition, ScenarioConfig
from .stereo import HEIGHT_RANGE_M, MAX_RANGE_M, MIN_VALID_FRACTION, CameraIntrinsics
from .track.tracker import CHI2_GATE_4DOF, GALLERY_SIZE, TrackerConfig
from .pose import MIN_VALID_KEYPOINTS
from .intent.train import TrainParams
from .intent.trigger import TRIGGER_BAND
from .eval import TRACKING_COVERAGE


@dataclass(frozen=True)
class SimSection:
    n_pedestrians: int = 12
    duration: float = 20.0
    frame_rate: float = 30.0
    cross_probability: dict = field(default_factory=lambda: {c.value: p for c, p in ScenarioConfig().cross_probability.items()})
    hesitation: dict = field(default_factory=lambda: {c.value: h for c, h in ScenarioConfig().hesitation.items()})
    detection_miss_rate: float = 0.05
    false_positive_rate: float = 0.1
    keypoint_noise_sigma: float = 1.0
    keypoint_dropout: float = 0.01
    descriptor_dim: int = 64
    descriptor_noise: float = 0.15
    stander_fraction: float = 0.2
    vehicle_speed_profile: tuple = ((0.0, 14.4),)
    camera_height: float = 1.3
    background_disparity: int = 2


@dataclass(frozen=True)
class StereoSection:
    f: float = 280.0
    cx: float = 320.0
    cy: float = 180.0
    baseline: float = 0.30
    width: int = 640
    height: int = 360
    block_size: int = 9
    max_disparity: int = 48
    max_range: float = MAX_RANGE_M
    range_mode: str = "euclidean"
    min_valid_fraction: float = MIN_VALID_FRACTION
    height_range: tuple = HEIGHT_RANGE_M


@dataclass(frozen=True)
class PoseSection:
    min_valid_keypoints: int = MIN_VALID_KEYPOINTS


@dataclass(frozen=True)
class TrackerSection:
    lambda_: float = 0.5
    chi2_gate: float = CHI2_GATE_4DOF
    appearance_gate: float = 0.4
    n_init: int = 3
    max_age: int = 30
    gallery_size: int = GALLERY_SIZE
    delete_tentative_on_miss: bool = True


@dataclass(frozen=True)
class IntentSection:
    hidden: int = 32
    epochs: int = 200
    learning_rate: float = 0.05
    optimizer: str = "adam"
    grad_clip: float = 5.0
    feature_dim: int = 64
    threshold: float = 0.5
    trigger_band: tuple = TRIGGER_BAND
    train_per_class: int = 150
    holdout: float = 0.3


@dataclass(frozen=True)
class EvalSection:
    tracking_coverage: float = TRACKING_COVERAGE


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "runs/default"
    conditions: tuple = tuple(c.value for c in Condition)
    scenarios_per_condition: int = 2


SECTIONS = {
    "sim": SimSection, "stereo": StereoSection, "pose": PoseSection,
    "tracker": TrackerSection, "intent": IntentSection, "eval": EvalSection, "run": RunSection,
}
# INI keys that differ from the attribute name
_ALIASES = {("tracker", "lambda"): "lambda_"}


def _key_name(section, attr):
    for (sec, key), name in _ALIASES.items():
        if sec == section and name == attr:
            return key
    return attr


def _coerce(section, key, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}", f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key}", f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if isinstance(value, str):
            value = (value,)
        if not isinstance(value, (tuple, list)):
            raise ConfigError(f"{section}.{key}", f"expected a sequence, got {value!r}")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{section}.{key}", f"expected a mapping, got {value!r}")
        return dict(value)
    return value


def _parse_value(raw):
    raw = raw.strip()
    lowered = raw.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


@dataclass(frozen=True)
class RunConfig:
    sim: SimSection = field(default_factory=SimSection)
    stereo: StereoSection = field(default_factory=StereoSection)
    pose: PoseSection = field(default_factory=PoseSection)
    tracker: TrackerSection = field(default_factory=TrackerSection)
    intent: IntentSection = field(default_factory=IntentSection)
    eval: EvalSection = field(default_factory=EvalSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ derived
    @property
    def intrinsics(self):
        s = self.stereo
        return CameraIntrinsics(s.f, s.cx, s.cy, s.baseline, s.width, s.height)

    def scenario_config(self, condition, seed):
        values = {f.name: getattr(self.sim, f.name) for f in fields(SimSection)}
        return ScenarioConfig(condition=Condition(condition), seed=int(seed),
                              intrinsics=self.intrinsics, **values)

    def tracker_config(self):
        t = self.tracker
        return TrackerConfig(lambda_=t.lambda_, chi2_gate=t.chi2_gate,
                             appearance_gate=t.appearance_gate, n_init=t.n_init,
                             max_age=t.max_age, gallery_size=t.gallery_size,
                             delete_tentative_on_miss=t.delete_tentative_on_miss)

    def train_params(self):
        i = self.intent
        return TrainParams(epochs=i.epochs, learning_rate=i.learning_rate,
                           optimizer=i.optimizer, grad_clip=i.grad_clip)

    @property
    def conditions(self):
        return tuple(Condition(c) for c in self.run.conditions)

    def validate(self):
        # building the derived objects runs their own field checks; report
        # the failing key as it is spelled in the file
        try:
            self.scenario_config(Condition.BASELINE, self.run.seed)
        except ConfigError as exc:
            section = "run" if exc.field == "seed" else "sim"
            raise ConfigError(f"{section}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        try:
            self.tracker_config()
        except ConfigError as exc:
            raise ConfigError(f"tracker.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        s = self.stereo
        if s.block_size < 3 or s.block_size % 2 == 0:
            raise ConfigError("stereo.block_size", "must be odd and >= 3")
        if s.max_disparity < 1:
            raise ConfigError("stereo.max_disparity", "must be >= 1")
        if s.max_range <= 0:
            raise ConfigError("stereo.max_range", "must be > 0")
        if s.range_mode not in ("euclidean", "depth"):
            raise ConfigError("stereo.range_mode", "must be 'euclidean' or 'depth'")
        if not 0.0 <= s.min_valid_fraction <= 1.0:
            raise ConfigError("stereo.min_valid_fraction", "must lie in [0, 1]")
        if len(s.height_range) != 2 or not 0 <= s.height_range[0] <= s.height_range[1]:
            raise ConfigError("stereo.height_range", "must be (low, high) with 0 <= low <= high")
        if not 0 <= self.pose.min_valid_keypoints <= 25:
            raise ConfigError("pose.min_valid_keypoints", "must lie in [0, 25]")
        i = self.intent
        if i.hidden < 1:
            raise ConfigError("intent.hidden", "must be >= 1")
        if i.epochs < 0:
            raise ConfigError("intent.epochs", "must be >= 0")
        if i.learning_rate < 0:
            raise ConfigError("intent.learning_rate", "must be >= 0")
        if i.optimizer not in ("adam", "sgd"):
            raise ConfigError("intent.optimizer", "must be 'adam' or 'sgd'")
        if i.feature_dim < 2 or i.feature_dim % 2:
            raise ConfigError("intent.feature_dim", "must be an even integer >= 2")
        if not 0.0 <= i.threshold <= 1.0:
            raise ConfigError("intent.threshold", "must lie in [0, 1]")
        band = i.trigger_band
        if len(band) != 2 or not 0 <= band[0] <= band[1]:
            raise ConfigError("intent.trigger_band", "must be (low, high) with 0 <= low <= high")
        if i.train_per_class < 1:
            raise ConfigError("intent.train_per_class", "must be >= 1")
        if not 0.0 <= i.holdout < 1.0:
            raise ConfigError("intent.holdout", "must lie in [0, 1)")
        if not 0.0 < self.eval.tracking_coverage <= 1.0:
            raise ConfigError("eval.tracking_coverage", "must lie in (0, 1]")
        r = self.run
        if not r.conditions:
            raise ConfigError("run.conditions", "must name at least one condition")
        for c in r.conditions:
            try:
                Condition(c)
            except ValueError:
                raise ConfigError("run.conditions", f"unknown condition {c!r}") from None
        if r.scenarios_per_condition < 1:
            raise ConfigError("run.scenarios_per_condition", "must be >= 1")

    # ------------------------------------------------------------ io
    def with_values(self, section, **values):
        """Copy with ``section`` fields replaced (values coerced and validated)."""
        if section not in SECTIONS:
            raise ConfigError(section, "unknown config section")
        sections = {n: getattr(self, n) for n in SECTIONS}
        sections[section] = _section_with(section, sections[section], values)
        return RunConfig(**sections)

    def section_dict(self, name):
        sec = getattr(self, name)
        return {_key_name(name, f.name): getattr(sec, f.name) for f in fields(sec)}

    def to_dict(self):
        return {name: self.section_dict(name) for name in SECTIONS}

    def fingerprint(self, *names):
        """Stable JSON of the given sections, used for stage checksums."""
        return json.dumps({n: self.section_dict(n) for n in names}, sort_keys=True)

    def to_ini(self):
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for key, val in self.section_dict(name).items():
                lines.append(f"{key} = {val!r}")
            lines.append("")
        return "\n".join(lines)


def _section_with(section, current, values):
    known = {f.name: getattr(current, f.name) for f in fields(current)}
    coerced = {}
    for name, val in values.items():
        if name not in known:
            raise ConfigError(f"{section}.{_key_name(section, name)}", "unknown key")
        coerced[name] = _coerce(section, _key_name(section, name), known[name], val)
    return replace(current, **coerced)


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("config", f"{source}: {exc}") from None
    sections = {name: cls() for name, cls in SECTIONS.items()}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(name, "unknown config section")
        values = {_ALIASES.get((name, key), key): _parse_value(raw)
                  for key, raw in parser.items(name)}
        sections[name] = _section_with(name, sections[name], values)
    return RunConfig(**sections)


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))
