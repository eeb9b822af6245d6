"""Command-line entry point: simulate, track, train, predict, evaluate, run-all.

Every stage records a fingerprint of its config and input checksums under
``<out>/.stages``; when neither changed and its outputs are intact, the
stage is skipped.
"""
import argparse
import hashlib
import json
import logging
import os
import sys

from . import eval as evaluation
from . import io
from . import pipeline
from .config import load_config
from .errors import ConfigError, FormatError
from .intent.dataset import read_dataset, write_dataset
from .intent.model_io import load_model, save_model
from .sim import Condition

log = logging.getLogger("pedintent")

LOG_ENV = "PEDINTENT_LOG_LEVEL"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_EMPTY = 5


class StageError(RuntimeError):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------ layout

class Layout:
    def __init__(self, out):
        self.out = os.fspath(out)

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    @property
    def index(self):
        return self.path("scenarios", "index.json")

    def scenario(self, name):
        return self.path("scenarios", f"{name}.jsonl")

    def truth(self, name):
        return self.path("scenarios", f"{name}.truth.json")

    def assignments(self, name):
        return self.path("tracks", f"{name}.assignments.jsonl")

    def tracks(self, name):
        return self.path("tracks", f"{name}.tracks.jsonl")

    def windows(self, name):
        return self.path("tracks", f"{name}.windows.jsonl")

    def predictions(self, name):
        return self.path("predictions", f"{name}.predictions.jsonl")

    @property
    def dataset(self):
        return self.path("train", "dataset.jsonl")

    @property
    def model(self):
        return self.path("model", "model.bin")

    @property
    def loss_curve(self):
        return self.path("model", "loss_curve.csv")

    @property
    def train_report(self):
        return self.path("model", "train_report.json")

    def report(self, name):
        return self.path("report", name)

    def stage(self, name):
        return self.path(".stages", f"{name}.json")


def _require(path):
    if not os.path.exists(path):
        raise StageError(EXIT_MISSING, f"missing input file: {path}")
    return path


def _scenario_names(layout):
    index = io.read_json(_require(layout.index))
    return [entry["name"] for entry in index["scenarios"]]


# ------------------------------------------------------------ staging

def _outputs_intact(layout, outputs):
    for rel, digest in outputs.items():
        path = layout.path(rel)
        if not os.path.exists(path) or io.file_checksum(path) != digest:
            return False
    return True


def _upstream(layout, *names):
    """Recorded fingerprints of upstream stages, so a rerun there propagates."""
    out = {}
    for name in names:
        try:
            out[name] = io.read_json(layout.stage(name)).get("fingerprint")
        except (OSError, FormatError, ValueError):
            out[name] = None
    return out


def run_stage(layout, name, spec, inputs, body, force=False):
    """Run ``body()`` unless the recorded fingerprint and outputs still match.

    ``body`` returns the list of files it wrote. Returns True if it ran.
    """
    inputs = [os.path.abspath(p) for p in inputs]
    h = hashlib.sha256(json.dumps(spec, sort_keys=True, default=str).encode())
    for path in sorted(inputs):
        h.update(os.path.relpath(path, os.path.abspath(layout.out)).encode())
        h.update(io.file_checksum(_require(path)).encode())
    fingerprint = h.hexdigest()
    marker = layout.stage(name)
    if not force and os.path.exists(marker):
        try:
            prev = io.read_json(marker)
        except (FormatError, ValueError):
            prev = {}
        if prev.get("fingerprint") == fingerprint and _outputs_intact(layout, prev.get("outputs", {})):
            log.info("%s: up to date, skipped", name)
            return False
    written = body()
    outputs = {os.path.relpath(p, layout.out): io.file_checksum(p) for p in written}
    io.write_json(marker, {"stage": name, "fingerprint": fingerprint, "outputs": outputs})
    return True


# ------------------------------------------------------------ commands

def cmd_simulate(run, layout, force=False):
    spec = {"stage": "simulate", "sim": run.section_dict("sim"), "stereo": run.section_dict("stereo"),
            "seed": run.run.seed, "conditions": list(run.run.conditions),
            "n": run.run.scenarios_per_condition}

    def body():
        written = []
        entries = []
        for cond in run.conditions:
            for i in range(run.run.scenarios_per_condition):
                name = pipeline.scenario_name(cond, i)
                cfg = run.scenario_config(cond, pipeline.scenario_seed(run.run.seed, cond, i))
                scenario, dets, truth = pipeline.simulate(cfg, run.stereo.max_range,
                                                          run.stereo.range_mode)
                io.write_jsonl(layout.scenario(name), io.scenario_records(scenario, dets))
                io.write_json(layout.truth(name), truth)
                written += [layout.scenario(name), layout.truth(name)]
                digest = io.file_checksum(layout.scenario(name))
                entries.append({"name": name, "condition": cond.value, "seed": cfg.seed,
                                "sha256": digest})
                print(f"simulate: {name} agents={len(scenario.agents)} "
                      f"frames={scenario.n_frames} sha256={digest[:16]}")
        io.write_json(layout.index, {"scenarios": entries})
        written.append(layout.index)
        return written

    run_stage(layout, "simulate", spec, [], body, force)
    return EXIT_OK


def _track_one(run, layout, name):
    path = _require(layout.scenario(name))
    config, frames = io.read_scenario_file(path)
    result = pipeline.track_scenario(config, frames, run)
    io.write_jsonl(layout.assignments(name), result.assignments)
    io.write_jsonl(layout.tracks(name), result.tracks)
    io.write_jsonl(layout.windows(name), result.windows)
    s = result.summary
    print(f"track: {name} tracks={s['tracks']} confirmed={s['confirmed_tracks']} "
          f"triggered={s['triggered']} assignments={len(result.assignments)}")
    return [layout.assignments(name), layout.tracks(name), layout.windows(name)]


def cmd_track(run, layout, force=False):
    names = _scenario_names(layout)
    spec = {"stage": "track", "upstream": _upstream(layout, "simulate"),
            "stereo": run.section_dict("stereo"), "pose": run.section_dict("pose"),
            "tracker": run.section_dict("tracker"), "feature_dim": run.intent.feature_dim,
            "trigger_band": list(run.intent.trigger_band)}
    inputs = [layout.index] + [layout.scenario(n) for n in names]

    def body():
        written = []
        for name in names:
            written += _track_one(run, layout, name)
        return written

    run_stage(layout, "track", spec, inputs, body, force)
    return EXIT_OK


def cmd_train(run, layout, force=False):
    spec = {"stage": "train", "sim": run.section_dict("sim"), "stereo": run.section_dict("stereo"),
            "intent": run.section_dict("intent"), "seed": run.run.seed,
            "conditions": list(run.run.conditions)}

    def body():
        items = pipeline.build_training_set(run)
        write_dataset(items, layout.dataset)
        # train from the file so a stored dataset and a fresh one give the same model
        items = read_dataset(layout.dataset)
        model, curve, report = pipeline.train(run, items)
        save_model(model, layout.model)
        io.write_csv(layout.loss_curve, ["epoch", "loss"],
                     [[i, repr(float(v))] for i, v in enumerate(curve)])
        io.write_json(layout.train_report, report)
        acc = report["holdout_accuracy"]
        print(f"train: windows={len(items)} final_loss={report['final_loss']:.6f} "
              f"holdout_accuracy={'-' if acc is None else f'{acc:.4f}'}")
        return [layout.dataset, layout.model, layout.loss_curve, layout.train_report]

    run_stage(layout, "train", spec, [], body, force)
    return EXIT_OK


def cmd_predict(run, layout, force=False, model_path=None):
    names = _scenario_names(layout)
    model_path = model_path or layout.model
    spec = {"stage": "predict", "threshold": run.intent.threshold,
            "upstream": _upstream(layout, "track")}
    inputs = [_require(model_path)] + [layout.windows(n) for n in names]

    def body():
        dims = pipeline.stream_dims(run.intent.feature_dim)
        model = load_model(model_path, expect_dims=dims)
        written = []
        for name in names:
            records = io.read_jsonl(_require(layout.windows(name)))
            preds = pipeline.predict(model, records, run.intent.threshold)
            io.write_jsonl(layout.predictions(name), preds)
            written.append(layout.predictions(name))
            n_cross = sum(p["label"] == pipeline.CROSS for p in preds)
            print(f"predict: {name} scored={len(preds)} cross={n_cross}")
        return written

    run_stage(layout, "predict", spec, inputs, body, force)
    return EXIT_OK


def cmd_evaluate(run, layout, force=False):
    names = _scenario_names(layout)
    spec = {"stage": "evaluate", "pose": run.section_dict("pose"), "eval": run.section_dict("eval"),
            "conditions": list(run.run.conditions), "upstream": _upstream(layout, "track", "predict")}
    inputs = []
    for n in names:
        inputs += [layout.scenario(n), layout.truth(n), layout.assignments(n), layout.predictions(n)]

    def body():
        wanted = set(run.conditions)
        results = []
        for name in names:
            truth = io.read_json(_require(layout.truth(name)))
            cond = Condition(truth["condition"])
            if cond not in wanted:
                log.warning("%s: condition %s not configured; column omitted", name, cond.value)
                continue
            config, frames = io.read_scenario_file(_require(layout.scenario(name)))
            assignments = io.read_jsonl(_require(layout.assignments(name)))
            preds = io.read_jsonl(_require(layout.predictions(name)))
            results.append(pipeline.evaluate_scenario(truth, frames, assignments, preds, run,
                                                      config.intrinsics.image_size))
        if not results:
            raise StageError(EXIT_EMPTY, "no scenarios to evaluate")
        report = evaluation.condition_breakdown(results)
        if report.columns["Average"]["confusion"].total == 0:
            raise evaluation.EmptyReportError("no prediction could be scored against ground truth")
        table = evaluation.format_table(report)
        rates = evaluation.format_rates(report)
        io.atomic_write_text(layout.report("table.txt"), table + "\n" + rates)
        io.write_json(layout.report("metrics.json"), report.to_dict())
        header, rows = evaluation.confusion_rows(report)
        io.write_csv(layout.report("confusion.csv"), header, rows)
        io.write_csv(layout.report("metrics.csv"), *evaluation.metric_rows(report))
        sys.stdout.write(table + "\n" + rates)
        return [layout.report(n) for n in ("table.txt", "metrics.json", "confusion.csv",
                                           "metrics.csv")]

    run_stage(layout, "evaluate", spec, inputs, body, force)
    return EXIT_OK


def cmd_run_all(run, layout, force=False):
    for stage in (cmd_simulate, cmd_track, cmd_train, cmd_predict, cmd_evaluate):
        code = stage(run, layout, force)
        if code != EXIT_OK:
            return code
    return EXIT_OK


# ------------------------------------------------------------ entry point

COMMANDS = {
    "simulate": cmd_simulate,
    "track": cmd_track,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "run-all": cmd_run_all,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="pedintent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="global seed (overrides [run] seed)")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--lambda", dest="lambda_", type=float,
                       help="motion weight of the association cost (overrides [tracker] lambda)")
        p.add_argument("--condition", action="append", choices=[c.value for c in Condition],
                       help="restrict to one interface condition; repeatable")
        p.add_argument("--force", action="store_true", help="ignore stage checksums")
        if name == "predict":
            p.add_argument("--model", help="model file (default <out>/model/model.bin)")
    return parser


def resolve_config(args):
    run = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.condition:
        overrides["conditions"] = tuple(dict.fromkeys(args.condition))
    if overrides:
        run = run.with_values("run", **overrides)
    if args.lambda_ is not None:
        run = run.with_values("tracker", lambda_=args.lambda_)
    return run


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        run = resolve_config(args)
        layout = Layout(run.run.out)
        command = COMMANDS[args.command]
        if args.command == "predict":
            return command(run, layout, args.force, args.model)
        return command(run, layout, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: missing file {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except evaluation.EmptyReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
