import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pedintent.config import RunConfig, load_config, parse_config
from pedintent.errors import ConfigError, FormatError
from pedintent.io import (
    atomic_write_text, file_checksum, read_json, read_jsonl, read_scenario_file,
    scenario_records, write_json, write_jsonl,
)
from pedintent.sim import ScenarioConfig, generate_scenario, render_detections


def test_defaults_match_stage_defaults():
    run = RunConfig()
    assert run.tracker.lambda_ == 0.5 and run.tracker.max_age == 30 and run.tracker.n_init == 3
    assert run.intent.hidden == 32 and run.intent.epochs == 200
    assert run.stereo.max_range == 15.0
    assert run.scenario_config("baseline", 3) == ScenarioConfig(seed=3)


def test_parse_values_and_alias():
    run = parse_config("""
[tracker]
lambda = 0.8   # motion-heavy
delete_tentative_on_miss = false
[run]
conditions = baseline
seed = 9
[sim]
vehicle_speed_profile = ((0, 10), (5, 0))
""")
    assert run.tracker.lambda_ == 0.8
    assert run.tracker.delete_tentative_on_miss is False
    assert run.run.conditions == ("baseline",)
    assert run.sim.vehicle_speed_profile == ((0, 10), (5, 0))


@pytest.mark.parametrize("text,field", [
    ("[sim]\nduration = 0\n", "sim.duration"),
    ("[tracker]\nlambda = 2\n", "tracker.lambda"),
    ("[tracker]\nspeed = 1\n", "tracker.speed"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[intent]\nhidden = many\n", "intent.hidden"),
    ("[run]\nconditions = ('night',)\n", "run.conditions"),
    ("[stereo]\nblock_size = 4\n", "stereo.block_size"),
])
def test_bad_config_names_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field
    assert field in str(exc.value)


def test_ini_round_trip(tmp_path):
    run = RunConfig().with_values("tracker", lambda_=0.25).with_values("run", seed=4)
    path = tmp_path / "c.ini"
    path.write_text(run.to_ini())
    assert load_config(path) == run


def test_missing_config_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/x.ini")


def test_fingerprint_tracks_section_changes():
    a = RunConfig()
    b = a.with_values("tracker", lambda_=0.7)
    assert a.fingerprint("sim") == b.fingerprint("sim")
    assert a.fingerprint("tracker") != b.fingerprint("tracker")


def test_jsonl_versioned_and_line_numbers(tmp_path):
    path = tmp_path / "a.jsonl"
    write_jsonl(path, [{"x": np.int64(1)}, {"x": np.array([1.5])}])
    recs = read_jsonl(path)
    assert [r["schema_version"] for r in recs] == [1, 1]
    assert [r["_line"] for r in recs] == [1, 2]
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n" + lines[1][:-3] + "\n")
    with pytest.raises(FormatError, match=":2:"):
        read_jsonl(path)
    path.write_text(json.dumps({"schema_version": 9}) + "\n")
    with pytest.raises(FormatError, match="schema_version"):
        read_jsonl(path)


def test_json_and_checksum(tmp_path):
    path = tmp_path / "deep" / "a.json"
    write_json(path, {"b": 1})
    assert read_json(path) == {"b": 1, "schema_version": 1}
    digest = file_checksum(path)
    atomic_write_text(path, path.read_text())
    assert file_checksum(path) == digest
    assert not [p for p in path.parent.iterdir() if p.name.startswith(".tmp-")]


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**63), n=st.integers(0, 3))
def test_scenario_file_round_trip(tmp_path_factory, seed, n):
    cfg = ScenarioConfig(n_pedestrians=n, seed=seed, duration=0.5)
    sc = generate_scenario(cfg)
    dets = [render_detections(sc, k) for k in range(sc.n_frames)]
    path = tmp_path_factory.mktemp("s") / "s.jsonl"
    write_jsonl(path, scenario_records(sc, dets))
    back_cfg, frames = read_scenario_file(path)
    assert back_cfg == cfg
    assert len(frames) == sc.n_frames
    for (speed, got), want in zip(frames, dets):
        assert speed == sc.vehicle[0].speed
        assert len(got) == len(want)
        for g, w in zip(got, want):
            np.testing.assert_array_equal(g.keypoints, w.keypoints)
            np.testing.assert_array_equal(g.descriptor, w.descriptor)
            assert g.truth_agent == w.truth_agent and g.bbox == w.bbox


def test_scenario_file_bad_frame_names_line(tmp_path):
    sc = generate_scenario(ScenarioConfig(n_pedestrians=1, duration=0.2))
    path = tmp_path / "s.jsonl"
    write_jsonl(path, scenario_records(sc, [render_detections(sc, k) for k in range(sc.n_frames)]))
    lines = path.read_text().splitlines()
    rec = json.loads(lines[3])
    rec["frame"] = 7
    lines[3] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=":4:"):
        read_scenario_file(path)
