import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pedintent.errors import FormatError
from pedintent.intent.dataset import LabelledWindow, read_dataset, split, write_dataset
from pedintent.intent.features import (
    MASK_GRAY, FrameRecord, LocalContextFeature, ObservationWindow, build_window,
    extract_local_context, feature_stub, window_length,
)
from pedintent.intent.gru import (
    StackedGruModel, forward, gru_cell_backward, gru_cell_forward, gru_sequence_backward,
    gru_sequence_forward, init_gru_params, loss_and_grads, stack_windows, stacked_forward,
)
from pedintent.intent.model_io import load_model, save_model
from pedintent.intent.train import DegenerateTrainingWarning, TrainParams, accuracy, train_toy
from pedintent.intent.trigger import InteractionTrigger, time_to_interaction
from pedintent.pose import BoundingBox

from oracles import fd_gradient

SMALL = {"appearance": 3, "surroundings": 2, "pose": 4, "displacement": 4, "speed": 1}


def random_window(rng, T=5, dims=SMALL):
    return ObservationWindow(*(rng.normal(size=(T, dims[s])) for s in ObservationWindow.STREAMS))


def _record(frame, box, value=0.0, dim=4):
    ctx = LocalContextFeature(np.full(dim, value), np.full(dim, value))
    return FrameRecord(frame, box, np.zeros(36), ctx, 10.0)


# ------------------------------------------------------------ features

def test_identical_crops_identical_features(rng):
    img = rng.integers(0, 256, size=(120, 200)).astype(np.uint8)
    box = BoundingBox(50, 20, 30, 70)
    a = extract_local_context(img, box)
    b = extract_local_context(img.copy(), box)
    np.testing.assert_array_equal(a.appearance, b.appearance)
    np.testing.assert_array_equal(a.surroundings, b.surroundings)


def test_constant_crop_single_bin_no_gradient():
    f = feature_stub(np.full((40, 20), 77.0), dim=16)
    hist, orient = f[:8], f[8:]
    assert np.count_nonzero(hist) == 1 and hist.sum() == pytest.approx(1.0)
    assert (orient == 0).all()


def test_surroundings_ignore_pixels_inside_the_box(rng):
    img = rng.integers(0, 256, size=(120, 200)).astype(np.uint8)
    box = BoundingBox(80, 40, 20, 40)
    a = extract_local_context(img, box)
    img2 = img.copy()
    img2[40:80, 80:100] = MASK_GRAY + 50
    b = extract_local_context(img2, box)
    np.testing.assert_array_equal(a.surroundings, b.surroundings)
    assert not np.array_equal(a.appearance, b.appearance)


def test_box_outside_image_raises(rng):
    img = rng.integers(0, 256, size=(50, 50)).astype(np.uint8)
    with pytest.raises(ValueError):
        extract_local_context(img, BoundingBox(100, 100, 10, 10))


def test_window_needs_full_history():
    T = window_length(30.0)
    assert T == 45
    box = BoundingBox(10, 10, 20, 40)
    recs = [_record(k, box) for k in range(T - 1)]
    assert build_window(recs, 30.0) is None
    recs.append(_record(T - 1, box))
    w = build_window(recs, 30.0)
    assert w.length == T
    assert (w.displacement == 0).all()


def test_window_displacement_relative_to_first_frame():
    T = window_length(10.0)
    recs = [_record(k, BoundingBox(10 + 2 * k, 10, 20, 40 + k)) for k in range(T)]
    w = build_window(recs, 10.0)
    np.testing.assert_array_equal(w.displacement[0], 0)
    np.testing.assert_array_equal(w.displacement[-1], (2 * (T - 1), 0, 0, T - 1))


def test_window_rejects_gaps():
    T = window_length(10.0)
    box = BoundingBox(10, 10, 20, 40)
    recs = [_record(k, box) for k in range(T + 1) if k != 3]
    assert build_window(recs, 10.0) is None


def test_window_dict_round_trip(rng):
    w = random_window(rng)
    back = ObservationWindow.from_dict(w.to_dict())
    for s in ObservationWindow.STREAMS:
        np.testing.assert_array_equal(getattr(w, s), getattr(back, s))


# ------------------------------------------------------------ GRU cell

def test_zero_cell_outputs_zero():
    p = init_gru_params(3, 4)
    h, (_, _, z, r, _, c) = gru_cell_forward(np.ones(3), np.zeros(4), p)
    assert (z == 0.5).all() and (r == 0.5).all() and (c == 0).all() and (h == 0).all()


def test_closed_update_gate_carries_state(rng):
    p = init_gru_params(3, 4, rng)
    p["bz"][:] = -50.0
    h0 = rng.normal(size=4)
    h, _ = gru_cell_forward(rng.normal(size=3) * 0.1, h0, p)
    np.testing.assert_allclose(h, h0, atol=1e-15)


def test_cell_shape_mismatch_raises():
    with pytest.raises(ValueError):
        gru_cell_forward(np.ones(5), np.zeros(4), init_gru_params(3, 4))


def test_cell_gradients_match_finite_differences(rng):
    p = init_gru_params(3, 4, rng, scale=0.8)
    x = rng.normal(size=(2, 3))
    h = rng.normal(size=(2, 4))
    w = rng.normal(size=(2, 4))

    def loss():
        return float(np.sum(gru_cell_forward(x, h, p)[0] * w))

    grads = {k: np.zeros_like(v) for k, v in p.items()}
    _, cache = gru_cell_forward(x, h, p)
    dx, dh = gru_cell_backward(w, cache, p, grads)
    for k in p:
        np.testing.assert_allclose(grads[k], fd_gradient(loss, p[k]), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dx, fd_gradient(loss, x), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dh, fd_gradient(loss, h), rtol=1e-6, atol=1e-8)


def test_sequence_matches_unrolled_cells(rng):
    p = init_gru_params(3, 4, rng)
    xs = rng.normal(size=(2, 6, 3))
    hs, _ = gru_sequence_forward(xs, p)
    h = np.zeros((2, 4))
    for t in range(6):
        h, _ = gru_cell_forward(xs[:, t], h, p)
        np.testing.assert_allclose(hs[:, t], h, atol=1e-12)


def test_sequence_backward_matches_cell_backward(rng):
    p = init_gru_params(3, 4, rng)
    xs = rng.normal(size=(2, 5, 3))
    dhs = rng.normal(size=(2, 5, 4))
    _, cache = gru_sequence_forward(xs, p)
    seq_grads = {k: np.zeros_like(v) for k, v in p.items()}
    dxs = gru_sequence_backward(dhs, cache, p, seq_grads)
    caches, h = [], np.zeros((2, 4))
    for t in range(5):
        h, c = gru_cell_forward(xs[:, t], h, p)
        caches.append(c)
    cell_grads = {k: np.zeros_like(v) for k, v in p.items()}
    dh = np.zeros((2, 4))
    for t in range(4, -1, -1):
        dx, dh = gru_cell_backward(dhs[:, t] + dh, caches[t], p, cell_grads)
        np.testing.assert_allclose(dxs[:, t], dx, atol=1e-12)
    for k in p:
        np.testing.assert_allclose(seq_grads[k], cell_grads[k], atol=1e-12)


# ------------------------------------------------------------ stacked model

def _check_model_gradients(model, batch, labels):
    _, grads = loss_and_grads(model, batch, labels)
    worst = 0.0
    for name, arr in model.parameters().items():
        num = fd_gradient(lambda: loss_and_grads(model, batch, labels)[0], arr)
        scale = max(np.abs(num).max(), np.abs(grads[name]).max(), 1e-8)
        worst = max(worst, float(np.abs(num - grads[name]).max() / scale))
    return worst


def test_stacked_gradients_match_finite_differences(rng):
    model = StackedGruModel.create(SMALL, hidden=3, seed=5)
    batch = stack_windows([random_window(rng, 4) for _ in range(3)])
    assert _check_model_gradients(model, batch, [1, 0, 1]) < 1e-4


def test_zero_model_gives_one_half(rng):
    model = StackedGruModel.create(SMALL, hidden=4, zero=True)
    for _ in range(5):
        assert stacked_forward(model, random_window(rng, 7)) == 0.5


def test_identical_windows_identical_probability(rng):
    model = StackedGruModel.create(SMALL, hidden=4, seed=1)
    w = random_window(rng)
    assert stacked_forward(model, w) == stacked_forward(model, ObservationWindow.from_dict(w.to_dict()))


def test_incomplete_window_raises(rng):
    model = StackedGruModel.create(SMALL, hidden=4, seed=1)
    batch = stack_windows([random_window(rng)])
    del batch["speed"]
    with pytest.raises(ValueError, match="speed"):
        forward(model, batch)
    bad = stack_windows([random_window(rng)])
    bad["pose"] = bad["pose"][:, :, :2]
    with pytest.raises(ValueError):
        forward(model, bad)


def _moving_window(direction, T=6):
    disp = np.zeros((T, 4))
    disp[:, 0] = direction * np.arange(T)
    z = {s: np.zeros((T, SMALL[s])) for s in SMALL}
    z["displacement"] = disp
    return ObservationWindow(**z)


def test_trained_model_is_order_sensitive():
    # the two classes hold the same frames in opposite order, so only an
    # order-aware model can separate them
    right = _moving_window(1.0)
    left = ObservationWindow(*(s[::-1].copy() for s in right.streams()))
    model = StackedGruModel.create(SMALL, hidden=4, seed=2)
    model, _ = train_toy(model, [left, right], [0, 1],
                         TrainParams(epochs=150, fit_normalization=False))
    assert stacked_forward(model, right) > 0.9
    assert stacked_forward(model, left) < 0.1


def test_zero_learning_rate_leaves_parameters(rng):
    model = StackedGruModel.create(SMALL, hidden=3, seed=4)
    before = {k: v.copy() for k, v in model.parameters().items()}
    windows = [random_window(rng) for _ in range(4)]
    train_toy(model, windows, [0, 1, 0, 1], TrainParams(epochs=5, learning_rate=0.0))
    for k, v in model.parameters().items():
        np.testing.assert_array_equal(v, before[k])


def test_single_sample_is_memorised(rng):
    model = StackedGruModel.create(SMALL, hidden=4, seed=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTrainingWarning)
        _, curve = train_toy(model, [random_window(rng)], [1], TrainParams(epochs=200))
    assert curve[-1] < 0.01
    assert len(curve) == 201


def test_single_class_warns(rng):
    model = StackedGruModel.create(SMALL, hidden=3, seed=4)
    with pytest.warns(DegenerateTrainingWarning):
        train_toy(model, [random_window(rng), random_window(rng)], [1, 1], TrainParams(epochs=1))


def test_train_rejects_bad_inputs(rng):
    model = StackedGruModel.create(SMALL, hidden=3, seed=4)
    with pytest.raises(ValueError):
        train_toy(model, [], [])
    with pytest.raises(ValueError):
        train_toy(model, [random_window(rng)], [1, 0])


def test_separable_toy_data_is_learned():
    rng = np.random.default_rng(0)
    windows, labels = [], []
    for i in range(80):
        d = 1.0 if i % 2 else -1.0
        w = _moving_window(d * rng.uniform(0.5, 2.0))
        w = ObservationWindow(*(s + rng.normal(scale=0.3, size=s.shape) for s in w.streams()))
        windows.append(w)
        labels.append(i % 2)
    model = StackedGruModel.create(SMALL, hidden=4, seed=0)
    train_toy(model, windows[:60], labels[:60], TrainParams(epochs=100))
    assert accuracy(model, windows[60:], labels[60:]) >= 0.9


# ------------------------------------------------------------ model files

def test_model_round_trip(tmp_path, rng):
    model = StackedGruModel.create(SMALL, hidden=3, seed=9)
    model.fit_normalization(stack_windows([random_window(rng) for _ in range(3)]))
    path = tmp_path / "sub" / "m.bin"
    save_model(model, path)
    back = load_model(path, expect_dims=SMALL, expect_hidden=3)
    w = random_window(rng)
    assert stacked_forward(back, w) == stacked_forward(model, w)


def test_model_header_mismatch(tmp_path):
    path = tmp_path / "m.bin"
    save_model(StackedGruModel.create(SMALL, hidden=3, seed=9), path)
    with pytest.raises(FormatError, match="hidden"):
        load_model(path, expect_hidden=4)
    with pytest.raises(FormatError, match="dimensions"):
        load_model(path, expect_dims={**SMALL, "pose": 36})
    data = path.read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_model(tmp_path / "t.bin")
    (tmp_path / "x.bin").write_bytes(b"garbage!" + data[8:])
    with pytest.raises(FormatError):
        load_model(tmp_path / "x.bin")


# ------------------------------------------------------------ dataset files

def test_dataset_round_trip_and_split(tmp_path, rng):
    items = [LabelledWindow(random_window(rng), bool(i % 2), i, 7) for i in range(10)]
    path = tmp_path / "d.jsonl"
    write_dataset(items, path)
    back = read_dataset(path)
    assert [x.label for x in back] == [x.label for x in items]
    np.testing.assert_array_equal(back[3].window.pose, items[3].window.pose)
    tr, te = split(items, 0.3, seed=1)
    assert len(te) == 3 and len(tr) == 7
    assert {x.agent_id for x in tr} | {x.agent_id for x in te} == set(range(10))


def test_dataset_corrupt_line_named(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    write_dataset([LabelledWindow(random_window(rng), True, 0, 1)] * 2, path)
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n{broken\n")
    with pytest.raises(FormatError, match=":2:"):
        read_dataset(path)


# ------------------------------------------------------------ trigger

def test_trigger_rules():
    assert time_to_interaction(5.0, 18.0) == pytest.approx(1.0)
    trig = InteractionTrigger()
    assert trig.should_trigger(1, 5.0, 18.0)
    assert not trig.should_trigger(1, 5.0, 18.0)  # once per track
    assert trig.should_trigger(2, 5.0, 18.0)
    assert not trig.should_trigger(3, 10.0, 0.0)  # stopped vehicle: huge TTI
    assert not trig.should_trigger(4, 8.0, 18.0)


@settings(max_examples=50, deadline=None)
@given(d=st.floats(0.1, 30), v=st.floats(0, 20))
def test_trigger_fires_iff_in_band(d, v):
    tti = time_to_interaction(d, v)
    assert InteractionTrigger().should_trigger(0, d, v) == (0.9 <= tti <= 1.1)
