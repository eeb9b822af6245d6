"""Stacked GRU classifier with hand-written backpropagation through time.

Five GRU layers are stacked so that visual streams enter at the bottom and
dynamic streams at the top:

    layer 1: appearance
    layer 2: [h1 | surroundings]
    layer 3: [h2 | pose]
    layer 4: [h3 | displacement]
    layer 5: [h4 | speed]

The last hidden state of layer 5 feeds an affine + sigmoid head. All
arrays are float64 and batched as (batch, time, features).
"""
from dataclasses import dataclass, field

import numpy as np

STREAMS = ("appearance", "surroundings", "pose", "displacement", "speed")
GATE_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh")


def sigmoid(x):
    # tanh form avoids overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


# ----------------------------------------------------------------- cell

def init_gru_params(input_dim, hidden, rng=None, scale=None):
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; zeros when ``rng`` is None."""
    shapes = {
        "Wz": (hidden, input_dim), "Uz": (hidden, hidden), "bz": (hidden,),
        "Wr": (hidden, input_dim), "Ur": (hidden, hidden), "br": (hidden,),
        "Wh": (hidden, input_dim), "Uh": (hidden, hidden), "bh": (hidden,),
    }
    if rng is None:
        return {k: np.zeros(s) for k, s in shapes.items()}
    bound = 1.0 / np.sqrt(hidden) if scale is None else scale
    return {k: rng.uniform(-bound, bound, size=s) for k, s in shapes.items()}


def _check_cell_shapes(x, h, p):
    hidden, input_dim = p["Wz"].shape
    if x.shape[-1] != input_dim or h.shape[-1] != hidden:
        raise ValueError(
            f"GRU shape mismatch: x {x.shape[-1]} vs {input_dim}, h {h.shape[-1]} vs {hidden}")


def gru_cell_forward(x, h, p):
    """One GRU step. ``x`` (..., D), ``h`` (..., H). Returns ``(h_new, cache)``.

    z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
    c = tanh(Wh x + Uh (r * h) + bh), h' = (1 - z) * h + z * c
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    _check_cell_shapes(x, h, p)
    z = sigmoid(x @ p["Wz"].T + h @ p["Uz"].T + p["bz"])
    r = sigmoid(x @ p["Wr"].T + h @ p["Ur"].T + p["br"])
    rh = r * h
    c = np.tanh(x @ p["Wh"].T + rh @ p["Uh"].T + p["bh"])
    h_new = (1.0 - z) * h + z * c
    return h_new, (x, h, z, r, rh, c)


def gru_cell_backward(dh_new, cache, p, grads):
    """Accumulate parameter gradients into ``grads``; return ``(dx, dh)``."""
    x, h, z, r, rh, c = cache
    dz = dh_new * (c - h)
    dc = dh_new * z
    dh = dh_new * (1.0 - z)
    dac = dc * (1.0 - c * c)
    grads["Wh"] += dac.T @ x
    grads["Uh"] += dac.T @ rh
    grads["bh"] += dac.sum(axis=0)
    drh = dac @ p["Uh"]
    dr = drh * h
    dh += drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    grads["Wz"] += daz.T @ x
    grads["Uz"] += daz.T @ h
    grads["bz"] += daz.sum(axis=0)
    grads["Wr"] += dar.T @ x
    grads["Ur"] += dar.T @ h
    grads["br"] += dar.sum(axis=0)
    dx = daz @ p["Wz"] + dar @ p["Wr"] + dac @ p["Wh"]
    dh += daz @ p["Uz"] + dar @ p["Ur"]
    return dx, dh


def gru_sequence_forward(xs, p, h0=None):
    """Run a GRU over ``xs`` (B, T, D). Returns hidden states (B, T, H) and a cache.

    Same recurrence as :func:`gru_cell_forward`, with the input projections
    of all time steps computed in one matrix product. Internally time-major.
    """
    xs = np.asarray(xs, dtype=float)
    B, T, D = xs.shape
    H = p["Uz"].shape[0]
    _check_cell_shapes(xs[:, 0] if T else np.zeros((B, D)), np.zeros((B, H)), p)
    W = np.concatenate([p["Wz"], p["Wr"], p["Wh"]])
    b = np.concatenate([p["bz"], p["br"], p["bh"]])
    UzrT = np.ascontiguousarray(np.concatenate([p["Uz"], p["Ur"]]).T)
    UhT = np.ascontiguousarray(p["Uh"].T)
    xt = np.ascontiguousarray(xs.transpose(1, 0, 2))
    xw = xt @ W.T + b
    h = np.zeros((B, H)) if h0 is None else np.array(h0, dtype=float)
    hs = np.empty((T + 1, B, H))
    hs[0] = h
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    for t in range(T):
        pre = xw[t, :, : 2 * H] + h @ UzrT
        zr = sigmoid(pre)
        z, r = zr[:, :H], zr[:, H:]
        c = np.tanh(xw[t, :, 2 * H :] + (r * h) @ UhT)
        zs[t], rs[t], cs[t] = z, r, c
        h = h + z * (c - h)
        hs[t + 1] = h
    return hs[1:].transpose(1, 0, 2), (xt, hs, zs, rs, cs)


def gru_sequence_backward(dhs, cache, p, grads):
    """BPTT given dL/dh_t for every step (B, T, H). Returns dL/dx (B, T, D)."""
    xt, hs, zs, rs, cs = cache
    B, T, H = dhs.shape
    D = xt.shape[2]
    dht = np.ascontiguousarray(dhs.transpose(1, 0, 2))
    Uzr = np.concatenate([p["Uz"], p["Ur"]])
    Uh = p["Uh"]
    da = np.empty((T, B, 3 * H))
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dhn = dht[t] + dh_next
        h, z, r, c = hs[t], zs[t], rs[t], cs[t]
        dac = dhn * z * (1.0 - c * c)
        drh = dac @ Uh
        da[t, :, :H] = dhn * (c - h) * z * (1.0 - z)
        da[t, :, H : 2 * H] = drh * h * r * (1.0 - r)
        da[t, :, 2 * H :] = dac
        dh_next = dhn * (1.0 - z) + drh * r + da[t, :, : 2 * H] @ Uzr
    flat_da = da.reshape(T * B, 3 * H)
    hprev = hs[:-1].reshape(T * B, H)
    dW = flat_da.T @ xt.reshape(T * B, D)
    db = flat_da.sum(axis=0)
    dUzr = flat_da[:, : 2 * H].T @ hprev
    dUh = flat_da[:, 2 * H :].T @ (rs.reshape(T * B, H) * hprev)
    grads["Wz"] += dW[:H]
    grads["Wr"] += dW[H : 2 * H]
    grads["Wh"] += dW[2 * H :]
    grads["bz"] += db[:H]
    grads["br"] += db[H : 2 * H]
    grads["bh"] += db[2 * H :]
    grads["Uz"] += dUzr[:H]
    grads["Ur"] += dUzr[H:]
    grads["Uh"] += dUh
    W = np.concatenate([p["Wz"], p["Wr"], p["Wh"]])
    return (da @ W).transpose(1, 0, 2)


# ---------------------------------------------------------------- model

@dataclass
class StackedGruModel:
    stream_dims: dict
    hidden: int
    layers: list  # five GRU parameter dicts, bottom to top
    head_w: np.ndarray
    head_b: np.ndarray
    norm_mean: dict = field(default_factory=dict)
    norm_std: dict = field(default_factory=dict)

    @classmethod
    def create(cls, stream_dims=None, hidden=32, seed=None, zero=False):
        dims = {"appearance": 64, "surroundings": 64, "pose": 36, "displacement": 4, "speed": 1}
        if stream_dims:
            dims.update(stream_dims)
        rng = None if zero else np.random.default_rng(seed)
        layers = []
        for i, s in enumerate(STREAMS):
            in_dim = dims[s] + (hidden if i else 0)
            layers.append(init_gru_params(in_dim, hidden, rng))
        if zero:
            head_w = np.zeros(hidden)
        else:
            head_w = rng.uniform(-1 / np.sqrt(hidden), 1 / np.sqrt(hidden), size=hidden)
        return cls(
            dims, hidden, layers, head_w, np.zeros(1),
            {s: np.zeros(dims[s]) for s in STREAMS},
            {s: np.ones(dims[s]) for s in STREAMS},
        )

    # parameters as an ordered name -> array mapping (views, not copies)
    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k in GATE_NAMES:
                out[f"layer{i + 1}.{k}"] = layer[k]
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def buffers(self):
        out = {}
        for s in STREAMS:
            out[f"norm.{s}.mean"] = self.norm_mean[s]
            out[f"norm.{s}.std"] = self.norm_std[s]
        return out

    def copy(self):
        return StackedGruModel(
            dict(self.stream_dims), self.hidden,
            [{k: v.copy() for k, v in layer.items()} for layer in self.layers],
            self.head_w.copy(), self.head_b.copy(),
            {k: v.copy() for k, v in self.norm_mean.items()},
            {k: v.copy() for k, v in self.norm_std.items()},
        )

    def fit_normalization(self, batch):
        for s in STREAMS:
            flat = batch[s].reshape(-1, batch[s].shape[-1])
            self.norm_mean[s] = flat.mean(axis=0)
            std = flat.std(axis=0)
            self.norm_std[s] = np.where(std > 1e-8, std, 1.0)


def stack_windows(windows):
    """List of ObservationWindow -> dict of (B, T, D) arrays."""
    if not windows:
        raise ValueError("no windows")
    lengths = {w.length for w in windows}
    if len(lengths) != 1:
        raise ValueError(f"windows differ in length: {sorted(lengths)}")
    return {s: np.stack([np.asarray(getattr(w, s), dtype=float) for w in windows]) for s in STREAMS}


def _check_batch(model, batch):
    T = None
    for s in STREAMS:
        if s not in batch:
            raise ValueError(f"window is missing stream {s!r}")
        arr = batch[s]
        if arr.ndim != 3 or arr.shape[-1] != model.stream_dims[s]:
            raise ValueError(f"stream {s!r} has shape {arr.shape}, expected (B, T, {model.stream_dims[s]})")
        if T is None:
            T = arr.shape[1]
        elif arr.shape[1] != T:
            raise ValueError("streams differ in length")
    if not T:
        raise ValueError("empty window")


def forward(model, batch, keep_cache=False):
    """Probabilities (B,) for a stacked batch; optionally the caches for backward."""
    _check_batch(model, batch)
    below = None
    caches = []
    for i, s in enumerate(STREAMS):
        inp = (batch[s] - model.norm_mean[s]) / model.norm_std[s]
        if below is not None:
            inp = np.concatenate([below, inp], axis=2)
        hs, cache = gru_sequence_forward(inp, model.layers[i])
        caches.append(cache)
        below = hs
    last = below[:, -1]
    logits = last @ model.head_w + model.head_b[0]
    probs = sigmoid(logits)
    if keep_cache:
        return probs, (caches, last, below.shape)
    return probs


def stacked_forward(model, window):
    """Crossing probability for one observation window."""
    batch = {s: np.asarray(getattr(window, s), dtype=float)[None] for s in STREAMS}
    return float(forward(model, batch)[0])


def bce_loss(probs, labels, eps=1e-12):
    y = np.asarray(labels, dtype=float)
    p = np.clip(probs, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def loss_and_grads(model, batch, labels):
    """Mean binary cross-entropy and its gradient for every parameter."""
    y = np.asarray(labels, dtype=float)
    probs, (caches, last, shape) = forward(model, batch, keep_cache=True)
    loss = bce_loss(probs, y)
    B, T, H = shape
    dlogits = (probs - y) / B
    grads = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    grads["head.w"] += last.T @ dlogits
    grads["head.b"] += np.array([dlogits.sum()])
    dhs = np.zeros((B, T, H))
    dhs[:, -1] = np.outer(dlogits, model.head_w)
    for i in range(len(STREAMS) - 1, -1, -1):
        layer_grads = {k: grads[f"layer{i + 1}.{k}"] for k in GATE_NAMES}
        dxs = gru_sequence_backward(dhs, caches[i], model.layers[i], layer_grads)
        if i:
            dhs = dxs[:, :, :H]
    return loss, grads
