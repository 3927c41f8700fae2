"""Fixed-topology policy/value/magnitude network with manual backprop.

Architecture: four 32-filter 3x3 stride-2 pad-1 convolutions taking the
42x42 observation through 21, 11, 6 and 3 spatial cells (ReLU each), a
flatten to 288, one LSTM layer with 256 units, and three linear heads off
the LSTM output: an 8-way softmax over scanpath directions, a scalar state
value, and a scalar magnitude squashed to [0, nu_max] by a sigmoid.

Everything is plain numpy over a parameter dict, in either float32
(standard mode, used for training and checkpoints) or float64 (wide mode,
used for gradient checking and oracle comparisons). Forward and backward
are pure functions of the parameter snapshot.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

OBS_SIZE = 42
CONV_CHANNELS = 32
FLAT_SIZE = 288
HIDDEN = 256
N_ACTIONS = 8

CHECKPOINT_MAGIC = b"PGAZNET1"
CHECKPOINT_VERSION = 1

PARAM_SPECS = (
    ("conv1_w", (CONV_CHANNELS, 1, 3, 3)),
    ("conv1_b", (CONV_CHANNELS,)),
    ("conv2_w", (CONV_CHANNELS, CONV_CHANNELS, 3, 3)),
    ("conv2_b", (CONV_CHANNELS,)),
    ("conv3_w", (CONV_CHANNELS, CONV_CHANNELS, 3, 3)),
    ("conv3_b", (CONV_CHANNELS,)),
    ("conv4_w", (CONV_CHANNELS, CONV_CHANNELS, 3, 3)),
    ("conv4_b", (CONV_CHANNELS,)),
    ("lstm_wx", (FLAT_SIZE, 4 * HIDDEN)),
    ("lstm_wh", (HIDDEN, 4 * HIDDEN)),
    ("lstm_b", (4 * HIDDEN,)),
    ("pi_w", (HIDDEN, N_ACTIONS)),
    ("pi_b", (N_ACTIONS,)),
    ("v_w", (HIDDEN,)),
    ("v_b", (1,)),
    ("mag_w", (HIDDEN,)),
    ("mag_b", (1,)),
)

_CONV_SIZES = (42, 21, 11, 6, 3)  # spatial sizes through the stack


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


# ---------------------------------------------------------------------------
# Parameters


@dataclass
class NetParams:
    tensors: dict

    def __post_init__(self):
        expected = dict(PARAM_SPECS)
        if set(self.tensors) != set(expected):
            missing = set(expected) - set(self.tensors)
            extra = set(self.tensors) - set(expected)
            raise ValueError(f"bad tensor set: missing={missing}, extra={extra}")
        for name, shape in PARAM_SPECS:
            t = self.tensors[name]
            if t.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"{name}: non-finite values")

    @property
    def dtype(self):
        return self.tensors["conv1_w"].dtype

    def astype(self, dtype) -> "NetParams":
        return NetParams({k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "NetParams":
        return NetParams({k: v.copy() for k, v in self.tensors.items()})


def zero_params(dtype=np.float32) -> NetParams:
    return NetParams({name: np.zeros(shape, dtype=dtype) for name, shape in PARAM_SPECS})


def init_params(seed: int, dtype=np.float32) -> NetParams:
    """Seeded random initialization.

    Convolutions use He-scaled normals; the LSTM uses the usual
    1/sqrt(hidden) uniform with the forget-gate bias at 1. Head weights
    start small so the initial policy is near uniform and the magnitude
    near nu_max/2.
    """
    rng = np.random.default_rng(seed)
    t = {}
    for name, shape in PARAM_SPECS:
        if name.startswith("conv") and name.endswith("_w"):
            fan_in = shape[1] * shape[2] * shape[3]
            t[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        elif name in ("lstm_wx", "lstm_wh"):
            r = 1.0 / math.sqrt(HIDDEN)
            t[name] = rng.uniform(-r, r, size=shape)
        elif name in ("pi_w", "v_w", "mag_w"):
            t[name] = rng.normal(0.0, 0.01, size=shape)
        else:
            t[name] = np.zeros(shape)
    t["lstm_b"][HIDDEN : 2 * HIDDEN] = 1.0  # forget gate bias
    return NetParams({k: v.astype(dtype) for k, v in t.items()})


def zero_grads(dtype) -> dict:
    return {name: np.zeros(shape, dtype=dtype) for name, shape in PARAM_SPECS}


def zero_state(dtype=np.float64):
    """LSTM (hidden, cell) pair, zero-initialized at episode start."""
    return np.zeros(HIDDEN, dtype=dtype), np.zeros(HIDDEN, dtype=dtype)


# ---------------------------------------------------------------------------
# im2col plumbing (precomputed flat gather/scatter indices per conv layer)


def _build_conv_indices():
    tables = []
    for layer in range(4):
        n_in = _CONV_SIZES[layer]
        n_out = _CONV_SIZES[layer + 1]
        c_in = 1 if layer == 0 else CONV_CHANNELS
        base = 2 * np.arange(n_out)
        rr, cc = np.meshgrid(base, base, indexing="ij")
        rr, cc = rr.ravel(), cc.ravel()
        kr, kc = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
        kr, kc = kr.ravel(), kc.ravel()
        rows = rr[:, None] + kr[None, :]  # (P, 9) into padded raster
        cols = cc[:, None] + kc[None, :]
        npad = n_in + 2
        spatial = (rows * npad + cols).ravel()  # (P*9,)
        chan = np.arange(c_in)[:, None] * (npad * npad)
        flat = (chan + spatial[None, :]).ravel()  # (C_in*P*9,)
        tables.append(
            {
                "n_in": n_in,
                "n_out": n_out,
                "c_in": c_in,
                "p": n_out * n_out,
                "flat": flat,
                "pad_len": c_in * npad * npad,
            }
        )
    return tables


_CONV_TABLES = _build_conv_indices()


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def _conv_forward(x, w, b, table):
    c_in, n = table["c_in"], table["n_in"]
    xp = np.zeros((c_in, n + 2, n + 2), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    cols = xp.ravel()[table["flat"]].reshape(c_in, table["p"], 9)
    cols = cols.transpose(1, 0, 2).reshape(table["p"], c_in * 9)
    wr = w.reshape(CONV_CHANNELS, c_in * 9)
    pre = (cols @ wr.T + b).T.reshape(CONV_CHANNELS, table["n_out"], table["n_out"])
    return pre, cols


def _conv_backward(dpre, cols, w, table):
    c_in = table["c_in"]
    dout = dpre.reshape(CONV_CHANNELS, table["p"]).T  # (P, C_out)
    wr = w.reshape(CONV_CHANNELS, c_in * 9)
    dw = (dout.T @ cols).reshape(w.shape)
    db = dout.sum(axis=0)
    dcols = (dout @ wr).reshape(table["p"], c_in, 9).transpose(1, 0, 2)
    dxp = np.bincount(
        table["flat"], weights=dcols.ravel(), minlength=table["pad_len"]
    ).astype(dpre.dtype)
    n = table["n_in"]
    dx = dxp.reshape(c_in, n + 2, n + 2)[:, 1:-1, 1:-1]
    return dx, dw, db


# ---------------------------------------------------------------------------
# Forward


@dataclass
class NetOutput:
    policy: np.ndarray  # (8,) probabilities
    value: float
    magnitude: float  # scanpath magnitude in [0, nu_max], degrees/frame
    state: tuple  # next LSTM (hidden, cell)


def _trunk_forward(params: NetParams, obs: np.ndarray, state, cache_out=None):
    dtype = params.dtype
    t = params.tensors
    x = np.asarray(obs, dtype=dtype).reshape(1, OBS_SIZE, OBS_SIZE)
    conv_caches = []
    for layer in range(4):
        w, b = t[f"conv{layer + 1}_w"], t[f"conv{layer + 1}_b"]
        pre, cols = _conv_forward(x, w, b, _CONV_TABLES[layer])
        x = np.maximum(pre, 0.0)
        conv_caches.append((pre, cols))
    flat = x.reshape(FLAT_SIZE)

    h_prev, c_prev = state
    h_prev = np.asarray(h_prev, dtype=dtype)
    c_prev = np.asarray(c_prev, dtype=dtype)
    z = flat @ t["lstm_wx"] + h_prev @ t["lstm_wh"] + t["lstm_b"]
    i = _sigmoid(z[:HIDDEN])
    f = _sigmoid(z[HIDDEN : 2 * HIDDEN])
    g = np.tanh(z[2 * HIDDEN : 3 * HIDDEN])
    o = _sigmoid(z[3 * HIDDEN :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc

    if cache_out is not None:
        cache_out.append((conv_caches, flat, h_prev, c_prev, i, f, g, o, c, tc, h))
    return h, c


def _heads(params: NetParams, h: np.ndarray, nu_max: float):
    t = params.tensors
    logits = h @ t["pi_w"] + t["pi_b"]
    policy = softmax(logits)
    value = float(h @ t["v_w"] + t["v_b"][0])
    mag_sig = float(_sigmoid(np.array([h @ t["mag_w"] + t["mag_b"][0]]))[0])
    return policy, value, nu_max * mag_sig, mag_sig


def forward(params: NetParams, obs: np.ndarray, state, nu_max: float) -> NetOutput:
    """One step: observation + LSTM state -> policy, value, magnitude, state."""
    h, c = _trunk_forward(params, obs, state)
    policy, value, mag, _ = _heads(params, h, nu_max)
    return NetOutput(policy=policy, value=value, magnitude=mag, state=(h, c))


def sequence_outputs(params: NetParams, obs_seq, nu_max: float, want_caches=False):
    """Run the net over a whole observation sequence from the zero state.

    Returns (policies (T,8), values (T,), mags (T,), mag_sigs (T,), caches).
    """
    dtype = params.dtype
    T = len(obs_seq)
    policies = np.zeros((T, N_ACTIONS), dtype=np.float64)
    values = np.zeros(T, dtype=np.float64)
    mags = np.zeros(T, dtype=np.float64)
    mag_sigs = np.zeros(T, dtype=np.float64)
    caches = [] if want_caches else None
    state = zero_state(dtype)
    for k, obs in enumerate(obs_seq):
        h, c = _trunk_forward(params, obs, state, cache_out=caches)
        policy, value, mag, ms = _heads(params, h, nu_max)
        policies[k] = policy
        values[k] = value
        mags[k] = mag
        mag_sigs[k] = ms
        state = (h, c)
    return policies, values, mags, mag_sigs, caches


def sequence_loss(params: NetParams, obs_seq, loss_spec, nu_max: float) -> float:
    """Scalar objective of `loss_spec` along a frozen tape; used by the
    finite-difference oracle, so it must share no code with `backward`'s
    gradient accumulation."""
    policies, values, mags, _, _ = sequence_outputs(params, obs_seq, nu_max)
    loss, _, _, _ = loss_spec.head_grads(policies, values, mags)
    return loss


# ---------------------------------------------------------------------------
# Backward (BPTT over the full episode)


def backward(params: NetParams, obs_seq, loss_spec, nu_max: float):
    """Analytic gradients of the loss-spec objective over an episode tape.

    Recomputes the forward pass (deterministic, same snapshot), asks the
    loss spec for per-step gradients w.r.t. logits, value and magnitude,
    and backpropagates through heads, LSTM time recurrence and the conv
    stack. Returns (grads, loss).
    """
    dtype = params.dtype
    t = params.tensors
    grads = zero_grads(dtype)
    if len(obs_seq) == 0:
        return grads, 0.0

    policies, values, mags, mag_sigs, caches = sequence_outputs(
        params, obs_seq, nu_max, want_caches=True
    )
    loss, dlogits, dvalues, dmags = loss_spec.head_grads(policies, values, mags)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss: {loss}")

    T = len(obs_seq)
    dh_next = np.zeros(HIDDEN, dtype=dtype)
    dc_next = np.zeros(HIDDEN, dtype=dtype)
    for k in range(T - 1, -1, -1):
        conv_caches, flat, h_prev, c_prev, i, f, g, o, c, tc, h = caches[k]

        dlog = dlogits[k].astype(dtype)
        dval = dtype.type(dvalues[k]) if hasattr(dtype, "type") else dvalues[k]
        dval = np.asarray(dvalues[k], dtype=dtype)
        ms = mag_sigs[k]
        dmagz = np.asarray(dmags[k] * nu_max * ms * (1.0 - ms), dtype=dtype)

        grads["pi_w"] += np.outer(h, dlog)
        grads["pi_b"] += dlog
        grads["v_w"] += h * dval
        grads["v_b"] += dval
        grads["mag_w"] += h * dmagz
        grads["mag_b"] += dmagz

        dh = t["pi_w"] @ dlog + t["v_w"] * dval + t["mag_w"] * dmagz + dh_next

        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        grads["lstm_wx"] += np.outer(flat, dz)
        grads["lstm_wh"] += np.outer(h_prev, dz)
        grads["lstm_b"] += dz
        dh_next = t["lstm_wh"] @ dz
        dflat = t["lstm_wx"] @ dz

        dx = dflat.reshape(CONV_CHANNELS, 3, 3)
        for layer in range(3, -1, -1):
            pre, cols = conv_caches[layer]
            dpre = dx * (pre > 0.0)
            dx, dw, db = _conv_backward(dpre, cols, t[f"conv{layer + 1}_w"], _CONV_TABLES[layer])
            grads[f"conv{layer + 1}_w"] += dw
            grads[f"conv{layer + 1}_b"] += db

    return grads, float(loss)


def finite_difference_grads(
    params: NetParams,
    obs_seq,
    loss_spec,
    nu_max: float,
    samples_per_block: int,
    rng: np.random.Generator,
    step: float = 1e-4,
):
    """Central-difference gradient samples, {name: [(flat_index, grad)]}.

    Independent of `backward`: evaluates the scalar objective twice per
    sampled coordinate.
    """
    out = {}
    for name, shape in PARAM_SPECS:
        n = int(np.prod(shape))
        idx = rng.choice(n, size=min(samples_per_block, n), replace=False)
        samples = []
        for flat in idx:
            saved = params.tensors[name].ravel()[flat]
            params.tensors[name].ravel()[flat] = saved + step
            lp = sequence_loss(params, obs_seq, loss_spec, nu_max)
            params.tensors[name].ravel()[flat] = saved - step
            lm = sequence_loss(params, obs_seq, loss_spec, nu_max)
            params.tensors[name].ravel()[flat] = saved
            samples.append((int(flat), (lp - lm) / (2.0 * step)))
        out[name] = samples
    return out


# ---------------------------------------------------------------------------
# RMSProp


@dataclass
class RmsPropState:
    sq: dict  # running mean of squared gradients per tensor

    @classmethod
    def zeros(cls, dtype=np.float32) -> "RmsPropState":
        return cls(sq={name: np.zeros(shape, dtype=dtype) for name, shape in PARAM_SPECS})


def rmsprop_apply(
    params: NetParams,
    grads: dict,
    state: RmsPropState,
    lr: float,
    decay: float = 0.99,
    eps: float = 0.1,
) -> NetParams:
    """One RMSProp update; returns new parameters, mutates `state` in place.

    Non-finite gradients abort training rather than silently corrupting
    the parameter store.
    """
    new = {}
    for name, _ in PARAM_SPECS:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
        s = state.sq[name]
        s *= decay
        s += (1.0 - decay) * g * g
        new[name] = params.tensors[name] - lr * g / np.sqrt(s + eps)
    return NetParams(new)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, params: NetParams, meta: dict | None = None):
    tensors = [{"name": name, "shape": list(shape)} for name, shape in PARAM_SPECS]
    header = {
        "version": CHECKPOINT_VERSION,
        "dtype": "float32",
        "tensors": tensors,
        "count": int(sum(np.prod(s) for _, s in PARAM_SPECS)),
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, _ in PARAM_SPECS:
            f.write(params.tensors[name].astype("<f4").tobytes(order="C"))


def load_checkpoint(path):
    """Returns (params float32, meta dict)."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint magic in {path}")
        (hlen,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"unreadable checkpoint header in {path}: {e}") from e
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {header.get('version')} in {path}"
            )
        listed = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
        if listed != [(n, tuple(s)) for n, s in PARAM_SPECS]:
            raise CheckpointError(f"checkpoint tensor layout disagrees in {path}")
        tensors = {}
        for name, shape in PARAM_SPECS:
            n = int(np.prod(shape))
            raw = f.read(4 * n)
            if len(raw) != 4 * n:
                raise CheckpointError(f"truncated checkpoint payload in {path}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return NetParams(tensors), header.get("meta", {})
