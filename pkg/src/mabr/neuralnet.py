"""GRU -> FC -> FC -> head networks with hand-written backprop.

All arithmetic is float64 so finite-difference checks are meaningful.  The
GRU uses reset/update gates with the reset gate applied to the recurrent
candidate term::

    r  = sigmoid(x Wx_r + h Wh_r + b_r)
    z  = sigmoid(x Wx_z + h Wh_z + b_z)
    n  = tanh(x Wx_n + r * (h Wh_n) + b_n)
    h' = (1 - z) * n + z * h

Hidden state starts at zero on every forward pass.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARAM_NAMES = ("Wx", "Wh", "bx", "W1", "b1", "W2", "b2", "Wo", "bo")
CKPT_MAGIC = b"MABRCKPT"
CKPT_VERSION = 1


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    n_out: int
    head: str = "softmax"      # or "scalar"
    gru_units: int = 64
    fc1: int = 64
    fc2: int = 32
    seq_len: int = 6

    def __post_init__(self):
        if self.head not in ("softmax", "scalar"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "scalar" and self.n_out != 1:
            raise ValueError("scalar head has exactly one output")
        if min(self.input_dim, self.n_out, self.gru_units, self.fc1, self.fc2, self.seq_len) <= 0:
            raise ValueError("network dimensions must be positive")

    def shapes(self) -> dict[str, tuple]:
        D, H = self.input_dim, self.gru_units
        return {
            "Wx": (D, 3 * H), "Wh": (H, 3 * H), "bx": (3 * H,),
            "W1": (H, self.fc1), "b1": (self.fc1,),
            "W2": (self.fc1, self.fc2), "b2": (self.fc2,),
            "Wo": (self.fc2, self.n_out), "bo": (self.n_out,),
        }

    def fans(self, name: str) -> tuple[int, int]:
        """(fan_in, fan_out) used for the init bound; GRU gate blocks count separately."""
        D, H = self.input_dim, self.gru_units
        return {
            "Wx": (D, H), "Wh": (H, H),
            "W1": (H, self.fc1), "W2": (self.fc1, self.fc2), "Wo": (self.fc2, self.n_out),
        }[name]


@dataclass
class PolicyParameters:
    spec: NetworkSpec
    arrays: dict
    frozen_inputs: frozenset = frozenset()
    seed: int = 0
    stage: str = ""

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(self.spec, {k: v.copy() for k, v in self.arrays.items()},
                                self.frozen_inputs, self.seed, self.stage)

    def with_frozen(self, frozen, zero: bool = False) -> "PolicyParameters":
        """Copy with input rows ``frozen``; ``zero`` also clears those rows of Wx
        so the inputs have no effect until they are unfrozen."""
        p = self.copy()
        p.frozen_inputs = frozenset(int(i) for i in frozen)
        if zero and p.frozen_inputs:
            p.arrays["Wx"][sorted(p.frozen_inputs)] = 0.0
        return p

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[n].ravel() for n in PARAM_NAMES])


def init_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init(spec: NetworkSpec, seed: int, stage: str = "") -> PolicyParameters:
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in spec.shapes().items():
        if name.startswith("b"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.uniform(-1, 1, size=shape) * init_bound(*spec.fans(name))
    return PolicyParameters(spec, arrays, frozenset(), seed, stage)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Trace:
    x: np.ndarray
    hs: list = field(default_factory=list)     # h_{t-1} per step
    gates: list = field(default_factory=list)  # (r, z, n, hw_n) per step
    h: np.ndarray | None = None
    a1: np.ndarray | None = None
    o1: np.ndarray | None = None
    a2: np.ndarray | None = None
    o2: np.ndarray | None = None
    out: np.ndarray | None = None
    single: bool = False


def forward(params: PolicyParameters, obs, h0: np.ndarray | None = None):
    """Run a batch of (K, input_dim) sequences, oldest step first.

    Returns ``(output, trace)``: probabilities (softmax head) or values
    (scalar head, shape (B,)), plus the cache :func:`backward` needs.  A
    single unbatched sequence gives unbatched outputs.
    """
    spec = params.spec
    x = np.asarray(obs, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != spec.seq_len or x.shape[2] != spec.input_dim:
        raise ShapeError(f"expected (B, {spec.seq_len}, {spec.input_dim}) input, got {np.shape(obs)}")
    A = params.arrays
    H = spec.gru_units
    B = x.shape[0]
    xw = x @ A["Wx"] + A["bx"]
    h = np.zeros((B, H)) if h0 is None else np.broadcast_to(h0, (B, H)).astype(float)
    tr = Trace(x=x, single=single)
    Wh = A["Wh"]
    for t in range(spec.seq_len):
        hw = h @ Wh
        xt = xw[:, t]
        r = _sigmoid(xt[:, :H] + hw[:, :H])
        z = _sigmoid(xt[:, H:2 * H] + hw[:, H:2 * H])
        hwn = hw[:, 2 * H:]
        n = np.tanh(xt[:, 2 * H:] + r * hwn)
        tr.hs.append(h)
        tr.gates.append((r, z, n, hwn))
        h = (1.0 - z) * n + z * h
    tr.h = h
    tr.a1 = h @ A["W1"] + A["b1"]
    tr.o1 = np.maximum(tr.a1, 0.0)
    tr.a2 = tr.o1 @ A["W2"] + A["b2"]
    tr.o2 = np.maximum(tr.a2, 0.0)
    tr.out = tr.o2 @ A["Wo"] + A["bo"]
    if spec.head == "softmax":
        result = softmax(tr.out)
    else:
        result = tr.out[:, 0]
    return (result[0] if single else result), tr


def logits_of(trace: Trace) -> np.ndarray:
    return trace.out


def backward(params: PolicyParameters, trace: Trace, dout) -> dict:
    """Gradients of a scalar loss given its gradient at the head.

    ``dout`` is dL/dlogits (softmax head, shape (B, A)) or dL/dvalue
    (scalar head, shape (B,) or (B, 1)).  Frozen input rows of ``Wx``
    receive exactly zero gradient.
    """
    spec = params.spec
    A = params.arrays
    H = spec.gru_units
    dout = np.asarray(dout, dtype=float)
    B = trace.x.shape[0]
    dout = dout.reshape(B, spec.n_out)
    g = {}
    g["Wo"] = trace.o2.T @ dout
    g["bo"] = dout.sum(axis=0)
    da2 = (dout @ A["Wo"].T) * (trace.a2 > 0)
    g["W2"] = trace.o1.T @ da2
    g["b2"] = da2.sum(axis=0)
    da1 = (da2 @ A["W2"].T) * (trace.a1 > 0)
    g["W1"] = trace.h.T @ da1
    g["b1"] = da1.sum(axis=0)
    dh = da1 @ A["W1"].T

    Wh = A["Wh"]
    dWh = np.zeros_like(Wh)
    dxw = np.empty((B, spec.seq_len, 3 * H))
    dhw = np.empty((B, 3 * H))
    for t in reversed(range(spec.seq_len)):
        r, z, n, hwn = trace.gates[t]
        h_prev = trace.hs[t]
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dan = dn * (1.0 - n * n)
        dar = dan * hwn * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dxw[:, t, :H] = dar
        dxw[:, t, H:2 * H] = daz
        dxw[:, t, 2 * H:] = dan
        dhw[:, :H] = dar
        dhw[:, H:2 * H] = daz
        dhw[:, 2 * H:] = dan * r
        dWh += h_prev.T @ dhw
        dh = dh * z + dhw @ Wh.T
    g["Wh"] = dWh
    flat_x = trace.x.reshape(-1, spec.input_dim)
    g["Wx"] = flat_x.T @ dxw.reshape(-1, 3 * H)
    g["bx"] = dxw.sum(axis=(0, 1))
    if params.frozen_inputs:
        g["Wx"][sorted(params.frozen_inputs)] = 0.0
    return g


def zero_grads(params: PolicyParameters) -> dict:
    return {k: np.zeros_like(v) for k, v in params.arrays.items()}


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grads(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def sgd_step(params: PolicyParameters, grads: dict, learning_rate: float, opt: Adam) -> PolicyParameters:
    """Adam update in place; frozen input rows of ``Wx`` never move."""
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise FloatingPointError(f"non-finite gradient in {', '.join(sorted(bad))} at step {opt.t + 1}")
    opt.t += 1
    c1 = 1.0 - opt.beta1 ** opt.t
    c2 = 1.0 - opt.beta2 ** opt.t
    frozen = sorted(params.frozen_inputs)
    for name, g in grads.items():
        p = params.arrays[name]
        m = opt.m.setdefault(name, np.zeros_like(p))
        v = opt.v.setdefault(name, np.zeros_like(p))
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        step = learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.eps)
        if name == "Wx" and frozen:
            step[frozen] = 0.0
        p -= step
    return params


def save_checkpoint(path, networks: dict[str, PolicyParameters], meta: dict | None = None) -> None:
    """Binary checkpoint: magic, version, JSON layout header, raw float64 arrays."""
    layout = {}
    blobs = []
    for key in sorted(networks):
        p = networks[key]
        layout[key] = {
            "spec": {f: getattr(p.spec, f) for f in p.spec.__dataclass_fields__},
            "frozen_inputs": sorted(p.frozen_inputs),
            "seed": p.seed,
            "stage": p.stage,
            "arrays": [[n, list(p.arrays[n].shape)] for n in PARAM_NAMES],
        }
        blobs.extend(np.ascontiguousarray(p.arrays[n], dtype="<f8").tobytes() for n in PARAM_NAMES)
    header = json.dumps({"version": CKPT_VERSION, "networks": layout, "meta": meta or {}},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IQ", CKPT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> tuple[dict[str, PolicyParameters], dict]:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + hlen])
    offset = 20 + hlen
    networks = {}
    for key in sorted(header["networks"]):
        entry = header["networks"][key]
        spec = NetworkSpec(**entry["spec"])
        arrays = {}
        for name, shape in entry["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
            offset += 8 * count
        networks[key] = PolicyParameters(spec, arrays, frozenset(entry["frozen_inputs"]),
                                         entry["seed"], entry["stage"])
    return networks, header["meta"]
