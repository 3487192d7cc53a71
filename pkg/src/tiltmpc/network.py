"""Residual-acceleration network: a 16-32-3 MLP with exact GELU.

Forward pass: out = output_scale * (W2 @ gelu(W1 @ xn + b1) + b2) with
xn = (xi - input_shift) / input_scale.  GELU is the erf form x * Phi(x);
its derivative is Phi(x) + x * phi(x).  Backprop, AdamW and the binary
checkpoint format are hand-rolled here so the whole training path is a
few hundred lines of plain numpy.

Checkpoint layout (little endian):
    bytes 0:4   magic b"TMPC"
    bytes 4:8   format version, uint32 (currently 1)
    then float64 arrays, row major, in order:
    input_shift(16), input_scale(16), W1(32x16), b1(32), W2(3x32), b2(3),
    output_scale(3)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import CheckpointFormatError, ConfigError

N_IN = 16
N_HIDDEN = 32
N_OUT = 3

CHECKPOINT_MAGIC = b"TMPC"
CHECKPOINT_VERSION = 1
_ARRAY_SHAPES = (
    ("input_shift", (N_IN,)),
    ("input_scale", (N_IN,)),
    ("w1", (N_HIDDEN, N_IN)),
    ("b1", (N_HIDDEN,)),
    ("w2", (N_OUT, N_HIDDEN)),
    ("b2", (N_OUT,)),
    ("output_scale", (N_OUT,)),
)


@dataclass
class NetworkInput:
    """The 16 model quantities the residual is conditioned on."""

    z: float
    v: np.ndarray
    q: np.ndarray
    alpha_s: np.ndarray
    f: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.z], self.v, self.q, self.alpha_s, self.f]).astype(float)

    @staticmethod
    def from_vector(xi: np.ndarray) -> "NetworkInput":
        xi = np.asarray(xi, dtype=float)
        return NetworkInput(float(xi[0]), xi[1:4].copy(), xi[4:8].copy(),
                            xi[8:12].copy(), xi[12:16].copy())


def xi_from_state_input(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Assemble xi = [z, v, q, alpha_s, f] from raw state/input vectors, batched."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.concatenate(
        [x[..., 2:3], x[..., 3:6], x[..., 6:10], x[..., 13:17], u[..., 0:4]], axis=-1
    )


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    input_shift: np.ndarray = field(default_factory=lambda: np.zeros(N_IN))
    input_scale: np.ndarray = field(default_factory=lambda: np.ones(N_IN))
    output_scale: np.ndarray = field(default_factory=lambda: np.ones(N_OUT))

    def __post_init__(self):
        for name, shape in _ARRAY_SHAPES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ConfigError(f"{name} must have shape {shape}, got {arr.shape}")
            setattr(self, name, arr)
        if np.any(self.input_scale <= 0) or np.any(self.output_scale <= 0):
            raise ConfigError("scales must be positive")

    def copy(self) -> "MlpParams":
        return MlpParams(*(getattr(self, name).copy() for name, _ in _ARRAY_SHAPES
                           if name in ("w1", "b1", "w2", "b2")),
                         input_shift=self.input_shift.copy(),
                         input_scale=self.input_scale.copy(),
                         output_scale=self.output_scale.copy())


def init_params(seed: int = 0) -> MlpParams:
    """Glorot-uniform weights, zero biases, identity normalization."""
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return MlpParams(
        w1=glorot(N_HIDDEN, N_IN),
        b1=np.zeros(N_HIDDEN),
        w2=glorot(N_OUT, N_HIDDEN),
        b2=np.zeros(N_OUT),
    )


def zero_params() -> MlpParams:
    """All-zero network: predicts exactly [0, 0, 0] for every input."""
    return MlpParams(
        w1=np.zeros((N_HIDDEN, N_IN)),
        b1=np.zeros(N_HIDDEN),
        w2=np.zeros((N_OUT, N_HIDDEN)),
        b2=np.zeros(N_OUT),
    )


def gelu(x: np.ndarray) -> np.ndarray:
    return x * ndtr(x)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return ndtr(x) + x * pdf


def forward(net: MlpParams, xi: np.ndarray) -> np.ndarray:
    """Residual acceleration prediction; broadcasts over leading axes of xi."""
    xi = np.asarray(xi, dtype=float)
    xn = (xi - net.input_shift) / net.input_scale
    z1 = xn @ net.w1.T + net.b1
    h = gelu(z1)
    y = h @ net.w2.T + net.b2
    return y * net.output_scale


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def backward(net: MlpParams, xi: np.ndarray, grad_out: np.ndarray) -> MlpGrads:
    """Parameter gradients for the loss whose d(loss)/d(prediction) is grad_out.

    Batched over leading axes; gradients are summed over the batch.  The
    prediction is the denormalized output, so grad_out is chained through
    output_scale here.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    grad_out = np.atleast_2d(np.asarray(grad_out, dtype=float))
    xn = (xi - net.input_shift) / net.input_scale
    z1 = xn @ net.w1.T + net.b1
    h = gelu(z1)
    gy = grad_out * net.output_scale
    gw2 = gy.T @ h
    gb2 = gy.sum(axis=0)
    gz1 = (gy @ net.w2) * gelu_grad(z1)
    gw1 = gz1.T @ xn
    gb1 = gz1.sum(axis=0)
    return MlpGrads(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


def lr_schedule(epoch: int) -> float:
    """Exponential decay 1e-3 * 0.99^epoch, floored at 1e-5."""
    return max(1e-3 * 0.99**epoch, 1e-5)


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-3
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            shape = dict(_ARRAY_SHAPES)[name]
            self.m.setdefault(name, np.zeros(shape))
            self.v.setdefault(name, np.zeros(shape))


# weight decay is decoupled and applied to weight matrices only
_DECAYED = ("w1", "w2")


def adamw_step(net: MlpParams, grads: MlpGrads, opt: AdamWState, lr: float) -> None:
    """One decoupled-weight-decay Adam update, in place on net and opt."""
    opt.step_count += 1
    t = opt.step_count
    bc1 = 1.0 - opt.beta1**t
    bc2 = 1.0 - opt.beta2**t
    for name in ("w1", "b1", "w2", "b2"):
        g = getattr(grads, name)
        m = opt.m[name]
        v = opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
        p = getattr(net, name)
        p -= lr * update
        if name in _DECAYED:
            p -= lr * opt.weight_decay * p


def save_checkpoint(net: MlpParams, path) -> None:
    blob = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
    for name, _ in _ARRAY_SHAPES:
        blob += np.ascontiguousarray(getattr(net, name), dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> MlpParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic; not a residual-network checkpoint")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    expected = 8 + 8 * sum(int(np.prod(s)) for _, s in _ARRAY_SHAPES)
    if len(blob) != expected:
        raise CheckpointFormatError(f"expected {expected} bytes, got {len(blob)}")
    offset = 8
    fields = {}
    for name, shape in _ARRAY_SHAPES:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        fields[name] = arr.astype(float)
        offset += 8 * count
    return MlpParams(**fields)
