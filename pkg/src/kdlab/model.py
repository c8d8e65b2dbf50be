"""Small fully-connected networks with exact derivatives.

Parameters are stored flat, layer-major, weights-then-bias, with each
weight matrix flattened row-major in shape (fan_out, fan_in). NTK code
and checkpoint files rely on this single layout.

The ReLU derivative at exactly-zero preactivation is 0 (subgradient
choice); NTK entries depend on this convention.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, FormatError, InvalidSpec, IoError

_MAGIC = b"KDCL"
_VERSION = 1
_ACTIVATIONS = ("relu", "tanh")
_INITS = ("he_normal", "small_uniform")


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "relu"
    init: str = "he_normal"
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise InvalidSpec("need at least 2 positive layer widths")
        if self.activation not in _ACTIVATIONS:
            raise InvalidSpec(f"unknown activation {self.activation!r}")
        if self.init not in _INITS:
            raise InvalidSpec(f"unknown init {self.init!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_params(self) -> int:
        ws = self.layer_widths
        return sum((ws[i] + 1) * ws[i + 1] for i in range(len(ws) - 1))


@dataclass(frozen=True)
class Checkpoint:
    spec: MlpSpec
    params: np.ndarray  # flat float64, length spec.num_params
    step_index: int = 0
    epoch_index: int = 0

    def __post_init__(self):
        theta = np.asarray(self.params, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.spec.num_params:
            raise DimensionMismatch(
                f"params length {theta.shape[0]} != expected {self.spec.num_params}"
            )
        theta.flags.writeable = False
        object.__setattr__(self, "params", theta)

    def with_params(self, params: np.ndarray, step_index: int | None = None,
                    epoch_index: int | None = None) -> "Checkpoint":
        return Checkpoint(
            spec=self.spec,
            params=params,
            step_index=self.step_index if step_index is None else step_index,
            epoch_index=self.epoch_index if epoch_index is None else epoch_index,
        )


def split_params(spec: MlpSpec, theta: np.ndarray):
    """Yield (W, b) views per layer from the flat parameter vector."""
    ws = spec.layer_widths
    out = []
    offset = 0
    for i in range(len(ws) - 1):
        fan_in, fan_out = ws[i], ws[i + 1]
        w = theta[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = theta[offset : offset + fan_out]
        offset += fan_out
        out.append((w, b))
    return out


def init(spec: MlpSpec) -> Checkpoint:
    """Deterministic initialization; biases are zero."""
    rng = np.random.default_rng(spec.seed)
    ws = spec.layer_widths
    parts = []
    for i in range(len(ws) - 1):
        fan_in, fan_out = ws[i], ws[i + 1]
        if spec.init == "he_normal":
            w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        else:
            w = rng.uniform(-0.05, 0.05, size=(fan_out, fan_in))
        parts.append(w.reshape(-1))
        parts.append(np.zeros(fan_out))
    return Checkpoint(spec=spec, params=np.concatenate(parts))


def _act(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_deriv(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return (z > 0.0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def _forward_cache(c: Checkpoint, X: np.ndarray):
    """Batch forward pass keeping activations and preactivations."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != c.spec.input_dim:
        raise DimensionMismatch(
            f"inputs of shape {X.shape} incompatible with input width "
            f"{c.spec.input_dim}"
        )
    layers = split_params(c.spec, c.params)
    acts = [X]
    pre = []
    a = X
    for li, (w, b) in enumerate(layers):
        z = a @ w.T + b
        pre.append(z)
        a = z if li == len(layers) - 1 else _act(c.spec, z)
        acts.append(a)
    return acts, pre


def forward_batch(c: Checkpoint, X: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs, shape (b, d)."""
    acts, _ = _forward_cache(c, X)
    return acts[-1]


def forward(c: Checkpoint, x: np.ndarray) -> np.ndarray:
    """Logits for a single input vector, shape (d,)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return forward_batch(c, x[None, :])[0]


def vjp_batch(c: Checkpoint, X: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """sum_i J(x_i)^T v_i for per-example cotangents v of shape (b, d)."""
    acts, pre = _forward_cache(c, X)
    v = np.asarray(cotangent, dtype=np.float64)
    if v.shape != acts[-1].shape:
        raise DimensionMismatch(
            f"cotangent shape {v.shape} != logits shape {acts[-1].shape}"
        )
    layers = split_params(c.spec, c.params)
    grads = [None] * len(layers)
    delta = v
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        gw = delta.T @ acts[li]
        gb = delta.sum(axis=0)
        grads[li] = (gw, gb)
        if li > 0:
            delta = (delta @ w) * _act_deriv(c.spec, pre[li - 1])
    return np.concatenate([np.concatenate([gw.reshape(-1), gb]) for gw, gb in grads])


def jvp_batch(c: Checkpoint, X: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """J(x_i) u for all i, shape (b, d), for a flat parameter tangent u."""
    acts, pre = _forward_cache(c, X)
    u = np.asarray(tangent, dtype=np.float64).reshape(-1)
    if u.shape[0] != c.spec.num_params:
        raise DimensionMismatch("tangent length != parameter count")
    layers = split_params(c.spec, c.params)
    dparts = split_params(c.spec, u)
    t = np.zeros_like(acts[0])
    for li, ((w, _), (dw, db)) in enumerate(zip(layers, dparts)):
        t = t @ w.T + acts[li] @ dw.T + db
        if li < len(layers) - 1:
            t = t * _act_deriv(c.spec, pre[li])
    return t


def jacobian_batch(c: Checkpoint, X: np.ndarray) -> np.ndarray:
    """Per-example Jacobians, shape (b, d, P).

    Rows ordered by output index, columns by the flat parameter layout.
    """
    acts, pre = _forward_cache(c, X)
    layers = split_params(c.spec, c.params)
    b = acts[0].shape[0]
    d = c.spec.output_dim
    # delta[b, k, o]: gradient of output k w.r.t. preactivation o of the
    # current layer; starts as the identity on the output layer.
    delta = np.broadcast_to(np.eye(d), (b, d, d)).copy()
    blocks = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        gw = np.einsum("bko,bi->bkoi", delta, acts[li])
        gb = delta
        blocks[li] = np.concatenate(
            [gw.reshape(b, d, -1), gb.reshape(b, d, -1)], axis=2
        )
        if li > 0:
            delta = np.einsum("bko,oi->bki", delta, w)
            delta = delta * _act_deriv(c.spec, pre[li - 1])[:, None, :]
    return np.concatenate(blocks, axis=2)


def jacobian(c: Checkpoint, x: np.ndarray) -> np.ndarray:
    """Exact d x P Jacobian of the logits at a single input."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return jacobian_batch(c, x[None, :])[0]


def loss_grad(c: Checkpoint, batch_inputs: np.ndarray, kind,
              teacher_logits: np.ndarray | None = None,
              hard_targets: np.ndarray | None = None) -> np.ndarray:
    """Exact flat gradient of the batch-mean loss."""
    from .losses import loss_logit_grad

    logits = forward_batch(c, batch_inputs)
    dlogits = loss_logit_grad(kind, logits, teacher_logits, hard_targets)
    return vjp_batch(c, batch_inputs, dlogits)


def save(c: Checkpoint, path: str) -> None:
    """Write the binary checkpoint format (atomic temp + rename)."""
    spec = c.spec
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<H", _VERSION)
    blob += struct.pack("<I", len(spec.layer_widths))
    blob += struct.pack(f"<{len(spec.layer_widths)}I", *spec.layer_widths)
    blob += struct.pack("<B", _ACTIVATIONS.index(spec.activation))
    blob += struct.pack("<Q", spec.seed & 0xFFFFFFFFFFFFFFFF)
    blob += struct.pack("<Q", c.params.shape[0])
    blob += c.params.astype("<f8").tobytes()
    try:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load(path: str) -> Checkpoint:
    """Read a checkpoint written by save()."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    view = memoryview(blob)
    try:
        if bytes(view[:4]) != _MAGIC:
            raise FormatError("bad magic bytes")
        (version,) = struct.unpack_from("<H", view, 4)
        if version != _VERSION:
            raise FormatError(f"expected format version {_VERSION}, found {version}")
        (nw,) = struct.unpack_from("<I", view, 6)
        widths = struct.unpack_from(f"<{nw}I", view, 10)
        off = 10 + 4 * nw
        (act_code,) = struct.unpack_from("<B", view, off)
        (seed,) = struct.unpack_from("<Q", view, off + 1)
        (num_params,) = struct.unpack_from("<Q", view, off + 9)
        start = off + 17
        end = start + 8 * num_params
        if act_code >= len(_ACTIVATIONS):
            raise FormatError(f"unknown activation code {act_code}")
        if end != len(blob):
            raise FormatError("file length does not match parameter count")
        params = np.frombuffer(blob, dtype="<f8", count=num_params, offset=start)
    except struct.error as exc:
        raise FormatError(f"truncated file: {exc}") from exc
    spec = MlpSpec(
        layer_widths=tuple(int(w) for w in widths),
        activation=_ACTIVATIONS[act_code],
        seed=int(seed),
    )
    return Checkpoint(spec=spec, params=params.copy())
