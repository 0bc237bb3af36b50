"""
Bidirectional LSTM stacks with exact gradients.

A :class:`BlstmStack` maps a T x D sequence through several bidirectional
LSTM layers and a per-frame linear output head, either a 3-way softmax
(beat / downbeat / non-beat) or an element-wise logistic (separation
masks). All arithmetic is float64.

Gate blocks are ordered (input, forget, cell, output) throughout.

"""

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError, NumericError
from .sequences import DOWNBEAT, BEAT, NONBEAT, ActivationMatrix

log = logging.getLogger(__name__)

CLASS_WEIGHTS = (67.0, 200.0, 1.0)
PROB_FLOOR = 1e-12
INIT_SCALE = 0.1
FORMAT_VERSION = 1

__all__ = [
    "BlstmStack", "Forward", "lstm_cell_forward", "blstm_forward",
    "softmax", "sigmoid", "weighted_cross_entropy", "cross_entropy_grad",
    "backward", "labels_from_annotations", "save_stack", "load_stack",
    "CLASS_WEIGHTS",
]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def lstm_cell_forward(x, h, c, params):
    """
    Single LSTM step.

    Parameters
    ----------
    x, h, c : numpy arrays
        Input, previous hidden and previous cell vectors.
    params : dict
        ``W`` (4H x D), ``U`` (4H x H) and ``b`` (4H,).

    Returns
    -------
    (h', c') : tuple of numpy arrays

    """
    x, h, c = (np.asarray(v, dtype=np.float64) for v in (x, h, c))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("non-finite input to lstm cell")
    W, U, b = params["W"], params["U"], params["b"]
    H = U.shape[1]
    if W.shape[1] != x.size or h.size != H or c.size != H:
        raise ConfigError("lstm cell dimensions do not match parameters")
    z = W @ x + U @ h + b
    i, f, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), sigmoid(z[3 * H:])
    g = np.tanh(z[2 * H:3 * H])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


@dataclass
class Forward:
    """Cached forward pass; `output` and `last_hidden` are frame-major."""

    inputs: list
    layers: list
    logits: np.ndarray
    output: np.ndarray
    last_hidden: np.ndarray


class BlstmStack:
    """
    Stack of bidirectional LSTM layers with a per-frame output head.

    Parameters
    ----------
    input_dim : int
        Input feature dimension.
    hidden_dims : list of int
        Hidden units per direction for each layer.
    output_dim : int
        Width of the output head.
    output_kind : {'softmax', 'sigmoid'}
        Head non-linearity.
    seed : int or numpy Generator, optional
        Initialisation randomness; weights are uniform in [-0.1, 0.1].

    """

    def __init__(self, input_dim, hidden_dims, output_dim, output_kind="softmax",
                 seed=0, params=None):
        if output_kind not in ("softmax", "sigmoid"):
            raise ConfigError(f"unknown output kind {output_kind!r}")
        self.input_dim = int(input_dim)
        self.hidden_dims = [int(h) for h in hidden_dims]
        self.output_dim = int(output_dim)
        self.output_kind = output_kind
        self.seed = seed if isinstance(seed, (int, np.integer)) else None
        if not self.hidden_dims or min(self.hidden_dims) <= 0:
            raise ConfigError("need at least one layer with positive width")
        if params is None:
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            params = {name: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
                      for name, shape in self.shapes()}
        self.params = params
        self._check()

    def shapes(self):
        """Ordered ``(name, shape)`` of every parameter tensor."""
        out = []
        in_dim = self.input_dim
        for n, H in enumerate(self.hidden_dims):
            for d in ("fw", "bw"):
                out += [(f"l{n}.{d}.W", (4 * H, in_dim)),
                        (f"l{n}.{d}.U", (4 * H, H)),
                        (f"l{n}.{d}.b", (4 * H,))]
            in_dim = 2 * H
        out += [("out.W", (self.output_dim, in_dim)), ("out.b", (self.output_dim,))]
        return out

    def _check(self):
        for name, shape in self.shapes():
            p = self.params.get(name)
            if p is None or p.shape != shape:
                raise ConfigError(f"parameter {name} missing or mis-shaped")

    @property
    def num_params(self):
        return sum(int(np.prod(s)) for _, s in self.shapes())

    def copy(self):
        return BlstmStack(self.input_dim, self.hidden_dims, self.output_dim,
                          self.output_kind, self.seed,
                          {k: v.copy() for k, v in self.params.items()})

    # forward / backward ---------------------------------------------------

    def forward(self, seq):
        """Run the stack over a T x D sequence; returns a :class:`Forward`."""
        x = np.ascontiguousarray(seq, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigError(
                f"expected T x {self.input_dim} input, got {x.shape}")
        p = self.params
        inputs, layers = [], []
        for n in range(len(self.hidden_dims)):
            inputs.append(x)
            fw = _kernels.lstm_forward(x @ p[f"l{n}.fw.W"].T + p[f"l{n}.fw.b"],
                                       p[f"l{n}.fw.U"])
            xr = np.ascontiguousarray(x[::-1])
            bw = _kernels.lstm_forward(xr @ p[f"l{n}.bw.W"].T + p[f"l{n}.bw.b"],
                                       p[f"l{n}.bw.U"])
            layers.append((fw, bw))
            x = np.hstack([fw[2], bw[2][::-1]])
        logits = x @ p["out.W"].T + p["out.b"]
        if self.output_kind == "softmax":
            out = softmax(logits, axis=1)
        else:
            out = sigmoid(logits)
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite network output")
        return Forward(inputs, layers, logits, out, x)

    def backward(self, fwd, d_logits):
        """
        Gradients of a loss given its derivative w.r.t. the head
        pre-activations (T x output_dim). Returns a dict like `params`.

        """
        p = self.params
        d_logits = np.asarray(d_logits, dtype=np.float64)
        grads = {"out.W": d_logits.T @ fwd.last_hidden, "out.b": d_logits.sum(axis=0)}
        dx = d_logits @ p["out.W"]
        for n in range(len(self.hidden_dims) - 1, -1, -1):
            H = self.hidden_dims[n]
            x = fwd.inputs[n]
            fw, bw = fwd.layers[n]
            dz, dU = _kernels.lstm_backward(*fw, p[f"l{n}.fw.U"],
                                            np.ascontiguousarray(dx[:, :H]))
            grads[f"l{n}.fw.W"] = dz.T @ x
            grads[f"l{n}.fw.U"] = dU
            grads[f"l{n}.fw.b"] = dz.sum(axis=0)
            dx_new = dz @ p[f"l{n}.fw.W"]
            dz, dU = _kernels.lstm_backward(*bw, p[f"l{n}.bw.U"],
                                            np.ascontiguousarray(dx[::-1, H:]))
            dz = np.ascontiguousarray(dz[::-1])
            grads[f"l{n}.bw.W"] = dz.T @ x
            grads[f"l{n}.bw.U"] = dU
            grads[f"l{n}.bw.b"] = dz.sum(axis=0)
            dx_new += dz @ p[f"l{n}.bw.W"]
            dx = dx_new
        return {name: grads[name] for name, _ in self.shapes()}


def blstm_forward(seq, stack):
    """
    Apply `stack` to a T x D sequence.

    Returns
    -------
    output : numpy array, shape (output_dim, T)
    last_hidden : numpy array, shape (2H, T)
        Concatenated forward/backward states of the last layer.

    """
    fwd = stack.forward(seq)
    return fwd.output.T, fwd.last_hidden.T


def _label_array(labels):
    return np.asarray(getattr(labels, "labels", labels), dtype=np.int64)


def weighted_cross_entropy(act, labels, weights=CLASS_WEIGHTS):
    """
    Class-weighted cross entropy averaged over frames.

    ``(1/T) * sum_t w[y_t] * -ln(max(act[y_t, t], 1e-12))``

    """
    data = act.data if isinstance(act, ActivationMatrix) else np.asarray(act)
    y = _label_array(labels)
    if data.shape[1] != y.size:
        raise ConfigError("activation and label lengths differ")
    w = np.asarray(weights, dtype=np.float64)
    p = np.maximum(data[y, np.arange(y.size)], PROB_FLOOR)
    return float(np.sum(w[y] * -np.log(p)) / y.size)


def cross_entropy_grad(probs, labels, weights=CLASS_WEIGHTS):
    """Derivative of :func:`weighted_cross_entropy` w.r.t. softmax logits.

    `probs` is frame-major (T x 3).
    """
    y = _label_array(labels)
    T = y.size
    w = np.asarray(weights, dtype=np.float64)[y]
    d = probs.copy()
    d[np.arange(T), y] -= 1.0
    return d * (w / T)[:, None]


def backward(seq, stack, labels, weights=CLASS_WEIGHTS, fwd=None):
    """
    Loss and exact parameter gradients of the weighted cross entropy.

    Returns
    -------
    loss : float
    grads : dict
        One array per parameter of `stack`.

    """
    if stack.output_kind != "softmax":
        raise ConfigError("cross entropy needs a softmax head")
    fwd = fwd or stack.forward(seq)
    loss = weighted_cross_entropy(fwd.output.T, labels, weights)
    grads = stack.backward(fwd, cross_entropy_grad(fwd.output, labels, weights))
    return loss, grads


def labels_from_annotations(beats, num_frames, frame_rate):
    """
    Per-frame class labels from annotated beats.

    Each beat marks frame ``round(time * frame_rate)`` (numpy rounding,
    i.e. half to even) as downbeat if its bar position is 1, else beat.
    Downbeats win collisions; events outside the sequence are skipped.

    """
    labels = np.full(num_frames, NONBEAT, dtype=np.int64)
    arr = beats.to_array() if hasattr(beats, "to_array") else np.asarray(beats, float)
    arr = arr.reshape(-1, 2)
    frames = np.round(arr[:, 0] * frame_rate).astype(np.int64)
    bad = (frames < 0) | (frames >= num_frames)
    if bad.any():
        log.warning("skipping %d annotation(s) outside the sequence", int(bad.sum()))
    for frame, pos in zip(frames[~bad], arr[~bad, 1]):
        if int(pos) == 1:
            labels[frame] = DOWNBEAT
        elif labels[frame] != DOWNBEAT:
            labels[frame] = BEAT
    return labels


# serialization -------------------------------------------------------------

def save_stack(stack, path, name=None):
    """
    Write `stack` as ``<path>.manifest`` (key=value text) and ``<path>.bin``
    (little-endian float64 payload in declared tensor order).

    """
    path = os.fspath(path)
    shapes = stack.shapes()
    lines = [
        f"format_version={FORMAT_VERSION}",
        f"name={name or os.path.basename(path)}",
        f"input_dim={stack.input_dim}",
        f"hidden_dims={','.join(map(str, stack.hidden_dims))}",
        f"num_layers={len(stack.hidden_dims)}",
        f"output_dim={stack.output_dim}",
        f"output_kind={stack.output_kind}",
        f"seed={'' if stack.seed is None else stack.seed}",
        "tensors=" + ",".join(f"{n}:{'x'.join(map(str, s))}" for n, s in shapes),
        f"num_values={stack.num_params}",
    ]
    with open(path + ".manifest", "w") as f:
        f.write("\n".join(lines) + "\n")
    flat = np.concatenate([stack.params[n].ravel() for n, _ in shapes])
    flat.astype("<f8").tofile(path + ".bin")


def read_manifest(path):
    with open(path) as f:
        return dict(line.rstrip("\n").split("=", 1) for line in f if "=" in line)


def load_stack(path):
    """Inverse of :func:`save_stack`."""
    path = os.fspath(path)
    try:
        meta = read_manifest(path + ".manifest")
        flat = np.fromfile(path + ".bin", dtype="<f8")
    except OSError as e:
        raise DataError(f"cannot load parameters from {path}: {e}") from e
    if int(meta.get("format_version", -1)) != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version")
    seed = int(meta["seed"]) if meta.get("seed") else None
    stack = BlstmStack.__new__(BlstmStack)
    stack.input_dim = int(meta["input_dim"])
    stack.hidden_dims = [int(h) for h in meta["hidden_dims"].split(",")]
    stack.output_dim = int(meta["output_dim"])
    stack.output_kind = meta["output_kind"]
    stack.seed = seed
    if flat.size != stack.num_params:
        raise DataError(f"{path}: payload has {flat.size} values, "
                        f"expected {stack.num_params}")
    params, offset = {}, 0
    for name, shape in stack.shapes():
        size = int(np.prod(shape))
        params[name] = flat[offset:offset + size].astype(np.float64).reshape(shape)
        offset += size
    stack.params = params
    return stack
