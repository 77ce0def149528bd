"""Small numpy neural-network core: LSTM and dense layers, exact backprop, Adam.

Everything runs in float64. Layers record what they need during
``forward`` and consume it in ``backward``; calling ``backward`` without a
recorded forward pass raises :class:`NoRecordedForward`.

LSTM gate parameters are stored stacked in one ``(4c, i + c)`` matrix and a
``(4c,)`` bias, in the gate order ``input, forget, output, candidate``. Each
``c``-row block is the per-gate weight acting on ``[x_s, h_{s-1}]``.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .errors import LabelOutOfRange, NoRecordedForward, ShapeMismatch

GATES = ("input", "forget", "output", "candidate")
PROB_FLOOR = 1e-12


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def lstm_param_count(input_size, hidden_size):
    return 4 * (hidden_size * (input_size + hidden_size) + hidden_size)


class Layer:
    """Base class: named parameter arrays plus matching gradient buffers."""

    def __init__(self):
        self.params: OrderedDict[str, np.ndarray] = OrderedDict()
        self.grads: OrderedDict[str, np.ndarray] = OrderedDict()
        self._cache = None

    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def _pop_cache(self):
        if self._cache is None:
            raise NoRecordedForward(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache


class LSTM(Layer):
    """Single LSTM layer with inverted dropout on its input connections.

    The dropout mask is drawn once per sequence and shared across time
    steps; the recurrent path is never dropped.
    """

    def __init__(self, input_size, hidden_size, dropout=0.0, return_sequences=True, rng=None):
        super().__init__()
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        self.dropout = float(dropout)
        self.return_sequences = return_sequences
        rng = np.random.default_rng() if rng is None else rng
        i, c = self.input_size, self.hidden_size
        W = np.concatenate([glorot_uniform(rng, c, i + c) for _ in GATES], axis=0)
        b = np.zeros(4 * c)
        b[c:2 * c] = 1.0  # forget gate
        self.params["W"] = W
        self.params["b"] = b
        self.zero_grad()

    def gate(self, name):
        """Return ``(W, b)`` views for one gate."""
        k = GATES.index(name)
        c = self.hidden_size
        return self.params["W"][k * c:(k + 1) * c], self.params["b"][k * c:(k + 1) * c]

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeMismatch(f"LSTM expects (..., T, {self.input_size}) input, got {x.shape}")
        B, T, _ = x.shape
        c = self.hidden_size
        W, b = self.params["W"], self.params["b"]
        Wx, Wh = W[:, :self.input_size], W[:, self.input_size:]

        mask = None
        if training and self.dropout > 0.0:
            if rng is None:
                raise ValueError("training with dropout needs an rng")
            keep = 1.0 - self.dropout
            mask = (rng.random((B, 1, self.input_size)) < keep) / keep
            x = x * mask

        xz = x @ Wx.T + b  # (B, T, 4c)
        H = np.zeros((B, T, c))
        C = np.zeros((B, T, c))
        acts = np.zeros((B, T, 4 * c))
        h = np.zeros((B, c))
        cell = np.zeros((B, c))
        for t in range(T):
            z = xz[:, t] + h @ Wh.T
            a = acts[:, t]
            a[:, :3 * c] = sigmoid(z[:, :3 * c])
            a[:, 3 * c:] = np.tanh(z[:, 3 * c:])
            cell = a[:, c:2 * c] * cell + a[:, :c] * a[:, 3 * c:]
            h = a[:, 2 * c:3 * c] * np.tanh(cell)
            C[:, t] = cell
            H[:, t] = h
        self._cache = (x, mask, acts, C, H)
        out = H if self.return_sequences else H[:, -1]
        return out[0] if squeeze else out

    def backward(self, grad_out):
        x, mask, acts, C, H = self._pop_cache()
        B, T, _ = x.shape
        c = self.hidden_size
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if self.return_sequences:
            dH = grad_out.reshape(B, T, c)
        else:
            dH = np.zeros((B, T, c))
            dH[:, -1] = grad_out.reshape(B, c)
        Wx = self.params["W"][:, :self.input_size]
        Wh = self.params["W"][:, self.input_size:]

        dZ = np.zeros((B, T, 4 * c))
        dh_next = np.zeros((B, c))
        dc_next = np.zeros((B, c))
        for t in reversed(range(T)):
            a = acts[:, t]
            ig, fg, og, g = a[:, :c], a[:, c:2 * c], a[:, 2 * c:3 * c], a[:, 3 * c:]
            tc = np.tanh(C[:, t])
            c_prev = C[:, t - 1] if t > 0 else np.zeros((B, c))
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * og * (1.0 - tc ** 2)
            dz = dZ[:, t]
            dz[:, :c] = dc * g * ig * (1.0 - ig)
            dz[:, c:2 * c] = dc * c_prev * fg * (1.0 - fg)
            dz[:, 2 * c:3 * c] = dh * tc * og * (1.0 - og)
            dz[:, 3 * c:] = dc * ig * (1.0 - g ** 2)
            dc_next = dc * fg
            dh_next = dz @ Wh

        H_prev = np.concatenate([np.zeros((B, 1, c)), H[:, :-1]], axis=1)
        flat = dZ.reshape(-1, 4 * c)
        self.grads["W"] = np.concatenate(
            [flat.T @ x.reshape(-1, self.input_size), flat.T @ H_prev.reshape(-1, c)], axis=1
        )
        self.grads["b"] = flat.sum(axis=0)
        dx = dZ @ Wx
        if mask is not None:
            dx = dx * mask
        return dx


class Dense(Layer):
    ACTIVATIONS = ("softmax", "relu", "identity")

    def __init__(self, in_features, out_features, activation="identity", rng=None):
        super().__init__()
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.activation = activation
        rng = np.random.default_rng() if rng is None else rng
        self.params["W"] = glorot_uniform(rng, self.out_features, self.in_features)
        self.params["b"] = np.zeros(self.out_features)
        self.zero_grad()

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_features:
            raise ShapeMismatch(f"Dense expects width {self.in_features}, got {x.shape}")
        z = x @ self.params["W"].T + self.params["b"]
        if self.activation == "softmax":
            y = softmax(z)
        elif self.activation == "relu":
            y = np.maximum(z, 0.0)
        else:
            y = z
        self._cache = (x, z, y)
        return y

    def backward(self, grad_out):
        x, z, y = self._pop_cache()
        if self.activation == "softmax":
            dz = y * (grad_out - (grad_out * y).sum(axis=-1, keepdims=True))
        elif self.activation == "relu":
            dz = grad_out * (z > 0)
        else:
            dz = grad_out
        x2 = x.reshape(-1, self.in_features)
        dz2 = dz.reshape(-1, self.out_features)
        self.grads["W"] = dz2.T @ x2
        self.grads["b"] = dz2.sum(axis=0)
        return dz @ self.params["W"]


def _check_labels(labels, n_rows, n_classes):
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise ShapeMismatch(f"expected {n_rows} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelOutOfRange("labels must be integer class indices")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    return labels


def sparse_crossentropy(probabilities, labels):
    """Mean of ``-log p[label]`` with probabilities clamped at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    labels = _check_labels(labels, p.shape[0], p.shape[1])
    picked = np.maximum(p[np.arange(p.shape[0]), labels], PROB_FLOOR)
    return float(-np.log(picked).mean())


def sparse_crossentropy_grad(probabilities, labels):
    p = np.asarray(probabilities, dtype=np.float64)
    labels = _check_labels(labels, p.shape[0], p.shape[1])
    rows = np.arange(p.shape[0])
    picked = p[rows, labels]
    grad = np.zeros_like(p)
    # the clamp is flat below the floor
    grad[rows, labels] = np.where(picked > PROB_FLOOR, -1.0 / (p.shape[0] * np.maximum(picked, PROB_FLOOR)), 0.0)
    return grad


class Network:
    """A stack of layers with named parameters, ending in a dense head."""

    def __init__(self, layers):
        self.layers = list(layers)
        self._names = []
        counts = {}
        for layer in self.layers:
            kind = type(layer).__name__.lower()
            k = counts.get(kind, 0)
            counts[kind] = k + 1
            self._names.append(f"{kind}{k}")
        self._recorded = False

    def named_layers(self):
        return list(zip(self._names, self.layers))

    def parameters(self):
        out = OrderedDict()
        for lname, layer in self.named_layers():
            for pname, p in layer.params.items():
                out[f"{lname}.{pname}"] = p
        return out

    def gradients(self):
        out = OrderedDict()
        for lname, layer in self.named_layers():
            for pname, g in layer.grads.items():
                out[f"{lname}.{pname}"] = g
        return out

    def set_parameters(self, values):
        for name, p in self.parameters().items():
            new = np.asarray(values[name], dtype=np.float64)
            if new.shape != p.shape:
                raise ShapeMismatch(f"{name}: expected {p.shape}, got {new.shape}")
            p[...] = new

    def n_params(self):
        return sum(layer.n_params() for layer in self.layers)

    def forward(self, x, training=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        self._recorded = True
        return x

    def backward(self, grad_out):
        if not self._recorded:
            raise NoRecordedForward("no forward pass recorded")
        self._recorded = False
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def loss_and_grad(self, x, labels, training=False, rng=None):
        probs = self.forward(x, training=training, rng=rng)
        loss = sparse_crossentropy(probs, labels)
        self.backward(sparse_crossentropy_grad(probs, labels))
        return loss, self.gradients()

    def predict_proba(self, x, batch_size=1024):
        x = np.asarray(x)
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        self._recorded = False
        for layer in self.layers:
            layer._cache = None
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.layers[-1].out_features))


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, learning_rate=0.0025, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        if set(params) != set(grads):
            raise ShapeMismatch("parameter and gradient names differ")
        for name, p in params.items():
            if grads[name].shape != p.shape:
                raise ShapeMismatch(f"{name}: gradient {grads[name].shape} vs parameter {p.shape}")
            if name in self.m and self.m[name].shape != p.shape:
                raise ShapeMismatch(f"{name}: moment buffer {self.m[name].shape} vs parameter {p.shape}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon)
