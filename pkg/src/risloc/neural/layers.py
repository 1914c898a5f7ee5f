"""Layers with hand-written backward passes.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` on ``backward``.
Arrays are (batch, features) except the LSTM input, which is
(batch, steps, features).
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def num_params(self) -> int:
        return sum(int(v.size) for v in self.params.values())


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None, dtype=np.float64):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        bound = 1.0 / np.sqrt(n_in)
        if rng is None:
            W = np.zeros((n_in, n_out), dtype=dtype)
            b = np.zeros(n_out, dtype=dtype)
        else:
            W = rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype)
            b = rng.uniform(-bound, bound, n_out).astype(dtype)
        self.params = {"W": W, "b": b}
        self.zero_grad()

    def forward(self, x, train=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] += self._x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-p) in training."""

    def __init__(self, p: float, rng=None):
        super().__init__()
        if not 0 <= p < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, train=False):
        if not train or self.p == 0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


def lstm_cell(x, h_prev, c_prev, params):
    """One LSTM step. ``params`` holds W (D, 4H), U (H, 4H), b (4H) with
    gate blocks ordered input, forget, candidate, output.

    Returns ``(h, c, cache)``.
    """
    W, U, b = params["W"], params["U"], params["b"]
    if x.shape[-1] != W.shape[0] or h_prev.shape[-1] != U.shape[0] or c_prev.shape != h_prev.shape:
        raise ValueError("lstm_cell shape mismatch")
    H = U.shape[0]
    z = x @ W + h_prev @ U + b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def lstm_cell_backward(dh, dc, cache, params, grads):
    """Backprop one step; accumulates into ``grads`` and returns
    (dx, dh_prev, dc_prev)."""
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1 - tc ** 2)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=-1)
    grads["W"] += x.T @ dz
    grads["U"] += h_prev.T @ dz
    grads["b"] += dz.sum(axis=0)
    return dz @ params["W"].T, dz @ params["U"].T, dc * f


class LSTM(Layer):
    """Unidirectional LSTM over (B, S, D) input; returns the final hidden
    state (B, H). ``reverse`` walks the sequence back to front."""

    def __init__(self, n_in: int, hidden: int, rng=None, reverse=False, dtype=np.float64):
        super().__init__()
        self.n_in, self.hidden, self.reverse = n_in, hidden, reverse
        shapes = {"W": (n_in, 4 * hidden), "U": (hidden, 4 * hidden), "b": (4 * hidden,)}
        bound = 1.0 / np.sqrt(n_in + hidden)
        for k, s in shapes.items():
            self.params[k] = np.zeros(s, dtype=dtype) if rng is None else \
                rng.uniform(-bound, bound, s).astype(dtype)
        self.zero_grad()

    def forward(self, x, train=False, h0=None, c0=None):
        B, S, _ = x.shape
        dt = self.params["W"].dtype
        h = np.zeros((B, self.hidden), dtype=dt) if h0 is None else h0
        c = np.zeros((B, self.hidden), dtype=dt) if c0 is None else c0
        order = range(S - 1, -1, -1) if self.reverse else range(S)
        self._caches = []
        self._order = list(order)
        for t in self._order:
            h, c, cache = lstm_cell(x[:, t], h, c, self.params)
            self._caches.append(cache)
        self._S = S
        return h

    def backward(self, dout):
        B = dout.shape[0]
        dx = np.zeros((B, self._S, self.n_in), dtype=dout.dtype)
        dh, dc = dout, np.zeros_like(dout)
        for t, cache in zip(reversed(self._order), reversed(self._caches)):
            dx_t, dh, dc = lstm_cell_backward(dh, dc, cache, self.params, self.grads)
            dx[:, t] = dx_t
        self.dh0, self.dc0 = dh, dc
        return dx


class BiLSTM(Layer):
    """Forward and backward LSTMs over the same sequence; output is the
    concatenation of both final hidden states (B, 2H)."""

    def __init__(self, n_in: int, hidden: int, rng=None, dtype=np.float64):
        super().__init__()
        self.fwd = LSTM(n_in, hidden, rng, reverse=False, dtype=dtype)
        self.bwd = LSTM(n_in, hidden, rng, reverse=True, dtype=dtype)
        self.hidden = hidden
        self.params = {f"fwd_{k}": v for k, v in self.fwd.params.items()}
        self.params.update({f"bwd_{k}": v for k, v in self.bwd.params.items()})
        self._link_grads()

    def _link_grads(self):
        self.grads = {f"fwd_{k}": v for k, v in self.fwd.grads.items()}
        self.grads.update({f"bwd_{k}": v for k, v in self.bwd.grads.items()})

    def zero_grad(self):
        self.fwd.zero_grad()
        self.bwd.zero_grad()
        self._link_grads()

    def forward(self, x, train=False):
        return np.concatenate([self.fwd.forward(x, train), self.bwd.forward(x, train)], axis=-1)

    def backward(self, dout):
        H = self.hidden
        return self.fwd.backward(dout[:, :H]) + self.bwd.backward(dout[:, H:])


def mse_loss(pred, target):
    """Mean squared error over every element and its gradient wrt pred."""
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size
