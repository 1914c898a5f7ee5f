"""Bidirectional-LSTM position regressor: flatten -> BiLSTM -> dropout ->
dense stack with ReLU -> linear (x, y) head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import BiLSTM, Dense, Dropout, LSTM, ReLU


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden: int = 500
    dropout: float = 0.4
    dense_dims: tuple = (2048, 512, 64)
    output_dim: int = 2
    bidirectional: bool = True
    seq_len: int = 1

    def __post_init__(self):
        if min(self.input_dim, self.hidden, self.output_dim, self.seq_len) < 1 or \
                any(d < 1 for d in self.dense_dims):
            raise ValueError("all layer sizes must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.input_dim % self.seq_len:
            raise ValueError("input_dim must split evenly into seq_len steps")

    @classmethod
    def for_scene(cls, T: int, K: int, **kw) -> "ModelConfig":
        return cls(input_dim=2 * T * (K + 1), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dense_dims"] = list(self.dense_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["dense_dims"] = tuple(d["dense_dims"])
        return cls(**d)


def expected_param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count, independent of layer construction."""
    step_dim = cfg.input_dim // cfg.seq_len
    dirs = 2 if cfg.bidirectional else 1
    n = dirs * 4 * ((step_dim + cfg.hidden) * cfg.hidden + cfg.hidden)
    widths = [dirs * cfg.hidden, *cfg.dense_dims, cfg.output_dim]
    n += sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    return n


class Model:
    """The flattened input is fed to the recurrent layer as ``seq_len``
    steps (default one step of the whole vector)."""

    def __init__(self, cfg: ModelConfig, seed: int | None = 0, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = None if seed is None else np.random.default_rng(seed)
        step_dim = cfg.input_dim // cfg.seq_len
        rec = BiLSTM(step_dim, cfg.hidden, rng, dtype) if cfg.bidirectional else \
            LSTM(step_dim, cfg.hidden, rng, dtype=dtype)
        self.dropout = Dropout(cfg.dropout, np.random.default_rng(None if seed is None else seed + 1))
        layers = [rec, self.dropout]
        widths = [(2 if cfg.bidirectional else 1) * cfg.hidden, *cfg.dense_dims]
        for a, b in zip(widths[:-1], widths[1:]):
            layers += [Dense(a, b, rng, dtype), ReLU()]
        layers.append(Dense(widths[-1], cfg.output_dim, rng, dtype))
        self.layers = layers

    def parameters(self):
        """(layer_index, name, array) triples in a fixed order."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def gradients(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.grads[name]

    def num_params(self) -> int:
        return sum(layer.num_params() for layer in self.layers)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, features, train: bool = False):
        x = np.asarray(features, dtype=self.dtype).reshape(len(features), self.cfg.seq_len, -1)
        if x.shape[-1] * self.cfg.seq_len != self.cfg.input_dim:
            raise ValueError(f"expected {self.cfg.input_dim} input features, got {x.shape[-1] * self.cfg.seq_len}")
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def get_state(self) -> list:
        return [p.copy() for _, _, p in self.parameters()]

    def set_state(self, state):
        for (_, _, p), v in zip(self.parameters(), state, strict=True):
            if p.shape != v.shape:
                raise ValueError("parameter shape mismatch")
            p[...] = v

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for _, _, p in self.parameters()])

    def set_flat_params(self, flat):
        off = 0
        for _, _, p in self.parameters():
            p[...] = np.asarray(flat[off:off + p.size]).reshape(p.shape)
            off += p.size
        if off != len(flat):
            raise ValueError("flat parameter vector has the wrong length")
