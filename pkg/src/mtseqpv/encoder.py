"""LSTM cell and the shared single-layer bidirectional encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (ArgumentError, DimensionError, Param, Rng, Tensor, add, as_tensor,
                       concat, default_dtype, getitem, lstm_sequence, lstm_update, matmul,
                       xavier_init)


@dataclass
class LstmCellParams:
    """Weights of one LSTM direction; gate blocks ordered input, forget, cell, output."""

    w_x: Param  # (input_dim, 4d)
    w_h: Param  # (d, 4d)
    b: Param    # (4d,)

    @property
    def hidden(self) -> int:
        return self.w_h.value.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_x.value.shape[0]

    @classmethod
    def create(cls, name: str, input_dim: int, hidden: int, group: str, rng: Rng,
               forget_bias: float = 1.0) -> "LstmCellParams":
        dtype = default_dtype()
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = forget_bias
        return cls(
            Param(xavier_init(input_dim, 4 * hidden, rng), f"{name}.w_x", group),
            Param(xavier_init(hidden, 4 * hidden, rng), f"{name}.w_h", group),
            Param(b, f"{name}.b", group),
        )

    def params(self) -> list:
        return [self.w_x, self.w_h, self.b]


def lstm_step(params: LstmCellParams, x_t, prev_h, prev_c, mask=None, x_proj=None):
    """One LSTM step; returns ``(h, c)``.

    ``x_proj`` may carry a precomputed ``x_t @ w_x + b`` to skip that product.
    ``mask`` (shape ``(batch, 1)``) freezes the state of rows marked 0.
    """
    d = params.hidden
    prev_h, prev_c = as_tensor(prev_h), as_tensor(prev_c)
    if prev_h.shape[-1] != d or prev_c.shape[-1] != d:
        raise DimensionError(
            f"LSTM state shapes {prev_h.shape}/{prev_c.shape} do not match hidden size {d}")
    if x_proj is None:
        x_t = as_tensor(x_t)
        if x_t.shape[-1] != params.input_dim:
            raise DimensionError(
                f"LSTM input {x_t.shape} does not match weights {params.w_x.shape}")
        x_proj = add(matmul(x_t, params.w_x), params.b)
    z = add(x_proj, matmul(prev_h, params.w_h))
    hc = lstm_update(z, prev_c, prev_h, mask)
    return getitem(hc, (Ellipsis, slice(0, d))), getitem(hc, (Ellipsis, slice(d, 2 * d)))


def run_lstm(params: LstmCellParams, xs, reverse: bool = False) -> Tensor:
    """Hidden states (T x d, input order) of one direction over the rows of ``xs``."""
    xs = as_tensor(xs)
    if xs.shape[-1] != params.input_dim:
        raise DimensionError(f"LSTM input {xs.shape} does not match weights {params.w_x.shape}")
    return lstm_sequence(add(matmul(xs, params.w_x), params.b), params.w_h, reverse=reverse)


@dataclass
class EncoderStates:
    states: Tensor    # (T, 2d), row t = [forward_t, backward_t]
    final: Tensor     # (2d,) = [last forward state, last backward state]
    forward: Tensor   # (T, d)
    backward: Tensor  # (T, d)

    def __len__(self):
        return self.states.shape[0]


def encode(embedded, fwd: LstmCellParams, bwd: LstmCellParams) -> EncoderStates:
    """Bidirectional pass over a (T x n) embedded sequence, zero initial states."""
    embedded = as_tensor(embedded)
    if embedded.value.ndim != 2 or embedded.shape[0] == 0:
        raise ArgumentError("encode needs a non-empty (T, n) sequence")
    f_states = run_lstm(fwd, embedded)
    b_states = run_lstm(bwd, embedded, reverse=True)
    T = embedded.shape[0]
    states = concat([f_states, b_states], axis=1)
    final = concat([getitem(f_states, T - 1), getitem(b_states, 0)])
    return EncoderStates(states, final, f_states, b_states)
