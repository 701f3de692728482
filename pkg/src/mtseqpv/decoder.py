"""Task decoders: additive attention with windowed coverage, tagging and
classification heads."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .encoder import EncoderStates, LstmCellParams, lstm_step
from .numerics import (DimensionError, Param, ProtocolError, Rng, Tensor, add, as_tensor,
                       concat, default_dtype, getitem, matmul, reshape, snap_to_simplex,
                       softmax_op, tanh,
                       take_rows, xavier_init)

Dropout = Optional[Callable[[Tensor], Tensor]]


@dataclass
class AttentionParams:
    w_a: Param            # (2d, d_attn), applied to encoder states
    w_b: Param            # (d, d_attn), applied to the previous decoder state
    b: Param              # (d_attn,)
    v: Param              # (d_attn,)
    w_c: Optional[Param]  # (1, d_attn), coverage feature; None when coverage is off

    @classmethod
    def create(cls, name: str, enc_dim: int, dec_dim: int, attn_dim: int, group: str,
               rng: Rng, coverage: bool) -> "AttentionParams":
        return cls(
            Param(xavier_init(enc_dim, attn_dim, rng), f"{name}.w_a", group),
            Param(xavier_init(dec_dim, attn_dim, rng), f"{name}.w_b", group),
            Param(xavier_init(1, attn_dim, rng)[0], f"{name}.b", group),
            Param(xavier_init(attn_dim, 1, rng)[:, 0], f"{name}.v", group),
            Param(xavier_init(1, attn_dim, rng), f"{name}.w_c", group) if coverage else None,
        )

    def params(self) -> list:
        return [p for p in (self.w_a, self.w_b, self.b, self.v, self.w_c) if p is not None]


@dataclass(frozen=True)
class CoverageState:
    """The last ``window`` attention distributions, oldest first."""

    length: int
    window: int = 3
    history: tuple = ()

    def vector(self):
        """Current coverage: elementwise sum of the stored distributions."""
        if not self.history:
            return Tensor(np.zeros(self.length, dtype=default_dtype()))
        total = self.history[0]
        for a in self.history[1:]:
            total = add(total, a)
        return total


def coverage_update(state: CoverageState, a_t) -> CoverageState:
    a_t = as_tensor(a_t)
    if a_t.shape != (state.length,):
        raise DimensionError(f"attention of shape {a_t.shape} for a source of length {state.length}")
    return CoverageState(state.length, state.window, (state.history + (a_t,))[-state.window:])


@dataclass
class AttentionStep:
    scores: Tensor
    weights: Tensor
    context: Tensor
    coverage: Optional[Tensor] = None


def attend(s_prev, H: EncoderStates, coverage: Optional[CoverageState], params: AttentionParams,
           h_proj: Tensor = None) -> AttentionStep:
    """Score every encoder state against ``s_prev`` and build the context vector.

    ``h_proj`` may hold a precomputed ``H.states @ w_a`` reused across steps.
    """
    s_prev = as_tensor(s_prev)
    if s_prev.shape != (params.w_b.value.shape[0],):
        raise DimensionError(
            f"decoder state {s_prev.shape} does not match attention weights {params.w_b.shape}")
    if (coverage is None) != (params.w_c is None):
        raise ProtocolError("coverage state must be given exactly when the decoder uses coverage")
    if h_proj is None:
        h_proj = matmul(H.states, params.w_a)
    pre = add(h_proj, matmul(s_prev, params.w_b))
    cov = None
    if coverage is not None:
        cov = coverage.vector()
        pre = add(pre, matmul(reshape(cov, (len(H), 1)), params.w_c))
    pre = add(pre, params.b)
    scores = matmul(tanh(pre), params.v)
    weights = snap_to_simplex(softmax_op(scores))
    context = matmul(weights, H.states)
    return AttentionStep(scores, weights, context, cov)


def init_decoder_state(H: EncoderStates, proj) -> Tensor:
    """Project the final encoder state (2d) down to the decoder size (d)."""
    return matmul(H.final, proj)


@dataclass
class LabelingDecoder:
    tags: tuple               # output alphabet, O first
    proj: Param               # (2d, d)
    attention: AttentionParams
    lstm: LstmCellParams      # input = [h_t, tag embedding, context]
    tag_embed: Param          # (len(tags) + 1, d_tag); row 0 is the start tag
    w_out: Param              # (d + 2d, len(tags))
    b_out: Param
    coverage_window: int = 3

    @property
    def use_coverage(self) -> bool:
        return self.attention.w_c is not None

    @classmethod
    def create(cls, name: str, tags, enc_hidden: int, attn_dim: int, tag_dim: int, group: str,
               rng: Rng, coverage: bool = True, coverage_window: int = 3) -> "LabelingDecoder":
        d, e = enc_hidden, 2 * enc_hidden
        dtype = default_dtype()
        return cls(
            tuple(tags),
            Param(xavier_init(e, d, rng), f"{name}.proj", group),
            AttentionParams.create(f"{name}.attn", e, d, attn_dim, group, rng, coverage),
            LstmCellParams.create(f"{name}.lstm", e + tag_dim + e, d, group, rng),
            Param(xavier_init(len(tags) + 1, tag_dim, rng), f"{name}.tag_embed", group),
            Param(xavier_init(d + e, len(tags), rng), f"{name}.w_out", group),
            Param(np.zeros(len(tags), dtype=dtype), f"{name}.b_out", group),
            coverage_window,
        )

    def params(self) -> list:
        return ([self.proj] + self.attention.params() + self.lstm.params()
                + [self.tag_embed, self.w_out, self.b_out])


@dataclass
class DecoderState:
    s: Tensor
    cell: Tensor
    coverage: Optional[CoverageState]
    h_proj: Tensor
    t: int = 0


def start_labeling(decoder: LabelingDecoder, H: EncoderStates) -> DecoderState:
    s0 = init_decoder_state(H, decoder.proj)
    cell = Tensor(np.zeros(decoder.lstm.hidden, dtype=H.states.value.dtype))
    cov = CoverageState(len(H), decoder.coverage_window) if decoder.use_coverage else None
    return DecoderState(s0, cell, cov, matmul(H.states, decoder.attention.w_a))


def labeling_step(decoder: LabelingDecoder, state: DecoderState, y_prev: Optional[int],
                  H: EncoderStates, dropout: Dropout = None):
    """Emit the tag distribution for source position ``state.t``.

    ``y_prev`` is the previous output tag index (None for the start tag).
    Returns ``(distribution, attention step, next state)``.
    """
    t = state.t
    if t >= len(H):
        raise ProtocolError(f"decoder step {t + 1} beyond source length {len(H)}")
    step = attend(state.s, H, state.coverage, decoder.attention, state.h_proj)
    tag_vec = take_rows(decoder.tag_embed, 0 if y_prev is None else y_prev + 1)
    x = concat([getitem(H.states, t), tag_vec, step.context])
    s, cell = lstm_step(decoder.lstm, x, state.s, state.cell)
    feats = concat([s, step.context])
    if dropout is not None:
        feats = dropout(feats)
    dist = softmax_op(add(matmul(feats, decoder.w_out), decoder.b_out))
    cov = coverage_update(state.coverage, step.weights) if state.coverage is not None else None
    return dist, step, DecoderState(s, cell, cov, state.h_proj, t + 1)


def run_labeling(decoder: LabelingDecoder, H: EncoderStates, gold: Optional[list] = None,
                 dropout: Dropout = None):
    """Decode all T positions.

    With ``gold`` tag indices the previous gold tag is fed back (teacher
    forcing); otherwise the argmax of each step, ties going to O.
    Returns ``(distributions, attention steps, predicted indices)``.
    """
    state = start_labeling(decoder, H)
    dists, steps, preds = [], [], []
    y_prev = None
    for t in range(len(H)):
        dist, step, state = labeling_step(decoder, state, y_prev, H, dropout)
        dists.append(dist)
        steps.append(step)
        pred = int(np.argmax(dist.value))
        preds.append(pred)
        y_prev = gold[t] if gold is not None else pred
    return dists, steps, preds


def greedy_decode(decoder: LabelingDecoder, H: EncoderStates) -> list:
    _, _, preds = run_labeling(decoder, H)
    return [decoder.tags[i] for i in preds]


@dataclass
class ClassificationDecoder:
    labels: tuple             # ("ADR", "NotADR")
    proj: Param
    attention: AttentionParams
    lstm: LstmCellParams      # input = context
    w_class: Param            # (2d, n_labels)
    b_class: Param

    @classmethod
    def create(cls, name: str, labels, enc_hidden: int, attn_dim: int, group: str,
               rng: Rng) -> "ClassificationDecoder":
        d, e = enc_hidden, 2 * enc_hidden
        return cls(
            tuple(labels),
            Param(xavier_init(e, d, rng), f"{name}.proj", group),
            AttentionParams.create(f"{name}.attn", e, d, attn_dim, group, rng, coverage=False),
            LstmCellParams.create(f"{name}.lstm", e, d, group, rng),
            Param(xavier_init(e, len(labels), rng), f"{name}.w_class", group),
            Param(np.zeros(len(labels), dtype=default_dtype()), f"{name}.b_class", group),
        )

    def params(self) -> list:
        return [self.proj] + self.attention.params() + self.lstm.params() + [self.w_class,
                                                                              self.b_class]


def classify(decoder: ClassificationDecoder, H: EncoderStates, dropout: Dropout = None):
    """Single attention + LSTM step from s_0; the class comes from the context.

    Returns ``(distribution over labels, [attention step])``.
    """
    s0 = init_decoder_state(H, decoder.proj)
    step = attend(s0, H, None, decoder.attention)
    cell0 = Tensor(np.zeros(decoder.lstm.hidden, dtype=H.states.value.dtype))
    lstm_step(decoder.lstm, step.context, s0, cell0)
    feats = step.context if dropout is None else dropout(step.context)
    dist = softmax_op(add(matmul(feats, decoder.w_class), decoder.b_class))
    return dist, [step]
