"""Token representations: word vector concatenated with a char-BiLSTM summary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Vocab
from .encoder import LstmCellParams
from .numerics import (Param, Rng, Tensor, add, concat, getitem, lstm_sequence, matmul, mul,
                       reshape, take_rows, xavier_init)


class EmbeddingFormatError(ValueError):
    pass


@dataclass
class WordEmbeddingTable:
    table: Param  # (V, m)
    trainable: bool = True
    coverage: float = 0.0

    @property
    def dim(self) -> int:
        return self.table.value.shape[1]

    @classmethod
    def random(cls, vocab: Vocab, dim: int, rng: Rng, group: str = "shared") -> "WordEmbeddingTable":
        values = xavier_init(len(vocab), dim, rng)
        values[vocab.pad_index] = 0.0
        return cls(Param(values, "embed.words", group))


@dataclass
class CharEmbedder:
    table: Param  # (G, p)
    fwd: LstmCellParams
    bwd: LstmCellParams

    @property
    def out_dim(self) -> int:
        return 2 * self.fwd.hidden

    @classmethod
    def create(cls, n_chars: int, char_dim: int, hidden: int, rng: Rng,
               group: str = "shared") -> "CharEmbedder":
        table = xavier_init(n_chars, char_dim, rng)
        table[0] = 0.0
        return cls(Param(table, "embed.chars", group),
                   LstmCellParams.create("embed.char_fwd", char_dim, hidden, group, rng),
                   LstmCellParams.create("embed.char_bwd", char_dim, hidden, group, rng))

    def params(self) -> list:
        return [self.table] + self.fwd.params() + self.bwd.params()


def load_pretrained_embeddings(path, vocab: Vocab, rng: Rng, dim: int = None) -> WordEmbeddingTable:
    """Initialise a word table from a GloVe-style text file.

    Vocabulary entries found in the file take its vectors; the rest
    (including UNK) are Xavier-initialised and PAD is zero. ``coverage`` on
    the result is the fraction of non-special vocabulary entries found.
    """
    found = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            parts = raw.rstrip("\r\n").split(" ")
            if len(parts) < 2 or not parts[0]:
                if raw.strip():
                    raise EmbeddingFormatError(f"{path}:{line_no}: malformed embedding line")
                continue
            if dim is None:
                dim = len(parts) - 1
            if len(parts) - 1 != dim:
                raise EmbeddingFormatError(
                    f"{path}:{line_no}: expected {dim} values, found {len(parts) - 1}")
            if parts[0] in vocab:
                try:
                    found[parts[0]] = np.array([float(v) for v in parts[1:]])
                except ValueError as exc:
                    raise EmbeddingFormatError(f"{path}:{line_no}: {exc}") from None
    if dim is None:
        raise EmbeddingFormatError(f"{path}: no vectors and no dimension given")
    values = xavier_init(len(vocab), dim, rng)
    for tok, vec in found.items():
        values[vocab.index(tok)] = vec
    values[vocab.pad_index] = 0.0
    n_regular = len(vocab) - 2
    coverage = len(found) / n_regular if n_regular else 0.0
    return WordEmbeddingTable(Param(values, "embed.words", "shared"), coverage=coverage)


def char_ids(tokens, char_vocab: Vocab):
    """Right-padded char index matrices (forward and reversed) plus the step mask."""
    L = max(1, max(len(t) for t in tokens))
    fwd = np.zeros((len(tokens), L), dtype=np.int64)
    bwd = np.zeros_like(fwd)
    mask = np.zeros((len(tokens), L), dtype=bool)
    for r, tok in enumerate(tokens):
        ids = char_vocab.indices(tok)
        fwd[r, :len(ids)] = ids
        bwd[r, :len(ids)] = ids[::-1]
        mask[r, :len(ids)] = True
    return fwd, bwd, mask


def _run_chars(embedder: CharEmbedder, params: LstmCellParams, ids: np.ndarray, mask: np.ndarray):
    B, L = ids.shape
    x = take_rows(embedder.table, ids.T.reshape(-1))
    proj = reshape(add(matmul(x, params.w_x), params.b), (L, B, 4 * params.hidden))
    states = lstm_sequence(proj, params.w_h, mask=mask.T)
    return getitem(states, L - 1)


def embed_chars_batch(tokens, embedder: CharEmbedder, char_vocab: Vocab) -> Tensor:
    """Char summaries for several tokens at once, shape (len(tokens), 2*h_c).

    Each row ends in the state reached after that token's own last char;
    padding steps leave the state untouched, and an empty token stays zero.
    """
    fwd_ids, bwd_ids, mask = char_ids(tokens, char_vocab)
    return concat([_run_chars(embedder, embedder.fwd, fwd_ids, mask),
                   _run_chars(embedder, embedder.bwd, bwd_ids, mask)], axis=-1)


def embed_chars(token: str, embedder: CharEmbedder, char_vocab: Vocab) -> Tensor:
    return getitem(embed_chars_batch([token], embedder, char_vocab), 0)


def embed_sequence(tokens, table: WordEmbeddingTable, embedder: CharEmbedder,
                   word_vocab: Vocab, char_vocab: Vocab, dropout_mask=None) -> Tensor:
    """Per-token ``[word vector, char summary]`` rows, shape (T, m + 2*h_c)."""
    words = take_rows(table.table, word_vocab.indices(tokens))
    if not table.trainable:
        words = Tensor(words.value)
    out = concat([words, embed_chars_batch(tokens, embedder, char_vocab)], axis=-1)
    if dropout_mask is not None:
        out = mul(out, dropout_mask)
    return out
