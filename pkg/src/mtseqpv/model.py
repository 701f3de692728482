"""The multi-task network: shared embeddings + encoder, one decoder per task."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import CLASS_LABELS, Vocabularies
from .decoder import ClassificationDecoder, LabelingDecoder, classify, run_labeling
from .embedding import CharEmbedder, WordEmbeddingTable, embed_sequence
from .encoder import EncoderStates, LstmCellParams, encode
from .numerics import Rng, default_dtype, dropout_mask, mul

TASKS = ("classification", "adr", "indication")
TASK_GROUPS = {"classification": "task_classification", "adr": "task_adr",
               "indication": "task_indication"}
TASK_KIND = {"adr": "ADR", "indication": "IND"}


@dataclass
class ModelDims:
    word_dim: int = 200
    char_dim: int = 128
    char_hidden: int = 64
    encoder_hidden: int = 128
    attn_dim: int = 128
    tag_dim: int = 16
    coverage_window: int = 3
    use_coverage: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


class MultiTaskModel:
    def __init__(self, vocabs: Vocabularies, dims: ModelDims, rng: Rng,
                 word_table: WordEmbeddingTable = None):
        self.vocabs = vocabs
        self.dims = dims
        self.word_table = word_table or WordEmbeddingTable.random(vocabs.words, dims.word_dim, rng)
        self.chars = CharEmbedder.create(len(vocabs.chars), dims.char_dim, dims.char_hidden, rng)
        in_dim = self.word_table.dim + self.chars.out_dim
        self.enc_fwd = LstmCellParams.create("encoder.fwd", in_dim, dims.encoder_hidden, "shared", rng)
        self.enc_bwd = LstmCellParams.create("encoder.bwd", in_dim, dims.encoder_hidden, "shared", rng)
        self.decoders = {
            "classification": ClassificationDecoder.create(
                "classification", CLASS_LABELS, dims.encoder_hidden, dims.attn_dim,
                "task_classification", rng),
        }
        for task in ("adr", "indication"):
            self.decoders[task] = LabelingDecoder.create(
                task, vocabs.tags[TASK_KIND[task]], dims.encoder_hidden, dims.attn_dim,
                dims.tag_dim, TASK_GROUPS[task], rng, coverage=dims.use_coverage,
                coverage_window=dims.coverage_window)

    # -- parameters --------------------------------------------------------

    def params(self) -> list:
        ps = [self.word_table.table] + self.chars.params() + self.enc_fwd.params() + self.enc_bwd.params()
        for task in TASKS:
            ps.extend(self.decoders[task].params())
        return ps

    def named_params(self) -> dict:
        return {p.name: p for p in self.params()}

    def params_in(self, group: str) -> list:
        return [p for p in self.params() if p.group == group]

    def trainable_params(self) -> list:
        return [p for p in self.params()
                if self.word_table.trainable or p is not self.word_table.table]

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    # -- forward -----------------------------------------------------------

    def encode(self, tokens, dropout_rate: float = 0.0, rng: Rng = None) -> EncoderStates:
        mask = None
        if dropout_rate > 0.0:
            width = self.word_table.dim + self.chars.out_dim
            mask = dropout_mask((len(tokens), width), dropout_rate, rng, self.dtype)
        emb = embed_sequence(tokens, self.word_table, self.chars, self.vocabs.words,
                             self.vocabs.chars, mask)
        return encode(emb, self.enc_fwd, self.enc_bwd)

    def _dropout(self, rate: float, rng: Rng):
        if rate <= 0.0:
            return None
        return lambda t: mul(t, dropout_mask(t.shape, rate, rng, self.dtype))

    def tag_distributions(self, task: str, tokens, gold=None, dropout_rate: float = 0.0,
                          rng: Rng = None, H: EncoderStates = None):
        """Per-token tag distributions; teacher-forced when ``gold`` tag strings are given."""
        decoder = self.decoders[task]
        if H is None:
            H = self.encode(tokens, dropout_rate, rng)
        gold_idx = None if gold is None else [decoder.tags.index(g) for g in gold]
        return run_labeling(decoder, H, gold_idx, self._dropout(dropout_rate, rng))

    def class_distribution(self, tokens, dropout_rate: float = 0.0, rng: Rng = None,
                           H: EncoderStates = None):
        if H is None:
            H = self.encode(tokens, dropout_rate, rng)
        return classify(self.decoders["classification"], H, self._dropout(dropout_rate, rng))

    @property
    def dtype(self):
        return self.word_table.table.value.dtype

    def cast(self, dtype) -> "MultiTaskModel":
        for p in self.params():
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        return self


def build_model(vocabs: Vocabularies, dims: ModelDims, seed: int,
                word_table: WordEmbeddingTable = None) -> MultiTaskModel:
    model = MultiTaskModel(vocabs, dims, Rng(seed), word_table)
    return model.cast(default_dtype())
