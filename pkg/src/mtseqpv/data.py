"""Corpus formats, vocabularies, splitting and span extraction.

Two on-disk formats are supported, both UTF-8 and pre-tokenized:

* classification: ``id<TAB>label<TAB>space separated tokens`` per line,
  label in ``{ADR, NotADR}``;
* tagging: CoNLL-style ``token<TAB>tag`` lines with a blank line between
  posts; tags in ``{ADR, O}`` or ``{IND, O}`` depending on the task.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .numerics import ArgumentError, Rng

PAD = "<pad>"
UNK = "<unk>"
START_TAG = "<s>"
CLASS_LABELS = ("ADR", "NotADR")
TAG_ALPHABETS = {"ADR": ("O", "ADR"), "IND": ("O", "IND")}


class ParseError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


@dataclass
class ClassificationExample:
    id: str
    tokens: list
    label: str

    def __post_init__(self):
        if not self.tokens:
            raise ArgumentError(f"example {self.id!r} has no tokens")
        if self.label not in CLASS_LABELS:
            raise ArgumentError(f"example {self.id!r}: label {self.label!r} not in {CLASS_LABELS}")


@dataclass
class TaggingExample:
    id: str
    tokens: list
    tags: list

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ArgumentError(
                f"example {self.id!r}: {len(self.tokens)} tokens but {len(self.tags)} tags")


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    kind: str


@dataclass
class Vocab:
    """Token to index map with PAD at 0 and UNK at 1."""

    itos: list = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        if self.itos[:2] != [PAD, UNK]:
            raise ArgumentError("vocabulary must start with PAD, UNK")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ArgumentError("duplicate vocabulary entry")

    pad_index = 0
    unk_index = 1

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.unk_index)

    def indices(self, tokens: Iterable[str]) -> list:
        return [self.stoi.get(t, self.unk_index) for t in tokens]

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int = 1) -> "Vocab":
        kept = [t for t, c in counts.items() if c >= min_count and t not in (PAD, UNK)]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls([PAD, UNK] + kept)


@dataclass
class Vocabularies:
    words: Vocab
    chars: Vocab
    tags: dict  # task kind -> output tag alphabet, O first

    def to_dict(self) -> dict:
        return {"words": self.words.itos, "chars": self.chars.itos,
                "tags": {k: list(v) for k, v in self.tags.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabularies":
        return cls(Vocab(list(d["words"])), Vocab(list(d["chars"])),
                   {k: tuple(v) for k, v in d["tags"].items()})


def parse_classification_file(path) -> list:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no, "expected id<TAB>label<TAB>tokens")
            ex_id, label, text = parts
            if label not in CLASS_LABELS:
                raise ParseError(path, line_no, f"bad label {label!r}, expected ADR or NotADR")
            tokens = text.split()
            if not tokens:
                raise ParseError(path, line_no, "empty text")
            examples.append(ClassificationExample(ex_id, tokens, label))
    return examples


def parse_tagging_file(path, kind: str, require_tags: bool = True) -> list:
    """Read blank-line separated ``token<TAB>tag`` blocks.

    Example ids are ``<file stem>-<block number>``. With ``require_tags``
    false, lines holding only a token are accepted and tagged ``O`` (used
    for prediction input).
    """
    if kind not in TAG_ALPHABETS:
        raise ArgumentError(f"unknown tagging kind {kind!r}")
    alphabet = TAG_ALPHABETS[kind]
    stem = Path(path).stem
    examples, tokens, tags = [], [], []

    def flush():
        if tokens:
            examples.append(TaggingExample(f"{stem}-{len(examples) + 1}", list(tokens), list(tags)))
            tokens.clear()
            tags.clear()

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                flush()
                continue
            parts = line.split("\t")
            if len(parts) == 1 and not require_tags:
                parts = [parts[0], "O"]
            if len(parts) != 2 or not parts[0]:
                raise ParseError(path, line_no, "expected token<TAB>tag")
            token, tag = parts
            if tag not in alphabet:
                raise ParseError(path, line_no, f"tag {tag!r} not in {alphabet} for {kind} data")
            tokens.append(token)
            tags.append(tag)
    flush()
    return examples


def write_classification_file(path, examples: Sequence[ClassificationExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(f"{ex.id}\t{ex.label}\t{' '.join(ex.tokens)}\n")


def write_tagging_file(path, examples: Sequence[TaggingExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(
            "".join(f"{tok}\t{tag}\n" for tok, tag in zip(ex.tokens, ex.tags))
            for ex in examples))


def build_vocabularies(examples: Iterable, min_count: int = 1) -> Vocabularies:
    """Word and char vocabularies over the given (training) examples."""
    examples = list(examples)
    if not examples:
        raise ArgumentError("cannot build vocabularies from zero examples")
    words, chars = Counter(), Counter()
    for ex in examples:
        for tok in ex.tokens:
            words[tok] += 1
            chars.update(tok)
    return Vocabularies(Vocab.from_counts(words, min_count), Vocab.from_counts(chars, 1),
                        dict(TAG_ALPHABETS))


def split_dataset(examples: Sequence, ratios=(0.7, 0.15, 0.15), rng: Rng = None):
    """Shuffle under ``rng`` and cut into train/dev/test.

    Dev and test get ``floor(ratio * n)`` examples; the remainder goes to
    train.
    """
    if any(r < 0 for r in ratios):
        raise ArgumentError(f"negative split ratio in {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"split ratios must sum to 1, got {sum(ratios)}")
    n = len(examples)
    order = rng.permutation(n) if rng is not None else range(n)
    shuffled = [examples[i] for i in order]
    n_dev = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    n_train = n - n_dev - n_test
    return shuffled[:n_train], shuffled[n_train:n_train + n_dev], shuffled[n_train + n_dev:]


def spans_from_tags(tags: Sequence[str]) -> list:
    """Maximal runs of non-O tags as ``Span`` objects, left to right."""
    spans = []
    start = None
    for i, tag in enumerate(list(tags) + ["O"]):
        if start is not None and tag != tags[start]:
            spans.append(Span(start, i, tags[start]))
            start = None
        if start is None and tag != "O" and i < len(tags):
            start = i
    return spans


def extract_spans(example: TaggingExample) -> list:
    return spans_from_tags(example.tags)
