"""Losses, optimisation, multi-task scheduling and checkpoints."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import CLASS_LABELS, Vocabularies
from .model import TASKS, ModelDims, MultiTaskModel
from .numerics import (Rng, Tensor, clip, getitem, log, no_grad, scale, stack, sub,
                       tensor_sum)

PROB_FLOOR = 1e-12
TASK_ORDER = ("adr", "indication", "classification")


class ConfigError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class TaskWeights:
    classification: float = 0.1
    adr: float = 1.0
    indication: float = 1.0

    def __post_init__(self):
        vals = self.as_dict().values()
        if any(w < 0 or not math.isfinite(w) for w in vals):
            raise ConfigError(f"task weights must be finite and non-negative: {self}")
        if not any(w > 0 for w in vals):
            raise ConfigError("at least one task weight must be positive")

    def as_dict(self) -> dict:
        return {"classification": self.classification, "adr": self.adr,
                "indication": self.indication}

    def active(self) -> list:
        return [t for t in TASKS if self.as_dict()[t] > 0]


# ---------------------------------------------------------------------------
# losses


def classification_loss(dist: Tensor, label: str) -> Tensor:
    """Binary cross-entropy on p(ADR), clamped away from 0 and 1."""
    p_adr = clip(getitem(dist, CLASS_LABELS.index("ADR")), PROB_FLOOR, 1.0 - PROB_FLOOR)
    if label == "ADR":
        return scale(log(p_adr), -1.0)
    return scale(log(sub(1.0, p_adr)), -1.0)


def tagging_loss(dists, gold) -> Tensor:
    """Mean negative log-likelihood of the gold tag indices."""
    if len(dists) != len(gold):
        raise ValueError(f"{len(dists)} distributions for {len(gold)} gold tags")
    picked = stack([getitem(d, g) for d, g in zip(dists, gold)])
    return scale(tensor_sum(log(clip(picked, PROB_FLOOR, 1.0))), -1.0 / len(gold))


def total_loss(losses: dict, weights: TaskWeights):
    """Sum of w_t * L_t over tasks with a positive weight."""
    w = weights.as_dict()
    total = None
    for task in TASKS:
        if w[task] == 0 or task not in losses:
            continue
        term = losses[task] * w[task] if not isinstance(losses[task], Tensor) \
            else scale(losses[task], w[task])
        total = term if total is None else total + term
    return total


def example_loss(model: MultiTaskModel, task: str, example, dropout: float = 0.0,
                 rng: Rng = None) -> Tensor:
    if task == "classification":
        dist, _ = model.class_distribution(example.tokens, dropout, rng)
        return classification_loss(dist, example.label)
    decoder = model.decoders[task]
    dists, _, _ = model.tag_distributions(task, example.tokens, example.tags, dropout, rng)
    return tagging_loss(dists, [decoder.tags.index(t) for t in example.tags])


def batch_loss(model: MultiTaskModel, task: str, examples, dropout: float = 0.0,
               rng: Rng = None) -> Tensor:
    """Mean per-example loss over a batch, as one graph."""
    terms = [example_loss(model, task, ex, dropout, rng) for ex in examples]
    return scale(tensor_sum(stack(terms)), 1.0 / len(terms))


def joint_loss(model: MultiTaskModel, datasets: dict, weights: TaskWeights) -> Tensor:
    """Weighted total loss over whole per-task datasets, dropout off."""
    losses = {t: batch_loss(model, t, exs) for t, exs in datasets.items() if exs}
    return total_loss(losses, weights)



def task_gradients(model: MultiTaskModel, task: str, examples) -> dict:
    """Gradient of one task's mean loss (dropout off) for every parameter,
    computed in fresh buffers; model gradients are left zeroed."""
    model.zero_grad()
    batch_loss(model, task, examples).backward()
    grads = {p.name: p.grad for p in model.params()}
    model.zero_grad()
    return grads


def joint_gradients(model: MultiTaskModel, datasets: dict, weights: TaskWeights) -> dict:
    """Gradient of the weighted total loss, assembled by linearity.

    Each active task gets its own backward pass; the results are combined as
    ``sum_t w_t * grad_t`` in the fixed task order, so the identity with
    separately computed per-task gradients holds bit for bit. A single
    backward through the summed graph agrees to rounding only.
    """
    w = weights.as_dict()
    total = {p.name: np.zeros_like(p.value) for p in model.params()}
    for task in TASKS:
        if w[task] == 0 or not datasets.get(task):
            continue
        for name, g in task_gradients(model, task, datasets[task]).items():
            total[name] = total[name] + w[task] * g
    return total

# ---------------------------------------------------------------------------
# optimisation


def clip_grad_norm(params, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params))
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad = p.grad * factor
    return norm


@dataclass
class AdamState:
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(params, state: AdamState) -> None:
    """One bias-corrected Adam step from ``p.grad``; gradients are zeroed after.

    The whole step is refused if any gradient holds a NaN or infinity.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(f"non-finite gradient in {p.name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[p.name] + (1.0 - state.beta2) * g * g
        state.m[p.name], state.v[p.name] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.value -= update.astype(p.value.dtype)
        p.zero_grad()


# ---------------------------------------------------------------------------
# scheduling


@dataclass
class TrainSettings:
    batch_size: int = 16
    dropout: float = 0.5
    lr: float = 0.1
    clip: float = 5.0
    max_epochs: int = 200
    patience: int = 10
    seed: int = 13
    target_f1: Optional[float] = None  # stop once dev macro-F1 reaches this


def make_batches(datasets: dict, weights: TaskWeights, batch_size: int, rng: Rng) -> list:
    """Shuffle each active task and interleave its batches round-robin.

    Order within a round is ADR tagging, Indication tagging, classification.
    """
    queues = {}
    for task in TASK_ORDER:
        if weights.as_dict()[task] == 0:
            continue
        exs = datasets.get(task) or []
        if not exs:
            raise ConfigError(f"no training examples for active task {task!r}")
        order = rng.permutation(len(exs))
        queues[task] = [[exs[i] for i in order[k:k + batch_size]]
                        for k in range(0, len(exs), batch_size)]
    batches = []
    for k in range(max(len(q) for q in queues.values())):
        for task in TASK_ORDER:
            if task in queues and k < len(queues[task]):
                batches.append((task, queues[task][k]))
    return batches


def train_epoch(model: MultiTaskModel, datasets: dict, weights: TaskWeights,
                settings: TrainSettings, optimizer: AdamState, rng: Rng) -> dict:
    """One pass over every active task; returns the mean per-example loss per task."""
    params = model.trainable_params()
    w = weights.as_dict()
    sums = {t: 0.0 for t in weights.active()}
    counts = {t: 0 for t in weights.active()}
    for task, batch in make_batches(datasets, weights, settings.batch_size, rng):
        model.zero_grad()
        for ex in batch:
            loss = example_loss(model, task, ex, settings.dropout, rng)
            scale(loss, w[task] / len(batch)).backward()
            sums[task] += float(loss.value)
            counts[task] += 1
        clip_grad_norm(params, settings.clip)
        adam_update(params, optimizer)
    return {t: sums[t] / counts[t] for t in sums}


def fit(model: MultiTaskModel, train: dict, dev: dict, weights: TaskWeights,
        settings: TrainSettings, on_epoch=None) -> list:
    """Train with early stopping on dev macro-F1 over the active tasks.

    The parameters of the best epoch are restored before returning the
    per-epoch log (a list of dicts).
    """
    from .evaluation import evaluate_model

    rng = Rng(settings.seed)
    optimizer = AdamState(lr=settings.lr)
    history = []
    best, best_epoch, best_values = -1.0, 0, None
    for epoch in range(1, settings.max_epochs + 1):
        losses = train_epoch(model, train, weights, settings, optimizer, rng)
        report = evaluate_model(model, dev, weights.active())
        dev_f1 = {t: report[t].f1 for t in weights.active()}
        macro = sum(dev_f1.values()) / len(dev_f1)
        entry = {"epoch": epoch, "train_loss": losses, "dev_f1": dev_f1, "dev_macro_f1": macro}
        history.append(entry)
        if on_epoch:
            on_epoch(entry)
        if macro > best:
            best, best_epoch = macro, epoch
            best_values = {p.name: p.value.copy() for p in model.params()}
        if settings.target_f1 is not None and macro >= settings.target_f1:
            break
        if epoch - best_epoch >= settings.patience:
            break
    if best_values is not None:
        for p in model.params():
            p.value = best_values[p.name]
    return history


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"MTSEQPV1"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class NotACheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def checkpoint_save(model: MultiTaskModel, path, config: dict = None) -> None:
    """Write magic, a length-prefixed JSON header, then the raw tensors.

    Tensors are little-endian; float32 models store 4-byte floats and
    float64 models 8-byte floats (recorded per tensor in the manifest).
    """
    params = model.params()
    manifest = [{"name": p.name, "shape": list(p.value.shape), "group": p.group,
                 "dtype": "<f4" if p.value.dtype == np.float32 else "<f8"} for p in params]
    meta = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "dims": model.dims.to_dict(),
        "word_embeddings_trainable": model.word_table.trainable,
        "vocabs": model.vocabs.to_dict(),
        "tensors": manifest,
    }
    header = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for p, entry in zip(params, manifest):
            fh.write(np.ascontiguousarray(p.value, dtype=entry["dtype"]).tobytes())


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path) -> dict:
    if fh.read(len(MAGIC)) != MAGIC:
        raise NotACheckpointError(f"{path} is not a checkpoint")
    raw_len = fh.read(8)
    if len(raw_len) < 8:
        raise TruncatedCheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", raw_len)
    raw = fh.read(n)
    if len(raw) < n:
        raise TruncatedCheckpointError(f"{path}: truncated header")
    meta = json.loads(raw.decode("utf-8"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {meta.get('format_version')}, expected {FORMAT_VERSION}")
    return meta


def checkpoint_load(path, dims: ModelDims = None) -> MultiTaskModel:
    """Rebuild a model from a checkpoint.

    When ``dims`` is given the stored tensors must fit a model of those
    dimensions, otherwise the stored dimensions are used.
    """
    with open(path, "rb") as fh:
        meta = _read_header(fh, path)
        vocabs = Vocabularies.from_dict(meta["vocabs"])
        stored_dims = ModelDims(**meta["dims"])
        model = MultiTaskModel(vocabs, dims or stored_dims, Rng(0))
        model.word_table.trainable = meta.get("word_embeddings_trainable", True)
        named = model.named_params()
        for entry in meta["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in named:
                raise CheckpointShapeError(f"{path}: tensor {name} has no place in the model")
            p = named.pop(name)
            if p.value.shape != shape:
                raise CheckpointShapeError(
                    f"{path}: tensor {name} stored as {shape}, model expects {p.value.shape}")
            dt = np.dtype(entry["dtype"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            raw = fh.read(nbytes)
            if len(raw) < nbytes:
                raise TruncatedCheckpointError(f"{path}: payload ends inside tensor {name}")
            p.value = np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
            p.zero_grad()
        if named:
            raise CheckpointShapeError(f"{path}: missing tensors {sorted(named)}")
    return model


def evaluation_loss(model: MultiTaskModel, datasets: dict, weights: TaskWeights) -> float:
    with no_grad():
        return float(joint_loss(model, datasets, weights).value)
