"""Command-line entry point: ``train``, ``evaluate``, ``predict`` and ``attention``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a
configuration or usage error. Every config key can be set from a JSON file
(``--config``) and overridden by a same-named flag.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import KEYS, Config, load_config
from .data import (ParseError, build_vocabularies, parse_classification_file,
                   parse_tagging_file, split_dataset, write_classification_file,
                   write_tagging_file)
from .embedding import EmbeddingFormatError, load_pretrained_embeddings
from .evaluation import evaluate_model, export_attention, predict_class, predict_tags, report_document
from .model import TASK_KIND, TASKS, build_model
from .numerics import ArgumentError, Rng, set_default_dtype
from .training import (CheckpointError, CheckpointShapeError, ConfigError, checkpoint_load,
                       checkpoint_save, fit)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
TASK_PATH_KEY = {"classification": "classification", "adr": "adr", "indication": "indication"}


class UsageError(Exception):
    pass


def _parse_task_file(task: str, path, require_tags: bool = True) -> list:
    if task == "classification":
        return parse_classification_file(path)
    return parse_tagging_file(path, TASK_KIND[task], require_tags)


def _write_task_file(task: str, path, examples) -> None:
    if task == "classification":
        write_classification_file(path, examples)
    else:
        write_tagging_file(path, examples)


def _suffix(task: str) -> str:
    return "tsv" if task == "classification" else "conll"


def load_corpora(cfg: Config, tasks) -> dict:
    """Parse the corpus of every listed task; a missing path is a config error."""
    corpora = {}
    for task in tasks:
        path = getattr(cfg, TASK_PATH_KEY[task])
        if not path:
            raise ConfigError(f"task {task!r} is active but no {task} corpus path is set")
        if not Path(path).is_file():
            raise ConfigError(f"{task} corpus {path} does not exist")
        examples = _parse_task_file(task, path)
        if not examples:
            raise ConfigError(f"{task} corpus {path} holds no examples")
        corpora[task] = examples
    return corpora


def _checkpoint_path(cfg: Config) -> Path:
    return Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.output_dir) / "model.ckpt"


def run_train(cfg: Config, log=None) -> int:
    log = log or sys.stderr
    weights = cfg.weights()
    tasks = weights.active()
    corpora = load_corpora(cfg, tasks)
    if cfg.embeddings and not Path(cfg.embeddings).is_file():
        raise ConfigError(f"embedding file {cfg.embeddings} does not exist")
    set_default_dtype(np.float32 if cfg.precision32 else np.float64)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, dev = {}, {}
    for task, examples in corpora.items():
        if cfg.split:
            # same seed per corpus, so parallel ADR/Indication files split alike
            tr, dv, te = split_dataset(examples, rng=Rng(cfg.seed))
            split_dir = out / "splits"
            split_dir.mkdir(exist_ok=True)
            for name, part in (("train", tr), ("dev", dv), ("test", te)):
                _write_task_file(task, split_dir / f"{task}.{name}.{_suffix(task)}", part)
            if not dv:
                raise ConfigError(f"{task} corpus too small to hold out a dev split")
            train[task], dev[task] = tr, dv
        else:
            train[task] = dev[task] = examples

    vocabs = build_vocabularies((ex for exs in train.values() for ex in exs), cfg.min_count)
    word_table = None
    if cfg.embeddings:
        word_table = load_pretrained_embeddings(cfg.embeddings, vocabs.words,
                                                Rng(cfg.seed).spawn(), cfg.word_dim)
        print(f"pretrained embedding coverage {word_table.coverage:.4f}", file=log)
    model = build_model(vocabs, cfg.dims(), cfg.seed, word_table)
    model.word_table.trainable = not cfg.fixed_embeddings

    log_path = out / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def on_epoch(entry):
            log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
            log_fh.flush()
            losses = " ".join(f"{t}={v:.4f}" for t, v in entry["train_loss"].items())
            f1s = " ".join(f"{t}={v:.2f}" for t, v in entry["dev_f1"].items())
            print(f"epoch {entry['epoch']}: loss {losses} | dev f1 {f1s}", file=log)

        history = fit(model, train, dev, weights, cfg.train_settings(), on_epoch)
    ckpt = _checkpoint_path(cfg)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    checkpoint_save(model, ckpt, cfg.to_dict())
    best = max(h["dev_macro_f1"] for h in history)
    print(f"best dev macro-F1 {best:.2f}; checkpoint {ckpt}", file=log)
    return EXIT_OK


def _load_model(cfg: Config):
    ckpt = _checkpoint_path(cfg)
    if not ckpt.is_file():
        raise ConfigError(f"checkpoint {ckpt} does not exist")
    model = checkpoint_load(ckpt, cfg.dims() if cfg.dims_explicit() else None)
    set_default_dtype(model.dtype)
    return model


def run_evaluate(cfg: Config, out=None) -> int:
    out = out or sys.stdout
    tasks = [t for t in TASKS if getattr(cfg, TASK_PATH_KEY[t])]
    if not tasks:
        raise UsageError("evaluate needs at least one of --classification/--adr/--indication")
    corpora = load_corpora(cfg, tasks)
    model = _load_model(cfg)
    doc = report_document(evaluate_model(model, corpora, tasks))
    out.write(doc)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(doc, encoding="utf-8")
    return EXIT_OK


def _prediction_input(task: str, path) -> list:
    if task not in TASKS:
        raise UsageError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    if not Path(path).is_file():
        raise ConfigError(f"input {path} does not exist")
    examples = _parse_task_file(task, path, require_tags=False)
    if not examples:
        raise ConfigError(f"input {path} holds no examples")
    return examples


def run_predict(cfg: Config, task: str, input_path, output_path) -> int:
    examples = _prediction_input(task, input_path)
    model = _load_model(cfg)
    with open(output_path, "w", encoding="utf-8") as fh:
        if task == "classification":
            for ex in examples:
                label, p_adr = predict_class(model, ex.tokens)
                fh.write(f"{ex.id}\t{label}\t{p_adr:.4f}\n")
        else:
            blocks = []
            for ex in examples:
                tags = predict_tags(model, task, ex.tokens)
                blocks.append("".join(f"{tok}\t{tag}\n" for tok, tag in zip(ex.tokens, tags)))
            fh.write("\n".join(blocks))
    return EXIT_OK


def run_attention(cfg: Config, task: str, input_path, out_dir) -> int:
    examples = _prediction_input(task, input_path)
    model = _load_model(cfg)
    export_attention(model, task, examples, out_dir)
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    group = p.add_argument_group("config overrides")
    for name in KEYS:
        group.add_argument(f"--{name}", dest=f"cfg_{name}", metavar="VALUE", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtseqpv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_flags(sub.add_parser("train", help="train a model and write a checkpoint"))
    _add_config_flags(sub.add_parser("evaluate", help="report P/R/F1 of a checkpoint"))
    for name, what in (("predict", "write predicted labels or tags"),
                       ("attention", "export attention heatmaps as TSV")):
        p = sub.add_parser(name, help=what)
        _add_config_flags(p)
        p.add_argument("--task", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True,
                       help="output file" if name == "predict" else "output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "train":
            return run_train(cfg)
        if args.command == "evaluate":
            return run_evaluate(cfg)
        if args.command == "predict":
            return run_predict(cfg, args.task, args.input, args.output)
        return run_attention(cfg, args.task, args.input, args.output)
    except (ConfigError, UsageError, ParseError, EmbeddingFormatError, CheckpointShapeError,
            ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, OSError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
