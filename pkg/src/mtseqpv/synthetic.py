"""Small generated corpora with planted ADR and Indication spans.

Each post mentions a drug, usually an indication and sometimes an adverse
reaction. Spans are either single tokens or fixed three-token phrases. The
same post text backs the classification, ADR-tagging and Indication-tagging
files, as in the original annotated collection.

Run ``python -m mtseqpv.synthetic OUT_DIR [--posts N] [--seed S]`` to write
``classification.tsv``, ``adr.conll`` and ``indication.conll``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from .data import (ClassificationExample, TaggingExample, write_classification_file,
                   write_tagging_file)
from .numerics import Rng

DRUGS = ("paxil", "effexor", "cymbalta", "zoloft")
ADR_SINGLE = ("insomnia", "nausea", "dizziness", "headaches")
ADR_PHRASE = (("gain", "unwanted", "pounds"), ("heart", "was", "racing"),
              ("sleeping", "15", "hrs"))
IND_SINGLE = ("depression", "anxiety", "migraines")
IND_PHRASE = (("chronic", "back", "pain"), ("severe", "panic", "attacks"))

# Templates: {d} drug, {i} indication, {a} adverse reaction.
ADR_TEMPLATES = (
    "i took {d} for {i} and now {a}",
    "{d} gave me {a} but it helps my {i}",
    "on {d} for {i} , {a} all week",
    "{a} since starting {d}",
)
CLEAN_TEMPLATES = (
    "{d} works well for my {i}",
    "no side effects from {d} so far",
    "my {i} is better with {d}",
    "started {d} for {i} today",
)
FILLERS = ("really", "so", "lol", "ugh")


def _mention(rng: Rng, singles, phrases, phrase_rate: float):
    if rng.random() < phrase_rate:
        return list(phrases[int(rng.integers(0, len(phrases)))])
    return [singles[int(rng.integers(0, len(singles)))]]


def _render(template: str, parts: dict):
    tokens, adr, ind = [], [], []
    for word in template.split():
        if word in ("{d}", "{i}", "{a}"):
            span = parts[word[1]]
            tokens += span
            adr += ["ADR" if word == "{a}" else "O"] * len(span)
            ind += ["IND" if word == "{i}" else "O"] * len(span)
        else:
            tokens.append(word)
            adr.append("O")
            ind.append("O")
    return tokens, adr, ind


def generate_posts(n_posts: int, seed: int, phrase_rate: float = 0.5, filler_rate: float = 0.0):
    """Return ``(classification, adr, indication)`` example lists of ``n_posts`` each.

    Half of the posts (rounded up) report an adverse reaction. With
    ``filler_rate`` > 0 a filler word is sometimes inserted after a span,
    which varies the post lengths.
    """
    rng = Rng(seed)
    cls, adr_exs, ind_exs = [], [], []
    for k in range(n_posts):
        has_adr = k % 2 == 0
        templates = ADR_TEMPLATES if has_adr else CLEAN_TEMPLATES
        template = templates[int(rng.integers(0, len(templates)))]
        parts = {
            "d": [DRUGS[int(rng.integers(0, len(DRUGS)))]],
            "i": _mention(rng, IND_SINGLE, IND_PHRASE, phrase_rate),
            "a": _mention(rng, ADR_SINGLE, ADR_PHRASE, phrase_rate),
        }
        tokens, adr, ind = _render(template, parts)
        if filler_rate and rng.random() < filler_rate:
            at = int(rng.integers(0, len(tokens) + 1))
            tokens.insert(at, FILLERS[int(rng.integers(0, len(FILLERS)))])
            adr.insert(at, "O")
            ind.insert(at, "O")
        post_id = f"post{k + 1:03d}"
        cls.append(ClassificationExample(post_id, tokens, "ADR" if has_adr else "NotADR"))
        adr_exs.append(TaggingExample(post_id, tokens, adr))
        ind_exs.append(TaggingExample(post_id, tokens, ind))
    return cls, adr_exs, ind_exs


def bundled_corpus():
    """The 20-post corpus shipped for the overfit check."""
    return generate_posts(20, seed=2017, phrase_rate=0.5)


def phrasal_corpus(n_posts: int = 200, seed: int = 7):
    """Larger corpus where most spans are three-token phrases."""
    return generate_posts(n_posts, seed=seed, phrase_rate=0.8, filler_rate=0.5)


def vocabulary(*example_lists) -> set:
    return {tok for exs in example_lists for ex in exs for tok in ex.tokens}


def write_corpus(out_dir, corpus) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cls, adr, ind = corpus
    paths = {"classification": out_dir / "classification.tsv",
             "adr": out_dir / "adr.conll", "indication": out_dir / "indication.conll"}
    write_classification_file(paths["classification"], cls)
    write_tagging_file(paths["adr"], adr)
    write_tagging_file(paths["indication"], ind)
    return paths


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="write a synthetic ADR/Indication corpus")
    ap.add_argument("out_dir")
    ap.add_argument("--posts", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2017)
    ap.add_argument("--phrase-rate", type=float, default=0.5)
    ap.add_argument("--filler-rate", type=float, default=0.0)
    args = ap.parse_args(argv)
    write_corpus(args.out_dir, generate_posts(args.posts, args.seed, args.phrase_rate,
                                              args.filler_rate))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
