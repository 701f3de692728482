import pytest
from hypothesis import given, settings, strategies as st

from mtseqpv.data import (PAD, UNK, ClassificationExample, ParseError, Span, TaggingExample,
                          build_vocabularies, extract_spans, parse_classification_file,
                          parse_tagging_file, spans_from_tags, split_dataset,
                          write_classification_file, write_tagging_file)
from mtseqpv.numerics import ArgumentError, Rng


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_classification_line(tmp_path):
    f = _write(tmp_path / "c.tsv", "t1\tADR\tCymbalta , my mood has worsened\n")
    [ex] = parse_classification_file(f)
    assert ex.id == "t1" and ex.label == "ADR" and len(ex.tokens) == 6


def test_empty_classification_file(tmp_path):
    assert parse_classification_file(_write(tmp_path / "c.tsv", "")) == []


def test_bad_label_names_line(tmp_path):
    f = _write(tmp_path / "c.tsv", "a\tADR\tx y\nb\t2\tz\n")
    with pytest.raises(ParseError, match=":2:") as err:
        parse_classification_file(f)
    assert err.value.line_no == 2


@pytest.mark.parametrize("line", ["a\tADR", "a\tADR\t  ", "a\tADR\tx\ty"])
def test_malformed_classification_lines(tmp_path, line):
    with pytest.raises(ParseError):
        parse_classification_file(_write(tmp_path / "c.tsv", line + "\n"))


def test_tagging_block(tmp_path):
    rows = [("Cymbalta", "O"), (",", "O"), ("my", "O"), ("mood", "ADR"), ("has", "O"), ("worsened", "O")]
    f = _write(tmp_path / "t.conll", "".join(f"{a}\t{b}\n" for a, b in rows))
    [ex] = parse_tagging_file(f, "ADR")
    assert ex.tags == ["O", "O", "O", "ADR", "O", "O"] and ex.id == "t-1"


def test_tagging_single_token_and_multiple_blank_lines(tmp_path):
    f = _write(tmp_path / "t.conll", "\n\nx\tO\n\n\n\ny\tIND\nz\tO\n\n")
    exs = parse_tagging_file(f, "IND")
    assert [e.tokens for e in exs] == [["x"], ["y", "z"]]


def test_tag_from_other_alphabet_is_rejected(tmp_path):
    f = _write(tmp_path / "t.conll", "a\tO\nb\tIND\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_tagging_file(f, "ADR")


def test_untagged_input_allowed_when_tags_optional(tmp_path):
    f = _write(tmp_path / "t.conll", "a\nb\tADR\n")
    with pytest.raises(ParseError):
        parse_tagging_file(f, "ADR")
    [ex] = parse_tagging_file(f, "ADR", require_tags=False)
    assert ex.tags == ["O", "ADR"]


def test_example_invariants():
    with pytest.raises(ArgumentError):
        TaggingExample("x", ["a"], ["O", "O"])
    with pytest.raises(ArgumentError):
        ClassificationExample("x", [], "ADR")


def test_vocab_min_count_and_chars():
    exs = [TaggingExample("1", ["a", "b"], ["O", "O"]), TaggingExample("2", ["a"], ["O"])]
    v = build_vocabularies(exs, min_count=2)
    assert "a" in v.words and "b" not in v.words
    assert v.words.index("b") == v.words.unk_index
    assert v.words.itos[:2] == [PAD, UNK]
    chars = build_vocabularies([TaggingExample("1", ["ab"], ["O"])]).chars
    assert chars.itos == [PAD, UNK, "a", "b"]


def test_vocab_order_is_deterministic():
    exs = [ClassificationExample(str(i), "z y x y z z".split(), "ADR") for i in range(3)]
    v1, v2 = build_vocabularies(exs), build_vocabularies(list(reversed(exs)))
    assert v1.words.itos == v2.words.itos == [PAD, UNK, "z", "y", "x"]
    with pytest.raises(ArgumentError):
        build_vocabularies([])


@pytest.mark.parametrize("n,sizes", [(100, (70, 15, 15)), (10, (8, 1, 1)), (1, (1, 0, 0))])
def test_split_sizes(n, sizes):
    parts = split_dataset(list(range(n)), rng=Rng(0))
    assert tuple(map(len, parts)) == sizes
    assert sorted(sum(parts, [])) == list(range(n))


def test_split_is_seeded():
    assert split_dataset(list(range(50)), rng=Rng(3)) == split_dataset(list(range(50)), rng=Rng(3))
    with pytest.raises(ArgumentError):
        split_dataset([1, 2], ratios=(0.5, 0.6, 0.1))


def test_spans():
    assert [(s.start, s.end) for s in spans_from_tags("O O ADR ADR O ADR".split())] == [(2, 4), (5, 6)]
    assert spans_from_tags(["O"] * 4) == []
    tokens = ("@user3 I took a vyvanse and drank a 12oz redbull this morning . "
              "My heart was hurting a lil bit haha").split()
    tags = ["ADR" if 14 <= i <= 16 else "O" for i in range(len(tokens))]
    assert tokens[14:17] == ["heart", "was", "hurting"]
    assert extract_spans(TaggingExample("t5", tokens, tags)) == [Span(14, 17, "ADR")]


token = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Zs", "Cc", "Zl", "Zp")),
                min_size=1, max_size=6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(token, st.sampled_from(["O", "IND"])), min_size=1, max_size=8),
                min_size=1, max_size=5))
def test_tagging_round_trip(tmp_path_factory, blocks):
    path = tmp_path_factory.mktemp("rt") / "r.conll"
    exs = [TaggingExample(f"r-{i + 1}", [t for t, _ in b], [g for _, g in b]) for i, b in enumerate(blocks)]
    write_tagging_file(path, exs)
    assert parse_tagging_file(path, "IND") == exs


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["ADR", "NotADR"]), st.lists(token, min_size=1, max_size=6)),
                min_size=0, max_size=5))
def test_classification_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rt") / "c.tsv"
    exs = [ClassificationExample(f"id{i}", toks, lab) for i, (lab, toks) in enumerate(rows)]
    write_classification_file(path, exs)
    assert parse_classification_file(path) == exs
