import numpy as np
import pytest

from mtseqpv.data import ClassificationExample, TaggingExample, build_vocabularies
from mtseqpv.model import ModelDims, build_model
from mtseqpv.numerics import set_default_dtype


@pytest.fixture(autouse=True)
def _float64_default():
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


def toy_corpus():
    """Two short examples per task, at most five tokens each."""
    cls = [ClassificationExample("c1", "i took pax bad".split(), "ADR"),
           ClassificationExample("c2", "no side fx".split(), "NotADR")]
    adr = [TaggingExample("a1", "my mood worse".split(), ["O", "ADR", "O"]),
           TaggingExample("a2", "my gut was sore so".split(), ["O", "ADR", "ADR", "ADR", "O"])]
    ind = [TaggingExample("i1", "for dep".split(), ["O", "IND"]),
           TaggingExample("i2", "pan att bad".split(), ["IND", "IND", "O"])]
    return {"classification": cls, "adr": adr, "indication": ind}


TOY_DIMS = ModelDims(word_dim=8, char_dim=3, char_hidden=4, encoder_hidden=6, attn_dim=6, tag_dim=2)


def toy_model(seed=1, dims=TOY_DIMS, data=None):
    data = data or toy_corpus()
    vocabs = build_vocabularies(ex for exs in data.values() for ex in exs)
    return build_model(vocabs, dims, seed), data


@pytest.fixture
def toy():
    return toy_model()


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
