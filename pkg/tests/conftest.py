import sys

import pytest

from latamr.corpus import GeneratorConfig, generate_corpus
from latamr.graph import parse_penman
from latamr.model import EncoderConfig, ParserModel, Vocabulary
from latamr.preprocess import Recategorizer, build_copy_dictionary, stub_annotate

# encoder sizes small enough for a training epoch to take well under a second
TINY_ENCODER = dict(
    word_dim=6, lemma_dim=4, pos_dim=3, ner_dim=3, cat_dim=3, concept_dim=5,
    sent_hidden=6, concept_hidden=4, rel_dim=5, root_dim=4, rel_layers=1, root_layers=1,
    freq_threshold=2,
)


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(GeneratorConfig(seed=0))


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(GeneratorConfig(seed=3, train=24, dev=6, test=6))


def split_xy(records):
    return [list(r.tokens) for r in records], [r.amr() for r in records], [r.alignment for r in records]


def build_instances(records, dropout=0.0, seed=0):
    """Model plus featurized training instances, built the way the estimator does."""
    tokens, graphs, aligns = split_xy(records)
    copy = build_copy_dictionary(zip(tokens, graphs))
    sentences = [stub_annotate(t, copy) for t in tokens]
    recats = Recategorizer().fit(graphs).transform(graphs)
    vocab = Vocabulary.build(sentences, recats, TINY_ENCODER["freq_threshold"])
    model = ParserModel(vocab, EncoderConfig(**TINY_ENCODER, dropout=dropout), seed=seed)
    return model, [model.featurize(s, r, a) for s, r, a in zip(sentences, recats, aligns)]


def graph(text):
    return parse_penman(text)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
