import dataclasses

import numpy as np
import pytest

from latamr.graph import Concept, parse_penman
from latamr.model import EncoderConfig, ParserModel, Vocabulary, read_config, write_config
from latamr.oracles import random_tiny_model
from latamr.preprocess import recategorize, stub_annotate
from latamr.tensor import ShapeError, logsumexp, tensor

TINY = dict(
    word_dim=3, lemma_dim=2, pos_dim=2, ner_dim=2, cat_dim=2, concept_dim=3,
    sent_hidden=4, concept_hidden=3, rel_dim=3, root_dim=3, rel_layers=1, root_layers=1, dropout=0.0,
)

DATA = [
    ("the boy must not go .", "(o / obligate-01 :ARG2 (g / go-02 :ARG0 (b / boy) :polarity -))"),
    ("the boy wants to go .", "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))"),
    ("a girl sleeps .", "(s / sleep-01 :ARG0 (g / girl))"),
]


def build(config=None, seed=0):
    sents = [stub_annotate(t.split()) for t, _ in DATA]
    recats = [recategorize(parse_penman(g)) for _, g in DATA]
    vocab = Vocabulary.build(sents, recats, freq_threshold=1)
    model = ParserModel(vocab, config or EncoderConfig(**TINY), seed=seed)
    insts = [model.featurize(s, r) for s, r in zip(sents, recats)]
    return model, insts


def test_config_invariants():
    with pytest.raises(ValueError):
        EncoderConfig(sent_hidden=0)
    with pytest.raises(ValueError):
        EncoderConfig(dropout=1.0)
    c = EncoderConfig()
    assert (c.d, c.d_g, c.rel_dim, c.root_dim) == (512, 200, 200, 200)


def test_config_file_round_trip(tmp_path):
    cfg = EncoderConfig.desk(dropout=0.1, one_pass=True)
    write_config(cfg, tmp_path / "enc.cfg")
    assert read_config(tmp_path / "enc.cfg", EncoderConfig) == cfg
    assert read_config("sent_hidden = 8  # comment\n\n", EncoderConfig).sent_hidden == 8
    with pytest.raises(ValueError, match="unknown"):
        read_config("bogus = 1\n", EncoderConfig)
    with pytest.raises(ValueError, match="line 1"):
        read_config("no equals sign here\n", EncoderConfig)


def test_single_word_state_has_full_width():
    sent = stub_annotate(["boy"])
    vocab = Vocabulary.build([sent], [recategorize(parse_penman("(b / boy)"))], freq_threshold=1)
    model = ParserModel(vocab, EncoderConfig(dropout=0.0))
    inst = model.featurize(sent, concepts=[Concept("boy")])
    h = model.encode_sentence("concept", inst)
    assert h.shape == (1, 1, 512)
    assert np.all(np.isfinite(h.data))


def test_flag_sensitivity_and_direction():
    model, insts = build()
    inst = insts[0]
    zero = model.encode_sentence("rel", inst, flags=np.zeros((1, inst.N))).data
    hot = np.zeros((1, inst.N))
    hot[0, 2] = 1.0
    flagged = model.encode_sentence("rel", inst, flags=hot).data
    assert not np.allclose(zero, flagged)
    with pytest.raises(ShapeError):
        model.encode_sentence("rel", inst, flags=np.zeros((1, inst.N + 1)))
    with pytest.raises(ValueError):
        model.encode_sentence("concept", inst, flags=np.zeros((1, inst.N)))
    rev = model.featurize(stub_annotate(list(reversed(inst.sentence.tokens))), concepts=inst.concepts)
    h = model.encode_sentence("concept", inst).data[0]
    hr = model.encode_sentence("concept", rev).data[0]
    assert not np.allclose(h[:, : model.config.sent_hidden], hr[::-1, : model.config.sent_hidden])


def test_concept_distributions_normalise():
    model, insts = build()
    inst = insts[1]
    h = model.encode_sentence("concept", inst)[0]
    cat_lp, opts, logz = model.concept_tables(h)
    np.testing.assert_allclose(np.exp(cat_lp.data).sum(axis=1), 1.0, atol=1e-12)
    for t in range(len(model.vocab.categories)):
        inner = logsumexp(opts + tensor(model.cat_mask[t]), axis=-1).data - logz.data[:, t]
        np.testing.assert_allclose(inner, 0.0, atol=1e-12)
    L = model.concept_logprobs(inst).data
    assert L.shape == (inst.N, inst.N)
    assert np.all(L <= 1e-12)


def test_no_copy_path_without_lexical_match():
    model, insts = build()
    inst = insts[0]
    slot = [c.label for c in inst.concepts].index("obligate")
    must = list(inst.sentence.tokens).index("must")
    mask = inst.extra["concept_mask"]
    assert np.isneginf(mask[slot, must, -1])
    boy = [c.label for c in inst.concepts].index("boy")
    word = list(inst.sentence.tokens).index("boy")
    if "concept" in model.vocab.copyable:
        assert mask[boy, word, -1] == 0.0


def test_relation_distribution_and_asymmetry():
    model, insts = build(seed=3)
    inst = insts[1]
    a = np.eye(inst.N)
    lp = model.relation_logprobs(inst, a).data
    assert lp.shape == (len(inst.heads), len(model.vocab.relations))
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)
    pairs = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(inst.heads, inst.deps))}
    both = [(i, j) for (i, j) in pairs if (j, i) in pairs]
    assert both
    i, j = both[0]
    assert not np.allclose(lp[pairs[(i, j)]], lp[pairs[(j, i)]])


def test_relation_uses_both_endpoint_states():
    model, insts = build(seed=4)
    inst = insts[1]
    base = model.relation_logprobs(inst, np.eye(inst.N)).data
    emb = model.params["rel.emb.label"]
    saved = emb.data.copy()
    boy = model.vocab.node_labels["boy"]
    emb.data[boy] += 1.0
    moved = model.relation_logprobs(inst, np.eye(inst.N)).data
    emb.data[...] = saved
    labels = [c.label for c in inst.recat.nodes]
    touching = [k for k, (i, j) in enumerate(zip(inst.heads, inst.deps)) if "boy" in (labels[i], labels[j])]
    others = [k for k in range(len(base)) if k not in touching]
    assert not np.allclose(base[touching], moved[touching])
    np.testing.assert_allclose(base[others], moved[others])


def test_no_pairs_gives_none():
    model, _ = build()
    sent = stub_annotate("a girl sleeps .".split())
    inst = model.featurize(sent, recategorize(parse_penman("(g / girl)")))
    assert model.relation_logprobs(inst, np.eye(inst.N)) is None


def test_alignment_scores_bilinear():
    model, insts = build(seed=1)
    inst = insts[2]
    B = model.params["align.B"]
    phi = model.alignment_scores(inst).data
    assert phi.shape == (inst.N, inst.N)
    saved = B.data.copy()
    B.data *= 2.0
    np.testing.assert_allclose(model.alignment_scores(inst).data, 2 * phi, rtol=1e-12)
    B.data[...] = 0.0
    assert np.all(model.alignment_scores(inst).data == 0.0)
    B.data[...] = saved


def test_alignment_single_word():
    model, _ = build()
    inst = model.featurize(stub_annotate(["boy"]), concepts=[Concept("boy")])
    phi = model.alignment_scores(inst).data
    g = model.concept_states(inst).data[0]
    h = model.encode_sentence("align", inst).data[0, 0]
    assert phi.shape == (1, 1)
    assert phi[0, 0] == pytest.approx(g @ model.params["align.B"].data @ h, rel=1e-12)


def test_root_scores():
    model, insts = build(seed=2)
    single = model.featurize(stub_annotate(["boy"]), concepts=[Concept("boy")])
    logits = model.root_logits(single, np.eye(1)).data
    assert logits.shape == (1,)
    inst = insts[1]
    a = np.random.default_rng(0).dirichlet(np.ones(inst.N), size=inst.N)
    perm = [2, 0, 1]
    permuted = model.featurize(inst.sentence, concepts=[inst.concepts[k] for k in perm])
    base = model.root_logits(inst, a).data
    moved = model.root_logits(permuted, a[perm + list(range(3, inst.N))]).data
    np.testing.assert_allclose(moved, base[perm], rtol=1e-12)


def test_vocabulary_round_trip():
    model, _ = build()
    v = model.vocab
    back = Vocabulary.from_lines(v.to_lines())
    for name in ("words", "lemmas", "pos", "ner", "categories", "labels", "node_labels", "node_categories", "relations"):
        assert getattr(back, name).items == getattr(v, name).items
    assert back.frequent == v.frequent and back.copyable == v.copyable
    assert v.words["never-seen"] == v.words["<unk>"]


def test_state_dict_checks_shapes():
    model, _ = build()
    state = model.state_dict()
    model.load_state_dict(state)
    bad = dict(state)
    bad["align.B"] = np.zeros((1, 1))
    with pytest.raises(ShapeError):
        model.load_state_dict(bad)
    del bad["align.B"]
    with pytest.raises(KeyError):
        model.load_state_dict(bad)


def test_tiny_model_generator_is_deterministic():
    (m1, i1), (m2, i2) = random_tiny_model(5), random_tiny_model(5)
    assert i1.N == i2.N and i1.N <= 4
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k].data, m2.params[k].data)


def test_desk_preset_is_smaller():
    desk, full = EncoderConfig.desk(), EncoderConfig()
    smaller = [f.name for f in dataclasses.fields(full) if isinstance(getattr(full, f.name), int)
               and not isinstance(getattr(full, f.name), bool) and getattr(desk, f.name) < getattr(full, f.name)]
    assert "sent_hidden" in smaller and "word_dim" in smaller
