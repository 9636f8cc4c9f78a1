import numpy as np
import pytest
from conftest import TINY_ENCODER, split_xy
from sklearn.base import clone

from latamr import LatentAlignmentParser
from latamr.graph import AmrGraph
from latamr.tensor import load_parameters


@pytest.fixture(scope="module")
def fitted(small_corpus):
    X, y, al = split_xy(small_corpus["train"])
    Xd, yd, ad = split_xy(small_corpus["dev"])
    p = LatentAlignmentParser(seed=1, epochs=2, overrides=TINY_ENCODER)
    return p.fit(X, y, alignments=al, X_dev=Xd, y_dev=yd, dev_alignments=ad)


def test_params_round_trip():
    p = LatentAlignmentParser(mode="two_stage", epochs=3, overrides={"sent_hidden": 4})
    q = clone(p)
    assert q.get_params() == p.get_params()
    q.set_params(alpha=1.0)
    assert q.alpha == 1.0 and p.alpha == 0.5


def test_configuration_errors(small_corpus):
    X, y, _ = split_xy(small_corpus["train"][:10])
    with pytest.raises(ValueError, match="preset"):
        LatentAlignmentParser(preset="huge").fit(X, y)
    with pytest.raises(ValueError, match="unknown configuration field"):
        LatentAlignmentParser(overrides={"nonsense": 1}).fit(X, y)
    with pytest.raises(ValueError, match="gold alignments"):
        LatentAlignmentParser(mode="fixed_align_baseline").fit(X, y)
    with pytest.raises(ValueError):
        LatentAlignmentParser().fit(X, y[:-1])
    with pytest.raises(ValueError, match="development set"):
        LatentAlignmentParser(validation_fraction=0.01).fit(X, y)


def test_unfitted_parser_refuses_to_predict():
    with pytest.raises(RuntimeError, match="not been fitted"):
        LatentAlignmentParser().predict([["a", "boy"]])


def test_fit_report_and_predictions(fitted, small_corpus):
    assert len(fitted.report_.epochs) == 2
    assert fitted.report_.best_epoch in (1, 2)
    X, y, al = split_xy(small_corpus["test"])
    graphs = fitted.predict(X)
    assert len(graphs) == len(X) and all(isinstance(g, AmrGraph) for g in graphs)
    scores = fitted.evaluate(X, y, al)
    assert set(scores) >= {"smatch", "concepts", "unlabeled", "alignment"}
    assert 0.0 <= fitted.score(X, y) <= 1.0
    mats = fitted.align(X[:2], y[:2])
    for a, tokens in zip(mats, X[:2]):
        assert a.shape[1] == len(tokens)
        assert np.all(a.sum(axis=1) <= 1 + 1e-9)


def test_held_out_fraction(small_corpus):
    X, y, _ = split_xy(small_corpus["train"][:10])
    p = LatentAlignmentParser(epochs=1, validation_fraction=0.2, overrides=TINY_ENCODER).fit(X, y)
    assert len(p.report_.epochs) == 1


def test_save_and_load_reproduce_predictions(fitted, small_corpus, tmp_path):
    fitted.save(tmp_path / "m")
    again = LatentAlignmentParser.load(tmp_path / "m")
    assert again.get_params() == fitted.get_params()
    X, _, _ = split_xy(small_corpus["test"])
    assert again.predict(X) == fitted.predict(X)
    stored = load_parameters(tmp_path / "m" / "parameters.bin")
    for k, v in fitted.model_.params.items():
        np.testing.assert_array_equal(stored[k], v.data)
    with pytest.raises(FileNotFoundError):
        LatentAlignmentParser.load(tmp_path / "nowhere")


def test_fit_is_deterministic(small_corpus):
    X, y, _ = split_xy(small_corpus["train"][:8])
    Xd, yd, _ = split_xy(small_corpus["dev"][:3])
    runs = [
        LatentAlignmentParser(seed=3, epochs=1, overrides=TINY_ENCODER).fit(X, y, X_dev=Xd, y_dev=yd)
        for _ in range(2)
    ]
    for k in runs[0].model_.params:
        np.testing.assert_array_equal(runs[0].model_.params[k].data, runs[1].model_.params[k].data)


def test_experiment_runs_and_medians(small_corpus):
    from latamr.experiments import RunResult, medians, run_grid

    seen = []
    out = run_grid(["joint", "two_stage"], [0], small_corpus, report=seen.append, epochs=1, patience=1)
    assert [r.mode for r in out] == ["joint", "two_stage"] and seen == out
    assert all(r.best_epoch == 1 and 0.0 <= r.smatch <= 1.0 for r in out)
    assert out[1].epochs_run == 2  # one epoch per stage
    fake = [RunResult("m", s, 1, 1, v, v, v, 0.0) for s, v in enumerate((0.2, 0.9, 0.5))]
    assert medians(fake) == {"m": 0.5}
