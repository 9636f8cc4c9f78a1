"""Estimator-style front end: fit on (tokens, graph) pairs, predict graphs, score with Smatch."""

from __future__ import annotations

import dataclasses
import json
import logging
from collections import Counter
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .decode import DecodedInstance, LookupTables, parse_annotated
from .evaluate import alignment_accuracy, graph_triples, prf, smatch
from .graph import AmrGraph
from .model import EncoderConfig, Instance, ParserModel, Vocabulary, read_config, write_config
from .preprocess import (
    AnnotatedSentence,
    CopyDictionary,
    Recategorizer,
    build_copy_dictionary,
    recategorize,
    stub_annotate,
)
from .sinkhorn import gumbel_sinkhorn
from .tensor import load_parameters, no_grad, save_parameters
from .training import ObjectiveConfig, TrainReport, run_training
from .validation import check_consistent_length, check_graphs, check_sentences

log = logging.getLogger(__name__)

__all__ = ["LatentAlignmentParser", "corpus_scores"]


def _concept_counts(g: AmrGraph) -> Counter:
    return Counter(c.full_label for c in g.concepts)


def corpus_scores(pred: Sequence[AmrGraph], gold: Sequence[AmrGraph], restarts: int = 4, seed: int = 0) -> dict:
    """Corpus-level Smatch (matched triples pooled over sentences), concept F1 and unlabeled Smatch."""
    check_consistent_length(pred, gold)
    m = n_p = n_g = 0
    um = un_p = un_g = 0
    c_m = c_p = c_g = 0
    for i, (p, g) in enumerate(zip(pred, gold)):
        r = smatch(p, g, restarts=restarts, seed=seed + i)
        m, n_p, n_g = m + r.matched, n_p + r.n_pred, n_g + r.n_gold
        u = smatch(p, g, restarts=restarts, seed=seed + i, unlabeled=True)
        um, un_p, un_g = um + u.matched, un_p + u.n_pred, un_g + u.n_gold
        cp, cg = _concept_counts(p), _concept_counts(g)
        c_m += sum((cp & cg).values())
        c_p += sum(cp.values())
        c_g += sum(cg.values())
    precision, recall, f1 = prf(m, n_p, n_g)
    return {
        "precision": precision,
        "recall": recall,
        "smatch": f1,
        "unlabeled": prf(um, un_p, un_g)[2],
        "concepts": prf(c_m, c_p, c_g)[2],
    }


class LatentAlignmentParser(BaseEstimator):
    """Graph parser whose concept-to-word alignment is a latent permutation.

    Parameters
    ----------
    mode : training regime, one of :data:`latamr.training.MODES`.
    preset : ``"desk"`` for small dimensions and fast steps, ``"full"`` for the
        original sizes.
    epochs, lr, batch_size : override the preset when not None.
    alpha : exponent of the hierarchical concept loss.
    kl_weight : weight of the Gumbel KL term (preset default when None).
    validation_fraction : share of the training data held out for model
        selection when ``fit`` receives no explicit development set.
    restarts : Smatch hill-climbing restarts used for selection and scoring.
    overrides : field values for :class:`EncoderConfig` or
        :class:`ObjectiveConfig`, applied last (names are disjoint).
    """

    def __init__(
        self,
        mode: str = "joint",
        preset: str = "desk",
        seed: int = 0,
        epochs: int | None = None,
        lr: float | None = None,
        batch_size: int | None = None,
        alpha: float = 0.5,
        kl_weight: float | None = None,
        validation_fraction: float = 0.1,
        restarts: int = 4,
        overrides: dict | None = None,
    ):
        self.mode = mode
        self.preset = preset
        self.seed = seed
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.alpha = alpha
        self.kl_weight = kl_weight
        self.validation_fraction = validation_fraction
        self.restarts = restarts
        self.overrides = overrides

    # -- configuration ---------------------------------------------------
    def _configs(self) -> tuple[EncoderConfig, ObjectiveConfig]:
        if self.preset not in ("desk", "full"):
            raise ValueError(f"preset must be 'desk' or 'full', got {self.preset!r}")
        overrides = {"mode": self.mode, "alpha": self.alpha, "seed": self.seed}
        if self.epochs is not None:
            overrides["epochs"] = self.epochs
        if self.kl_weight is not None:
            overrides["w_kl"] = self.kl_weight
        if self.lr is not None:
            overrides["lr"] = self.lr
        if self.batch_size is not None:
            overrides["batch_size"] = overrides["stage1_batch_size"] = self.batch_size
        enc_fields = {f.name for f in dataclasses.fields(EncoderConfig)}
        obj_fields = {f.name for f in dataclasses.fields(ObjectiveConfig)}
        enc_over = {}
        for k, v in (self.overrides or {}).items():
            if k in enc_fields:
                enc_over[k] = v
            elif k in obj_fields:
                overrides[k] = v
            else:
                raise ValueError(f"unknown configuration field {k!r}")
        if self.preset == "desk":
            return EncoderConfig.desk(**enc_over), ObjectiveConfig.desk(**overrides)
        return EncoderConfig(**enc_over), ObjectiveConfig(**overrides)

    # -- fitting ---------------------------------------------------------
    def fit(self, X, y, alignments=None, X_dev=None, y_dev=None, dev_alignments=None, on_epoch=None):
        """Train on token sequences ``X`` and graphs ``y`` (AmrGraph or PENMAN).

        ``alignments`` (gold concept-to-word indices) are only consumed by the
        fixed-alignment baseline; ``dev_alignments`` enable alignment accuracy
        in the training report.
        """
        tokens = check_sentences(X)
        graphs = check_graphs(y)
        check_consistent_length(tokens, graphs)
        if alignments is not None:
            check_consistent_length(tokens, alignments)
        if X_dev is None:
            if y_dev is not None:
                raise ValueError("y_dev given without X_dev")
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError("validation_fraction must lie in (0, 1)")
            n_dev = int(round(len(tokens) * self.validation_fraction))
            if n_dev < 1 or n_dev >= len(tokens):
                raise ValueError("too few sentences to hold out a development set")
            dev_tokens, dev_graphs = tokens[-n_dev:], graphs[-n_dev:]
            dev_alignments = None if alignments is None else list(alignments[-n_dev:])
            tokens, graphs = tokens[:-n_dev], graphs[:-n_dev]
            alignments = None if alignments is None else list(alignments[:-n_dev])
        else:
            dev_tokens, dev_graphs = check_sentences(X_dev), check_graphs(y_dev)
            check_consistent_length(dev_tokens, dev_graphs)
        if not dev_tokens:
            raise ValueError("the development set is empty")
        enc_cfg, obj_cfg = self._configs()
        if obj_cfg.mode == "fixed_align_baseline" and alignments is None:
            raise ValueError("the fixed-alignment baseline needs gold alignments")

        self.copy_dictionary_ = build_copy_dictionary(zip(tokens, graphs))
        sentences = [stub_annotate(t, self.copy_dictionary_) for t in tokens]
        self.recategorizer_ = Recategorizer().fit(graphs)
        recats = self.recategorizer_.transform(graphs)
        self.vocabulary_ = Vocabulary.build(sentences, recats, enc_cfg.freq_threshold)
        self.tables_ = LookupTables.fit(graphs)
        self.model_ = ParserModel(self.vocabulary_, enc_cfg, seed=self.seed)
        self.objective_ = obj_cfg
        train = [
            self.model_.featurize(s, r, None if alignments is None else alignments[i])
            for i, (s, r) in enumerate(zip(sentences, recats))
        ]
        dev_sentences = [stub_annotate(t, self.copy_dictionary_) for t in dev_tokens]
        dev_instances = None
        if dev_alignments is not None:
            dev_instances = [
                self.model_.featurize(s, recategorize(g), a) for s, g, a in zip(dev_sentences, dev_graphs, dev_alignments)
            ]

        def evaluate(model: ParserModel) -> dict:
            pred = [self._parse(s).graph for s in dev_sentences]
            out = corpus_scores(pred, dev_graphs, restarts=self.restarts)
            if dev_instances is not None:
                out["alignment"] = self._alignment_accuracy(dev_instances)
            return out

        self.report_: TrainReport = run_training(
            self.model_, train, evaluate, obj_cfg, dev_size=len(dev_tokens), on_epoch=on_epoch
        )
        return self

    def _alignment_accuracy(self, instances: Sequence[Instance]) -> float:
        """Noise-free Sinkhorn alignment versus gold, pooled over real concepts."""
        hits = total = 0
        with no_grad():
            for inst in instances:
                phi = self.model_.alignment_scores(inst)
                a_hat, _ = gumbel_sinkhorn(phi, None, self.objective_.sinkhorn())
                hits += alignment_accuracy(a_hat, inst.gold_alignment) * inst.m
                total += inst.m
        return hits / total if total else 1.0

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("this parser has not been fitted yet")

    # -- inference -------------------------------------------------------
    def _parse(self, sentence: AnnotatedSentence) -> DecodedInstance:
        return parse_annotated(self.model_, self.recategorizer_, self.tables_, sentence)

    def annotate(self, tokens) -> AnnotatedSentence:
        self._check_fitted()
        return stub_annotate(tokens, self.copy_dictionary_)

    def predict_detailed(self, X) -> list[DecodedInstance]:
        self._check_fitted()
        return [self._parse(self.annotate(t)) for t in check_sentences(X)]

    def predict(self, X) -> list[AmrGraph]:
        return [d.graph for d in self.predict_detailed(X)]

    def align(self, X, y) -> list[np.ndarray]:
        """Noise-free relaxed alignment (rows: re-categorized concepts, columns: words) for gold graphs."""
        self._check_fitted()
        tokens, graphs = check_sentences(X), check_graphs(y)
        check_consistent_length(tokens, graphs)
        out = []
        with no_grad():
            for t, g in zip(tokens, graphs):
                inst = self.model_.featurize(self.annotate(t), recategorize(g))
                a_hat, _ = gumbel_sinkhorn(self.model_.alignment_scores(inst), None, self.objective_.sinkhorn())
                out.append(a_hat.data[: inst.m, : inst.n])
        return out

    def evaluate(self, X, y, alignments=None) -> dict:
        """Smatch precision/recall/F1, concept F1, unlabeled Smatch and (given gold) alignment accuracy."""
        pred = self.predict(X)
        graphs = check_graphs(y)
        out = corpus_scores(pred, graphs, restarts=self.restarts)
        if alignments is not None:
            tokens = check_sentences(X)
            insts = [
                self.model_.featurize(self.annotate(t), recategorize(g), a) for t, g, a in zip(tokens, graphs, alignments)
            ]
            out["alignment"] = self._alignment_accuracy(insts)
        return out

    def score(self, X, y) -> float:
        """Corpus Smatch F1."""
        return corpus_scores(self.predict(X), check_graphs(y), restarts=self.restarts)["smatch"]

    # -- persistence -----------------------------------------------------
    def save(self, path) -> None:
        """Write a self-contained model directory."""
        self._check_fitted()
        d = Path(path)
        d.mkdir(parents=True, exist_ok=True)
        save_parameters(d / "parameters.bin", self.model_.params)
        (d / "vocabulary.txt").write_text("\n".join(self.vocabulary_.to_lines()) + "\n", encoding="utf-8")
        write_config(self.model_.config, d / "encoder.cfg")
        write_config(self.objective_, d / "objective.cfg")
        self.copy_dictionary_.save(d / "copy.tsv")
        meta = {
            "params": self.get_params(),
            "rule_table": self.recategorizer_.rule_table,
            "structures": [[list(k), _jsonable(v)] for k, v in sorted(self.recategorizer_.structures_.items())],
            "senses": self.tables_.senses,
            "wikis": [[k[0], list(k[1]), v] for k, v in sorted(self.tables_.wikis.items())],
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> LatentAlignmentParser:
        d = Path(path)
        if not (d / "meta.json").exists():
            raise FileNotFoundError(f"{d} is not a saved parser directory")
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        self = cls(**meta["params"])
        vocab = Vocabulary.from_lines((d / "vocabulary.txt").read_text(encoding="utf-8").splitlines())
        self.vocabulary_ = vocab
        self.model_ = ParserModel(vocab, read_config(d / "encoder.cfg", EncoderConfig), seed=self.seed)
        self.model_.load_state_dict(load_parameters(d / "parameters.bin"))
        self.objective_ = read_config(d / "objective.cfg", ObjectiveConfig)
        self.copy_dictionary_ = CopyDictionary.load(d / "copy.tsv")
        self.recategorizer_ = Recategorizer(meta["rule_table"])
        self.recategorizer_.structures_ = {tuple(k): _tupled(v) for k, v in meta["structures"]}
        self.tables_ = LookupTables(meta["senses"], {(k, tuple(n)): v for k, n, v in meta["wikis"]})
        return self


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def _tupled(x):
    if isinstance(x, list):
        return tuple(_tupled(v) for v in x)
    return x
