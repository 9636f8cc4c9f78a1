"""Neural sub-models: concept identification with copy, alignment scoring,
multi-pass bi-affine relation identification and root selection.

Parameters live in one flat ``name -> Tensor`` map whose prefixes name the
sub-model (``concept.``, ``align.``, ``rel.``, ``root.``) so staged training
can freeze groups by prefix.
"""

from __future__ import annotations

import dataclasses
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import Concept
from .preprocess import NULL, AnnotatedSentence, RecatGraph
from .tensor import (
    ShapeError,
    Tensor,
    concat,
    dropout,
    einsum,
    flip,
    log_softmax,
    logsumexp,
    lstm,
    parameter,
    take,
    tensor,
)

__all__ = [
    "EncoderConfig",
    "Vocabulary",
    "Instance",
    "ParserModel",
    "GROUPS",
    "read_config",
    "write_config",
]

GROUPS = ("concept", "align", "rel", "root")
UNK = "<unk>"
NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EncoderConfig:
    word_dim: int = 300
    lemma_dim: int = 200
    pos_dim: int = 32
    ner_dim: int = 16
    cat_dim: int = 32
    concept_dim: int = 300
    sent_hidden: int = 256
    concept_hidden: int = 100
    rel_dim: int = 200
    root_dim: int = 200
    concept_layers: int = 1
    align_layers: int = 1
    rel_layers: int = 2
    root_layers: int = 2
    dropout: float = 0.2
    freq_threshold: int = 5
    one_pass: bool = False

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and v < 1:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def d(self) -> int:
        return 2 * self.sent_hidden

    @property
    def d_g(self) -> int:
        return 2 * self.concept_hidden

    @classmethod
    def desk(cls, **overrides) -> EncoderConfig:
        """Small sizes that train on the synthetic corpus in minutes."""
        base = dict(
            word_dim=32,
            lemma_dim=16,
            pos_dim=8,
            ner_dim=8,
            cat_dim=8,
            concept_dim=24,
            sent_hidden=32,
            concept_hidden=16,
            rel_dim=32,
            root_dim=16,
            rel_layers=1,
            root_layers=1,
        )
        base.update(overrides)
        return cls(**base)


def _coerce(value: str, kind):
    if kind in (bool, "bool"):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind in (int, "int"):
        return int(value)
    if kind in (float, "float"):
        return float(value)
    if kind in (dict, "dict"):
        out = {}
        for item in filter(None, (x.strip() for x in value.split(","))):
            k, sep, v = item.partition(":")
            if not sep:
                raise ValueError(f"expected name:value pairs, got {item!r}")
            out[k.strip()] = float(v)
        return out
    return value


def read_config_values(path_or_text) -> dict[str, str]:
    """Raw ``key = value`` pairs (``#`` starts a comment)."""
    text = str(path_or_text)
    if isinstance(path_or_text, Path) or ("\n" not in text and "=" not in text):
        text = Path(text).read_text(encoding="utf-8")
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"config line {lineno}: malformed entry {raw!r}")
        values[key.strip()] = value.strip()
    return values


def coerce_fields(cls, values: dict[str, str]) -> dict:
    """Convert raw strings to the field types of dataclass ``cls``; unknown keys are an error."""
    kinds = {f.name: f.type for f in dataclasses.fields(cls)}
    unknown = set(values) - set(kinds)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} entries: {', '.join(sorted(unknown))}")
    return {k: _coerce(v, kinds[k]) for k, v in values.items()}


def read_config(path_or_text, cls):
    """Parse ``key = value`` lines (``#`` comments) into dataclass ``cls``."""
    return cls(**coerce_fields(cls, read_config_values(path_or_text)))


def _format(value) -> str:
    if isinstance(value, dict):
        return ", ".join(f"{k}:{v}" for k, v in value.items())
    return str(value)


def write_config(cfg, path) -> None:
    lines = [f"{f.name} = {_format(getattr(cfg, f.name))}" for f in dataclasses.fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# vocabulary


class _Index:
    def __init__(self, items: Sequence[str], specials: Sequence[str] = (UNK,)):
        self.items = list(specials) + sorted(set(items) - set(specials))
        self.pos = {s: i for i, s in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def __getitem__(self, s: str) -> int:
        return self.pos.get(s, self.pos.get(UNK, 0))

    def __contains__(self, s):
        return s in self.pos


@dataclass
class Vocabulary:
    """Symbol tables learned from training data.

    ``categories[0]`` is the NULL category.  ``frequent`` lists (category,
    label) pairs seen at least ``freq_threshold`` times; each owns a scoring
    vector.  ``copyable`` marks categories whose labels were ever equal to a
    copy candidate in the same sentence.
    """

    words: _Index
    lemmas: _Index
    pos: _Index
    ner: _Index
    categories: _Index
    labels: _Index
    node_labels: _Index
    node_categories: _Index
    relations: _Index
    frequent: list[tuple[str, str]]
    copyable: frozenset[str]

    @classmethod
    def build(cls, sentences: Sequence[AnnotatedSentence], recats: Sequence[RecatGraph], freq_threshold: int = 5):
        counts = Counter()
        copyable = set()
        for sent, r in zip(sentences, recats):
            cands = set(sent.candidates)
            for c in r.concepts:
                counts[(c.category, c.label)] += 1
                if c.label in cands:
                    copyable.add(c.category)
        cats = sorted({c for c, _ in counts})
        rels = sorted({rel for r in recats for rel in list(r.internal.values()) + list(r.external.values())})
        return cls(
            words=_Index([t.lower() for s in sentences for t in s.tokens], (UNK, NULL)),
            lemmas=_Index([t for s in sentences for t in s.lemmas], (UNK, NULL)),
            pos=_Index([t for s in sentences for t in s.pos], (UNK, NULL)),
            ner=_Index([t for s in sentences for t in s.ner], (UNK, NULL)),
            categories=_Index(cats, (NULL,)),
            labels=_Index([lab for _, lab in counts], (UNK, NULL)),
            node_labels=_Index([n.label for r in recats for n in r.nodes], (UNK,)),
            node_categories=_Index([n.category for r in recats for n in r.nodes], (UNK,)),
            relations=_Index(rels, (NULL,)),
            frequent=sorted(k for k, v in counts.items() if v >= freq_threshold),
            copyable=frozenset(copyable),
        )

    def to_lines(self) -> list[str]:
        out = []
        for name in ("words", "lemmas", "pos", "ner", "categories", "labels", "node_labels", "node_categories", "relations"):
            for item in getattr(self, name).items:
                out.append(f"{name}\t{item}")
        out += [f"frequent\t{c}\t{lab}" for c, lab in self.frequent]
        out += [f"copyable\t{c}" for c in sorted(self.copyable)]
        return out

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> Vocabulary:
        tables = defaultdict(list)
        frequent, copyable = [], set()
        for line in lines:
            if not line:
                continue
            parts = line.split("\t")
            if parts[0] == "frequent":
                frequent.append((parts[1], parts[2]))
            elif parts[0] == "copyable":
                copyable.add(parts[1])
            else:
                tables[parts[0]].append(parts[1])

        def idx(name):
            ix = _Index([])
            ix.items = tables[name]
            ix.pos = {s: i for i, s in enumerate(ix.items)}
            return ix

        return cls(
            *(idx(n) for n in ("words", "lemmas", "pos", "ner", "categories", "labels", "node_labels", "node_categories", "relations")),
            frequent=frequent,
            copyable=frozenset(copyable),
        )


# ---------------------------------------------------------------------------
# instances


@dataclass
class Instance:
    """One sentence (and optionally its graph) as index arrays.

    Sizes: ``n`` words, ``m`` compound concepts, ``N = max(m, n)`` after NULL
    padding, ``M`` original-granularity nodes.
    """

    sentence: AnnotatedSentence
    n: int
    m: int
    N: int
    word_ids: np.ndarray
    lemma_ids: np.ndarray
    pos_ids: np.ndarray
    ner_ids: np.ndarray
    concepts: tuple[Concept, ...] = ()
    concept_cat: np.ndarray | None = None
    concept_label: np.ndarray | None = None
    recat: RecatGraph | None = None
    node_label: np.ndarray | None = None
    node_cat: np.ndarray | None = None
    node_owner: np.ndarray | None = None
    node_const: np.ndarray | None = None
    heads: np.ndarray | None = None
    deps: np.ndarray | None = None
    gold_rel: np.ndarray | None = None
    root_concept: int | None = None
    gold_alignment: tuple[int, ...] | None = None
    extra: dict = field(default_factory=dict)


def relation_pairs(recat: RecatGraph) -> tuple[np.ndarray, np.ndarray]:
    """Ordered node pairs the relation model scores: across units, non-constant head."""
    heads, deps = [], []
    for i, ci in enumerate(recat.nodes):
        if ci.is_constant:
            continue
        for j in range(len(recat.nodes)):
            if j != i and recat.unit[i] != recat.unit[j]:
                heads.append(i)
                deps.append(j)
    return np.array(heads, dtype=np.int64), np.array(deps, dtype=np.int64)


# ---------------------------------------------------------------------------
# the model


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


def _glorot(rng, shape):
    return _uniform(rng, shape, np.sqrt(6.0 / (shape[0] + shape[-1])))


class ParserModel:
    """All trainable weights plus the forward computations of every sub-model."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig, seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self._init(np.random.default_rng(seed))
        self.cat_mask = self._category_mask()

    # -- parameters ----------------------------------------------------
    def _add(self, name, value):
        self.params[name] = parameter(value, name=name)

    def _add_embeddings(self, rng, prefix):
        c, v = self.config, self.vocab
        for table, size, dim in (
            ("word", len(v.words), c.word_dim),
            ("lemma", len(v.lemmas), c.lemma_dim),
            ("pos", len(v.pos), c.pos_dim),
            ("ner", len(v.ner), c.ner_dim),
        ):
            self._add(f"{prefix}.emb.{table}", rng.normal(0.0, 0.1, (size, dim)))

    def _add_bilstm(self, rng, prefix, in_dim, hidden, layers):
        bound = 1.0 / np.sqrt(hidden)
        for layer in range(layers):
            for direction in ("fw", "bw"):
                b = np.zeros(4 * hidden)
                b[hidden : 2 * hidden] = 1.0
                self._add(f"{prefix}.l{layer}.{direction}.w", _uniform(rng, (in_dim + hidden, 4 * hidden), bound))
                self._add(f"{prefix}.l{layer}.{direction}.b", b)
            in_dim = 2 * hidden

    def _add_concept_embeddings(self, rng, prefix, labels, categories):
        c = self.config
        self._add(f"{prefix}.emb.label", rng.normal(0.0, 0.1, (len(labels), c.concept_dim)))
        self._add(f"{prefix}.emb.cat", rng.normal(0.0, 0.1, (len(categories), c.cat_dim)))

    @property
    def sent_in(self) -> int:
        c = self.config
        return c.word_dim + c.lemma_dim + c.pos_dim + c.ner_dim

    def _init(self, rng):
        c, v = self.config, self.vocab
        d, dg = c.d, c.d_g
        n_cat, n_freq = len(v.categories), len(v.frequent)
        cdim = c.concept_dim + c.cat_dim

        self._add_embeddings(rng, "concept")
        self._add_bilstm(rng, "concept.enc", self.sent_in, c.sent_hidden, c.concept_layers)
        self._add("concept.cat.w", _glorot(rng, (d, n_cat)))
        self._add("concept.cat.b", np.zeros(n_cat))
        self._add("concept.v_copy", rng.normal(0.0, 0.1, d))
        self._add("concept.v_freq", rng.normal(0.0, 0.1, (max(n_freq, 1), d)))
        self._add("concept.v_unk", rng.normal(0.0, 0.1, (n_cat, d)))

        self._add_embeddings(rng, "align")
        self._add_bilstm(rng, "align.enc", self.sent_in, c.sent_hidden, c.align_layers)
        self._add_concept_embeddings(rng, "align", v.labels, v.categories)
        self._add_bilstm(rng, "align.cenc", cdim, c.concept_hidden, 1)
        self._add("align.B", _glorot(rng, (dg, d)))

        self._add_embeddings(rng, "rel")
        self._add_bilstm(rng, "rel.enc", self.sent_in + 1, c.sent_hidden, c.rel_layers)
        self._add_concept_embeddings(rng, "rel", v.node_labels, v.node_categories)
        n_rel = len(v.relations)
        self._add("rel.Mh.w", _glorot(rng, (d + cdim, c.rel_dim)))
        self._add("rel.Mh.b", np.zeros(c.rel_dim))
        self._add("rel.Md.w", _glorot(rng, (d + cdim, c.rel_dim)))
        self._add("rel.Md.b", np.zeros(c.rel_dim))
        self._add("rel.C", rng.normal(0.0, 1.0 / c.rel_dim, (n_rel, c.rel_dim, c.rel_dim)))
        self._add("rel.bias", np.zeros(n_rel))

        self._add_embeddings(rng, "root")
        self._add_bilstm(rng, "root.enc", self.sent_in, c.sent_hidden, c.root_layers)
        self._add_concept_embeddings(rng, "root", v.labels, v.categories)
        self._add("root.proj.w", _glorot(rng, (d + cdim, c.root_dim)))
        self._add("root.proj.b", np.zeros(c.root_dim))
        self._add("root.v", rng.normal(0.0, 0.1, c.root_dim))

    def group(self, name: str) -> list[Tensor]:
        return [p for k, p in sorted(self.params.items()) if k.startswith(name + ".")]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state) -> None:
        for k, p in self.params.items():
            if k not in state:
                raise KeyError(f"checkpoint lacks parameter {k}")
            if state[k].shape != p.data.shape:
                raise ShapeError(f"{k}: checkpoint shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]

    # -- featurisation ---------------------------------------------------
    def featurize(
        self,
        sentence: AnnotatedSentence,
        recat: RecatGraph | None = None,
        gold_alignment: Sequence[int] | None = None,
        concepts: Sequence[Concept] | None = None,
    ) -> Instance:
        """Index arrays for one sentence; ``recat`` must carry node metadata when given."""
        v = self.vocab
        n = len(sentence)
        concepts = tuple(recat.concepts if recat is not None else (concepts or ()))
        m = len(concepts)
        N = max(m, n)
        pad = [NULL] * (N - n)
        inst = Instance(
            sentence=sentence,
            n=n,
            m=m,
            N=N,
            word_ids=np.array([v.words[t.lower()] for t in sentence.tokens] + [v.words[NULL]] * (N - n)),
            lemma_ids=np.array([v.lemmas[t] for t in list(sentence.lemmas) + pad]),
            pos_ids=np.array([v.pos[t] for t in list(sentence.pos) + pad]),
            ner_ids=np.array([v.ner[t] for t in list(sentence.ner) + pad]),
            concepts=concepts,
        )
        inst.concept_cat = np.array([v.categories[c.category] for c in concepts] + [0] * (N - m), dtype=np.int64)
        inst.concept_label = np.array([v.labels[c.label] for c in concepts] + [v.labels[NULL]] * (N - m), dtype=np.int64)
        if recat is not None and recat.has_metadata:
            inst.recat = recat
            inst.node_label = np.array([v.node_labels[c.label] for c in recat.nodes], dtype=np.int64)
            inst.node_cat = np.array([v.node_categories[c.category] for c in recat.nodes], dtype=np.int64)
            inst.node_owner = np.array(recat.owner, dtype=np.int64)
            inst.node_const = np.array([c.is_constant for c in recat.nodes], dtype=bool)
            inst.heads, inst.deps = relation_pairs(recat)
            edges = recat.external
            inst.gold_rel = np.array(
                [v.relations[edges.get((int(i), int(j)), NULL)] for i, j in zip(inst.heads, inst.deps)], dtype=np.int64
            )
            if recat.root is not None:
                inst.root_concept = int(recat.owner[recat.root])
        if gold_alignment is not None:
            inst.gold_alignment = tuple(int(k) for k in gold_alignment)
        self._concept_targets(inst)
        return inst

    def _category_mask(self) -> np.ndarray:
        """Which options each category may emit: its frequent concepts, its UNK and (if learned) copy."""
        v = self.vocab
        n_freq, n_cat = len(v.frequent), len(v.categories)
        J = max(n_freq, 1) + n_cat + 1
        cm = np.full((n_cat, J), NEG_INF)
        for i, (cat, _) in enumerate(v.frequent):
            cm[v.categories[cat], i] = 0.0
        for t in range(n_cat):
            cm[t, max(n_freq, 1) + t] = 0.0
            if v.categories.items[t] in v.copyable:
                cm[t, J - 1] = 0.0
        return cm

    def _concept_targets(self, inst: Instance) -> None:
        """Per (concept slot, word) option masks over [frequent | unk per category | copy]."""
        v = self.vocab
        n_freq, n_cat = len(v.frequent), len(v.categories)
        J = max(n_freq, 1) + n_cat + 1
        copy_col = J - 1
        freq_index = {key: i for i, key in enumerate(v.frequent)}
        N = inst.N
        mask = np.full((N, N, J), NEG_INF)
        for i in range(N):
            if i >= inst.m:
                mask[i, :, max(n_freq, 1)] = 0.0  # NULL slot: its own UNK, cancels against Z
                continue
            c = inst.concepts[i]
            t = v.categories[c.category]
            f = freq_index.get((c.category, c.label))
            if f is not None:
                mask[i, :, f] = 0.0
            else:
                mask[i, :, max(n_freq, 1) + t] = 0.0
            if c.category in v.copyable:
                for k in range(inst.n):
                    if inst.sentence.candidates[k] == c.label:
                        mask[i, k, copy_col] = 0.0
        inst.extra["concept_mask"] = mask

    # -- encoders --------------------------------------------------------
    def embed(self, prefix: str, inst: Instance, rng=None) -> Tensor:
        p = self.params
        x = concat(
            [
                take(p[f"{prefix}.emb.word"], inst.word_ids),
                take(p[f"{prefix}.emb.lemma"], inst.lemma_ids),
                take(p[f"{prefix}.emb.pos"], inst.pos_ids),
                take(p[f"{prefix}.emb.ner"], inst.ner_ids),
            ],
            axis=-1,
        )
        return dropout(x, self.config.dropout, rng)

    def bilstm(self, prefix: str, x: Tensor, layers: int) -> Tensor:
        """(batch, time, in) -> (batch, time, 2 * hidden); forward and backward halves concatenated."""
        p = self.params
        for layer in range(layers):
            fw = lstm(x, p[f"{prefix}.l{layer}.fw.w"], p[f"{prefix}.l{layer}.fw.b"])
            bw = flip(lstm(flip(x, 1), p[f"{prefix}.l{layer}.bw.w"], p[f"{prefix}.l{layer}.bw.b"]), 1)
            x = concat([fw, bw], axis=-1)
        return x

    def encode_sentence(self, prefix: str, inst: Instance, flags=None, rng=None) -> Tensor:
        """Sentence states; with ``flags`` of shape (B, N) the encoder runs once per flag row."""
        x = self.embed(prefix, inst, rng)
        layers = {"concept": self.config.concept_layers, "align": self.config.align_layers,
                  "rel": self.config.rel_layers, "root": self.config.root_layers}[prefix]
        if prefix == "rel":
            flags = flags if isinstance(flags, Tensor) else tensor(np.asarray(flags, dtype=float))
            if flags.ndim != 2 or flags.shape[1] != inst.N:
                raise ShapeError(f"flags must have shape (batch, {inst.N}), got {flags.shape}")
            B = flags.shape[0]
            x = x.reshape(1, inst.N, -1) + tensor(np.zeros((B, 1, 1)))
            x = concat([x, flags.reshape(B, inst.N, 1)], axis=-1)
        else:
            if flags is not None:
                raise ValueError(f"the {prefix} encoder takes no flags")
            x = x.reshape(1, inst.N, -1)
        return self.bilstm(f"{prefix}.enc", x, layers)

    def concept_embed(self, prefix: str, labels, cats) -> Tensor:
        p = self.params
        return concat([take(p[f"{prefix}.emb.label"], labels), take(p[f"{prefix}.emb.cat"], cats)], axis=-1)

    # -- concept model ---------------------------------------------------
    def concept_tables(self, h: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Per-word category log-probs (N, T), option scores (N, J) and per-category log Z (N, T)."""
        p = self.params
        cat_lp = log_softmax(h @ p["concept.cat.w"] + p["concept.cat.b"], axis=-1)
        opts = concat(
            [h @ p["concept.v_freq"].T, h @ p["concept.v_unk"].T, (h @ p["concept.v_copy"].reshape(-1, 1))],
            axis=-1,
        )
        N = h.shape[0]
        logz = logsumexp(opts.reshape(N, 1, -1) + tensor(self.cat_mask[None]), axis=-1)
        return cat_lp, opts, logz

    def concept_logprobs(self, inst: Instance, rng=None) -> Tensor:
        """L[i, k] = log P(c_i | a_i = k, w) for every padded concept slot and word."""
        h = self.encode_sentence("concept", inst, rng=rng)[0]
        cat_lp, opts, logz = self.concept_tables(h)
        N = inst.N
        num = logsumexp(opts.reshape(1, N, -1) + tensor(inst.extra["concept_mask"]), axis=-1)
        cats = inst.concept_cat
        return take(cat_lp.T, cats) + num - take(logz.T, cats)

    # -- alignment model -------------------------------------------------
    def concept_states(self, inst: Instance) -> Tensor:
        e = self.concept_embed("align", inst.concept_label, inst.concept_cat)
        return self.bilstm("align.cenc", e.reshape(1, inst.N, -1), 1)[0]

    def alignment_scores(self, inst: Instance, rng=None) -> Tensor:
        g = self.concept_states(inst)
        h = self.encode_sentence("align", inst, rng=rng)[0]
        if g.shape[0] != h.shape[0]:
            raise ShapeError(f"alignment needs a padded square instance, got {g.shape[0]} x {h.shape[0]}")
        return g @ self.params["align.B"] @ h.T

    # -- relation model --------------------------------------------------
    def relation_logprobs(self, inst: Instance, a_hat, rng=None, one_pass: bool | None = None) -> Tensor | None:
        """Log distribution over relations (incl. NULL) for every scored pair, shape (P, |R|).

        None when the instance has no pair to score.

        ``a_hat`` (N x N, rows = compound concepts) supplies both the predicate
        flags and the expected aligned states of every node.
        """
        p = self.params
        a_hat = a_hat if isinstance(a_hat, Tensor) else tensor(a_hat)
        one_pass = self.config.one_pass if one_pass is None else one_pass
        heads, deps = inst.heads, inst.deps
        if heads is None or len(heads) == 0:
            return None
        node_rows = take(a_hat, inst.node_owner)  # (M, N)
        if one_pass:
            flags = tensor(np.zeros((1, inst.N)))
            batch_of = np.zeros(len(inst.node_owner), dtype=np.int64)
        else:
            owners = sorted({int(inst.node_owner[i]) for i in heads})
            slot = {o: b for b, o in enumerate(owners)}
            flags = take(a_hat, np.array(owners))
            batch_of = np.array([slot.get(int(o), 0) for o in inst.node_owner], dtype=np.int64)
        H = self.encode_sentence("rel", inst, flags=flags, rng=rng)  # (B, N, d)
        B, M = H.shape[0], len(inst.node_owner)
        E = einsum("mk,bkd->bmd", node_rows, H).reshape(B * M, -1)
        emb = self.concept_embed("rel", inst.node_label, inst.node_cat)
        hb = batch_of[heads]
        u = concat([take(E, hb * M + heads), take(emb, heads)], axis=-1)
        w = concat([take(E, hb * M + deps), take(emb, deps)], axis=-1)
        hu = (u @ p["rel.Mh.w"] + p["rel.Mh.b"]).tanh()
        dw = (w @ p["rel.Md.w"] + p["rel.Md.b"]).tanh()
        scores = einsum("pf,rfg,pg->pr", hu, p["rel.C"], dw) + p["rel.bias"]
        return log_softmax(scores, axis=-1)

    # -- root model ------------------------------------------------------
    def root_logits(self, inst: Instance, a_hat, rng=None) -> Tensor:
        p = self.params
        a_hat = a_hat if isinstance(a_hat, Tensor) else tensor(a_hat)
        H = self.encode_sentence("root", inst, rng=rng)[0]
        states = a_hat[: inst.m] @ H
        emb = self.concept_embed("root", inst.concept_label[: inst.m], inst.concept_cat[: inst.m])
        x = concat([states, emb], axis=-1)
        return ((x @ p["root.proj.w"] + p["root.proj.b"]).tanh() @ p["root.v"].reshape(-1, 1)).reshape(-1)
