"""Corpus records, their on-disk format, and the synthetic corpus generator.

Record format: UTF-8, one JSON object per line, keys sorted::

    {"alignment": [2, 4, 1], "graph": "(v1 / want-01 ...)", "id": "train-0",
     "tokens": ["the", "boy", "wants", ...]}

``graph`` is single-line PENMAN.  ``alignment`` (optional, may be null) gives
a 0-based word index for each re-categorized concept in traversal order.
``annotations`` (optional) maps "lemmas"/"pos"/"ner" to per-token lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import lexicon
from .graph import AmrGraph, Concept, GraphError, find_isomorphism, parse_penman, serialize_penman
from .preprocess import recategorize

__all__ = [
    "CorpusRecord",
    "CorpusFormatError",
    "GeneratorConfig",
    "generate_corpus",
    "load_corpus",
    "save_corpus",
    "TEMPLATES",
]

TEMPLATES = ("simple", "control", "entity", "duplicate", "negation", "nominal")
_REQUIRED = ("id", "tokens", "graph")


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    tokens: tuple[str, ...]
    graph: str
    alignment: tuple[int, ...] | None = None
    annotations: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.alignment is not None:
            al = tuple(int(k) for k in self.alignment)
            object.__setattr__(self, "alignment", al)
            if len(set(al)) != len(al):
                raise CorpusFormatError(f"{self.id}: alignment is not injective")
            if any(not 0 <= k < len(self.tokens) for k in al):
                raise CorpusFormatError(f"{self.id}: alignment index out of range")

    def amr(self) -> AmrGraph:
        return parse_penman(self.graph)

    def to_json(self) -> str:
        obj = {"id": self.id, "tokens": list(self.tokens), "graph": self.graph}
        if self.alignment is not None:
            obj["alignment"] = list(self.alignment)
        if self.annotations is not None:
            obj["annotations"] = self.annotations
        return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def save_corpus(records: Iterable[CorpusRecord], path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")


def load_corpus(path) -> list[CorpusRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise CorpusFormatError(f"{path}:{lineno}: record must be an object")
        for key in _REQUIRED:
            if key not in obj:
                raise CorpusFormatError(f"{path}:{lineno}: missing field {key!r}")
        try:
            out.append(
                CorpusRecord(
                    str(obj["id"]), obj["tokens"], obj["graph"], obj.get("alignment"), obj.get("annotations")
                )
            )
        except (TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    train: int = 500
    dev: int = 100
    test: int = 100
    mix: dict = field(
        default_factory=lambda: {
            "simple": 0.3,
            "control": 0.2,
            "entity": 0.15,
            "duplicate": 0.1,
            "negation": 0.1,
            "nominal": 0.15,
        }
    )
    n_nouns: int = len(lexicon.NOUNS)
    n_verbs: int = len(lexicon.VERBS)

    def __post_init__(self):
        if min(self.train, self.dev, self.test) < 1:
            raise ValueError("corpus sizes must be >= 1")
        unknown = set(self.mix) - set(TEMPLATES)
        if unknown:
            raise ValueError(f"unknown templates {sorted(unknown)}")
        if any(v < 0 for v in self.mix.values()) or abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ValueError("template fractions must be nonnegative and sum to 1")
        if not 1 <= self.n_nouns <= len(lexicon.NOUNS) or not 1 <= self.n_verbs <= len(lexicon.VERBS):
            raise ValueError("vocabulary sizes out of range")


class _Builder:
    def __init__(self):
        self.tokens: list[str] = []
        self.nodes: list[Concept] = []
        self.node_tok: list[int | None] = []
        self.edges: dict[tuple[int, int], str] = {}
        self.plural: set[int] = set()

    def word(self, w: str) -> int:
        self.tokens.append(w)
        return len(self.tokens) - 1

    def node(self, label: str, tok: int | None = None, category: str | None = None, wiki=None) -> int:
        if category is None:
            base, _, sense = label.rpartition("-")
            if base and sense.isdigit() and len(sense) == 2:
                c = Concept(base, "frame", "-" + sense, wiki)
            else:
                c = Concept(label, "concept", None, wiki)
        else:
            c = Concept(label, category)
        self.nodes.append(c)
        self.node_tok.append(tok)
        return len(self.nodes) - 1

    def edge(self, a: int, b: int, rel: str) -> None:
        self.edges[(a, b)] = rel


class _Generator:
    def __init__(self, cfg: GeneratorConfig):
        self.rng = np.random.default_rng(cfg.seed)
        self.nouns = sorted(lexicon.NOUNS)[: cfg.n_nouns]
        self.verbs = sorted(lexicon.VERBS)[: cfg.n_verbs]
        self.transitive = [v for v in self.verbs if lexicon.VERBS[v][3]]
        self.agentive = [v for v in self.verbs if lexicon.VERBS[v][2] == "ARG0"]

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def noun_phrase(self, b: _Builder, noun=None, adj=None, allow_adj=True) -> int:
        noun = noun or self.pick(self.nouns)
        if adj is None and allow_adj and self.chance(0.3):
            adj = self.pick(lexicon.ADJECTIVES)
        plural = self.chance(0.2)
        det = "the" if plural else self.pick(["the", "a"])
        if det == "a" and (adj or noun)[0] in "aeiou":
            det = "an"
        b.word(det)
        a_tok = b.word(adj) if adj else None
        n_tok = b.word(lexicon.NOUNS[noun][1 if plural else 0])
        head = b.node(noun, n_tok)
        if plural:
            b.plural.add(head)
        if adj:
            b.edge(head, b.node(adj, a_tok), "mod")
        return head

    def person(self, b: _Builder) -> int:
        name = self.pick(lexicon.PERSON_NAMES)
        tok = b.word(name)
        p = b.node("person", None, wiki="-")
        n = b.node("name")
        b.edge(p, n, "name")
        b.edge(n, b.node(name, tok, "string"), "op1")
        return p

    def city(self, b: _Builder) -> int:
        parts, wiki = self.pick(sorted(lexicon.CITY_NAMES.items()))
        c = b.node("city", None, wiki=wiki)
        n = b.node("name")
        b.edge(c, n, "name")
        for i, part in enumerate(parts, 1):
            b.edge(n, b.node(part, b.word(part), "string"), f"op{i}")
        return c

    def subject(self, b: _Builder, p_name: float = 0.15) -> int:
        return self.person(b) if self.chance(p_name) else self.noun_phrase(b)

    def verb_form(self, frame: str, plural: bool = False) -> str:
        s3, past, *_ = lexicon.VERBS[frame]
        if self.chance(0.5):
            return lexicon.INFINITIVES[frame] if plural else s3
        return past

    def predicate(self, b: _Builder, subj: int, frame: str, tok: int) -> int:
        v = b.node(frame, tok)
        b.edge(v, subj, lexicon.VERBS[frame][2])
        return v

    def tail(self, b: _Builder, v: int, frame: str, obj=None) -> None:
        if lexicon.VERBS[frame][3]:
            o = obj(b) if obj else self.noun_phrase(b)
            b.edge(v, o, "ARG1")
        # very short clauses get a manner adverb so sentences span 4-12 tokens with the period
        if self.chance(0.25) or len(b.tokens) < 3:
            adv = self.pick(sorted(lexicon.ADVERBS))
            b.edge(v, b.node(lexicon.ADVERBS[adv], b.word(adv)), "manner")

    # -- templates -------------------------------------------------------
    def simple(self, b: _Builder) -> int:
        subj = self.subject(b)
        frame = self.pick(self.verbs)
        v = self.predicate(b, subj, frame, b.word(self.verb_form(frame, subj in b.plural)))
        self.tail(b, v, frame)
        return v

    def control(self, b: _Builder) -> int:
        subj = self.subject(b)
        frame = self.pick(self.agentive)
        if self.chance(0.5):
            ctrl = self.pick(sorted(lexicon.CONTROL_VERBS))
            s3, past = lexicon.CONTROL_VERBS[ctrl]
            present = ctrl.rsplit("-", 1)[0] if subj in b.plural else s3
            top = b.node(ctrl, b.word(present if self.chance(0.5) else past))
            b.edge(top, subj, "ARG0")
            b.word("to")
            role = "ARG1"
            neg = False
        else:
            modal = self.pick(sorted(lexicon.MODALS))
            top_frame, role = lexicon.MODALS[modal]
            top = b.node(top_frame, b.word(modal))
            neg = self.chance(0.4)
            neg_tok = b.word("not") if neg else None
        v = b.node(frame, b.word(lexicon.INFINITIVES[frame]))
        b.edge(top, v, role)
        b.edge(v, subj, "ARG0")
        if neg:
            b.edge(v, b.node("-", neg_tok, "polarity"), "polarity")
        self.tail(b, v, frame)
        return top

    def entity(self, b: _Builder) -> int:
        subj = self.person(b)
        frame = self.pick([f for f in self.transitive if lexicon.VERBS[f][2] == "ARG0"])
        v = self.predicate(b, subj, frame, b.word(self.verb_form(frame)))
        obj = self.city if self.chance(0.6) else self.person
        self.tail(b, v, frame, obj=obj)
        return v

    def duplicate(self, b: _Builder) -> int:
        noun = self.pick(self.nouns)
        adj1, adj2 = self.rng.choice(len(lexicon.ADJECTIVES), size=2, replace=False)
        subj = self.noun_phrase(b, noun, lexicon.ADJECTIVES[adj1])
        frame = self.pick([f for f in self.transitive if lexicon.VERBS[f][2] == "ARG0"])
        v = self.predicate(b, subj, frame, b.word(self.verb_form(frame, subj in b.plural)))
        second = lexicon.ADJECTIVES[adj2] if self.chance(0.5) else None
        b.edge(v, self.noun_phrase(b, noun, second, allow_adj=False), "ARG1")
        return v

    def negation(self, b: _Builder) -> int:
        subj = self.subject(b)
        frame = self.pick(self.verbs)
        aux = self.pick(["does", "did"])
        b.word("do" if aux == "does" and subj in b.plural else aux)
        neg = b.word("not")
        v = self.predicate(b, subj, frame, b.word(lexicon.INFINITIVES[frame]))
        b.edge(v, b.node("-", neg, "polarity"), "polarity")
        self.tail(b, v, frame)
        return v

    def nominal(self, b: _Builder) -> int:
        subj = self.subject(b)
        frame = self.pick(["like-01", "see-01", "follow-02", "love-01"])
        v = self.predicate(b, subj, frame, b.word(self.verb_form(frame, subj in b.plural)))
        b.word("the")
        thing = b.node("thing")
        opine = b.node("opine-01", b.word("opinion"))
        b.edge(opine, thing, "ARG1")
        b.word("of")
        b.edge(opine, self.subject(b, 0.3), "ARG0")
        b.edge(v, thing, "ARG1")
        return v

    def sentence(self, kind: str) -> tuple[list[str], AmrGraph, list[int | None]]:
        b = _Builder()
        root = getattr(self, kind)(b)
        b.word(".")
        return b.tokens, AmrGraph(tuple(b.nodes), b.edges, root), b.node_tok


def gold_alignment(graph: AmrGraph, node_tok: Sequence[int | None]) -> tuple[int, ...]:
    """Word index of every re-categorized concept: the single lexicalized member of its group."""
    r = recategorize(graph)
    out = []
    for k in range(len(r.concepts)):
        toks = {node_tok[u] for u in range(len(r.nodes)) if r.owner[u] == k and node_tok[u] is not None}
        if len(toks) != 1:
            raise GraphError(f"concept {r.concepts[k]} has {len(toks)} lexical anchors")
        out.append(toks.pop())
    return tuple(out)


def generate_corpus(config: GeneratorConfig = GeneratorConfig()) -> dict[str, list[CorpusRecord]]:
    """Deterministic train/dev/test splits with gold graphs and gold alignments."""
    gen = _Generator(config)
    kinds = [k for k in TEMPLATES if config.mix.get(k, 0) > 0]
    probs = np.array([config.mix[k] for k in kinds])
    out = {}
    for split in ("train", "dev", "test"):
        records = []
        for i in range(getattr(config, split)):
            kind = kinds[int(gen.rng.choice(len(kinds), p=probs))]
            tokens, g0, node_tok = gen.sentence(kind)
            text = serialize_penman(g0)
            g1 = parse_penman(text)
            iso = find_isomorphism(g0, g1, max_nodes=64)
            if iso is None:
                raise GraphError(f"generated graph does not survive serialization: {text}")
            tok1: list[int | None] = [None] * len(g1)
            for u, v in iso.items():
                tok1[v] = node_tok[u]
            records.append(CorpusRecord(f"{split}-{i}", tuple(tokens), text, gold_alignment(g1, tok1)))
        out[split] = records
    return out
