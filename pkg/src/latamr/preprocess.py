"""Turning raw tokens and gold graphs into model-ready instances.

* stub annotation (lemma / POS / NER) from bundled word lists;
* the copy dictionary that proposes one candidate concept per word;
* reversible re-categorization of stable subgraphs into compound concepts;
* NULL padding that turns injective alignments into permutations.
"""

from __future__ import annotations

import fnmatch
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Callable, Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from . import lexicon
from .graph import AmrGraph, Concept, GraphError, dfs_concept_order, dfs_parents, split_sense
from .validation import check_graphs

log = logging.getLogger(__name__)

__all__ = [
    "NULL",
    "PLAIN_CATEGORIES",
    "AnnotatedSentence",
    "stub_annotate",
    "lemmatize",
    "edit_distance",
    "match",
    "CopyDictionary",
    "build_copy_dictionary",
    "RecatRule",
    "DEFAULT_RULE_TABLE",
    "parse_rule_table",
    "RecatGraph",
    "Recategorizer",
    "recategorize",
    "unpack",
    "pad_to_square",
    "restrict_permutation",
    "merge_dashed_spans",
]

NULL = "<null>"
PLAIN_CATEGORIES = frozenset({"concept", "frame", "number", "string", "polarity", "symbol"})


# ---------------------------------------------------------------------------
# annotation


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[str, ...]
    lemmas: tuple[str, ...]
    pos: tuple[str, ...]
    ner: tuple[str, ...]
    candidates: tuple[str, ...]

    def __post_init__(self):
        n = len(self.tokens)
        for name in ("lemmas", "pos", "ner", "candidates"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.tokens)


def lemmatize(word: str) -> str:
    """Suffix-stripping lemmatizer backed by a closed word list."""
    if word[:1].isupper() and word.lower() not in lexicon.POS_LEXICON:
        return word
    w = word.lower()
    if w in lexicon.IRREGULAR_LEMMAS:
        return lexicon.IRREGULAR_LEMMAS[w]
    if w in lexicon.KNOWN_LEMMAS:
        return w
    candidates = []
    if w.endswith("ies") and len(w) > 4:
        candidates.append(w[:-3] + "y")
    if w.endswith("es") and len(w) > 3:
        candidates.append(w[:-2])
    if w.endswith("s") and not w.endswith("ss") and len(w) > 3:
        candidates.append(w[:-1])
    if w.endswith("ied") and len(w) > 4:
        candidates.append(w[:-3] + "y")
    if w.endswith("ed") and len(w) > 4:
        candidates += [w[:-1], w[:-2]]
        if w[-3] == w[-4]:
            candidates.append(w[:-3])
    if w.endswith("ing") and len(w) > 5:
        candidates += [w[:-3] + "e", w[:-3]]
        if w[-4] == w[-5]:
            candidates.append(w[:-4])
    for c in candidates:
        if c in lexicon.KNOWN_LEMMAS:
            return c
    if w.endswith("s") and not w.endswith("ss") and len(w) > 3:
        return w[:-1]
    return w


def stub_annotate(tokens: Sequence[str], copy_dictionary: CopyDictionary | None = None) -> AnnotatedSentence:
    if not tokens:
        raise ValueError("cannot annotate an empty sentence")
    tokens = tuple(tokens)
    lemmas = tuple(lemmatize(t) for t in tokens)
    pos = []
    ner = []
    for t in tokens:
        if t in lexicon.GAZETTEER:
            pos.append("NNP")
            ner.append(lexicon.GAZETTEER[t])
        elif t.lower() in lexicon.POS_LEXICON:
            pos.append(lexicon.POS_LEXICON[t.lower()])
            ner.append("O")
        elif t.replace(".", "", 1).isdigit():
            pos.append("CD")
            ner.append("NUMBER")
        else:
            pos.append("X")
            ner.append("O")
    if copy_dictionary is None:
        cands = lemmas
    else:
        cands = tuple(copy_dictionary.lookup(t, lem) for t, lem in zip(tokens, lemmas))
    return AnnotatedSentence(tokens, lemmas, tuple(pos), tuple(ner), cands)


def merge_dashed_spans(tokens: Sequence[str], vocabulary: set[str]) -> list[str]:
    """Join ``a b`` into ``a-b`` when the dashed form is a known concept label."""
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and f"{tokens[i]}-{tokens[i + 1]}".lower() in vocabulary:
            out.append(f"{tokens[i]}-{tokens[i + 1]}")
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


# ---------------------------------------------------------------------------
# copy dictionary


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match(concept_label: str, word: str, lemma: str | None = None) -> bool:
    """Lexical matching rules used to harvest copy candidates.

    Verbalization-list and frame-file lookups are not available and never fire.
    """
    c = concept_label.lower()
    w = word.lower()
    lem = (lemma if lemma is not None else lemmatize(word)).lower()
    if c in (w, lem):
        return True
    for suffix in ("ed", "ly", "ing"):
        if w.endswith(suffix) and w[: -len(suffix)] == c:
            return True
    return min(edit_distance(c, w), edit_distance(c, lem)) < 0.5 * len(c)


@dataclass
class CopyDictionary:
    """word -> candidate concept label; unseen words fall back to their lemma."""

    table: dict[str, str] = field(default_factory=dict)

    def lookup(self, word: str, lemma: str | None = None) -> str:
        if word in self.table:
            return self.table[word]
        return lemma if lemma is not None else lemmatize(word)

    __call__ = lookup

    def save(self, path: str | Path) -> None:
        lines = [f"{w}\t{c}\n" for w, c in sorted(self.table.items())]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> CopyDictionary:
        table = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            try:
                w, c = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected word<TAB>concept") from None
            table[w] = c
        return cls(table)


def _concept_labels(item) -> list[str]:
    concepts = item.concepts if hasattr(item, "concepts") else item
    return [c.label if isinstance(c, Concept) else str(c) for c in concepts]


def build_copy_dictionary(
    corpus: Iterable[tuple[Sequence[str], object]],
    matcher: Callable[[str, str, str], bool] = match,
) -> CopyDictionary:
    """Count matching (concept, word) pairs over every instance; keep the argmax per word."""
    counter: dict[str, Counter] = defaultdict(Counter)
    for tokens, graph in corpus:
        labels = _concept_labels(graph)
        for w in tokens:
            lem = lemmatize(w)
            for c in labels:
                if matcher(c, w, lem):
                    counter[w][c] += 1
    table = {w: min(cnt.items(), key=lambda kv: (-kv[1], kv[0]))[0] for w, cnt in counter.items()}
    return CopyDictionary(table)


# ---------------------------------------------------------------------------
# re-categorization


@dataclass(frozen=True)
class RecatRule:
    kind: str  # "template" | "fixed-phrase" | "entity"
    primary: str  # glob over the full concept label
    relations: tuple[str, ...]
    category: str  # "*" is replaced by the matched label (or entity type)

    def matches(self, concept: Concept) -> bool:
        return not concept.is_constant and fnmatch.fnmatchcase(concept.full_label, self.primary)

    def allows(self, role: str) -> bool:
        return "*" in self.relations or role in self.relations


DEFAULT_RULE_TABLE = """\
# kind|primary|relations|category
fixed-phrase|have-org-role-91|ARG0/ARG2|have-org-role_*
fixed-phrase|have-rel-role-91|ARG0/ARG2|have-rel-role_*
fixed-phrase|*-entity|*|*
entity|*|name|Ner_*
template|person|ARG0-of/ARG1-of|person
template|thing|ARG0-of/ARG1-of/ARG2-of|thing
template|most|degree-of|most
template|monetary-quantity|unit/ARG2-of/ARG1-of/quant|monetary-quantity
template|temporal-quantity|unit/ARG3-of|temporal-quantity
template|*-quantity|unit|*
template|date-entity|weekday/dayperiod/season|date-entity
"""

_KIND_PRIORITY = {"fixed-phrase": 0, "entity": 1, "template": 2}


def parse_rule_table(text: str) -> tuple[RecatRule, ...]:
    rules = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 4 or parts[0] not in _KIND_PRIORITY:
            raise ValueError(f"rule table line {lineno}: expected kind|primary|relations|category")
        rules.append(RecatRule(parts[0], parts[1], tuple(parts[2].split("/")), parts[3]))
    return tuple(sorted(rules, key=lambda r: _KIND_PRIORITY[r.kind]))


DEFAULT_RULES = parse_rule_table(DEFAULT_RULE_TABLE)


@dataclass(frozen=True)
class RecatGraph:
    """A graph viewed at two granularities.

    ``concepts`` are the compound concepts the concept and alignment models
    see, in traversal order.  ``nodes`` are the original concepts; node ``u``
    shares the alignment of ``concepts[owner[u]]``.  Nodes with equal ``unit``
    came from one rule application; ``internal`` edges are fixed by that rule,
    ``external`` edges are what the relation model predicts.
    """

    concepts: tuple[Concept, ...]
    nodes: tuple[Concept, ...] | None = None
    owner: tuple[int, ...] = ()
    unit: tuple[int, ...] = ()
    internal: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)
    root: int | None = None

    @property
    def has_metadata(self) -> bool:
        return self.nodes is not None


def _nominalize(label: str) -> str:
    return lexicon.NOMINALIZATIONS.get(label, label)


def _denominalize(label: str) -> str:
    for verb, noun in lexicon.NOMINALIZATIONS.items():
        if noun == label:
            return verb
    return label


def _find_groups(g: AmrGraph, rules: Sequence[RecatRule]):
    """Yield (kind, member node lists per compound concept, compound concepts)."""
    order = dfs_concept_order(g)
    parents = dfs_parents(g)
    taken: set[int] = set()
    found = []
    out_edges: dict[int, list[tuple[str, int]]] = defaultdict(list)
    for (a, b), rel in sorted(g.edges.items()):
        out_edges[a].append((rel, b))
    for rule in rules:
        for p in order:
            if p in taken or not rule.matches(g.concepts[p]):
                continue
            hit = _apply_rule(g, rule, p, taken, out_edges, parents.get(p))
            if hit is None:
                continue
            members, concepts = hit
            flat = [u for grp in members for u in grp]
            if taken.intersection(flat):
                log.debug("rule %s overlaps an earlier match at node %d; skipped", rule, p)
                continue
            taken.update(flat)
            found.append((members, concepts))
    return found


def _apply_rule(g, rule, p, taken, out_edges, parent):
    cp = g.concepts[p]
    if rule.kind == "template":
        # the secondary hangs below the primary in the traversal tree, never above it
        for role, s in sorted(g.neighbors(p), key=lambda rv: (rv[0], g.concepts[rv[1]].full_label, rv[1])):
            if rule.allows(role) and s not in taken and s != parent:
                label = _nominalize(g.concepts[s].label)
                return [[p, s]], [Concept(label, rule.category.replace("*", cp.label))]
        return None
    if rule.kind == "fixed-phrase" and len(rule.relations) == 2 and "*" not in rule.relations:
        outs = dict(out_edges.get(p, ()))
        a, r = outs.get(rule.relations[0]), outs.get(rule.relations[1])
        if a is None or r is None or a in taken or r in taken:
            return None
        if g.concepts[a].is_constant or g.concepts[r].is_constant:
            return None
        cat = rule.category.replace("*", g.concepts[a].label)
        return [[a, p, r]], [Concept(g.concepts[r].label, cat)]
    if rule.kind == "fixed-phrase":
        outs = out_edges.get(p, ())
        if len(outs) != 1:
            return None
        role, c = outs[0]
        if not rule.allows(role) or not g.concepts[c].is_constant or c in taken:
            return None
        return [[p, c]], [Concept(g.concepts[c].label, rule.category.replace("*", cp.label))]
    if rule.kind == "entity":
        names = [b for rel, b in out_edges.get(p, ()) if rel in rule.relations]
        if len(names) != 1:
            return None
        nm = names[0]
        if nm in taken or g.concepts[nm].label != "name" or g.degree(nm) != 1 + len(out_edges.get(nm, ())):
            return None
        ops = dict(out_edges.get(nm, ()))
        k = len(ops)
        if k == 0 or set(ops) != {f"op{i}" for i in range(1, k + 1)}:
            return None
        strings = [ops[f"op{i}"] for i in range(1, k + 1)]
        if any(g.concepts[s].category != "string" or s in taken for s in strings):
            return None
        cat = rule.category.replace("*", cp.label)
        members = [[p, nm, strings[0]]] + [[s] for s in strings[1:]]
        concepts = [Concept(g.concepts[strings[0]].label, "B-" + cat)]
        concepts += [Concept(g.concepts[s].label, cat) for s in strings[1:]]
        return members, concepts
    raise ValueError(f"unknown rule kind {rule.kind!r}")


def _plain(c: Concept) -> Concept:
    return Concept(c.label, c.category)


def recategorize(g: AmrGraph, rules: Sequence[RecatRule] = DEFAULT_RULES) -> RecatGraph:
    """Collapse rule-matched subgraphs into compound concepts (keeps unpacking metadata)."""
    m = len(g.concepts)
    owner_of: dict[int, int] = {}
    unit_of: dict[int, int] = {}
    compound: list[tuple[float, Concept]] = []
    dfs_pos = {u: k for k, u in enumerate(dfs_concept_order(g))}
    groups = _find_groups(g, rules)
    for unit_id, (members, concepts) in enumerate(groups):
        for grp, concept in zip(members, concepts):
            key = min(dfs_pos[u] for u in grp)
            compound.append(((key, len(compound)), concept))
            for u in grp:
                owner_of[u] = len(compound) - 1
                unit_of[u] = unit_id
    next_unit = len(groups)
    for u in range(m):
        if u not in owner_of:
            compound.append(((dfs_pos[u], len(compound)), _plain(g.concepts[u])))
            owner_of[u] = len(compound) - 1
            unit_of[u] = next_unit
            next_unit += 1
    ranked = sorted(range(len(compound)), key=lambda k: compound[k][0])
    new_index = {old: new for new, old in enumerate(ranked)}
    internal = {}
    external = {}
    for (a, b), rel in g.edges.items():
        (internal if unit_of[a] == unit_of[b] else external)[(a, b)] = rel
    return RecatGraph(
        concepts=tuple(compound[k][1] for k in ranked),
        nodes=g.concepts,
        owner=tuple(new_index[owner_of[u]] for u in range(m)),
        unit=tuple(unit_of[u] for u in range(m)),
        internal=internal,
        external=external,
        root=g.root,
    )


def unpack(recat: RecatGraph, external: dict | None = None) -> AmrGraph:
    """Inverse of :func:`recategorize`; ``external`` overrides the stored cross-unit edges."""
    if not recat.has_metadata:
        raise GraphError("compound concepts carry no unpacking metadata; use Recategorizer.expand")
    edges = dict(recat.internal)
    edges.update(recat.external if external is None else external)
    return AmrGraph(recat.nodes, edges, recat.root)


def _category_rule(category: str, rules: Sequence[RecatRule]) -> tuple[RecatRule, str] | None:
    """Which rule produced ``category`` and what its ``*`` stood for."""
    for rule in rules:
        cat = rule.category
        if rule.kind == "entity":
            cat_b = "B-" + cat
            for pattern in (cat_b, cat):
                head, _, tail = pattern.partition("*")
                if category.startswith(head) and category.endswith(tail) and len(category) > len(head) + len(tail):
                    return rule, category[len(head) : len(category) - len(tail)]
            continue
        if "*" not in cat:
            if category == cat:
                return rule, rule.primary
            continue
        head, _, tail = cat.partition("*")
        if category.startswith(head) and category.endswith(tail) and len(category) > len(head) + len(tail):
            star = category[len(head) : len(category) - len(tail)]
            if rule.kind == "fixed-phrase" and len(rule.relations) == 2 and "*" not in rule.relations:
                return rule, star
            if fnmatch.fnmatchcase(star, rule.primary.replace("-91", "")) or fnmatch.fnmatchcase(star, rule.primary):
                return rule, star
    return None


def _constant_for(label: str) -> Concept:
    if label in ("-", "+"):
        return Concept(label, "polarity")
    if label.replace(".", "", 1).lstrip("+-").isdigit():
        return Concept(label, "number")
    return Concept(label, "symbol")


def _as_concept(full_label: str) -> Concept:
    base, sense = split_sense(full_label)
    return Concept(base, "frame" if sense else "concept", sense)


class Recategorizer(TransformerMixin, BaseEstimator):
    """Rule-driven re-categorization with learned expansions for decoding.

    ``fit`` records, for every compound concept seen in training, the exact
    subgraph it stood for; ``expand`` uses those records (or the rule
    defaults for unseen compounds) to unpack predicted concepts that carry no
    metadata.
    """

    def __init__(self, rule_table: str = DEFAULT_RULE_TABLE):
        self.rule_table = rule_table

    @property
    def rules_(self) -> tuple[RecatRule, ...]:
        return parse_rule_table(self.rule_table)

    def fit(self, X, y=None):
        graphs = check_graphs(X)
        structures: dict[tuple[str, str], Counter] = defaultdict(Counter)
        for g in graphs:
            r = recategorize(g, self.rules_)
            for k, concept in enumerate(r.concepts):
                if concept.category in PLAIN_CATEGORIES or concept.category.startswith(("B-", "Ner_")):
                    continue
                members = [u for u in range(len(r.nodes)) if r.owner[u] == k]
                local = {u: i for i, u in enumerate(members)}
                spec = (
                    tuple((r.nodes[u].label, r.nodes[u].category, r.nodes[u].sense) for u in members),
                    tuple(sorted((local[a], local[b], rel) for (a, b), rel in r.internal.items() if a in local and b in local)),
                )
                structures[(concept.category, concept.label)][spec] += 1
        self.structures_ = {
            key: min(cnt.items(), key=lambda kv: (-kv[1], repr(kv[0])))[0] for key, cnt in structures.items()
        }
        return self

    def transform(self, X) -> list[RecatGraph]:
        return [recategorize(g, self.rules_) for g in check_graphs(X)]

    def inverse_transform(self, X) -> list[AmrGraph]:
        return [unpack(r) for r in X]

    def _expand_one(self, concept: Concept):
        """Members [(Concept)], internal edges [(a, b, rel)] for one non-entity compound."""
        known = getattr(self, "structures_", {}).get((concept.category, concept.label))
        if known is not None:
            members, edges = known
            return [Concept(lab, cat, sense) for lab, cat, sense in members], list(edges)
        hit = _category_rule(concept.category, self.rules_)
        if hit is None:
            return [concept], []
        rule, star = hit
        if rule.kind == "template":
            primary = star if "*" in rule.category else rule.primary
            secondary = _as_concept(_denominalize(concept.label))
            if _denominalize(concept.label) != concept.label:
                secondary = Concept(secondary.label, "frame")
            role = rule.relations[0]
            if role.endswith("-of"):
                return [_as_concept(primary), secondary], [(1, 0, role[:-3])]
            return [_as_concept(primary), secondary], [(0, 1, role)]
        if len(rule.relations) == 2 and "*" not in rule.relations:
            frame = _as_concept(rule.primary)
            return (
                [_as_concept(star), frame, _as_concept(concept.label)],
                [(1, 0, rule.relations[0]), (1, 2, rule.relations[1])],
            )
        role = "value" if "*" in rule.relations else rule.relations[0]
        return [_as_concept(star), _constant_for(concept.label)], [(0, 1, role)]

    def expand(self, concepts: Sequence[Concept]) -> RecatGraph:
        """Unpack predicted compound concepts (no gold metadata) into original nodes.

        Entity continuations (``Ner_x``) attach to the closest preceding
        ``B-Ner_x``; orphans start a new entity.
        """
        nodes: list[Concept] = []
        owner: list[int] = []
        unit: list[int] = []
        internal: dict[tuple[int, int], str] = {}
        open_entity: dict[str, tuple[int, int, int]] = {}  # type -> (name node, op count, unit)
        n_units = 0
        for k, c in enumerate(concepts):
            hit = None if c.category in PLAIN_CATEGORIES else _category_rule(c.category, self.rules_)
            if hit is not None and hit[0].kind == "entity":
                etype = hit[1]
                if c.category.startswith("B-") or etype not in open_entity:
                    head = len(nodes)
                    nodes += [_as_concept(etype), Concept("name", "concept"), Concept(c.label, "string")]
                    owner += [k, k, k]
                    unit += [n_units] * 3
                    internal[(head, head + 1)] = "name"
                    internal[(head + 1, head + 2)] = "op1"
                    open_entity[etype] = (head + 1, 1, n_units)
                    n_units += 1
                else:
                    name_node, count, u_id = open_entity[etype]
                    nodes.append(Concept(c.label, "string"))
                    owner.append(k)
                    unit.append(u_id)
                    internal[(name_node, len(nodes) - 1)] = f"op{count + 1}"
                    open_entity[etype] = (name_node, count + 1, u_id)
                continue
            members, edges = ([c], []) if hit is None else self._expand_one(c)
            base = len(nodes)
            nodes += members
            owner += [k] * len(members)
            unit += [n_units] * len(members)
            for a, b, rel in edges:
                internal[(base + a, base + b)] = rel
            n_units += 1
        return RecatGraph(
            concepts=tuple(concepts),
            nodes=tuple(nodes),
            owner=tuple(owner),
            unit=tuple(unit),
            internal=internal,
            external={},
            root=0 if nodes else None,
        )


# ---------------------------------------------------------------------------
# padding to permutations


def pad_to_square(concepts: Sequence, words: Sequence, null=NULL) -> tuple[list, list]:
    """Append NULL items to the shorter side so both lists have equal length."""
    m, n = len(concepts), len(words)
    if m < 1 or n < 1:
        raise ValueError("need at least one concept and one word")
    return list(concepts) + [null] * (n - m), list(words) + [null] * (m - n)


def restrict_permutation(perm: Sequence[int], m: int, n: int) -> tuple[int | None, ...]:
    """Alignment of the first ``m`` (real) concepts implied by a padded permutation.

    Concepts placed on a padded NULL word (index >= n) are unaligned (None).
    """
    return tuple(k if k < n else None for k in perm[:m])


def extend_alignment(alignment: Sequence[int | None], m: int, n: int) -> tuple[int, ...]:
    """Complete an injective alignment of ``m`` concepts into a permutation of max(m, n).

    Unaligned concepts take padded NULL words first, then leftover real words.
    """
    size = max(m, n)
    used = {k for k in alignment if k is not None}
    spare = [k for k in range(n, size)] + [k for k in range(n) if k not in used]
    spare_iter = iter(spare)
    perm = [next(spare_iter) if k is None else k for k in alignment]
    perm += sorted(set(range(size)) - set(perm))
    return tuple(perm)


def all_permutations(n: int):
    return permutations(range(n))
