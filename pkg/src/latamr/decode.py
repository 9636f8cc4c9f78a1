"""Test-time decoding: per-word concept choice, relation scoring, constrained
graph repair, root selection and sense/wiki post-processing."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .graph import AmrGraph, Concept, GraphError, is_symbol
from .model import Instance, ParserModel
from .preprocess import (
    AnnotatedSentence,
    CopyDictionary,
    Recategorizer,
    extend_alignment,
    stub_annotate,
)
from .tensor import no_grad

__all__ = [
    "DEGREE_CATEGORIES",
    "PREDICATE_CATEGORIES",
    "LookupTables",
    "DecodedInstance",
    "decode_concepts",
    "repair_graph",
    "constraint_violations",
    "postprocess",
    "parse_tokens",
    "parse_annotated",
    "one_hot_alignment",
]

# constants can never be shared: a constant with two neighbours has no PENMAN form
DEGREE_CATEGORIES = frozenset({"number", "string", "polarity", "symbol"})
PREDICATE_CATEGORIES = frozenset({"frame"})


# ---------------------------------------------------------------------------
# lookup tables


def _entity_names(g: AmrGraph, i: int) -> tuple[str, ...] | None:
    for (a, b), rel in g.edges.items():
        if a == i and rel == "name" and g.concepts[b].label == "name":
            ops = sorted(
                ((r, g.concepts[t].label) for (s, t), r in g.edges.items() if s == b and r.startswith("op")),
                key=lambda x: int(x[0][2:]) if x[0][2:].isdigit() else 0,
            )
            return tuple(lab for _, lab in ops)
    return None


@dataclass
class LookupTables:
    """Most frequent sense per frame label and wiki value per named entity, from training graphs."""

    senses: dict[str, str] = field(default_factory=dict)
    wikis: dict[tuple[str, tuple[str, ...]], str] = field(default_factory=dict)
    default_sense: str = "-01"
    default_wiki: str = "-"

    @classmethod
    def fit(cls, graphs: Sequence[AmrGraph]) -> LookupTables:
        sense_counts: dict[str, Counter] = defaultdict(Counter)
        wiki_counts: dict[tuple, Counter] = defaultdict(Counter)
        for g in graphs:
            for i, c in enumerate(g.concepts):
                if c.sense is not None:
                    sense_counts[c.label][c.sense] += 1
                if c.wiki is not None:
                    names = _entity_names(g, i)
                    if names is not None:
                        wiki_counts[(c.label, names)][c.wiki] += 1

        def top(counter):
            return min(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0]

        return cls({k: top(v) for k, v in sense_counts.items()}, {k: top(v) for k, v in wiki_counts.items()})

    def sense(self, label: str) -> str:
        return self.senses.get(label, self.default_sense)

    def wiki(self, label: str, names: tuple[str, ...]) -> str:
        return self.wikis.get((label, names), self.default_wiki)


def postprocess(graph: AmrGraph, tables: LookupTables) -> AmrGraph:
    """Attach senses to sense-less frames and wiki values to named entities lacking one."""
    concepts = list(graph.concepts)
    for i, c in enumerate(concepts):
        if c.category == "frame" and c.sense is None:
            c = replace(c, sense=tables.sense(c.label))
        if c.wiki is None and not c.is_constant:
            names = _entity_names(graph, i)
            if names is not None:
                c = replace(c, wiki=tables.wiki(c.label, names))
        concepts[i] = c
    return AmrGraph(tuple(concepts), graph.edges, graph.root)


# ---------------------------------------------------------------------------
# concepts


def decode_concepts(model: ParserModel, inst: Instance) -> list[Concept | None]:
    """Most probable concept (or None for NULL) for every real word.

    The category is chosen first; inside it, probability mass of the copy
    option and the unknown-concept option both go to the copy candidate.
    Ties break toward the lexicographically smaller name.
    """
    v = model.vocab
    with no_grad():
        h = model.encode_sentence("concept", inst)[0]
        cat_lp, opts, logz = model.concept_tables(h)
    cat_lp, opts = cat_lp.data, opts.data
    n_freq = max(len(v.frequent), 1)
    by_cat: dict[int, list[int]] = defaultdict(list)
    for f, (cat, _) in enumerate(v.frequent):
        by_cat[v.categories[cat]].append(f)
    out: list[Concept | None] = []
    for k in range(inst.n):
        row = cat_lp[k]
        best_t = min(range(len(row)), key=lambda t: (-row[t], v.categories.items[t]))
        if best_t == 0:
            out.append(None)
            continue
        cat = v.categories.items[best_t]
        scores: dict[str, float] = defaultdict(float)
        for f in by_cat[best_t]:
            scores[v.frequent[f][1]] += np.exp(opts[k, f])
        cand = inst.sentence.candidates[k]
        if cat in v.copyable:
            scores[cand] += np.exp(opts[k, -1]) + np.exp(opts[k, n_freq + best_t])
        if not scores:
            scores[cand] = 1.0
        label = min(scores, key=lambda lab: (-scores[lab], lab))
        if cat != "string" and not is_symbol(label):
            out.append(None)  # a copied token such as ":" has no PENMAN form
            continue
        out.append(Concept(label, cat))
    return out


def one_hot_alignment(alignment: Sequence[int], m: int, n: int) -> np.ndarray:
    perm = extend_alignment(list(alignment), m, n)
    size = max(m, n)
    a = np.zeros((size, size))
    a[np.arange(size), perm] = 1.0
    return a


# ---------------------------------------------------------------------------
# graph repair


def _tie_key(score: float, rel: str, i: int, j: int):
    return (-score, rel, i, j)


def repair_graph(
    concepts: Sequence[Concept],
    scores: Mapping[tuple[int, int], np.ndarray],
    relations: Sequence[str],
    fixed: Mapping[tuple[int, int], str] | None = None,
    root: int = 0,
    degree_categories=DEGREE_CATEGORIES,
    predicate_categories=PREDICATE_CATEGORIES,
) -> AmrGraph:
    """Highest-scoring edges subject to the degree, unique-argument and connectivity constraints.

    ``scores[(i, j)]`` holds log-probabilities over ``relations`` (index 0 is
    NULL) for the ordered pair; unscored pairs can only be NULL.  ``fixed``
    edges (from unpacked compounds) are kept as they are.
    """
    m = len(concepts)
    if m == 0:
        return AmrGraph.empty()
    fixed = dict(fixed or {})
    null = 0

    # (a) best joint labelling of each unordered pair, at most one direction non-NULL
    cand: dict[tuple[int, int], tuple[str, float]] = {}
    pairs = sorted({(min(i, j), max(i, j)) for i, j in scores})
    for i, j in pairs:
        if (i, j) in fixed or (j, i) in fixed:
            continue
        s_ij, s_ji = scores.get((i, j)), scores.get((j, i))
        n_ij = s_ij[null] if s_ij is not None else 0.0
        n_ji = s_ji[null] if s_ji is not None else 0.0
        options = []
        for s, other, (a, b) in ((s_ij, n_ji, (i, j)), (s_ji, n_ij, (j, i))):
            if s is not None:
                options += [(s[r] + other, relations[r], a, b, s[r]) for r in range(1, len(relations))]
        if not options:
            continue
        tot, rel, a, b, own = min(options, key=lambda o: _tie_key(o[0], o[1], o[2], o[3]))
        if tot > n_ij + n_ji:
            cand[(a, b)] = (rel, own)

    # (b) degree-constrained concepts keep their best neighbour(s)
    fixed_deg = Counter()
    for a, b in fixed:
        fixed_deg[a] += 1
        fixed_deg[b] += 1
    for u in range(m):
        if concepts[u].category not in degree_categories:
            continue
        budget = max(0, 1 - fixed_deg[u])
        incident = sorted(
            (e for e in cand if u in e), key=lambda e: _tie_key(cand[e][1], cand[e][0], e[0], e[1])
        )
        for e in incident[budget:]:
            del cand[e]

    # (c) a predicate takes at most one argument per relation
    taken = {(a, rel) for (a, _), rel in fixed.items() if concepts[a].category in predicate_categories}
    for e in sorted(cand, key=lambda e: _tie_key(cand[e][1], cand[e][0], e[0], e[1])):
        rel = cand[e][0]
        if concepts[e[0]].category not in predicate_categories:
            continue
        if (e[0], rel) in taken:
            del cand[e]
        else:
            taken.add((e[0], rel))

    edges = dict(fixed)
    edges.update({e: rel for e, (rel, _) in cand.items()})

    # (d) greedily join components with the best admissible non-NULL edge
    degree = Counter()
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
    comp = _components(m, edges)
    while len(set(comp)) > 1:
        best = None
        for relax in (False, True):
            for (i, j), s in scores.items():
                if comp[i] == comp[j]:
                    continue
                if any(concepts[u].category in degree_categories and degree[u] >= 1 for u in (i, j)):
                    continue
                for r in range(1, len(relations)):
                    rel = relations[r]
                    if not relax and concepts[i].category in predicate_categories and (i, rel) in taken:
                        continue
                    key = _tie_key(s[r], rel, i, j)
                    if best is None or key < best[0]:
                        best = (key, i, j, rel)
            if best is not None:
                break
        if best is None:
            raise GraphError("no admissible edge joins the remaining components")
        _, i, j, rel = best
        edges[(i, j)] = rel
        degree[i] += 1
        degree[j] += 1
        taken.add((i, rel))
        comp = _components(m, edges)
    return AmrGraph(tuple(concepts), edges, root)


def _components(m: int, edges) -> list[int]:
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return [find(x) for x in range(m)]


def constraint_violations(
    g: AmrGraph, degree_categories=DEGREE_CATEGORIES, predicate_categories=PREDICATE_CATEGORIES
) -> list[str]:
    """Human-readable list of broken repair constraints (empty when the graph is sound)."""
    out = []
    degree = Counter()
    per_rel = Counter()
    for (a, b), rel in g.edges.items():
        degree[a] += 1
        degree[b] += 1
        if g.concepts[a].category in predicate_categories:
            per_rel[(a, rel)] += 1
    for u, c in enumerate(g.concepts):
        if c.category in degree_categories and degree[u] > 1:
            out.append(f"node {u} ({c.category}) has {degree[u]} neighbours")
    for (a, rel), k in per_rel.items():
        if k > 1:
            out.append(f"predicate {a} has {k} :{rel} arguments")
    if len(g.concepts) and not g.is_connected():
        out.append("graph is disconnected")
    return out


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class DecodedInstance:
    decisions: list[Concept | None]
    concepts: list[Concept]
    alignment: list[int]
    relation_scores: dict
    root_logits: np.ndarray | None
    graph: AmrGraph


def parse_annotated(
    model: ParserModel,
    recategorizer: Recategorizer,
    tables: LookupTables,
    sentence: AnnotatedSentence,
) -> DecodedInstance:
    inst = model.featurize(sentence)
    decisions = decode_concepts(model, inst)
    alignment = [k for k, c in enumerate(decisions) if c is not None]
    concepts = [decisions[k] for k in alignment]
    if not concepts:
        return DecodedInstance(decisions, [], [], {}, None, AmrGraph.empty())
    recat = recategorizer.expand(concepts)
    inst = model.featurize(sentence, recat=recat)
    a_hat = one_hot_alignment(alignment, len(concepts), len(sentence))
    with no_grad():
        logp = model.relation_logprobs(inst, a_hat)
        root_logits = model.root_logits(inst, a_hat).data
    scores = {} if logp is None else {(int(i), int(j)): logp.data[p] for p, (i, j) in enumerate(zip(inst.heads, inst.deps))}
    heads = [next(u for u, o in enumerate(recat.owner) if o == k) for k in range(len(concepts))]
    allowed = [not recat.nodes[h].is_constant for h in heads]
    if not any(allowed):
        return DecodedInstance(decisions, concepts, alignment, scores, root_logits, AmrGraph.empty())
    root_k = min((k for k in range(len(concepts)) if allowed[k]), key=lambda k: (-root_logits[k], k))
    g = repair_graph(recat.nodes, scores, model.vocab.relations.items, fixed=recat.internal, root=heads[root_k])
    return DecodedInstance(decisions, concepts, alignment, scores, root_logits, postprocess(g, tables))


def parse_tokens(
    model: ParserModel,
    recategorizer: Recategorizer,
    tables: LookupTables,
    tokens: Sequence[str],
    copy_dictionary: CopyDictionary | None = None,
) -> DecodedInstance:
    return parse_annotated(model, recategorizer, tables, stub_annotate(tokens, copy_dictionary))
