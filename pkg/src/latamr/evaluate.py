"""Smatch and auxiliary scores.

Triples follow the usual convention: every non-constant node contributes an
``instance`` triple, a ``TOP`` attribute marks the root, ``wiki`` values and
edges into constants are attributes, and edges between non-constant nodes
are relations (in canonical direction).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

from .graph import AmrGraph

__all__ = ["Triples", "graph_triples", "smatch", "smatch_exhaustive", "SmatchResult", "aux_scores", "prf"]


@dataclass(frozen=True)
class Triples:
    variables: tuple[int, ...]  # node index of each variable
    instances: tuple[tuple[int, str], ...]  # (var, label)
    attributes: tuple[tuple[int, str, str], ...]  # (var, name, value)
    relations: tuple[tuple[int, str, int], ...]  # (var, rel, var)

    @property
    def count(self) -> int:
        return len(self.instances) + len(self.attributes) + len(self.relations)


def graph_triples(g: AmrGraph, unlabeled: bool = False) -> Triples:
    var_of = {}
    for i, c in enumerate(g.concepts):
        if not c.is_constant:
            var_of[i] = len(var_of)
    instances = tuple((var_of[i], g.concepts[i].full_label) for i in var_of)
    attrs = set()
    rels = set()
    if g.root is not None and g.root in var_of:
        attrs.add((var_of[g.root], "TOP", g.concepts[g.root].full_label))
    for i in var_of:
        if g.concepts[i].wiki is not None:
            attrs.add((var_of[i], "wiki", g.concepts[i].wiki))
    for (a, b), rel in g.edges.items():
        r = "rel" if unlabeled else rel
        if a in var_of and b in var_of:
            rels.add((var_of[a], r, var_of[b]))
        elif a in var_of:
            attrs.add((var_of[a], r, g.concepts[b].full_label))
        elif b in var_of:
            attrs.add((var_of[b], r + "-of", g.concepts[a].full_label))
    return Triples(tuple(var_of), instances, tuple(sorted(attrs)), tuple(sorted(rels)))


def prf(matched: float, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    p = matched / n_pred if n_pred else 0.0
    r = matched / n_gold if n_gold else 0.0
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


@dataclass(frozen=True)
class SmatchResult:
    matched: int
    n_pred: int
    n_gold: int

    @property
    def precision(self) -> float:
        return prf(self.matched, self.n_pred, self.n_gold)[0]

    @property
    def recall(self) -> float:
        return prf(self.matched, self.n_pred, self.n_gold)[1]

    @property
    def f1(self) -> float:
        return prf(self.matched, self.n_pred, self.n_gold)[2]

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


class _Scorer:
    """Score of a variable mapping pred -> gold (-1 = unmapped)."""

    def __init__(self, t1: Triples, t2: Triples):
        n1, n2 = len(t1.variables), len(t2.variables)
        self.n1, self.n2 = n1, n2
        unary = np.zeros((n1, n2 + 1), dtype=np.int64)
        inst2 = Counter(t2.instances)
        for v, lab in t1.instances:
            for x in range(n2):
                unary[v, x] += inst2[(x, lab)] > 0
        attr2 = set(t2.attributes)
        for v, name, val in t1.attributes:
            for x in range(n2):
                unary[v, x] += (x, name, val) in attr2
        self.unary = unary
        by_label: dict[str, set[tuple[int, int]]] = {}
        for a, r, b in t2.relations:
            by_label.setdefault(r, set()).add((a, b))
        self.rels = [(a, b, by_label.get(r, set())) for a, r, b in t1.relations]
        self.bound = min(t1.count, t2.count, int(unary.max(axis=1).sum()) + len(self.rels))

    def score(self, f: Sequence[int]) -> int:
        s = 0
        for v, x in enumerate(f):
            if x >= 0:
                s += self.unary[v, x]
        for a, b, targets in self.rels:
            fa, fb = f[a], f[b]
            if fa >= 0 and fb >= 0 and (fa, fb) in targets:
                s += 1
        return int(s)


def _neighbours(f: list[int], n2: int):
    n1 = len(f)
    used = set(x for x in f if x >= 0)
    free = [x for x in range(n2) if x not in used] + [-1]
    for v in range(n1):
        for x in free:
            if x != f[v]:
                g = f.copy()
                g[v] = x
                yield g
    for u in range(n1):
        for v in range(u + 1, n1):
            if f[u] != f[v]:
                g = f.copy()
                g[u], g[v] = f[v], f[u]
                yield g


def _pair_moves(f: list[int], n2: int):
    """Simultaneous reassignment of two variables (escapes single-move plateaus)."""
    n1 = len(f)
    for u in range(n1):
        for v in range(u + 1, n1):
            used = set(x for k, x in enumerate(f) if x >= 0 and k not in (u, v))
            opts = [x for x in range(n2) if x not in used] + [-1]
            for x in opts:
                for y in opts:
                    if (x == y and x >= 0) or (x == f[u] and y == f[v]):
                        continue
                    g = f.copy()
                    g[u], g[v] = x, y
                    yield g


def _climb(scorer: _Scorer, f: list[int], rng: np.random.Generator, plateau_steps: int = 30) -> tuple[int, list[int]]:
    """Steepest ascent; at a local optimum, walk sideways over unvisited equal-score mappings."""
    best = scorer.score(f)
    visited = {tuple(f)}
    sideways = 0
    while True:
        if best >= scorer.bound:
            return best, f
        improved = False
        level = []
        for moves in (_neighbours, _pair_moves):
            cand_best, cand = best, None
            for g in moves(f, scorer.n2):
                s = scorer.score(g)
                if s > cand_best:
                    cand_best, cand = s, g
                elif s == best and tuple(g) not in visited:
                    level.append(g)
            if cand is not None:
                best, f = cand_best, cand
                visited.add(tuple(f))
                improved = True
                sideways = 0
                break
        if improved:
            continue
        if not level or sideways >= plateau_steps:
            return best, f
        f = level[int(rng.integers(len(level)))]
        visited.add(tuple(f))
        sideways += 1


def _smart_init(t1: Triples, t2: Triples, rng: np.random.Generator | None) -> list[int]:
    by_label: dict[str, list[int]] = {}
    for x, lab in t2.instances:
        by_label.setdefault(lab, []).append(x)
    used: set[int] = set()
    f = []
    for v, lab in t1.instances:
        opts = [x for x in by_label.get(lab, []) if x not in used]
        if opts:
            x = opts[int(rng.integers(len(opts)))] if rng is not None else opts[0]
            used.add(x)
            f.append(x)
        else:
            f.append(-1)
    return f


def smatch(pred: AmrGraph, gold: AmrGraph, restarts: int = 4, seed: int = 0, unlabeled: bool = False) -> SmatchResult:
    """Hill-climbing Smatch: one label-matching start plus ``restarts - 1`` randomized starts."""
    t1, t2 = graph_triples(pred, unlabeled), graph_triples(gold, unlabeled)
    if not t1.variables or not t2.variables:
        return SmatchResult(0, t1.count, t2.count)
    scorer = _Scorer(t1, t2)
    rng = np.random.default_rng(seed)
    best = -1
    for r in range(max(1, restarts)):
        if r == 0:
            f = _smart_init(t1, t2, None)
        elif r == 1:
            f = _smart_init(t1, t2, rng)
        else:
            perm = rng.permutation(max(scorer.n1, scorer.n2))
            f = [int(x) if x < scorer.n2 else -1 for x in perm[: scorer.n1]]
        s, _ = _climb(scorer, f, rng)
        best = max(best, s)
        if best >= scorer.bound:
            break
    return SmatchResult(best, t1.count, t2.count)


def smatch_exhaustive(pred: AmrGraph, gold: AmrGraph, max_vars: int = 8, unlabeled: bool = False) -> SmatchResult:
    """Best mapping by enumerating every maximal injective variable mapping."""
    t1, t2 = graph_triples(pred, unlabeled), graph_triples(gold, unlabeled)
    n1, n2 = len(t1.variables), len(t2.variables)
    if max(n1, n2) > max_vars:
        raise ValueError(f"exhaustive matching limited to {max_vars} variables")
    if not n1 or not n2:
        return SmatchResult(0, t1.count, t2.count)
    scorer = _Scorer(t1, t2)
    best = 0
    if n1 <= n2:
        for image in permutations(range(n2), n1):
            best = max(best, scorer.score(list(image)))
    else:
        for chosen in permutations(range(n1), n2):
            f = [-1] * n1
            for x, v in enumerate(chosen):
                f[v] = x
            best = max(best, scorer.score(f))
    return SmatchResult(best, t1.count, t2.count)


def _multiset_f1(pred: Counter, gold: Counter) -> float:
    return prf(sum((pred & gold).values()), sum(pred.values()), sum(gold.values()))[2]


def aux_scores(pred: AmrGraph, gold: AmrGraph, a_hat=None, gold_alignment=None, restarts: int = 4) -> dict:
    """Concept F1, unlabeled Smatch F1 and (when gold alignments are given) alignment accuracy."""
    out = {
        "concepts": _multiset_f1(
            Counter(c.full_label for c in pred.concepts), Counter(c.full_label for c in gold.concepts)
        ),
        "unlabeled": smatch(pred, gold, restarts=restarts, unlabeled=True).f1,
    }
    if a_hat is not None and gold_alignment is not None:
        out["alignment"] = alignment_accuracy(a_hat, gold_alignment)
    return out


def alignment_accuracy(a_hat, gold_alignment: Sequence[int]) -> float:
    a = np.asarray(getattr(a_hat, "data", a_hat))
    m = len(gold_alignment)
    if m == 0:
        return 1.0
    return float(np.mean([int(np.argmax(a[i])) == int(gold_alignment[i]) for i in range(m)]))
