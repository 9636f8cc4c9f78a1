"""AMR graphs: data model, PENMAN reading/writing, traversal order, isomorphism.

Graph text grammar (UTF-8)::

    graph    := node
    node     := "(" VAR "/" LABEL (ROLE target)* ")"
    target   := node | VAR | constant
    constant := '"' chars '"' | NUMBER | "-" | "+" | SYMBOL
    ROLE     := ":" [A-Za-z0-9_.-]+

``# ...`` lines are skipped.  A role ending in ``-of`` (other than the
fixed exceptions such as ``:consist-of``) is read as the inverse of its base
relation, so ``(t / thing :ARG1-of (o / opine-01))`` stores the edge
``opine -ARG1-> thing``.  Writing restores inverse roles wherever an edge is
reached against its direction.  ``:wiki`` is stored on the concept, not as a
node.  Bare symbols that name a variable are re-entrant references; other
bare symbols are constants.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

__all__ = [
    "CONSTANT_CATEGORIES",
    "INVERSE_EXCEPTIONS",
    "PenmanError",
    "GraphError",
    "Concept",
    "AmrGraph",
    "Alignment",
    "parse_penman",
    "serialize_penman",
    "dfs_concept_order",
    "dfs_parents",
    "normalize_relation_direction",
    "is_isomorphic",
    "find_isomorphism",
    "is_inverse_role",
    "invert_role",
    "split_sense",
    "graph_from_triples",
    "is_symbol",
]

CONSTANT_CATEGORIES = frozenset({"number", "string", "polarity", "symbol"})
INVERSE_EXCEPTIONS = frozenset({"consist-of", "prep-out-of", "prep-on-behalf-of"})

_SENSE_RE = re.compile(r"^(.+?)(-\d\d)$")
_NUMBER_RE = re.compile(r"^[+-]?\d+(\.\d+)?$")
_ROLE_RE = re.compile(r"^:[A-Za-z0-9_.\-]+$")
_SYMBOL_RE = re.compile(r'[^\s()/":#][^\s()/"]*')


class PenmanError(ValueError):
    """Malformed graph text; ``pos`` is the character offset of the problem."""

    def __init__(self, message: str, pos: int | None = None):
        self.pos = pos
        super().__init__(message if pos is None else f"{message} (at offset {pos})")


class GraphError(ValueError):
    pass


def is_symbol(label: str) -> bool:
    """True when ``label`` can be written unquoted as a concept or constant."""
    return _SYMBOL_RE.fullmatch(label) is not None


def split_sense(text: str) -> tuple[str, str | None]:
    m = _SENSE_RE.match(text)
    return (m.group(1), m.group(2)) if m else (text, None)


def is_inverse_role(role: str, exceptions: frozenset[str] = INVERSE_EXCEPTIONS) -> bool:
    return role.endswith("-of") and role not in exceptions


def invert_role(role: str, exceptions: frozenset[str] = INVERSE_EXCEPTIONS) -> str:
    return role[:-3] if is_inverse_role(role, exceptions) else role + "-of"


@dataclass(frozen=True)
class Concept:
    label: str
    category: str = "concept"
    sense: str | None = None
    wiki: str | None = None
    variable: str | None = None

    def __post_init__(self):
        if not self.label:
            raise GraphError("concept label must be nonempty")
        if self.sense is not None and not re.fullmatch(r"-\d\d", self.sense):
            raise GraphError(f"bad sense suffix {self.sense!r}")

    @property
    def is_constant(self) -> bool:
        return self.category in CONSTANT_CATEGORIES

    @property
    def full_label(self) -> str:
        return self.label + (self.sense or "")

    def content(self) -> tuple:
        """Everything except the variable name."""
        return (self.category, self.label, self.sense, self.wiki)


@dataclass(frozen=True)
class AmrGraph:
    """Rooted labeled directed graph; ``edges`` maps (source, target) to a relation."""

    concepts: tuple[Concept, ...]
    edges: Mapping[tuple[int, int], str] = field(default_factory=dict)
    root: int | None = 0

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "edges", dict(self.edges))
        m = len(self.concepts)
        if m == 0:
            object.__setattr__(self, "root", None)
        elif self.root is None or not 0 <= self.root < m:
            raise GraphError(f"root {self.root} out of range for {m} concepts")
        for (i, j), rel in self.edges.items():
            if i == j:
                raise GraphError(f"self-edge on concept {i}")
            if not (0 <= i < m and 0 <= j < m):
                raise GraphError(f"edge ({i}, {j}) out of range")
            if not rel:
                raise GraphError("empty relation label")

    @classmethod
    def empty(cls) -> AmrGraph:
        return cls((), {}, None)

    def __len__(self) -> int:
        return len(self.concepts)

    def neighbors(self, i: int) -> list[tuple[str, int]]:
        """Roles as seen from ``i`` (inverse roles for incoming edges) with the other endpoint."""
        out = []
        for (a, b), rel in self.edges.items():
            if a == i:
                out.append((rel, b))
            elif b == i:
                out.append((invert_role(rel), a))
        return out

    def degree(self, i: int) -> int:
        return sum(1 for (a, b) in self.edges if i in (a, b))

    def is_connected(self) -> bool:
        if not self.concepts:
            return True
        return len(_reachable(self, self.root)) == len(self.concepts)

    def components(self) -> list[list[int]]:
        left = set(range(len(self.concepts)))
        comps = []
        while left:
            start = min(left)
            comp = sorted(_reachable(self, start))
            comps.append(comp)
            left.difference_update(comp)
        return comps

    def with_edges(self, edges: Mapping[tuple[int, int], str]) -> AmrGraph:
        return replace(self, edges=dict(edges))


@dataclass(frozen=True)
class Alignment:
    """0-based word index for each concept; injective."""

    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(k) for k in self.indices))
        if len(set(self.indices)) != len(self.indices):
            raise GraphError(f"alignment is not injective: {self.indices}")

    def check(self, n_words: int) -> None:
        for k in self.indices:
            if not 0 <= k < n_words:
                raise GraphError(f"aligned word {k} outside sentence of length {n_words}")


def _reachable(g: AmrGraph, start: int) -> set[int]:
    adj: dict[int, list[int]] = {}
    for a, b in g.edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = {start}
    todo = [start]
    while todo:
        u = todo.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


# ---------------------------------------------------------------------------
# reading

_TOKEN_RE = re.compile(r'\s+|#[^\n]*|"(?:[^"\\]|\\.)*"|[()/]|[^\s()/"]+')


def _tokenize(text: str) -> list[tuple[str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PenmanError("unterminated string literal", pos)
        tok = m.group(0)
        if not tok.isspace() and not (tok.startswith("#") and (pos == 0 or text[pos - 1] == "\n")):
            toks.append((tok, pos))
        pos = m.end()
    return toks


def _make_constant(tok: str) -> Concept:
    if tok.startswith('"'):
        return Concept(tok[1:-1].replace('\\"', '"'), "string")
    if tok in ("-", "+"):
        return Concept(tok, "polarity")
    if _NUMBER_RE.match(tok):
        return Concept(tok, "number")
    return Concept(tok, "symbol")


def _make_concept(label: str, var: str) -> Concept:
    base, sense = split_sense(label)
    return Concept(base, "frame" if sense else "concept", sense, None, var)


def parse_penman(text: str, exceptions: frozenset[str] = INVERSE_EXCEPTIONS) -> AmrGraph:
    """Read one rooted graph from PENMAN text."""
    toks = _tokenize(text)
    if not toks:
        raise PenmanError("empty graph text", 0)
    defined = {toks[i + 1][0] for i in range(len(toks) - 1) if toks[i][0] == "(" }
    concepts: list[Concept] = []
    var_index: dict[str, int] = {}
    wiki: dict[int, str] = {}
    pending: list[tuple[int, str, str, int]] = []  # (node, role, var, pos)
    edges: dict[tuple[int, int], str] = {}
    pos = 0

    def add_edge(src: int, dst: int, role: str, at: int) -> None:
        if is_inverse_role(role, exceptions):
            src, dst, role = dst, src, role[:-3]
        if src == dst:
            raise PenmanError(f"self-loop via :{role}", at)
        if concepts[src].is_constant:
            raise PenmanError(f"constant cannot be the source of :{role}", at)
        if (src, dst) in edges:
            raise PenmanError(f"second relation between the same ordered pair (:{role})", at)
        edges[(src, dst)] = role

    def expect(value: str) -> int:
        nonlocal pos
        if pos >= len(toks):
            raise PenmanError(f"expected {value!r}, got end of input", len(text))
        tok, at = toks[pos]
        if tok != value:
            raise PenmanError(f"expected {value!r}, got {tok!r}", at)
        pos += 1
        return at

    def node() -> int:
        nonlocal pos
        expect("(")
        if pos + 1 >= len(toks):
            raise PenmanError("truncated node", len(text))
        var, at = toks[pos]
        if var in "()/" or var.startswith((":", '"')):
            raise PenmanError(f"bad variable {var!r}", at)
        if var in var_index:
            raise PenmanError(f"duplicate variable {var!r}", at)
        pos += 1
        expect("/")
        if pos >= len(toks):
            raise PenmanError("missing concept label", len(text))
        label, at = toks[pos]
        if label in "()/" or label.startswith(":"):
            raise PenmanError(f"bad concept label {label!r}", at)
        pos += 1
        me = len(concepts)
        concepts.append(_make_concept(label.strip('"'), var))
        var_index[var] = me
        while True:
            if pos >= len(toks):
                raise PenmanError("unbalanced parentheses: missing ')'", len(text))
            tok, at = toks[pos]
            if tok == ")":
                pos += 1
                return me
            if not _ROLE_RE.match(tok):
                raise PenmanError(f"expected a role, got {tok!r}", at)
            role = tok[1:]
            pos += 1
            if pos >= len(toks):
                raise PenmanError(f"role :{role} has no target", len(text))
            tgt, tat = toks[pos]
            if role == "wiki":
                if tgt in "()/":
                    raise PenmanError("wiki value must be a constant", tat)
                wiki[me] = tgt[1:-1] if tgt.startswith('"') else tgt
                pos += 1
            elif tgt == "(":
                child = node()
                add_edge(me, child, role, at)
            elif tgt in (")", "/") or tgt.startswith(":"):
                raise PenmanError(f"role :{role} has no target", tat)
            elif not tgt.startswith('"') and tgt in defined:
                pending.append((me, role, tgt, tat))
                pos += 1
            else:
                if is_inverse_role(role, exceptions):
                    raise PenmanError(f"constant cannot be the source of :{role}", tat)
                concepts.append(_make_constant(tgt))
                add_edge(me, len(concepts) - 1, role, at)
                pos += 1

    root = node()
    if pos != len(toks):
        raise PenmanError("trailing content after the graph (multiple roots are not supported)", toks[pos][1])
    for me, role, var, at in pending:
        add_edge(me, var_index[var], role, at)
    for i, w in wiki.items():
        concepts[i] = replace(concepts[i], wiki=w)
    return AmrGraph(tuple(concepts), edges, root)


# ---------------------------------------------------------------------------
# writing and traversal


def _child_order(g: AmrGraph, i: int) -> list[tuple[str, int]]:
    return sorted(g.neighbors(i), key=lambda rv: (rv[0], g.concepts[rv[1]].full_label, rv[1]))


def dfs_concept_order(g: AmrGraph) -> list[int]:
    """Depth-first order from the root; children by role, then label, then index."""
    return _dfs(g)[0]


def dfs_parents(g: AmrGraph) -> dict[int, int]:
    """Parent of every non-root concept in the depth-first traversal tree."""
    return _dfs(g)[1]


def _dfs(g: AmrGraph) -> tuple[list[int], dict[int, int]]:
    if not g.concepts:
        return [], {}
    order: list[int] = []
    parent: dict[int, int] = {}
    seen: set[int] = set()
    stack: list[tuple[int, int | None]] = [(g.root, None)]
    while stack:
        u, via = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        order.append(u)
        if via is not None:
            parent[u] = via
        for _, v in reversed(_child_order(g, u)):
            if v not in seen:
                stack.append((v, u))
    if len(order) != len(g.concepts):
        missing = sorted(set(range(len(g.concepts))) - seen)
        raise GraphError(f"concepts {missing} unreachable from the root")
    return order, parent


def _quote(label: str) -> str:
    return '"' + label.replace('"', '\\"') + '"'


def _constant_text(c: Concept) -> str:
    if c.category == "string":
        return _quote(c.label)
    if not is_symbol(c.label):
        raise GraphError(f"constant {c.label!r} cannot be written unquoted")
    return c.label


def serialize_penman(g: AmrGraph, indent: int | None = None) -> str:
    """Write ``g`` as PENMAN; variables are renamed v1, v2, ... in traversal order."""
    if not g.concepts:
        return "(e / amr-empty)"
    if not g.is_connected():
        raise GraphError("cannot serialize a disconnected graph")
    if g.concepts[g.root].is_constant:
        raise GraphError("a constant cannot be the root")
    names: dict[int, str] = {}
    for i in dfs_concept_order(g):
        if not g.concepts[i].is_constant:
            names[i] = f"v{len(names) + 1}"
    placed: set[int] = set()
    emitted: set[tuple[int, int]] = set()

    def write(u: int, depth: int) -> str:
        placed.add(u)
        c = g.concepts[u]
        if not is_symbol(c.full_label):
            raise GraphError(f"concept label {c.full_label!r} cannot be written as a PENMAN symbol")
        parts = [f"({names[u]} / {c.full_label}"]
        roles: list[tuple[str, str]] = []
        if c.wiki is not None:
            roles.append(("wiki", "-" if c.wiki == "-" else _quote(c.wiki)))
        for role, v in _child_order(g, u):
            key = (u, v) if (u, v) in g.edges else (v, u)
            if key in emitted:
                continue
            emitted.add(key)
            cv = g.concepts[v]
            if cv.is_constant:
                if key != (u, v):
                    raise GraphError("constant with an outgoing edge")
                if v in placed:
                    raise GraphError("constant shared by two relations cannot be written")
                roles.append((role, _constant_text(cv)))
                placed.add(v)
            elif v in placed:
                roles.append((role, names[v]))
            else:
                roles.append((role, write(v, depth + 1)))
        roles.sort(key=lambda r: r[0] != "wiki")
        sep = " " if indent is None else "\n" + " " * (indent * (depth + 1))
        for role, text in roles:
            parts.append(f"{sep}:{role} {text}")
        return "".join(parts) + ")"

    return write(g.root, 0)


def normalize_relation_direction(g: AmrGraph, exceptions: frozenset[str] = INVERSE_EXCEPTIONS) -> AmrGraph:
    """Rewrite every inverse ``X-of`` edge as ``X`` with its endpoints swapped."""
    edges: dict[tuple[int, int], str] = {}
    for (i, j), rel in sorted(g.edges.items()):
        if is_inverse_role(rel, exceptions):
            i, j, rel = j, i, rel[:-3]
        edges.setdefault((i, j), rel)
    return g.with_edges(edges)


def is_isomorphic(g1: AmrGraph, g2: AmrGraph, max_nodes: int = 10) -> bool:
    """Exact structural equality up to node renumbering and variable names."""
    return find_isomorphism(g1, g2, max_nodes) is not None


def find_isomorphism(g1: AmrGraph, g2: AmrGraph, max_nodes: int = 10) -> dict[int, int] | None:
    """A node mapping g1 -> g2 preserving content, edges and root, or None."""
    if max(len(g1), len(g2)) > max_nodes:
        raise GraphError(
            f"exact isomorphism limited to {max_nodes} nodes; use smatch for larger graphs"
        )
    n = len(g1)
    if n != len(g2) or len(g1.edges) != len(g2.edges):
        return None
    if n == 0:
        return {}
    if sorted(map(Concept.content, g1.concepts), key=repr) != sorted(map(Concept.content, g2.concepts), key=repr):
        return None
    if sorted(g1.edges.values()) != sorted(g2.edges.values()):
        return None

    def signature(g: AmrGraph, i: int):
        return (g.concepts[i].content(), tuple(sorted(role for role, _ in g.neighbors(i))), i == g.root)

    sig1 = [signature(g1, i) for i in range(n)]
    sig2 = [signature(g2, i) for i in range(n)]
    candidates = [[j for j in range(n) if sig2[j] == sig1[i]] for i in range(n)]
    order = sorted(range(n), key=lambda i: len(candidates[i]))
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def consistent(i: int, j: int) -> bool:
        for (a, b), rel in g1.edges.items():
            if a == i and b in mapping and g2.edges.get((j, mapping[b])) != rel:
                return False
            if b == i and a in mapping and g2.edges.get((mapping[a], j)) != rel:
                return False
        return True

    def search(k: int) -> bool:
        if k == n:
            return True
        i = order[k]
        for j in candidates[i]:
            if j in used or not consistent(i, j):
                continue
            mapping[i] = j
            used.add(j)
            if search(k + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    return dict(mapping) if search(0) else None


def graph_from_triples(
    concepts: Sequence[Concept], triples: Iterable[tuple[int, str, int]], root: int = 0
) -> AmrGraph:
    """Convenience constructor from (source, relation, target) triples."""
    return AmrGraph(tuple(concepts), {(a, b): r for a, r, b in triples}, root)
