"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

from typing import Iterable, Sequence

from .graph import AmrGraph, parse_penman

__all__ = ["check_tokens", "check_sentences", "check_graphs", "check_consistent_length"]


def check_tokens(sentence) -> tuple[str, ...]:
    """One sentence as a token tuple; strings are split on whitespace."""
    if isinstance(sentence, str):
        tokens = tuple(sentence.split())
    else:
        tokens = tuple(str(t) for t in sentence)
    if not tokens:
        raise ValueError("empty sentence")
    if any(not t or t.isspace() for t in tokens):
        raise ValueError(f"blank token in {tokens!r}")
    return tokens


def check_sentences(X: Iterable) -> list[tuple[str, ...]]:
    if isinstance(X, str):
        raise TypeError("expected a sequence of sentences, got a single string")
    return [check_tokens(s) for s in X]


def check_graphs(y: Iterable) -> list[AmrGraph]:
    """Accept AmrGraph objects or PENMAN strings."""
    if isinstance(y, (str, AmrGraph)):
        raise TypeError("expected a sequence of graphs")
    out = []
    for g in y:
        if isinstance(g, AmrGraph):
            out.append(g)
        elif isinstance(g, str):
            out.append(parse_penman(g))
        else:
            raise TypeError(f"cannot interpret {type(g).__name__} as a graph")
    return out


def check_consistent_length(*arrays: Sequence) -> None:
    lengths = {len(a) for a in arrays if a is not None}
    if len(lengths) > 1:
        raise ValueError(f"inconsistent numbers of samples: {sorted(lengths)}")
