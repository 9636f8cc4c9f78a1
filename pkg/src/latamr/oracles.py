"""Random problem generators, brute-force reference implementations and the
verification suites run by ``latamr oracle-check`` / ``latamr grad-check``."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp as np_logsumexp

from .corpus import GeneratorConfig, generate_corpus
from .decode import constraint_violations, repair_graph
from .evaluate import smatch, smatch_exhaustive
from .graph import AmrGraph, Concept, is_isomorphic, parse_penman, serialize_penman
from .model import EncoderConfig, Instance, ParserModel, Vocabulary
from .preprocess import NULL, recategorize, stub_annotate, unpack
from .sinkhorn import (
    SinkhornConfig,
    gumbel_kl,
    gumbel_kl_monte_carlo,
    gumbel_sinkhorn,
    perturb_and_max,
    sample_gumbel,
    sinkhorn_log,
)
from .tensor import grad_errors, tensor
from .training import (
    ObjectiveConfig,
    discrete_elbo,
    enumerate_log_joint,
    exact_log_marginal,
    exact_posterior,
    instance_objective,
)

__all__ = [
    "CheckResult",
    "random_graph",
    "random_score_table",
    "random_tiny_model",
    "concept_loss_bruteforce",
    "log_marginal_bruteforce",
    "check_sinkhorn_convergence",
    "check_low_temperature",
    "check_gumbel_kl",
    "check_gradients",
    "check_variational_bound",
    "check_repair",
    "check_smatch",
    "check_round_trips",
    "oracle_suite",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


# ---------------------------------------------------------------------------
# generators

_LABELS = ("boy", "girl", "want-01", "go-02", "city", "dog")
_RELS = ("ARG0", "ARG1", "mod")


def random_graph(rng: np.random.Generator, max_vars: int = 6, labels=_LABELS, relations=_RELS) -> AmrGraph:
    """Random connected graph (optionally re-entrant) with few distinct labels, so mappings are ambiguous."""
    n = int(rng.integers(1, max_vars + 1))
    concepts = []
    for _ in range(n):
        lab = labels[int(rng.integers(len(labels)))]
        base, _, sense = lab.rpartition("-") if lab[-3:-2] == "-" else (lab, "", "")
        concepts.append(Concept(base, "frame", "-" + sense) if sense else Concept(lab))
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(v))
        a, b = (u, v) if rng.random() < 0.8 else (v, u)
        edges[(a, b)] = relations[int(rng.integers(len(relations)))]
    for _ in range(int(rng.integers(0, 3))):
        a, b = (int(x) for x in rng.integers(0, n, 2))
        if a != b and (a, b) not in edges and (b, a) not in edges:
            edges[(a, b)] = relations[int(rng.integers(len(relations)))]
    if rng.random() < 0.4 and n:
        concepts.append(Concept("-", "polarity"))
        edges[(int(rng.integers(n)), n)] = "polarity"
    return AmrGraph(tuple(concepts), edges, 0)


_REPAIR_CATEGORIES = ("frame", "frame", "concept", "concept", "number", "string", "polarity")
# at least max_concepts - 1 non-NULL labels, so one predicate can always host every other concept
_REPAIR_RELATIONS = (NULL, "ARG0", "ARG1", "ARG2", "ARG3", "ARG4", "mod", "quant", "polarity")


def random_score_table(rng: np.random.Generator, min_concepts: int = 2, max_concepts: int = 8):
    """(concepts, scores, relations) with log-softmax scores for every ordered pair whose head is not a constant."""
    m = int(rng.integers(min_concepts, max_concepts + 1))
    cats = [_REPAIR_CATEGORIES[int(rng.integers(len(_REPAIR_CATEGORIES)))] for _ in range(m)]
    if all(c in ("number", "string", "polarity") for c in cats):
        cats[0] = "frame"
    concepts = []
    for i, c in enumerate(cats):
        if c == "number":
            concepts.append(Concept(str(i), c))
        elif c == "string":
            concepts.append(Concept(f"s{i}", c))
        elif c == "polarity":
            concepts.append(Concept("-", c))
        elif c == "frame":
            concepts.append(Concept(f"v{i}", c, "-01"))
        else:
            concepts.append(Concept(f"n{i}", c))
    R = len(_REPAIR_RELATIONS)
    x = rng.normal(0.0, 2.0, (m, m, R))
    x -= np_logsumexp(x, axis=2, keepdims=True)
    scores = {(i, j): x[i, j] for i in range(m) if not concepts[i].is_constant for j in range(m) if i != j}
    root = next(i for i in range(m) if not concepts[i].is_constant)
    return concepts, scores, _REPAIR_RELATIONS, root


_WORDS = ("the", "boy", "girl", "want", "wants", "go", "city", "big", "5", "not")


def random_tiny_model(seed: int, max_words: int = 4, hidden: int = 3, scale: float = 3.0) -> tuple[ParserModel, Instance]:
    """A randomly initialised small model and one annotated training instance with at most ``max_words`` slots."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_words + 1))
    tokens = [_WORDS[int(rng.integers(len(_WORDS)))] for _ in range(n)]
    m = int(rng.integers(1, n + 1))
    pool = [Concept("boy"), Concept("girl"), Concept("want", "frame", "-01"), Concept("city"), Concept("go", "frame", "-02")]
    concepts = [pool[int(rng.integers(len(pool)))] for _ in range(m)]
    edges = {}
    for v in range(1, m):
        edges[(int(rng.integers(v)), v)] = _RELS[int(rng.integers(len(_RELS)))]
    g = AmrGraph(tuple(concepts), edges, 0)
    recat = recategorize(g)
    sentence = stub_annotate(tokens)
    vocab = Vocabulary.build([sentence], [recat], freq_threshold=1)
    cfg = EncoderConfig(
        word_dim=2, lemma_dim=2, pos_dim=2, ner_dim=2, cat_dim=2, concept_dim=2,
        sent_hidden=hidden, concept_hidden=2, rel_dim=2, root_dim=2,
        rel_layers=1, root_layers=1, dropout=0.0,
    )
    model = ParserModel(vocab, cfg, seed=seed)
    # widen the initial scales so the tiny model is far from uniform
    for p in model.params.values():
        p.data *= scale
    alignment = tuple(int(k) for k in rng.permutation(n)[: len(recat.concepts)]) if len(recat.concepts) <= n else None
    return model, model.featurize(sentence, recat, alignment)


# ---------------------------------------------------------------------------
# second implementations


def concept_loss_bruteforce(a_hat: np.ndarray, L: np.ndarray, alpha: float) -> float:
    total = 0.0
    for i in range(a_hat.shape[0]):
        s = 0.0
        for k in range(a_hat.shape[1]):
            s += (a_hat[i, k] * math.exp(L[i, k])) ** alpha
        total -= math.log(s)
    return total


def log_marginal_bruteforce(model: ParserModel, inst: Instance) -> float:
    """Direct sum over itertools permutations; relation log-probs read pair by pair."""
    N = inst.N
    L = model.concept_logprobs(inst).data
    terms = []
    for perm in itertools.permutations(range(N)):
        a = np.zeros((N, N))
        for i, k in enumerate(perm):
            a[i, k] = 1.0
        logp = model.relation_logprobs(inst, a)
        rel = 0.0
        if logp is not None:
            for p in range(logp.shape[0]):
                rel += logp.data[p, inst.gold_rel[p]]
        terms.append(math.fsum(L[i, perm[i]] for i in range(N)) + rel)
    return float(np_logsumexp(terms)) - math.log(math.factorial(N))


# ---------------------------------------------------------------------------
# checks


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - start)


def check_sinkhorn_convergence(trials: int = 1000, iters: int = 200, seed: int = 0) -> dict:
    """Row and column deviations from 1 after ``iters`` Sinkhorn rounds on uniform[-5, 5] scores."""
    rng = np.random.default_rng(seed)
    row_err = col_err = 0.0
    col_fail = 0
    for _ in range(trials):
        n = int(rng.integers(2, 21))
        phi = rng.uniform(-5, 5, (n, n))
        a = np.exp(sinkhorn_log(tensor(phi), iters).data)
        row_err = max(row_err, float(np.abs(a.sum(axis=1) - 1).max()))
        ce = float(np.abs(a.sum(axis=0) - 1).max())
        col_err = max(col_err, ce)
        col_fail += ce > 1e-6
    return {"row_err": row_err, "col_err": col_err, "col_failures": col_fail, "trials": trials}


def check_low_temperature(trials: int = 1000, t: float = 0.01, iters: int = 200, seed: int = 0, scale: str = "normal") -> dict:
    """Agreement between the row argmax of a cold Gumbel-Sinkhorn and exhaustive perturb-and-max."""
    rng = np.random.default_rng(seed)
    cfg = SinkhornConfig(t=t, iters=iters)
    agree = 0
    for _ in range(trials):
        n = int(rng.integers(1, 8))
        phi = rng.normal(size=(n, n)) if scale == "normal" else rng.uniform(-5, 5, (n, n))
        noise = sample_gumbel(n, rng)
        a, _ = gumbel_sinkhorn(phi, noise, cfg)
        agree += tuple(int(k) for k in a.data.argmax(axis=1)) == perturb_and_max(phi, noise)
    return {"agreement": agree / trials, "trials": trials}


KL_GRID = [(t, t0, phi) for t in (0.5, 1.0, 2.0) for t0 in (1.0, 5.0) for phi in (-2.0, 0.0, 2.0)]


def check_gumbel_kl(samples: int = 10**6, seed: int = 0) -> dict:
    """Largest |closed form - Monte Carlo| in standard errors over the grid."""
    worst = 0.0
    rows = []
    for idx, (t, t0, phi) in enumerate(KL_GRID):
        closed = gumbel_kl(np.array([[phi]]), t, t0).item()
        mean, se = gumbel_kl_monte_carlo(phi, t, t0, samples, seed=seed + idx)
        z = abs(closed - mean) / se if se > 0 else (0.0 if abs(closed - mean) < 1e-12 else math.inf)
        worst = max(worst, z)
        rows.append((t, t0, phi, closed, mean, se, z))
    return {"worst_z": worst, "rows": rows}


def check_gradients(instances: int = 20, seed: int = 0, max_coords: int = 4, eps: float = 1e-5) -> dict:
    """grad_check of the relaxed objective (concept, relation, KL, overlap) with fixed noise, dropout off.

    The root term is left out: it sees a detached alignment by design, so its
    analytic gradient deliberately ignores the alignment parameters.
    """
    worst = {"relative": 0.0, "scaled": 0.0, "worst_abs": 0.0}
    cfg = ObjectiveConfig(lam=10.0)
    for s in range(instances):
        model, inst = random_tiny_model(seed + s)
        noise = sample_gumbel(inst.N, seed + s)
        terms = ("concept", "rel", "kl", "omega")

        def f():
            return instance_objective(model, inst, cfg, noise, None, terms)["total"]

        params = list(model.params.values())
        r = grad_errors(f, params, eps=eps, max_coords=max_coords, seed=s)
        worst = {k: max(v, r[k]) for k, v in worst.items()}
    return {
        "worst_rel_err": worst["relative"],
        "worst_scaled_err": worst["scaled"],
        "worst_abs_err": worst["worst_abs"],
        "instances": instances,
    }


def check_variational_bound(models: int = 50, seed: int = 0, other_q: int = 5) -> dict:
    """Discrete ELBO at the exact posterior versus the exact marginal, and under other distributions."""
    rng = np.random.default_rng(seed)
    max_eq_err = 0.0
    worst_margin = math.inf
    dual_err = 0.0
    for s in range(models):
        model, inst = random_tiny_model(seed + 1000 + s)
        _, lj = enumerate_log_joint(model, inst)
        marginal = exact_log_marginal(model, inst)
        post = exact_posterior(lj)
        max_eq_err = max(max_eq_err, abs(discrete_elbo(lj, post) - marginal))
        for _ in range(other_q):
            q = rng.dirichlet(np.ones(len(lj)))
            worst_margin = min(worst_margin, marginal - discrete_elbo(lj, q))
        if inst.N <= 3:
            dual_err = max(dual_err, abs(log_marginal_bruteforce(model, inst) - marginal))
    return {"max_equality_err": max_eq_err, "min_margin": worst_margin, "dual_err": dual_err, "models": models}


def check_repair(tables: int = 10_000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    violations = 0
    example = ""
    for _ in range(tables):
        concepts, scores, relations, root = random_score_table(rng)
        g = repair_graph(concepts, scores, relations, root=root)
        bad = constraint_violations(g)
        if bad:
            violations += 1
            example = example or "; ".join(bad)
    return {"violations": violations, "tables": tables, "example": example}


def check_smatch(pairs: int = 500, seed: int = 0, restarts: int = 4) -> dict:
    rng = np.random.default_rng(seed)
    mismatches = 0
    identical_ok = True
    for s in range(pairs):
        g1, g2 = random_graph(rng), random_graph(rng)
        if smatch(g1, g2, restarts=restarts, seed=s).matched != smatch_exhaustive(g1, g2).matched:
            mismatches += 1
        identical_ok &= smatch(g1, g1, restarts=restarts, seed=s).f1 == 1.0
    return {"mismatches": mismatches, "pairs": pairs, "identical_ok": identical_ok}


def check_round_trips(config: GeneratorConfig = GeneratorConfig()) -> dict:
    corpus = generate_corpus(config)
    total = recat_ok = penman_ok = 0
    for split in ("train", "dev", "test"):
        for rec in corpus[split]:
            g = rec.amr()
            total += 1
            recat_ok += is_isomorphic(unpack(recategorize(g)), g, max_nodes=64)
            penman_ok += is_isomorphic(parse_penman(serialize_penman(g)), g, max_nodes=64)
    return {"graphs": total, "recat_ok": recat_ok, "penman_ok": penman_ok}


def oracle_suite(seed: int = 0, quick: bool = True) -> list[CheckResult]:
    """Every mechanical oracle; ``quick`` shrinks trial counts for interactive use."""
    k = 10 if quick else 1

    def sink():
        r = check_sinkhorn_convergence(1000 // k, seed=seed)
        return r["row_err"] <= 1e-12 and r["col_err"] <= 1e-6, (
            f"row err {r['row_err']:.1e}, col err {r['col_err']:.1e} ({r['col_failures']}/{r['trials']} over 1e-6)"
        )

    def cold():
        r = check_low_temperature(1000 // k, seed=seed)
        return r["agreement"] >= 0.99, f"agreement {r['agreement']:.3f} over {r['trials']} trials"

    def kl():
        r = check_gumbel_kl(10**6 // k, seed=seed)
        return r["worst_z"] <= 3.0, f"worst deviation {r['worst_z']:.2f} standard errors"

    def bound():
        r = check_variational_bound(50 // k, seed=seed)
        ok = r["max_equality_err"] <= 1e-9 and r["min_margin"] >= -1e-12 and r["dual_err"] <= 1e-9
        return ok, f"equality err {r['max_equality_err']:.1e}, min margin {r['min_margin']:.2e}, dual err {r['dual_err']:.1e}"

    def repair():
        r = check_repair(10_000 // k, seed=seed)
        return r["violations"] == 0, f"{r['violations']} violating outputs over {r['tables']} tables"

    def sm():
        r = check_smatch(500 // k, seed=seed)
        return r["mismatches"] == 0 and r["identical_ok"], f"{r['mismatches']} mismatches over {r['pairs']} pairs"

    def trips():
        r = check_round_trips(GeneratorConfig(seed=seed))
        ok = r["recat_ok"] == r["penman_ok"] == r["graphs"]
        return ok, f"recat {r['recat_ok']}/{r['graphs']}, penman {r['penman_ok']}/{r['graphs']}"

    checks = [
        ("sinkhorn convergence", sink),
        ("low-temperature consistency", cold),
        ("gumbel kl vs monte carlo", kl),
        ("variational bound", bound),
        ("graph repair constraints", repair),
        ("smatch vs exhaustive", sm),
        ("preprocessing round trips", trips),
    ]
    return [_timed(name, fn) for name, fn in checks]
